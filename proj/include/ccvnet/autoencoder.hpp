#pragma once

// Second and third levels of the hierarchy: an autoencoder that compresses
// the concatenated branch features, and the softmax classifier over its
// latent code. Model bundles all four stages for prediction.

#include "ccvnet/branches.hpp"

#include <optional>

namespace ccvnet {

struct DaeSpec {
  std::size_t input_width = 128;
  std::size_t hidden_width = 64;
  std::size_t latent_width = 32;

  void validate() const;
};

struct HeadSpec {
  std::size_t input_width = 32;
  std::size_t hidden_width = 16;
  std::size_t classes = 3;

  void validate() const;
};

/// input -> enc1+ReLU -> enc2+ReLU (latent) -> dec1+ReLU -> dec2 (linear).
class Autoencoder {
public:
  Autoencoder(DaeSpec spec, std::uint64_t seed);
  Autoencoder(DaeSpec spec, ParamStore params);

  Var encode(const Var &features) const;
  Var decode(const Var &latent) const;
  /// Reconstruction MSE of a [B x input_width] batch. Takes no labels.
  Var loss(const Tensor &features) const;

  /// Gradient-free latent codes, [B x latent_width] (or [latent_width] for a vector).
  Tensor encode(const Tensor &features) const;
  Tensor reconstruct(const Tensor &features) const;

  const DaeSpec &spec() const noexcept { return spec_; }
  ParamStore &params() noexcept { return params_; }
  const ParamStore &params() const noexcept { return params_; }

private:
  DaeSpec spec_;
  ParamStore params_;
};

/// latent -> FC+ReLU -> FC logits.
class ClassifierHead {
public:
  ClassifierHead(HeadSpec spec, std::uint64_t seed);
  ClassifierHead(HeadSpec spec, ParamStore params);

  Var forward(const Var &latent) const;
  Tensor logits(const Tensor &latent) const;

  const HeadSpec &spec() const noexcept { return spec_; }
  ParamStore &params() noexcept { return params_; }
  const ParamStore &params() const noexcept { return params_; }

private:
  HeadSpec spec_;
  ParamStore params_;
};

ParamStore init_dae_params(const DaeSpec &spec, std::uint64_t seed);
ParamStore init_head_params(const HeadSpec &spec, std::uint64_t seed);

inline Tensor dae_encode(const Tensor &features, const Autoencoder &dae) {
  return dae.encode(features);
}
double dae_loss(const Tensor &features, const Autoencoder &dae);
inline Tensor head_forward(const Tensor &latent, const ClassifierHead &head) {
  return head.logits(latent);
}

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct Prediction {
  int label = 0;
  Tensor probs; // [classes]
};

/// All stages of a trained pipeline plus the input conditioning they expect.
struct Model {
  std::optional<CnnBranch> cnn;
  std::optional<RnnBranch> rnn;
  std::optional<Autoencoder> dae;
  std::optional<ClassifierHead> head;
  std::optional<StandardizeStats> norm;
  int lag = 0;

  /// Throws StateError naming the first missing stage.
  void require_complete() const;

  /// Full forward on an already standardised covariance matrix.
  Prediction predict(const CovMatrix &m) const;
  /// Batched logits for standardised matrices, [B x classes].
  Tensor logits(const Tensor &batch) const;
  /// ccv -> standardise -> predict.
  Prediction predict_trial(const Trial &trial) const;
};

inline Prediction predict(const CovMatrix &m, const Model &model) { return model.predict(m); }

} // namespace ccvnet
