#pragma once

// The two supervised feature extractors that read a channel covariance
// matrix. Each ends in its own softmax head, used only while that branch is
// trained; the last hidden activation is the exported feature.

#include "ccvnet/covariance.hpp"
#include "ccvnet/param_store.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ccvnet {

struct CnnSpec {
  std::size_t channels = 8;
  std::size_t conv1_filters = 32;
  std::size_t conv1_kernel = 3;
  std::size_t conv2_filters = 64;
  std::size_t conv2_kernel = 3;
  std::size_t fc1_width = 128;
  std::size_t feature_width = 64;
  std::size_t classes = 3;

  /// Throws ConfigError if the convolutions do not fit the input length.
  void validate() const;
  std::size_t conv_output_length() const;
  std::size_t flat_width() const { return conv2_filters * conv_output_length(); }
};

enum class RnnOrder { FcFirst, LstmFirst };
enum class SequenceAxis { Rows, Columns };

struct RnnSpec {
  std::size_t channels = 8;
  std::size_t fc1_width = 128;
  std::size_t fc2_width = 64;
  std::size_t lstm1_hidden = 64;
  std::size_t lstm2_hidden = 64;
  std::size_t classes = 3;
  RnnOrder order = RnnOrder::FcFirst;
  SequenceAxis axis = SequenceAxis::Rows;

  void validate() const;
  /// LSTM2 hidden size for FC-first, FC2 width for LSTM-first.
  std::size_t feature_width() const;
};

/// Single-sample result of a branch.
struct BranchOutput {
  Tensor feature; // [feature_width]
  Tensor logits;  // [classes]
};

/// Batched, differentiable result of a branch.
struct BranchGraph {
  Var feature; // [B x feature_width]
  Var logits;  // [B x classes]
};

/// input -> conv+ReLU -> conv+ReLU -> flatten -> FC+ReLU -> FC+ReLU (feature) -> FC logits.
/// The C x C matrix is read as C input channels of length-C signals.
class CnnBranch {
public:
  CnnBranch(CnnSpec spec, std::uint64_t seed);
  /// Adopts loaded weights; throws StateError if the layout does not match.
  CnnBranch(CnnSpec spec, ParamStore params);

  /// batch is [B x C x C].
  BranchGraph forward(const Tensor &batch) const;
  BranchOutput infer(const CovMatrix &m) const;
  /// Gradient-free features, [B x feature_width].
  Tensor features(const Tensor &batch) const;

  const CnnSpec &spec() const noexcept { return spec_; }
  ParamStore &params() noexcept { return params_; }
  const ParamStore &params() const noexcept { return params_; }

private:
  CnnSpec spec_;
  ParamStore params_;
};

/// Each step of the sequence is one row (or column) of the covariance
/// matrix. FC-first: per-step FC+ReLU -> FC+ReLU, then LSTM -> LSTM, feature
/// is the final LSTM2 hidden state. LSTM-first swaps the two pairs and the
/// FC layers act on the final LSTM2 hidden state.
class RnnBranch {
public:
  RnnBranch(RnnSpec spec, std::uint64_t seed);
  RnnBranch(RnnSpec spec, ParamStore params);

  BranchGraph forward(const Tensor &batch) const;
  BranchOutput infer(const CovMatrix &m) const;
  Tensor features(const Tensor &batch) const;

  const RnnSpec &spec() const noexcept { return spec_; }
  ParamStore &params() noexcept { return params_; }
  const ParamStore &params() const noexcept { return params_; }

private:
  RnnSpec spec_;
  ParamStore params_;
};

ParamStore init_cnn_params(const CnnSpec &spec, std::uint64_t seed);
ParamStore init_rnn_params(const RnnSpec &spec, std::uint64_t seed);

inline BranchOutput cnn_forward(const CovMatrix &m, const CnnBranch &cnn) { return cnn.infer(m); }
inline BranchOutput rnn_forward(const CovMatrix &m, const RnnBranch &rnn) { return rnn.infer(m); }

/// [cnn feature | rnn feature] for one matrix.
Tensor extract_features(const CovMatrix &m, const CnnBranch &cnn, const RnnBranch &rnn);
/// Batched variant: [B x (cnn width + rnn width)].
Tensor extract_features(const Tensor &batch, const CnnBranch &cnn, const RnnBranch &rnn);

/// [B x C x C] batch from selected matrices.
Tensor make_batch(const std::vector<CovMatrix> &mats, std::span<const std::size_t> indices);
Tensor make_batch(const std::vector<CovMatrix> &mats);

} // namespace ccvnet
