#include "ccvnet/autoencoder.hpp"

#include "ccvnet/errors.hpp"
#include "ccvnet/layers.hpp"

#include <algorithm>

namespace ccvnet {

namespace {
constexpr std::uint64_t kDaeStream = 21;
constexpr std::uint64_t kHeadStream = 31;

// Promotes a vector to a single-row batch and back.
Tensor as_batch(const Tensor &t) { return t.rank() == 1 ? t.reshaped({1, t.size()}) : t; }
Tensor like_input(const Tensor &out, const Tensor &in) {
  return in.rank() == 1 ? out.reshaped({out.size()}) : out;
}
} // namespace

void DaeSpec::validate() const {
  if (input_width < 1 || hidden_width < 1 || latent_width < 1)
    throw ConfigError("dae: widths must be positive");
  if (latent_width >= input_width)
    throw ConfigError("dae: latent width " + std::to_string(latent_width) +
                      " must be below input width " + std::to_string(input_width));
}

void HeadSpec::validate() const {
  if (input_width < 1 || hidden_width < 1 || classes < 1)
    throw ConfigError("head: widths must be positive");
}

ParamStore init_dae_params(const DaeSpec &spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::derive(seed, kDaeStream);
  ParamStore p(seed);
  layers::add_dense(p, "enc1", spec.input_width, spec.hidden_width, layers::Init::He, rng);
  layers::add_dense(p, "enc2", spec.hidden_width, spec.latent_width, layers::Init::He, rng);
  layers::add_dense(p, "dec1", spec.latent_width, spec.hidden_width, layers::Init::He, rng);
  layers::add_dense(p, "dec2", spec.hidden_width, spec.input_width, layers::Init::Xavier, rng);
  return p;
}

ParamStore init_head_params(const HeadSpec &spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::derive(seed, kHeadStream);
  ParamStore p(seed);
  layers::add_dense(p, "fc1", spec.input_width, spec.hidden_width, layers::Init::He, rng);
  layers::add_dense(p, "out", spec.hidden_width, spec.classes, layers::Init::Small, rng);
  return p;
}

Autoencoder::Autoencoder(DaeSpec spec, std::uint64_t seed)
    : spec_(spec), params_(init_dae_params(spec, seed)) {}

Autoencoder::Autoencoder(DaeSpec spec, ParamStore params)
    : spec_(spec), params_(std::move(params)) {
  layers::require_layout("dae", init_dae_params(spec_, 0), params_);
}

Var Autoencoder::encode(const Var &features) const {
  Var h = relu(layers::dense(features, params_, "enc1"));
  return relu(layers::dense(h, params_, "enc2"));
}

Var Autoencoder::decode(const Var &latent) const {
  Var h = relu(layers::dense(latent, params_, "dec1"));
  return layers::dense(h, params_, "dec2");
}

Var Autoencoder::loss(const Tensor &features) const {
  const Tensor batch = as_batch(features);
  return mse(decode(encode(Var::constant(batch))), batch);
}

Tensor Autoencoder::encode(const Tensor &features) const {
  NoGradGuard guard;
  return like_input(encode(Var::constant(as_batch(features))).value(), features);
}

Tensor Autoencoder::reconstruct(const Tensor &features) const {
  NoGradGuard guard;
  return like_input(decode(encode(Var::constant(as_batch(features)))).value(), features);
}

double dae_loss(const Tensor &features, const Autoencoder &dae) {
  NoGradGuard guard;
  return dae.loss(features).value()[0];
}

ClassifierHead::ClassifierHead(HeadSpec spec, std::uint64_t seed)
    : spec_(spec), params_(init_head_params(spec, seed)) {}

ClassifierHead::ClassifierHead(HeadSpec spec, ParamStore params)
    : spec_(spec), params_(std::move(params)) {
  layers::require_layout("head", init_head_params(spec_, 0), params_);
}

Var ClassifierHead::forward(const Var &latent) const {
  Var h = relu(layers::dense(latent, params_, "fc1"));
  return layers::dense(h, params_, "out");
}

Tensor ClassifierHead::logits(const Tensor &latent) const {
  NoGradGuard guard;
  return like_input(forward(Var::constant(as_batch(latent))).value(), latent);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty())
    throw DimensionError("argmax of empty vector");
  // max_element returns the first maximal element.
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

void Model::require_complete() const {
  if (!cnn)
    throw StateError("model stage 'cnn' has no weights");
  if (!rnn)
    throw StateError("model stage 'rnn' has no weights");
  if (!dae)
    throw StateError("model stage 'dae' has no weights");
  if (!head)
    throw StateError("model stage 'head' has no weights");
}

Tensor Model::logits(const Tensor &batch) const {
  require_complete();
  const Tensor features = extract_features(batch, *cnn, *rnn);
  return head->logits(dae->encode(features));
}

Prediction Model::predict(const CovMatrix &m) const {
  require_complete();
  const Tensor z = head->logits(dae->encode(extract_features(m, *cnn, *rnn)));
  Prediction p;
  p.probs = softmax(z);
  p.label = static_cast<int>(argmax(p.probs.data()));
  return p;
}

Prediction Model::predict_trial(const Trial &trial) const {
  require_complete();
  if (!norm)
    throw StateError("model stage 'norm' has no standardisation statistics");
  return predict(apply_standardize(ccv(trial, lag), *norm));
}

} // namespace ccvnet
