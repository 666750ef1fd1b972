#include "ccvnet/branches.hpp"

#include "ccvnet/errors.hpp"
#include "ccvnet/layers.hpp"

namespace ccvnet {

namespace {

// Independent initialisation streams per stage.
constexpr std::uint64_t kCnnStream = 11;
constexpr std::uint64_t kRnnStream = 12;

void require_batch(const Tensor &batch, std::size_t channels, const char *who) {
  if (batch.rank() != 3 || batch.dim(1) != channels || batch.dim(2) != channels)
    throw DimensionError(std::string(who) + ": expected [B x " + std::to_string(channels) + " x " +
                         std::to_string(channels) + "] batch, got " + shape_str(batch.shape()));
}

Tensor single(const CovMatrix &m) { return m.values.reshaped({1, m.channels(), m.channels()}); }

Tensor row_of(const Tensor &batch2d, std::size_t row) {
  const std::size_t n = batch2d.dim(1);
  return Tensor({n}, std::vector<double>(batch2d.data().begin() + static_cast<long>(row * n),
                                         batch2d.data().begin() + static_cast<long>((row + 1) * n)));
}

} // namespace

void CnnSpec::validate() const {
  if (channels < 1 || classes < 1 || conv1_filters < 1 || conv2_filters < 1 || fc1_width < 1 ||
      feature_width < 1 || conv1_kernel < 1 || conv2_kernel < 1)
    throw ConfigError("cnn: every width, filter count and kernel must be positive");
  if (conv1_kernel > channels || conv2_kernel > channels - conv1_kernel + 1)
    throw ConfigError("cnn: " + std::to_string(channels) +
                      " channels are too few for kernels " + std::to_string(conv1_kernel) +
                      " and " + std::to_string(conv2_kernel));
}

std::size_t CnnSpec::conv_output_length() const {
  return channels - conv1_kernel + 1 - conv2_kernel + 1;
}

void RnnSpec::validate() const {
  if (channels < 1 || classes < 1 || fc1_width < 1 || fc2_width < 1 || lstm1_hidden < 1 ||
      lstm2_hidden < 1)
    throw ConfigError("rnn: every width must be positive");
}

std::size_t RnnSpec::feature_width() const {
  return order == RnnOrder::FcFirst ? lstm2_hidden : fc2_width;
}

ParamStore init_cnn_params(const CnnSpec &spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::derive(seed, kCnnStream);
  ParamStore p(seed);
  layers::add_conv(p, "conv1", spec.channels, spec.conv1_filters, spec.conv1_kernel, rng);
  layers::add_conv(p, "conv2", spec.conv1_filters, spec.conv2_filters, spec.conv2_kernel, rng);
  layers::add_dense(p, "fc1", spec.flat_width(), spec.fc1_width, layers::Init::He, rng);
  layers::add_dense(p, "fc2", spec.fc1_width, spec.feature_width, layers::Init::He, rng);
  layers::add_dense(p, "out", spec.feature_width, spec.classes, layers::Init::Small, rng);
  return p;
}

ParamStore init_rnn_params(const RnnSpec &spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::derive(seed, kRnnStream);
  ParamStore p(seed);
  if (spec.order == RnnOrder::FcFirst) {
    layers::add_dense(p, "fc1", spec.channels, spec.fc1_width, layers::Init::He, rng);
    layers::add_dense(p, "fc2", spec.fc1_width, spec.fc2_width, layers::Init::He, rng);
    layers::add_lstm(p, "lstm1", spec.fc2_width, spec.lstm1_hidden, rng);
    layers::add_lstm(p, "lstm2", spec.lstm1_hidden, spec.lstm2_hidden, rng);
  } else {
    layers::add_lstm(p, "lstm1", spec.channels, spec.lstm1_hidden, rng);
    layers::add_lstm(p, "lstm2", spec.lstm1_hidden, spec.lstm2_hidden, rng);
    layers::add_dense(p, "fc1", spec.lstm2_hidden, spec.fc1_width, layers::Init::He, rng);
    layers::add_dense(p, "fc2", spec.fc1_width, spec.fc2_width, layers::Init::He, rng);
  }
  layers::add_dense(p, "out", spec.feature_width(), spec.classes, layers::Init::Small, rng);
  return p;
}

CnnBranch::CnnBranch(CnnSpec spec, std::uint64_t seed)
    : spec_(spec), params_(init_cnn_params(spec, seed)) {}

CnnBranch::CnnBranch(CnnSpec spec, ParamStore params) : spec_(spec), params_(std::move(params)) {
  layers::require_layout("cnn", init_cnn_params(spec_, 0), params_);
}

BranchGraph CnnBranch::forward(const Tensor &batch) const {
  require_batch(batch, spec_.channels, "cnn");
  const std::size_t b = batch.dim(0);
  Var x = Var::constant(batch);
  x = relu(layers::conv(x, params_, "conv1"));
  x = relu(layers::conv(x, params_, "conv2"));
  x = reshape(x, {b, spec_.flat_width()});
  x = relu(layers::dense(x, params_, "fc1"));
  Var feature = relu(layers::dense(x, params_, "fc2"));
  Var logits = layers::dense(feature, params_, "out");
  return {std::move(feature), std::move(logits)};
}

BranchOutput CnnBranch::infer(const CovMatrix &m) const {
  NoGradGuard guard;
  auto g = forward(single(m));
  return {row_of(g.feature.value(), 0), row_of(g.logits.value(), 0)};
}

Tensor CnnBranch::features(const Tensor &batch) const {
  NoGradGuard guard;
  return forward(batch).feature.value();
}

RnnBranch::RnnBranch(RnnSpec spec, std::uint64_t seed)
    : spec_(spec), params_(init_rnn_params(spec, seed)) {}

RnnBranch::RnnBranch(RnnSpec spec, ParamStore params) : spec_(spec), params_(std::move(params)) {
  layers::require_layout("rnn", init_rnn_params(spec_, 0), params_);
}

BranchGraph RnnBranch::forward(const Tensor &batch) const {
  require_batch(batch, spec_.channels, "rnn");
  const std::size_t b = batch.dim(0);
  const std::size_t c = spec_.channels;
  const bool fc_first = spec_.order == RnnOrder::FcFirst;

  const LstmParams l1 = layers::lstm(params_, "lstm1");
  const LstmParams l2 = layers::lstm(params_, "lstm2");
  LstmState s1{Var::constant(Tensor({b, spec_.lstm1_hidden})),
               Var::constant(Tensor({b, spec_.lstm1_hidden}))};
  LstmState s2{Var::constant(Tensor({b, spec_.lstm2_hidden})),
               Var::constant(Tensor({b, spec_.lstm2_hidden}))};

  for (std::size_t t = 0; t < c; ++t) {
    Tensor step({b, c});
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t j = 0; j < c; ++j)
        step.at(n, j) = spec_.axis == SequenceAxis::Rows ? batch.at(n, t, j) : batch.at(n, j, t);
    Var x = Var::constant(std::move(step));
    if (fc_first) {
      x = relu(layers::dense(x, params_, "fc1"));
      x = relu(layers::dense(x, params_, "fc2"));
    }
    s1 = lstm_cell(x, s1.h, s1.c, l1);
    s2 = lstm_cell(s1.h, s2.h, s2.c, l2);
  }

  Var feature = s2.h;
  if (!fc_first) {
    feature = relu(layers::dense(feature, params_, "fc1"));
    feature = relu(layers::dense(feature, params_, "fc2"));
  }
  Var logits = layers::dense(feature, params_, "out");
  return {std::move(feature), std::move(logits)};
}

BranchOutput RnnBranch::infer(const CovMatrix &m) const {
  NoGradGuard guard;
  auto g = forward(single(m));
  return {row_of(g.feature.value(), 0), row_of(g.logits.value(), 0)};
}

Tensor RnnBranch::features(const Tensor &batch) const {
  NoGradGuard guard;
  return forward(batch).feature.value();
}

Tensor extract_features(const Tensor &batch, const CnnBranch &cnn, const RnnBranch &rnn) {
  const Tensor a = cnn.features(batch);
  const Tensor b = rnn.features(batch);
  const std::size_t rows = a.dim(0), wa = a.dim(1), wb = b.dim(1);
  Tensor out({rows, wa + wb});
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t j = 0; j < wa; ++j)
      out.at(n, j) = a.at(n, j);
    for (std::size_t j = 0; j < wb; ++j)
      out.at(n, wa + j) = b.at(n, j);
  }
  return out;
}

Tensor extract_features(const CovMatrix &m, const CnnBranch &cnn, const RnnBranch &rnn) {
  Tensor f = extract_features(single(m), cnn, rnn);
  return f.reshaped({f.size()});
}

Tensor make_batch(const std::vector<CovMatrix> &mats, std::span<const std::size_t> indices) {
  std::vector<const Tensor *> items;
  items.reserve(indices.size());
  for (auto i : indices)
    items.push_back(&mats.at(i).values);
  return layers::stack(items);
}

Tensor make_batch(const std::vector<CovMatrix> &mats) {
  std::vector<const Tensor *> items;
  items.reserve(mats.size());
  for (const auto &m : mats)
    items.push_back(&m.values);
  return layers::stack(items);
}

} // namespace ccvnet
