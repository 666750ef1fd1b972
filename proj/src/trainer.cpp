#include "ccvnet/trainer.hpp"

#include "ccvnet/binary_io.hpp"
#include "ccvnet/errors.hpp"
#include "ccvnet/rng.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace ccvnet {

// ---------------------------------------------------------------------------
// TrainConfig

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T> T parse_number(const std::string &key, const std::string &value) {
  T out{};
  const char *end = value.data() + value.size();
  auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos)
    return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

struct Field {
  const char *key;
  std::function<std::string(const TrainConfig &)> get;
  std::function<void(TrainConfig &, const std::string &)> set;
};

template <typename T> Field size_field(const char *key, T TrainConfig::*member) {
  return {key, [member](const TrainConfig &c) { return std::to_string(c.*member); },
          [key, member](TrainConfig &c, const std::string &v) {
            c.*member = parse_number<T>(key, v);
          }};
}

Field double_field(const char *key, double TrainConfig::*member) {
  return {key, [member](const TrainConfig &c) { return fmt_double(c.*member); },
          [key, member](TrainConfig &c, const std::string &v) {
            c.*member = parse_number<double>(key, v);
          }};
}

template <typename A> Field array_field(const char *key, A TrainConfig::*member, std::size_t i) {
  using T = typename A::value_type;
  return {key,
          [member, i](const TrainConfig &c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt_double((c.*member)[i]);
            else
              return std::to_string((c.*member)[i]);
          },
          [key, member, i](TrainConfig &c, const std::string &v) {
            (c.*member)[i] = parse_number<T>(key, v);
          }};
}

const std::vector<Field> &fields() {
  static const std::vector<Field> table{
      size_field("seed", &TrainConfig::seed),
      array_field("lr_stage1", &TrainConfig::lr, 0),
      array_field("lr_stage2", &TrainConfig::lr, 1),
      array_field("lr_stage3", &TrainConfig::lr, 2),
      size_field("batch_size", &TrainConfig::batch_size),
      array_field("epochs_stage1", &TrainConfig::epochs, 0),
      array_field("epochs_stage2", &TrainConfig::epochs, 1),
      array_field("epochs_stage3", &TrainConfig::epochs, 2),
      size_field("lag", &TrainConfig::lag),
      double_field("split_fraction", &TrainConfig::split_fraction),
      size_field("patience", &TrainConfig::patience),
      double_field("adam_beta1", &TrainConfig::adam_beta1),
      double_field("adam_beta2", &TrainConfig::adam_beta2),
      double_field("adam_eps", &TrainConfig::adam_eps),
      size_field("channels", &TrainConfig::channels),
      size_field("classes", &TrainConfig::classes),
      size_field("conv1_filters", &TrainConfig::conv1_filters),
      size_field("conv1_kernel", &TrainConfig::conv1_kernel),
      size_field("conv2_filters", &TrainConfig::conv2_filters),
      size_field("conv2_kernel", &TrainConfig::conv2_kernel),
      size_field("cnn_fc1", &TrainConfig::cnn_fc1),
      size_field("cnn_feature", &TrainConfig::cnn_feature),
      size_field("rnn_fc1", &TrainConfig::rnn_fc1),
      size_field("rnn_fc2", &TrainConfig::rnn_fc2),
      size_field("rnn_lstm1", &TrainConfig::rnn_lstm1),
      size_field("rnn_lstm2", &TrainConfig::rnn_lstm2),
      {"rnn_order",
       [](const TrainConfig &c) {
         return std::string(c.rnn_order == RnnOrder::FcFirst ? "fc-first" : "lstm-first");
       },
       [](TrainConfig &c, const std::string &v) {
         if (v == "fc-first")
           c.rnn_order = RnnOrder::FcFirst;
         else if (v == "lstm-first")
           c.rnn_order = RnnOrder::LstmFirst;
         else
           throw ConfigError("config key 'rnn_order': expected fc-first or lstm-first, got '" +
                             v + "'");
       }},
      {"rnn_axis",
       [](const TrainConfig &c) {
         return std::string(c.rnn_axis == SequenceAxis::Rows ? "rows" : "columns");
       },
       [](TrainConfig &c, const std::string &v) {
         if (v == "rows")
           c.rnn_axis = SequenceAxis::Rows;
         else if (v == "columns")
           c.rnn_axis = SequenceAxis::Columns;
         else
           throw ConfigError("config key 'rnn_axis': expected rows or columns, got '" + v + "'");
       }},
      size_field("dae_hidden", &TrainConfig::dae_hidden),
      size_field("dae_latent", &TrainConfig::dae_latent),
      size_field("head_hidden", &TrainConfig::head_hidden),
  };
  return table;
}

} // namespace

void TrainConfig::validate() const {
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ConfigError("split_fraction must lie strictly between 0 and 1");
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  for (double v : lr)
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError("learning rates must be positive and finite");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0))
    throw ConfigError("adam_beta1/adam_beta2 must lie in [0, 1) and adam_eps must be positive");
}

CnnSpec TrainConfig::cnn_spec() const {
  return {channels, conv1_filters, conv1_kernel, conv2_filters, conv2_kernel,
          cnn_fc1,  cnn_feature,   classes};
}

RnnSpec TrainConfig::rnn_spec() const {
  return {channels, rnn_fc1, rnn_fc2, rnn_lstm1, rnn_lstm2, classes, rnn_order, rnn_axis};
}

DaeSpec TrainConfig::dae_spec() const {
  return {cnn_feature + rnn_spec().feature_width(), dae_hidden, dae_latent};
}

HeadSpec TrainConfig::head_spec() const { return {dae_latent, head_hidden, classes}; }

AdamConfig TrainConfig::adam(std::size_t stage) const {
  return {lr.at(stage), adam_beta1, adam_beta2, adam_eps};
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto &f : fields())
    out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

bool TrainConfig::set(const std::string &key, const std::string &value) {
  for (const auto &f : fields())
    if (key == f.key) {
      f.set(*this, value);
      return true;
    }
  return false;
}

void TrainConfig::apply_text(const std::string &text, const std::string &origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos)
      throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    try {
      if (!set(key, trim(line.substr(eq + 1))))
        throw ConfigError("unknown config key '" + key + "'");
    } catch (const ConfigError &e) {
      throw ConfigError(where + e.what());
    }
  }
}

TrainConfig read_config(const std::string &path) {
  std::vector<char> bytes;
  try {
    bytes = binio::read_file(path);
  } catch (const DataError &) {
    throw ConfigError("cannot open config file " + path);
  }
  TrainConfig cfg;
  cfg.apply_text(std::string(bytes.begin(), bytes.end()), path);
  return cfg;
}

// ---------------------------------------------------------------------------
// Data preparation

std::pair<std::vector<Trial>, std::vector<Trial>>
split(const std::vector<Trial> &trials, double fraction, std::uint64_t seed,
      std::size_t class_count) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie strictly between 0 and 1");
  std::vector<std::vector<std::size_t>> by_class(class_count);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const int label = trials[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= class_count)
      throw DataError("trial " + std::to_string(i) + " (" + trials[i].trial_id + ") has label " +
                      std::to_string(label) + " outside " + std::to_string(class_count) +
                      " classes");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }

  std::vector<bool> to_val(trials.size(), false);
  for (std::size_t k = 0; k < class_count; ++k) {
    auto &idx = by_class[k];
    if (idx.empty())
      throw DataError("class " + std::to_string(k) + " has no trials");
    // The small offset keeps exact products such as 0.2 * 10 from flooring to 1.
    const auto n_val = static_cast<std::size_t>(
        std::floor((1.0 - fraction) * static_cast<double>(idx.size()) + 1e-9));
    Rng rng = Rng::derive(seed, 500 + k);
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t j = 0; j < n_val; ++j)
      to_val[idx[j]] = true;
  }

  std::pair<std::vector<Trial>, std::vector<Trial>> out;
  for (std::size_t i = 0; i < trials.size(); ++i)
    (to_val[i] ? out.second : out.first).push_back(trials[i]);
  return out;
}

LabeledSet covariance_set(const std::vector<Trial> &trials, int lag) {
  LabeledSet set;
  set.inputs.reserve(trials.size());
  set.labels.reserve(trials.size());
  for (const auto &t : trials) {
    set.inputs.push_back(ccv(t, lag));
    set.labels.push_back(t.label);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Generic mini-batch loop

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kShuffleCnn = 201;
constexpr std::uint64_t kShuffleRnn = 202;
constexpr std::uint64_t kShuffleDae = 203;
constexpr std::uint64_t kShuffleHead = 204;

struct Measured {
  double loss = kNotApplicable;
  double acc = kNotApplicable;
};

struct FitProblem {
  std::string stage;
  std::size_t train_size = 0;
  /// Differentiable mean loss over the given training rows.
  std::function<Var(std::span<const std::size_t>)> batch_loss;
  /// Loss over the whole training set, gradient-free.
  std::function<double()> train_loss;
  /// Validation measurement; empty when there is no validation data.
  std::function<Measured()> validate;
  /// Whether the validation loss picks the returned checkpoint.
  bool early_stopping = false;
};

LossCurve fit(ParamStore &params, const FitProblem &problem, const AdamConfig &adam,
              std::size_t epochs, std::size_t batch_size, std::size_t patience, Rng rng) {
  LossCurve curve;
  auto record = [&](std::size_t epoch, double train_loss) {
    Measured m;
    if (problem.validate) {
      NoGradGuard guard;
      m = problem.validate();
    }
    curve.push_back({epoch, problem.stage, train_loss, m.loss, m.acc});
    return m;
  };

  double initial;
  {
    NoGradGuard guard;
    initial = problem.train_loss();
  }
  Measured m0 = record(0, initial);
  if (!std::isfinite(initial))
    throw NumericError(problem.stage + ": non-finite loss before training");

  const bool stopping = problem.early_stopping && patience > 0 && problem.validate;
  double best = m0.loss;
  std::vector<Tensor> best_values = stopping ? params.snapshot() : std::vector<Tensor>{};
  std::size_t since_best = 0;

  std::vector<std::size_t> order(problem.train_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::int64_t step = params.adam_steps();
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch_index) {
      const std::size_t len = std::min(batch_size, order.size() - start);
      std::span<const std::size_t> rows(order.data() + start, len);
      params.zero_grad();
      const Var loss = problem.batch_loss(rows);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw NumericError(problem.stage + ": non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index + 1));
      backward(loss);
      try {
        adam_step(params, adam, ++step);
      } catch (const NumericError &e) {
        throw NumericError(problem.stage + ": epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index + 1) + ": " + e.what());
      }
      total += value * static_cast<double>(len);
    }
    const Measured m = record(epoch, total / static_cast<double>(order.size()));
    if (stopping) {
      if (m.loss < best) {
        best = m.loss;
        best_values = params.snapshot();
        since_best = 0;
      } else if (++since_best >= patience) {
        break;
      }
    }
  }
  if (stopping)
    params.restore(best_values);
  params.zero_grad();
  return curve;
}

Tensor rows_of(const Tensor &matrix, std::span<const std::size_t> rows) {
  const std::size_t width = matrix.dim(1);
  Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(matrix.data().begin() + static_cast<long>(rows[r] * width), width,
                out.data().begin() + static_cast<long>(r * width));
  return out;
}

std::vector<int> labels_of(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows)
    out.push_back(labels[r]);
  return out;
}

double xent(const Tensor &logits, std::span<const int> labels) {
  return softmax_xent(Var::constant(logits), labels).value()[0];
}

/// Supervised problem over a model mapping an input batch to logits.
template <typename Logits>
FitProblem classification_problem(std::string stage, const Tensor &train_x,
                                   std::span<const int> train_y, const Tensor *val_x,
                                   std::span<const int> val_y, Logits logits, bool early_stop) {
  FitProblem p;
  p.stage = std::move(stage);
  p.train_size = train_y.size();
  p.early_stopping = early_stop;
  auto select = [&train_x](std::span<const std::size_t> rows) {
    if (train_x.rank() == 2)
      return rows_of(train_x, rows);
    const std::size_t inner = train_x.size() / train_x.dim(0);
    Shape shape = train_x.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(train_x.data().begin() + static_cast<long>(rows[r] * inner), inner,
                  out.data().begin() + static_cast<long>(r * inner));
    return out;
  };
  p.batch_loss = [select, train_y, logits](std::span<const std::size_t> rows) {
    const auto y = labels_of(train_y, rows);
    return softmax_xent(logits(select(rows)), y);
  };
  p.train_loss = [&train_x, train_y, logits] {
    return xent(logits(train_x).value(), train_y);
  };
  if (val_x && !val_y.empty())
    p.validate = [val_x, val_y, logits] {
      const Tensor z = logits(*val_x).value();
      return Measured{xent(z, val_y), accuracy(z, val_y)};
    };
  return p;
}

} // namespace

double accuracy(const Tensor &logits, std::span<const int> labels) {
  if (labels.empty())
    throw DataError("accuracy of an empty set");
  const std::size_t k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto row = logits.data().subspan(n * k, k);
    if (static_cast<int>(argmax(row)) == labels[n])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Stages

Stage1Result train_stage1(const LabeledSet &train, const LabeledSet &val, const TrainConfig &cfg) {
  cfg.validate();
  if (train.empty())
    throw DataError("stage 1: empty training set");
  const auto start = Clock::now();
  Stage1Result out{CnnBranch(cfg.cnn_spec(), cfg.seed), RnnBranch(cfg.rnn_spec(), cfg.seed), {},
                   {}, 0.0};

  const Tensor train_x = make_batch(train.inputs);
  const Tensor val_x = val.empty() ? Tensor() : make_batch(val.inputs);
  const Tensor *val_ptr = val.empty() ? nullptr : &val_x;

  const CnnBranch &cnn = out.cnn;
  auto cnn_problem = classification_problem(
      "cnn", train_x, train.labels, val_ptr, val.labels,
      [&cnn](const Tensor &x) { return cnn.forward(x).logits; }, true);
  out.cnn_curve = fit(out.cnn.params(), cnn_problem, cfg.adam(0), cfg.epochs[0], cfg.batch_size,
                      cfg.patience, Rng::derive(cfg.seed, kShuffleCnn));

  const RnnBranch &rnn = out.rnn;
  auto rnn_problem = classification_problem(
      "rnn", train_x, train.labels, val_ptr, val.labels,
      [&rnn](const Tensor &x) { return rnn.forward(x).logits; }, true);
  out.rnn_curve = fit(out.rnn.params(), rnn_problem, cfg.adam(0), cfg.epochs[0], cfg.batch_size,
                      cfg.patience, Rng::derive(cfg.seed, kShuffleRnn));

  out.seconds = seconds_since(start);
  return out;
}

Stage2Result train_stage2(const Tensor &features, const TrainConfig &cfg,
                          const Tensor *val_features) {
  cfg.validate();
  if (features.rank() != 2 || features.dim(0) == 0)
    throw DataError("stage 2: expected a non-empty [N x width] feature matrix");
  const auto start = Clock::now();
  DaeSpec spec = cfg.dae_spec();
  spec.input_width = features.dim(1);
  Stage2Result out{Autoencoder(spec, cfg.seed), {}, 0.0};

  const Autoencoder &dae = out.dae;
  FitProblem p;
  p.stage = "dae";
  p.train_size = features.dim(0);
  p.batch_loss = [&dae, &features](std::span<const std::size_t> rows) {
    return dae.loss(rows_of(features, rows));
  };
  p.train_loss = [&dae, &features] { return dae.loss(features).value()[0]; };
  if (val_features && val_features->rank() == 2 && val_features->dim(0) > 0)
    p.validate = [&dae, val_features] {
      return Measured{dae.loss(*val_features).value()[0], kNotApplicable};
    };
  out.curve = fit(out.dae.params(), p, cfg.adam(1), cfg.epochs[1], cfg.batch_size, cfg.patience,
                  Rng::derive(cfg.seed, kShuffleDae));
  out.seconds = seconds_since(start);
  return out;
}

Stage3Result train_stage3(const Tensor &latents, std::span<const int> labels,
                          const Tensor &val_latents, std::span<const int> val_labels,
                          const TrainConfig &cfg) {
  cfg.validate();
  if (latents.rank() != 2 || latents.dim(0) != labels.size() || labels.empty())
    throw DataError("stage 3: latents and labels disagree or are empty");
  const auto start = Clock::now();
  HeadSpec spec = cfg.head_spec();
  spec.input_width = latents.dim(1);
  Stage3Result out{ClassifierHead(spec, cfg.seed), {}, 0.0};

  const ClassifierHead &head = out.head;
  const Tensor *val_ptr = val_labels.empty() ? nullptr : &val_latents;
  auto problem = classification_problem(
      "head", latents, labels, val_ptr, val_labels,
      [&head](const Tensor &z) { return head.forward(Var::constant(z)); }, true);
  out.curve = fit(out.head.params(), problem, cfg.adam(2), cfg.epochs[2], cfg.batch_size,
                  cfg.patience, Rng::derive(cfg.seed, kShuffleHead));
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult score(std::span<const int> predicted, std::span<const int> truth,
                 std::size_t class_count) {
  if (truth.empty())
    throw DataError("evaluate: empty set");
  if (predicted.size() != truth.size())
    throw DimensionError("evaluate: prediction and label counts differ");
  EvalResult r;
  r.total = truth.size();
  r.confusion.assign(class_count, std::vector<std::size_t>(class_count, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= class_count || p >= class_count)
      throw DataError("evaluate: label outside " + std::to_string(class_count) + " classes");
    ++r.confusion[t][p];
    if (t == p)
      ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (std::size_t k = 0; k < class_count; ++k) {
    std::size_t predicted_k = 0;
    for (std::size_t t = 0; t < class_count; ++t)
      predicted_k += r.confusion[t][k];
    ClassMetrics m;
    m.support = std::accumulate(r.confusion[k].begin(), r.confusion[k].end(), std::size_t{0});
    const double tp = static_cast<double>(r.confusion[k][k]);
    m.precision = predicted_k ? tp / static_cast<double>(predicted_k) : 0.0;
    m.recall = m.support ? tp / static_cast<double>(m.support) : 0.0;
    r.per_class.push_back(m);
  }
  return r;
}

EvalResult evaluate(const Model &model, const LabeledSet &set, std::size_t class_count) {
  if (set.empty())
    throw DataError("evaluate: empty set");
  const Tensor logits = model.logits(make_batch(set.inputs));
  const std::size_t k = logits.dim(1);
  std::vector<int> predicted;
  for (std::size_t n = 0; n < set.size(); ++n)
    predicted.push_back(static_cast<int>(argmax(logits.data().subspan(n * k, k))));
  EvalResult r = score(predicted, set.labels, class_count);
  r.loss = xent(logits, set.labels);
  return r;
}

EvalResult evaluate(const Model &model, const std::vector<Trial> &trials,
                    std::size_t class_count) {
  if (trials.empty())
    throw DataError("evaluate: empty set");
  model.require_complete();
  if (!model.norm)
    throw StateError("model stage 'norm' has no standardisation statistics");
  LabeledSet raw = covariance_set(trials, model.lag);
  auto [inputs, stats] = standardize(raw.inputs, model.norm);
  raw.inputs = std::move(inputs);
  return evaluate(model, raw, class_count);
}

// ---------------------------------------------------------------------------
// Full pipeline

TrainedRun run_pipeline(const std::vector<Trial> &trials, TrainConfig cfg,
                        std::vector<std::string> class_names) {
  if (trials.empty())
    throw DataError("no trials to train on");
  if (cfg.classes == 0) {
    if (!class_names.empty()) {
      cfg.classes = class_names.size();
    } else {
      int max_label = 0;
      for (const auto &t : trials)
        max_label = std::max(max_label, t.label);
      cfg.classes = static_cast<std::size_t>(max_label) + 1;
    }
  }
  auto [train, val] = split(trials, cfg.split_fraction, cfg.seed, cfg.classes);
  return run_pipeline(std::move(train), std::move(val), cfg, std::move(class_names));
}

TrainedRun run_pipeline(std::vector<Trial> train, std::vector<Trial> val, TrainConfig cfg,
                        std::vector<std::string> class_names) {
  cfg.validate();
  if (train.empty())
    throw DataError("empty training partition");
  if (cfg.channels == 0)
    cfg.channels = train.front().channels();
  if (cfg.classes == 0)
    throw ConfigError("class count unknown");
  for (const auto *part : {&train, &val})
    for (const auto &t : *part)
      if (t.channels() != cfg.channels)
        throw DataError("trial " + t.trial_id + " has " + std::to_string(t.channels()) +
                        " channels, expected " + std::to_string(cfg.channels));
  if (class_names.empty())
    for (std::size_t k = 0; k < cfg.classes; ++k)
      class_names.push_back(std::to_string(k));

  LabeledSet train_set = covariance_set(train, cfg.lag);
  LabeledSet val_set = covariance_set(val, cfg.lag);
  auto [train_inputs, stats] = standardize(train_set.inputs);
  train_set.inputs = std::move(train_inputs);
  if (!val_set.empty())
    val_set.inputs = standardize(val_set.inputs, stats).first;

  RunReport report;
  report.config = cfg;
  report.class_names = class_names;

  Stage1Result s1 = train_stage1(train_set, val_set, cfg);
  report.stage_seconds["cnn+rnn"] = s1.seconds;
  const Tensor train_batch = make_batch(train_set.inputs);
  {
    NoGradGuard guard;
    report.cnn_train_accuracy = accuracy(s1.cnn.forward(train_batch).logits.value(),
                                         train_set.labels);
    report.rnn_train_accuracy = accuracy(s1.rnn.forward(train_batch).logits.value(),
                                         train_set.labels);
  }

  const Tensor train_features = extract_features(train_batch, s1.cnn, s1.rnn);
  const Tensor val_features =
      val_set.empty() ? Tensor() : extract_features(make_batch(val_set.inputs), s1.cnn, s1.rnn);
  Stage2Result s2 =
      train_stage2(train_features, cfg, val_set.empty() ? nullptr : &val_features);
  report.stage_seconds["dae"] = s2.seconds;
  report.dae_initial_mse = s2.curve.front().train_loss;
  report.dae_final_mse = dae_loss(train_features, s2.dae);

  const Tensor train_latents = s2.dae.encode(train_features);
  const Tensor val_latents = val_set.empty() ? Tensor() : s2.dae.encode(val_features);
  Stage3Result s3 = train_stage3(train_latents, train_set.labels, val_latents, val_set.labels, cfg);
  report.stage_seconds["head"] = s3.seconds;

  for (const auto *curve : {&s1.cnn_curve, &s1.rnn_curve, &s2.curve, &s3.curve})
    report.curves.insert(report.curves.end(), curve->begin(), curve->end());

  TrainedRun run{Model{}, {}, std::move(train), std::move(val)};
  run.model.cnn.emplace(std::move(s1.cnn));
  run.model.rnn.emplace(std::move(s1.rnn));
  run.model.dae.emplace(std::move(s2.dae));
  run.model.head.emplace(std::move(s3.head));
  run.model.norm = std::move(stats);
  run.model.lag = cfg.lag;

  report.train = evaluate(run.model, train_set, cfg.classes);
  if (!val_set.empty())
    report.validation = evaluate(run.model, val_set, cfg.classes);
  run.report = std::move(report);
  return run;
}

} // namespace ccvnet

namespace ccvnet {

namespace {
bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

bool same(const EvalResult &a, const EvalResult &b) {
  return a.total == b.total && a.correct == b.correct && same(a.accuracy, b.accuracy) &&
         same(a.loss, b.loss) && a.confusion == b.confusion && a.per_class == b.per_class;
}
} // namespace

bool RunReport::same_metrics(const RunReport &other) const {
  if (format_version != other.format_version || !(config == other.config) ||
      class_names != other.class_names || curves.size() != other.curves.size())
    return false;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto &a = curves[i];
    const auto &b = other.curves[i];
    if (a.epoch != b.epoch || a.stage != b.stage || !same(a.train_loss, b.train_loss) ||
        !same(a.val_loss, b.val_loss) || !same(a.val_acc, b.val_acc))
      return false;
  }
  return same(train, other.train) && same(validation, other.validation) &&
         same(cnn_train_accuracy, other.cnn_train_accuracy) &&
         same(rnn_train_accuracy, other.rnn_train_accuracy) &&
         same(dae_initial_mse, other.dae_initial_mse) &&
         same(dae_final_mse, other.dae_final_mse);
}

} // namespace ccvnet
