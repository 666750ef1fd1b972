#pragma once

// Three-stage hierarchical training: supervised branches, an unsupervised
// autoencoder on their frozen features, then a supervised head on the frozen
// latent codes.

#include "ccvnet/autoencoder.hpp"
#include "ccvnet/datalab.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ccvnet {

struct TrainConfig {
  std::uint64_t seed = 1;
  std::array<double, 3> lr{1e-3, 1e-3, 1e-3};
  std::size_t batch_size = 16;
  std::array<std::size_t, 3> epochs{100, 200, 100};
  int lag = 0;
  double split_fraction = 0.8;
  /// Epochs without validation-loss improvement before stopping; 0 disables.
  std::size_t patience = 25;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Filled from the data when left at 0.
  std::size_t channels = 0;
  std::size_t classes = 0;

  std::size_t conv1_filters = 32;
  std::size_t conv1_kernel = 3;
  std::size_t conv2_filters = 64;
  std::size_t conv2_kernel = 3;
  std::size_t cnn_fc1 = 128;
  std::size_t cnn_feature = 64;

  std::size_t rnn_fc1 = 128;
  std::size_t rnn_fc2 = 64;
  std::size_t rnn_lstm1 = 64;
  std::size_t rnn_lstm2 = 64;
  RnnOrder rnn_order = RnnOrder::FcFirst;
  SequenceAxis rnn_axis = SequenceAxis::Rows;

  std::size_t dae_hidden = 64;
  std::size_t dae_latent = 32;
  std::size_t head_hidden = 16;

  void validate() const;

  CnnSpec cnn_spec() const;
  RnnSpec rnn_spec() const;
  DaeSpec dae_spec() const;
  HeadSpec head_spec() const;
  AdamConfig adam(std::size_t stage) const;

  /// Flat `key = value` text, one key per line, in a fixed order.
  std::string to_text() const;
  /// Applies `key = value` lines on top of *this. Unknown keys are errors.
  void apply_text(const std::string &text, const std::string &origin);
  /// Applies a single key; returns false if the key is unknown.
  bool set(const std::string &key, const std::string &value);

  friend bool operator==(const TrainConfig &, const TrainConfig &) = default;
};

TrainConfig read_config(const std::string &path);

/// Covariance inputs and labels of one partition.
struct LabeledSet {
  std::vector<CovMatrix> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

inline constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

struct CurvePoint {
  std::size_t epoch = 0; // 0 is the untrained model
  std::string stage;
  double train_loss = kNotApplicable;
  double val_loss = kNotApplicable;
  double val_acc = kNotApplicable;

};
using LossCurve = std::vector<CurvePoint>;

/// Stratified split. Per class, floor((1 - fraction) * n) trials go to
/// validation and the remainder to training; membership is drawn with the
/// seed, and each partition keeps the input order.
/// Throws DataError if any of the `class_count` classes has no trials.
std::pair<std::vector<Trial>, std::vector<Trial>>
split(const std::vector<Trial> &trials, double fraction, std::uint64_t seed,
      std::size_t class_count);

/// Applies ccv at `lag` to every trial.
LabeledSet covariance_set(const std::vector<Trial> &trials, int lag);

struct Stage1Result {
  CnnBranch cnn;
  RnnBranch rnn;
  LossCurve cnn_curve;
  LossCurve rnn_curve;
  double seconds = 0.0;
};

/// Trains both branches independently with their own optimizer state and
/// shuffle stream. Inputs must already be standardised.
Stage1Result train_stage1(const LabeledSet &train, const LabeledSet &val, const TrainConfig &cfg);

struct Stage2Result {
  Autoencoder dae;
  LossCurve curve;
  double seconds = 0.0;
};

/// Fits the autoencoder on [N x width] features by reconstruction MSE.
/// `val_features` (optional) is only measured for the curve.
Stage2Result train_stage2(const Tensor &features, const TrainConfig &cfg,
                          const Tensor *val_features = nullptr);

struct Stage3Result {
  ClassifierHead head;
  LossCurve curve;
  double seconds = 0.0;
};

Stage3Result train_stage3(const Tensor &latents, std::span<const int> labels,
                          const Tensor &val_latents, std::span<const int> val_labels,
                          const TrainConfig &cfg);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;

  friend bool operator==(const ClassMetrics &, const ClassMetrics &) = default;
};

struct EvalResult {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double loss = kNotApplicable;
  std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
  std::vector<ClassMetrics> per_class;

};

/// Metrics from predicted and true labels. Throws DataError on an empty set.
EvalResult score(std::span<const int> predicted, std::span<const int> truth,
                 std::size_t class_count);
/// Runs the full model over standardised inputs.
EvalResult evaluate(const Model &model, const LabeledSet &set, std::size_t class_count);
/// Runs ccv, the model's standardisation and the full model over raw trials.
EvalResult evaluate(const Model &model, const std::vector<Trial> &trials,
                    std::size_t class_count);

double accuracy(const Tensor &logits, std::span<const int> labels);

inline constexpr std::uint32_t kReportFormatVersion = 1;

struct RunReport {
  std::uint32_t format_version = kReportFormatVersion;
  TrainConfig config;
  std::vector<std::string> class_names;
  LossCurve curves;
  EvalResult train;
  EvalResult validation;
  double cnn_train_accuracy = kNotApplicable;
  double rnn_train_accuracy = kNotApplicable;
  double dae_initial_mse = kNotApplicable;
  double dae_final_mse = kNotApplicable;
  std::map<std::string, double> stage_seconds; // wall clock

  /// Equality of every field except wall-clock timings.
  bool same_metrics(const RunReport &other) const;
};

struct TrainedRun {
  Model model;
  RunReport report;
  std::vector<Trial> train;
  std::vector<Trial> val;
};

/// split -> ccv -> standardise (training stats) -> stage 1 -> stage 2 -> stage 3 -> evaluate.
TrainedRun run_pipeline(const std::vector<Trial> &trials, TrainConfig cfg,
                        std::vector<std::string> class_names = {});

/// Same stages on a precomputed partition.
TrainedRun run_pipeline(std::vector<Trial> train, std::vector<Trial> val, TrainConfig cfg,
                        std::vector<std::string> class_names = {});

} // namespace ccvnet
