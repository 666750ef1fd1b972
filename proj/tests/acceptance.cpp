// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "ccvnet/binary_io.hpp"
#include "ccvnet/covariance.hpp"
#include "ccvnet/datalab.hpp"
#include "ccvnet/errors.hpp"
#include "ccvnet/gradcheck.hpp"
#include "ccvnet/report.hpp"
#include "ccvnet/trainer.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

using namespace ccvnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string &name, const std::function<Outcome()> &body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass)
    ++failures;
  std::printf("%s  %-26s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::path(CCVNET_TEST_TMP) / "acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_files(const fs::path &a, const fs::path &b) {
  return binio::read_file(a.string()) == binio::read_file(b.string());
}

SynthSpec convergence_spec() {
  SynthSpec s;
  s.channels = 8;
  s.samples = 128;
  s.classes = 3;
  s.trials_per_class = 40;
  s.noise_sigma = 0.1;
  s.signal_strength = 1.0;
  s.seed = 1;
  return s;
}

// The synthetic convergence run is reused by the DAE and determinism criteria.
std::optional<TrainedRun> convergence_run;
double convergence_seconds = 0.0;

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  const auto results = run_gradcheck_suite(GradcheckOptions{});
  const double secs = seconds_since(start);

  const std::set<std::string> required{"matmul",  "conv1d",       "lstm_cell",   "relu",
                                       "sigmoid", "tanh",         "softmax_xent", "mse",
                                       "cnn_forward", "rnn_forward", "dae_loss",  "head_forward"};
  std::set<std::string> seen;
  double worst = 0.0;
  std::string worst_op;
  bool ok = true;
  for (const auto &r : results) {
    seen.insert(r.op);
    ok = ok && r.max_rel_error < 1e-4 && r.entries_checked > 0;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_op = r.op;
    }
  }
  std::string missing;
  for (const auto &op : required)
    if (!seen.count(op))
      missing += " " + op;
  ok = ok && missing.empty() && secs < 60.0;
  return {ok, "max rel err " + fmt(worst) + " (" + worst_op + ") < 1e-4 over " +
                  std::to_string(results.size()) + " ops, " + fmt(secs) + " s < 60 s" +
                  (missing.empty() ? "" : ", missing:" + missing)};
}

Outcome covariance_oracle() {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> cdist(2, 8), tdist(2, 64);
  std::normal_distribution<double> normal;
  double worst_abs = 0.0, worst_scale = 0.0;
  double worst_psd = std::numeric_limits<double>::infinity();
  bool symmetric = true, psd = true;
  for (int k = 0; k < 100; ++k) {
    const std::size_t c = cdist(gen), t = tdist(gen);
    const Trial trial{oracle::random_tensor({c, t}, gen, 2.0), 0, "s", "t"};
    const CovMatrix m = ccv(trial);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        worst_abs = std::max(worst_abs, std::abs(m.values.at(i, j) -
                                                 oracle::covariance_entry(trial.data, i, j, 0)));
        symmetric = symmetric && m.values.at(i, j) == m.values.at(j, i);
      }
    for (int v = 0; v < 100; ++v) {
      std::vector<double> x(c);
      double norm2 = 0.0, q = 0.0;
      for (auto &e : x) {
        e = normal(gen);
        norm2 += e * e;
      }
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
          q += x[i] * m.values.at(i, j) * x[j];
      psd = psd && q >= -1e-9 * norm2;
      worst_psd = std::min(worst_psd, q / norm2);
    }
    const double alpha = 0.5 + 3.0 * std::abs(normal(gen));
    Trial scaled = trial;
    for (auto &v : scaled.data.storage())
      v *= alpha;
    const CovMatrix ms = ccv(scaled);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      const double want = alpha * alpha * m.values[i];
      if (want != 0.0)
        worst_scale = std::max(worst_scale, std::abs(ms.values[i] - want) / std::abs(want));
    }
  }
  const bool ok = worst_abs <= 1e-10 && symmetric && psd && worst_scale <= 1e-9;
  return {ok, "100 trials: max |ccv - oracle| " + fmt(worst_abs) + " <= 1e-10, symmetric " +
                  (symmetric ? "exact" : "NO") + ", min x'Mx/|x|^2 " + fmt(worst_psd) +
                  " >= -1e-9, scale rel err " + fmt(worst_scale) + " <= 1e-9"};
}

Outcome synthetic_convergence() {
  const auto trials = gen_synth(convergence_spec());
  const auto start = Clock::now();
  convergence_run = run_pipeline(trials, TrainConfig{});
  convergence_seconds = seconds_since(start);
  const RunReport &r = convergence_run->report;
  const bool ok = r.cnn_train_accuracy >= 0.95 && r.rnn_train_accuracy >= 0.95 &&
                  r.validation.accuracy >= 0.90 && convergence_seconds < 600.0 &&
                  r.config.epochs[0] <= 100;
  return {ok, "cnn train acc " + fmt(r.cnn_train_accuracy) + ", rnn train acc " +
                  fmt(r.rnn_train_accuracy) + " >= 0.95 (" + std::to_string(r.config.epochs[0]) +
                  " epochs); pipeline val acc " + fmt(r.validation.accuracy) + " >= 0.90; " +
                  fmt(convergence_seconds) + " s < 600 s"};
}

Outcome chance_level() {
  bool ok = true;
  std::string accs;
  double mean = 0.0;
  const int seeds = 5;
  for (int seed = 1; seed <= seeds; ++seed) {
    SynthSpec s = convergence_spec();
    s.noise_sigma = 1e3 * s.signal_strength;
    s.seed = static_cast<std::uint64_t>(seed);
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const TrainedRun run = run_pipeline(gen_synth(s), cfg);
    const double acc = run.report.validation.accuracy;
    ok = ok && std::abs(acc - 1.0 / 3.0) <= 0.15;
    accs += (accs.empty() ? "" : " ") + fmt(acc);
    mean += acc / seeds;
  }
  return {ok, "sigma = 1e3 x signal, val acc per seed 1..5 [" + accs + "] (mean " + fmt(mean) +
                  ") each within 1/3 +- 0.15"};
}

Outcome dae_progress() {
  if (!convergence_run)
    return {false, "synthetic convergence run unavailable"};
  const RunReport &r = convergence_run->report;
  return {r.dae_final_mse <= 0.5 * r.dae_initial_mse,
          "final MSE " + fmt(r.dae_final_mse) + " <= 0.5 x epoch-0 MSE " +
              fmt(r.dae_initial_mse)};
}

Outcome determinism() {
  if (!convergence_run)
    return {false, "synthetic convergence run unavailable"};
  const TrainedRun again = run_pipeline(gen_synth(convergence_spec()), TrainConfig{});
  const fs::path a = scratch("determinism_a"), b = scratch("determinism_b");
  save_run(*convergence_run, a.string());
  save_run(again, b.string());
  bool bytes_equal = true;
  for (const char *stage : {"cnn", "rnn", "dae", "head", "norm"})
    bytes_equal = bytes_equal && same_files(stage_file(a.string(), stage),
                                            stage_file(b.string(), stage));
  bytes_equal = bytes_equal && same_files(a / kCurvesFile, b / kCurvesFile);
  const bool metrics = again.report.same_metrics(convergence_run->report);
  return {bytes_equal && metrics, std::string("weight files ") +
                                      (bytes_equal ? "byte-identical" : "DIFFER") +
                                      ", report metrics " + (metrics ? "identical" : "DIFFER")};
}

Outcome isolation_and_canary() {
  const auto [train, val] = split(gen_synth(convergence_spec()), 0.8, 1, 3);
  TrainConfig cfg;
  cfg.channels = 8;
  cfg.classes = 3;
  // The canary needs a run where validation data cannot select the checkpoint.
  cfg.patience = 0;

  LabeledSet train_set = covariance_set(train, 0);
  train_set.inputs = standardize(train_set.inputs).first;
  const Stage1Result s1 = train_stage1(train_set, {}, cfg);
  const auto cnn_bytes = serialize(s1.cnn.params());
  const auto rnn_bytes = serialize(s1.rnn.params());
  const Tensor features = extract_features(make_batch(train_set.inputs), s1.cnn, s1.rnn);
  const Stage2Result s2 = train_stage2(features, cfg);
  const bool after2 = serialize(s1.cnn.params()) == cnn_bytes &&
                      serialize(s1.rnn.params()) == rnn_bytes;
  const auto dae_bytes = serialize(s2.dae.params());
  const Tensor latents = s2.dae.encode(features);
  train_stage3(latents, train_set.labels, Tensor(), {}, cfg);
  const bool after3 = serialize(s1.cnn.params()) == cnn_bytes &&
                      serialize(s1.rnn.params()) == rnn_bytes &&
                      serialize(s2.dae.params()) == dae_bytes;

  std::vector<Trial> perturbed = val;
  std::mt19937_64 gen(7);
  for (auto &t : perturbed)
    t.data = oracle::random_tensor(t.data.shape(), gen, 50.0);
  const TrainedRun clean = run_pipeline(train, val, cfg);
  const TrainedRun dirty = run_pipeline(train, perturbed, cfg);
  bool canary = clean.model.norm->mean == dirty.model.norm->mean &&
                clean.model.norm->stddev == dirty.model.norm->stddev;
  canary = canary && serialize(clean.model.cnn->params()) == serialize(dirty.model.cnn->params()) &&
           serialize(clean.model.rnn->params()) == serialize(dirty.model.rnn->params()) &&
           serialize(clean.model.dae->params()) == serialize(dirty.model.dae->params()) &&
           serialize(clean.model.head->params()) == serialize(dirty.model.head->params());
  const bool val_changed =
      clean.report.validation.loss != dirty.report.validation.loss;
  return {after2 && after3 && canary && val_changed,
          std::string("stage 2 ") + (after2 ? "kept" : "CHANGED") + " stage-1 weights, stage 3 " +
              (after3 ? "kept" : "CHANGED") + " stage-1/2 weights; perturbed validation set " +
              (canary ? "left all weights and norm stats identical" : "CHANGED trained weights") +
              (val_changed ? "" : " (perturbation had no effect on val loss)")};
}

Outcome format_round_trip() {
  const fs::path dir = scratch("formats");
  SynthSpec s = convergence_spec();
  s.trials_per_class = 4;
  bool trials_ok = true;
  int index = 0;
  for (const auto &t : gen_synth(s)) {
    const std::string path = (dir / ("t" + std::to_string(index++) + ".eegt")).string();
    save_trial(t, path, 256.0f);
    const auto bytes = binio::read_file(path);
    const Trial back = load_trial(path);
    trials_ok = trials_ok && back.data == t.data && back.label == t.label &&
                encode_trial(back, 256.0f) == bytes;
  }

  if (!convergence_run)
    return {false, "synthetic convergence run unavailable"};
  const ParamStore &cnn = convergence_run->model.cnn->params();
  const std::string ppath = (dir / "cnn.cvdp").string();
  save_params(cnn, ppath);
  const auto pbytes = binio::read_file(ppath);
  const ParamStore loaded = load_params(ppath);
  const bool params_ok = serialize(loaded) == pbytes && loaded.same_values(cnn) &&
                         pbytes == serialize(cnn);

  // Corruptions must be reported with the file path and the offending byte.
  bool located = true;
  auto expect = [&](const std::function<void()> &f, const std::string &path, std::uint64_t at) {
    try {
      f();
      located = false;
    } catch (const ParseError &e) {
      located = located && e.path() == path && e.offset() == at;
    }
  };
  const std::string tpath = (dir / "t0.eegt").string();
  auto tbytes = binio::read_file(tpath);
  auto truncated = tbytes;
  truncated.resize(tbytes.size() - 6);
  const std::uint64_t tcut = kTrialHeaderBytes + ((truncated.size() - kTrialHeaderBytes) / 4) * 4;
  expect([&] { decode_trial(tpath, truncated); }, tpath, tcut);
  auto magic = tbytes;
  magic[0] = 'X';
  expect([&] { decode_trial(tpath, magic); }, tpath, 0);
  auto pmagic = pbytes;
  pmagic[2] = 0;
  expect([&] { deserialize(ppath, pmagic); }, ppath, 0);
  auto pversion = pbytes;
  pversion[4] = 9;
  expect([&] { deserialize(ppath, pversion); }, ppath, 4);

  return {trials_ok && params_ok && located,
          std::string("TrialFile ") + (trials_ok ? "byte-exact" : "MISMATCH") + ", ParamStore " +
              (params_ok ? "byte-exact" : "MISMATCH") + ", corrupt files " +
              (located ? "rejected at the faulty offset" : "NOT located")};
}

} // namespace

int main() {
  criterion("gradient-fidelity", gradient_fidelity);
  criterion("covariance-oracle", covariance_oracle);
  criterion("synthetic-convergence", synthetic_convergence);
  criterion("chance-level", chance_level);
  criterion("dae-progress", dae_progress);
  criterion("determinism", determinism);
  criterion("isolation-and-canary", isolation_and_canary);
  criterion("format-round-trip", format_round_trip);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
