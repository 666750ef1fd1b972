// ccvnet: synthesize data, train the hierarchical pipeline, evaluate,
// predict, gradient-check and inspect run reports.
//
// Exit codes: 0 success, 1 gradient check failed, 2 configuration or missing
// weights, 3 data error, 4 numeric abort.

#include "ccvnet/datalab.hpp"
#include "ccvnet/errors.hpp"
#include "ccvnet/gradcheck.hpp"
#include "ccvnet/report.hpp"
#include "ccvnet/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ccvnet;

namespace {

enum Exit { kOk = 0, kGradFail = 1, kConfig = 2, kData = 3, kNumeric = 4 };

std::vector<std::string> read_classes(const std::string &dir) {
  std::vector<std::string> names;
  const auto path = fs::path(dir) / kClassesFile;
  if (!fs::exists(path))
    return names;
  std::istringstream in(read_text_file(path.string()));
  for (std::string line; std::getline(in, line);)
    if (!line.empty())
      names.push_back(line);
  return names;
}

TrainConfig read_run_config(const std::string &dir) {
  const auto path = fs::path(dir) / kConfigFile;
  if (!fs::exists(path))
    throw ConfigError("no " + std::string(kConfigFile) + " in weights directory " + dir);
  return read_config(path.string());
}

int cmd_gen_synth(const SynthSpec &spec, const std::string &out, const std::string &task) {
  const auto trials = gen_synth(spec);
  fs::create_directories(fs::path(out) / "trials");
  Manifest m;
  m.task = task;
  m.subject = "synth";
  for (std::size_t k = 0; k < spec.classes; ++k)
    m.class_names.push_back("class" + std::to_string(k));
  for (std::size_t i = 0; i < trials.size(); ++i) {
    std::ostringstream name;
    name << "trials/" << std::setw(5) << std::setfill('0') << i << ".eegt";
    save_trial(trials[i], (fs::path(out) / name.str()).string(), 256.0f);
    m.trial_paths.push_back(name.str());
  }
  const auto manifest = (fs::path(out) / "manifest.txt").string();
  write_manifest(m, manifest);
  std::cout << "wrote " << trials.size() << " trials and " << manifest << "\n";
  return kOk;
}

int cmd_train(const std::string &data, const std::string &config_path, const std::string &out,
              const std::optional<std::uint64_t> &seed,
              const std::vector<std::size_t> &epochs) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : read_config(config_path);
  if (seed)
    cfg.seed = *seed;
  if (!epochs.empty()) {
    if (epochs.size() != 3)
      throw ConfigError("--epochs takes three comma-separated values (stage1,stage2,stage3)");
    std::copy(epochs.begin(), epochs.end(), cfg.epochs.begin());
  }
  Manifest manifest;
  const auto trials = load(data, &manifest);
  if (cfg.classes != 0 && cfg.classes != manifest.class_count())
    throw ConfigError("config declares " + std::to_string(cfg.classes) +
                      " classes but the manifest lists " +
                      std::to_string(manifest.class_count()));
  cfg.classes = manifest.class_count();

  fs::create_directories(out);
  // Echo the merged config before training so failed runs are reproducible too.
  write_text_file((fs::path(out) / kConfigFile).string(), cfg.to_text());

  const TrainedRun run = run_pipeline(trials, cfg, manifest.class_names);
  save_run(run, out);
  std::cout << render_summary(run.report, run.report.curves);
  std::cout << "run written to " << out << "\n";
  return kOk;
}

int cmd_eval(const std::string &data, const std::string &weights) {
  const TrainConfig cfg = read_run_config(weights);
  const Model model = load_model(weights, cfg);
  model.require_complete();
  Manifest manifest;
  const auto trials = load(data, &manifest);
  if (manifest.class_count() != cfg.classes)
    throw DataError("manifest has " + std::to_string(manifest.class_count()) +
                    " classes, model was trained on " + std::to_string(cfg.classes));
  const EvalResult r = evaluate(model, trials, cfg.classes);
  std::cout << "accuracy = " << r.accuracy << " (" << r.correct << "/" << r.total << ")\n";
  std::cout << "confusion (rows = true class, columns = predicted):\n";
  for (std::size_t k = 0; k < r.confusion.size(); ++k) {
    std::cout << "  " << std::setw(14) << std::left << manifest.class_names[k] << std::right;
    for (auto c : r.confusion[k])
      std::cout << std::setw(6) << c;
    std::cout << "\n";
  }
  return kOk;
}

int cmd_predict(const std::string &trial_path, const std::string &weights) {
  const TrainConfig cfg = read_run_config(weights);
  const Model model = load_model(weights, cfg);
  model.require_complete();
  const Trial trial = load_trial(trial_path);
  const Prediction p = model.predict_trial(trial);
  const auto names = read_classes(weights);
  auto name = [&](std::size_t k) { return k < names.size() ? names[k] : std::to_string(k); };
  std::cout << "class = " << name(static_cast<std::size_t>(p.label)) << "\n";
  std::cout << std::setprecision(17);
  for (std::size_t k = 0; k < p.probs.size(); ++k)
    std::cout << "prob." << name(k) << " = " << p.probs[k] << "\n";
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string &fault) {
  if (!fault.empty())
    ccvnet::testing::inject_backward_fault(fault);
  GradcheckOptions opts;
  opts.seed = seed;
  const auto results = run_gradcheck_suite(opts);
  ccvnet::testing::clear_backward_fault();
  bool ok = true;
  for (const auto &r : results) {
    std::printf("%-14s max_rel_err = %.6e  entries = %-5zu skipped = %-3zu %s\n", r.op.c_str(),
                r.max_rel_error, r.entries_checked, r.entries_skipped, r.passed ? "ok" : "FAIL");
    if (!r.passed) {
      ok = false;
      std::cerr << "gradcheck failed for op " << r.op << "\n";
    }
  }
  return ok ? kOk : kGradFail;
}

int cmd_report(const std::string &run_dir) {
  const auto report_path = fs::path(run_dir) / kReportJson;
  if (!fs::exists(report_path))
    throw DataError("no " + std::string(kReportJson) + " in run directory " + run_dir);
  const RunReport report = parse_report_json(read_text_file(report_path.string()));
  LossCurve curves = report.curves;
  const auto curves_path = fs::path(run_dir) / kCurvesFile;
  if (fs::exists(curves_path))
    curves = parse_curves_csv(read_text_file(curves_path.string()), curves_path.string());
  std::cout << render_summary(report, curves);
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Covariance-feature CNN/LSTM + autoencoder classifier for imagined-speech EEG"};
  app.require_subcommand(1);

  SynthSpec synth;
  std::string synth_out, synth_task = "synthetic";
  auto *gen = app.add_subcommand("gen-synth", "Write a synthetic trial set and manifest");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--channels", synth.channels, "Channels per trial");
  gen->add_option("--samples", synth.samples, "Samples per trial");
  gen->add_option("--classes", synth.classes, "Class count");
  gen->add_option("--trials-per-class", synth.trials_per_class, "Trials per class");
  gen->add_option("--noise", synth.noise_sigma, "White-noise standard deviation");
  gen->add_option("--strength", synth.signal_strength, "Class-signature strength");
  gen->add_option("--seed", synth.seed, "Generator seed");
  gen->add_option("--task", synth_task, "Task name written to the manifest");

  std::string data, config, out, weights, trial, run_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> epochs;
  auto *train = app.add_subcommand("train", "Run all three training stages");
  train->add_option("--data", data, "Manifest file")->required();
  train->add_option("--config", config, "key = value config file");
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--seed", seed, "Run seed (overrides config)");
  train->add_option("--epochs", epochs, "Epochs per stage, e.g. 100,200,100")->delimiter(',');

  auto *eval = app.add_subcommand("eval", "Accuracy and confusion matrix on a manifest");
  eval->add_option("--data", data, "Manifest file")->required();
  eval->add_option("--weights", weights, "Run directory with stage weights")->required();

  auto *predict = app.add_subcommand("predict", "Classify one trial file");
  predict->add_option("--trial", trial, "Trial file")->required();
  predict->add_option("--weights", weights, "Run directory with stage weights")->required();

  std::uint64_t gc_seed = 1;
  std::string fault;
  auto *gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op");
  gradcheck->add_option("--seed", gc_seed, "Seed for random shapes and values");
  gradcheck->add_option("--inject-fault", fault)->group("");

  auto *report = app.add_subcommand("report", "Summarise a run directory");
  report->add_option("--run", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*gen)
      return cmd_gen_synth(synth, synth_out, synth_task);
    if (*train)
      return cmd_train(data, config, out, seed, epochs);
    if (*eval)
      return cmd_eval(data, weights);
    if (*predict)
      return cmd_predict(trial, weights);
    if (*gradcheck)
      return cmd_gradcheck(gc_seed, fault);
    if (*report)
      return cmd_report(run_dir);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const StateError &e) {
    std::cerr << "missing weights: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError &e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
