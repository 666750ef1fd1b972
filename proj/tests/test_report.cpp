#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccvnet/errors.hpp"
#include "ccvnet/report.hpp"
#include "test_support.hpp"

#include <cmath>
#include <sstream>

using namespace ccvnet;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.conv1_filters = 4;
  cfg.conv2_filters = 4;
  cfg.cnn_fc1 = 8;
  cfg.cnn_feature = 8;
  cfg.rnn_fc1 = 8;
  cfg.rnn_fc2 = 8;
  cfg.rnn_lstm1 = 8;
  cfg.rnn_lstm2 = 8;
  cfg.dae_hidden = 8;
  cfg.dae_latent = 4;
  cfg.head_hidden = 4;
  cfg.epochs = {3, 3, 3};
  return cfg;
}

const TrainedRun &tiny_run() {
  static const TrainedRun run = [] {
    SynthSpec s;
    s.channels = 5;
    s.samples = 32;
    s.trials_per_class = 5;
    return run_pipeline(gen_synth(s), tiny_config(), {"x", "y", "z"});
  }();
  return run;
}

bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

} // namespace

TEST_CASE("curves csv") {
  const LossCurve curve{{0, "cnn", 1.0986122886681098, 1.1, 0.25},
                        {1, "cnn", 0.1 + 0.2, 2.0 / 3.0, 1.0},
                        {0, "dae", 80.5, kNotApplicable, kNotApplicable},
                        {0, "head", 1e-300, kNotApplicable, kNotApplicable}};
  const std::string csv = format_curves_csv(curve);
  CHECK(csv.rfind("epoch,stage,train_loss,val_loss,val_acc\n", 0) == 0);
  CHECK(csv.find("0,dae,80.5,,\n") != std::string::npos);

  const LossCurve back = parse_curves_csv(csv, "c.csv");
  REQUIRE(back.size() == curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(back[i].epoch == curve[i].epoch);
    CHECK(back[i].stage == curve[i].stage);
    CHECK(same_number(back[i].train_loss, curve[i].train_loss));
    CHECK(same_number(back[i].val_loss, curve[i].val_loss));
    CHECK(same_number(back[i].val_acc, curve[i].val_acc));
  }
  CHECK(format_curves_csv(back) == csv);

  CHECK_THROWS_AS(parse_curves_csv("epoch,stage\n", "c.csv"), DataError);
  CHECK_THROWS_AS(parse_curves_csv(csv + "2,cnn,abc,,\n", "c.csv"), DataError);
}

TEST_CASE("json report round trip") {
  const RunReport &r = tiny_run().report;
  const std::string json = format_report_json(r);
  const RunReport back = parse_report_json(json);
  CHECK(back.same_metrics(r));
  CHECK(back.stage_seconds == r.stage_seconds);
  CHECK(back.config == r.config);
  CHECK(back.class_names == r.class_names);
  CHECK(format_report_json(back) == json);
  CHECK_THROWS_AS(parse_report_json("{\"format_version\": 99}"), DataError);
  CHECK_THROWS_AS(parse_report_json("not json"), DataError);
}

TEST_CASE("text report") {
  const RunReport &r = tiny_run().report;
  const std::string text = format_report_text(r);
  CHECK(text.rfind("format_version = 1\n", 0) == 0);
  CHECK(text.find("classes = x, y, z\n") != std::string::npos);
  CHECK(text.find("config.seed = 1\n") != std::string::npos);

  // Each confusion row sums to the class support.
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line) && line != "confusion.validation =") {
  }
  for (std::size_t k = 0; k < 3; ++k) {
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("  ", 0) == 0);
    std::istringstream row(line);
    std::size_t sum = 0, v = 0;
    while (row >> v)
      sum += v;
    CHECK(sum == r.validation.per_class[k].support);
  }
}

TEST_CASE("run directory") {
  const fs::path dir = support::scratch_dir("report_run");
  const TrainedRun &run = tiny_run();
  save_run(run, dir.string());
  for (const char *f : {kConfigFile, kClassesFile, kCurvesFile, kReportText, kReportJson})
    CHECK(fs::exists(dir / f));
  for (const char *stage : {"cnn", "rnn", "dae", "head", "norm"})
    CHECK(fs::exists(stage_file(dir.string(), stage)));

  TrainConfig cfg;
  cfg.apply_text(read_text_file((dir / kConfigFile).string()), "config");
  CHECK(cfg == run.report.config);

  const Model loaded = load_model(dir.string(), cfg);
  CHECK(loaded.cnn->params().same_values(run.model.cnn->params()));
  CHECK(loaded.head->params().same_values(run.model.head->params()));
  CHECK(loaded.norm->mean == run.model.norm->mean);
  const EvalResult a = evaluate(loaded, run.val, 3);
  const EvalResult b = evaluate(run.model, run.val, 3);
  CHECK(a.confusion == b.confusion);
  CHECK(a.loss == b.loss);

  fs::remove(stage_file(dir.string(), "dae"));
  const Model partial = load_model(dir.string(), cfg);
  CHECK_FALSE(partial.dae.has_value());
  CHECK(partial.head.has_value());
  CHECK_THROWS_AS(evaluate(partial, run.val, 3), StateError);
}

TEST_CASE("summary mentions every stage") {
  const TrainedRun &run = tiny_run();
  const std::string s = render_summary(run.report, run.report.curves);
  for (const char *stage : {"cnn", "rnn", "dae", "head"})
    CHECK(s.find(stage) != std::string::npos);
  CHECK(s.find("validation accuracy") != std::string::npos);
}
