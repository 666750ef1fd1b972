#pragma once

// Run-directory artifacts: stage weight files, the config echo, the loss
// curve CSV and the run report in text and JSON form.

#include "ccvnet/trainer.hpp"

#include <string>

namespace ccvnet {

/// Text report: `key = value` lines in fixed order; the confusion matrix is a
/// `confusion.<partition> =` line followed by one indented row per true class.
std::string format_report_text(const RunReport &report);
std::string format_report_json(const RunReport &report);
RunReport parse_report_json(const std::string &text);

/// Header `epoch,stage,train_loss,val_loss,val_acc`; empty cells are not applicable.
std::string format_curves_csv(const LossCurve &curve);
LossCurve parse_curves_csv(const std::string &text, const std::string &origin);

/// Human-readable summary of curves and final metrics.
std::string render_summary(const RunReport &report, const LossCurve &curves);

// File names inside a run directory.
inline constexpr const char *kConfigFile = "config.txt";
inline constexpr const char *kClassesFile = "classes.txt";
inline constexpr const char *kCurvesFile = "curves.csv";
inline constexpr const char *kReportText = "report.txt";
inline constexpr const char *kReportJson = "report.json";

std::string stage_file(const std::string &dir, const std::string &stage);

/// Writes cnn/rnn/dae/head/norm weight files for every stage present.
void save_model(const Model &model, const std::string &dir);
/// Loads whichever stage files exist; absent stages stay empty.
Model load_model(const std::string &dir, const TrainConfig &cfg);

void write_text_file(const std::string &path, const std::string &text);
std::string read_text_file(const std::string &path);

/// Writes config echo, classes, weights, curves and both report forms.
void save_run(const TrainedRun &run, const std::string &dir);

} // namespace ccvnet
