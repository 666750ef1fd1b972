#include "ccvnet/report.hpp"

#include "ccvnet/binary_io.hpp"
#include "ccvnet/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ccvnet {

namespace {

std::string num(double v) {
  if (std::isnan(v))
    return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_cell(const std::string &cell, const std::string &origin, std::size_t line) {
  if (cell.empty())
    return kNotApplicable;
  double v = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw DataError(origin + ":" + std::to_string(line) + ": bad number '" + cell + "'");
  return v;
}

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double from_nullable(const json &j) { return j.is_null() ? kNotApplicable : j.get<double>(); }

json eval_json(const EvalResult &r) {
  json per_class = json::array();
  for (const auto &m : r.per_class)
    per_class.push_back({{"precision", m.precision}, {"recall", m.recall}, {"support", m.support}});
  return {{"total", r.total},         {"correct", r.correct},     {"accuracy", r.accuracy},
          {"loss", nullable(r.loss)}, {"confusion", r.confusion}, {"per_class", per_class}};
}

EvalResult eval_from_json(const json &j) {
  EvalResult r;
  r.total = j.at("total").get<std::size_t>();
  r.correct = j.at("correct").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.loss = from_nullable(j.at("loss"));
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  for (const auto &m : j.at("per_class"))
    r.per_class.push_back({m.at("precision").get<double>(), m.at("recall").get<double>(),
                           m.at("support").get<std::size_t>()});
  return r;
}

void eval_text(std::ostringstream &out, const std::string &part, const EvalResult &r,
               const std::vector<std::string> &classes) {
  if (r.total == 0)
    return;
  out << "accuracy." << part << " = " << num(r.accuracy) << "\n";
  out << "correct." << part << " = " << r.correct << "\n";
  out << "total." << part << " = " << r.total << "\n";
  if (!std::isnan(r.loss))
    out << "loss." << part << " = " << num(r.loss) << "\n";
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const std::string name = k < classes.size() ? classes[k] : std::to_string(k);
    out << "precision." << part << "." << name << " = " << num(r.per_class[k].precision) << "\n";
    out << "recall." << part << "." << name << " = " << num(r.per_class[k].recall) << "\n";
    out << "support." << part << "." << name << " = " << r.per_class[k].support << "\n";
  }
  out << "confusion." << part << " =\n";
  for (const auto &row : r.confusion) {
    out << " ";
    for (auto c : row)
      out << " " << c;
    out << "\n";
  }
}

} // namespace

std::string format_report_text(const RunReport &report) {
  std::ostringstream out;
  out << "format_version = " << report.format_version << "\n";
  out << "classes = ";
  for (std::size_t i = 0; i < report.class_names.size(); ++i)
    out << (i ? ", " : "") << report.class_names[i];
  out << "\n";
  eval_text(out, "train", report.train, report.class_names);
  eval_text(out, "validation", report.validation, report.class_names);
  out << "branch_train_accuracy.cnn = " << num(report.cnn_train_accuracy) << "\n";
  out << "branch_train_accuracy.rnn = " << num(report.rnn_train_accuracy) << "\n";
  out << "dae_mse.initial = " << num(report.dae_initial_mse) << "\n";
  out << "dae_mse.final = " << num(report.dae_final_mse) << "\n";
  for (const auto &[stage, secs] : report.stage_seconds)
    out << "seconds." << stage << " = " << num(secs) << "\n";
  std::istringstream cfg(report.config.to_text());
  for (std::string line; std::getline(cfg, line);)
    out << "config." << line << "\n";
  return out.str();
}

std::string format_report_json(const RunReport &report) {
  json curves = json::array();
  for (const auto &p : report.curves)
    curves.push_back({{"epoch", p.epoch},
                      {"stage", p.stage},
                      {"train_loss", nullable(p.train_loss)},
                      {"val_loss", nullable(p.val_loss)},
                      {"val_acc", nullable(p.val_acc)}});
  json j = {{"format_version", report.format_version},
            {"class_names", report.class_names},
            {"config", report.config.to_text()},
            {"train", eval_json(report.train)},
            {"validation", report.validation.total ? eval_json(report.validation) : json(nullptr)},
            {"cnn_train_accuracy", nullable(report.cnn_train_accuracy)},
            {"rnn_train_accuracy", nullable(report.rnn_train_accuracy)},
            {"dae_initial_mse", nullable(report.dae_initial_mse)},
            {"dae_final_mse", nullable(report.dae_final_mse)},
            {"stage_seconds", report.stage_seconds},
            {"curves", curves}};
  return j.dump(2) + "\n";
}

RunReport parse_report_json(const std::string &text) {
  RunReport r;
  try {
    const json j = json::parse(text);
    r.format_version = j.at("format_version").get<std::uint32_t>();
    if (r.format_version != kReportFormatVersion)
      throw DataError("unsupported report format version " + std::to_string(r.format_version));
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.config.apply_text(j.at("config").get<std::string>(), "report.json:config");
    r.train = eval_from_json(j.at("train"));
    if (!j.at("validation").is_null())
      r.validation = eval_from_json(j.at("validation"));
    r.cnn_train_accuracy = from_nullable(j.at("cnn_train_accuracy"));
    r.rnn_train_accuracy = from_nullable(j.at("rnn_train_accuracy"));
    r.dae_initial_mse = from_nullable(j.at("dae_initial_mse"));
    r.dae_final_mse = from_nullable(j.at("dae_final_mse"));
    r.stage_seconds = j.at("stage_seconds").get<std::map<std::string, double>>();
    for (const auto &p : j.at("curves"))
      r.curves.push_back({p.at("epoch").get<std::size_t>(), p.at("stage").get<std::string>(),
                          from_nullable(p.at("train_loss")), from_nullable(p.at("val_loss")),
                          from_nullable(p.at("val_acc"))});
  } catch (const json::exception &e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string format_curves_csv(const LossCurve &curve) {
  std::ostringstream out;
  out << "epoch,stage,train_loss,val_loss,val_acc\n";
  for (const auto &p : curve)
    out << p.epoch << "," << p.stage << "," << num(p.train_loss) << "," << num(p.val_loss) << ","
        << num(p.val_acc) << "\n";
  return out.str();
}

LossCurve parse_curves_csv(const std::string &text, const std::string &origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  LossCurve curve;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (lineno == 1) {
      if (line != "epoch,stage,train_loss,val_loss,val_acc")
        throw DataError(origin + ":1: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty())
      continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');)
      cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
      cells.emplace_back();
    if (cells.size() != 5)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected 5 columns");
    CurvePoint p;
    p.epoch = static_cast<std::size_t>(parse_cell(cells[0], origin, lineno));
    p.stage = cells[1];
    p.train_loss = parse_cell(cells[2], origin, lineno);
    p.val_loss = parse_cell(cells[3], origin, lineno);
    p.val_acc = parse_cell(cells[4], origin, lineno);
    curve.push_back(p);
  }
  return curve;
}

std::string render_summary(const RunReport &report, const LossCurve &curves) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  std::vector<std::string> stages;
  for (const auto &p : curves)
    if (std::find(stages.begin(), stages.end(), p.stage) == stages.end())
      stages.push_back(p.stage);

  out << "stage  epochs  first_loss  last_loss  best_val_loss  best_epoch\n";
  for (const auto &stage : stages) {
    const CurvePoint *first = nullptr, *last = nullptr, *best = nullptr;
    for (const auto &p : curves) {
      if (p.stage != stage)
        continue;
      if (!first)
        first = &p;
      last = &p;
      if (!std::isnan(p.val_loss) && (!best || p.val_loss < best->val_loss))
        best = &p;
    }
    out << std::left << std::setw(7) << stage << std::right << std::setw(6) << last->epoch
        << std::setw(12) << first->train_loss << std::setw(11) << last->train_loss;
    if (best)
      out << std::setw(15) << best->val_loss << std::setw(12) << best->epoch;
    else
      out << std::setw(15) << "-" << std::setw(12) << "-";
    out << "\n";
  }
  if (report.train.total)
    out << "train accuracy:      " << report.train.accuracy << " (" << report.train.correct << "/"
        << report.train.total << ")\n";
  if (report.validation.total)
    out << "validation accuracy: " << report.validation.accuracy << " ("
        << report.validation.correct << "/" << report.validation.total << ")\n";
  return out.str();
}

std::string stage_file(const std::string &dir, const std::string &stage) {
  return (fs::path(dir) / (stage + ".cvdp")).string();
}

void save_model(const Model &model, const std::string &dir) {
  fs::create_directories(dir);
  if (model.cnn)
    save_params(model.cnn->params(), stage_file(dir, "cnn"));
  if (model.rnn)
    save_params(model.rnn->params(), stage_file(dir, "rnn"));
  if (model.dae)
    save_params(model.dae->params(), stage_file(dir, "dae"));
  if (model.head)
    save_params(model.head->params(), stage_file(dir, "head"));
  if (model.norm) {
    ParamStore norm;
    norm.add("mean", model.norm->mean);
    norm.add("stddev", model.norm->stddev);
    save_params(norm, stage_file(dir, "norm"));
  }
}

Model load_model(const std::string &dir, const TrainConfig &cfg) {
  Model m;
  m.lag = cfg.lag;
  auto present = [&](const char *stage) { return fs::exists(stage_file(dir, stage)); };
  if (present("cnn"))
    m.cnn.emplace(cfg.cnn_spec(), load_params(stage_file(dir, "cnn")));
  if (present("rnn"))
    m.rnn.emplace(cfg.rnn_spec(), load_params(stage_file(dir, "rnn")));
  if (present("dae"))
    m.dae.emplace(cfg.dae_spec(), load_params(stage_file(dir, "dae")));
  if (present("head"))
    m.head.emplace(cfg.head_spec(), load_params(stage_file(dir, "head")));
  if (present("norm")) {
    const ParamStore norm = load_params(stage_file(dir, "norm"));
    m.norm = StandardizeStats{norm.get("mean").value(), norm.get("stddev").value()};
  }
  return m;
}

void write_text_file(const std::string &path, const std::string &text) {
  binio::write_file(path, std::vector<char>(text.begin(), text.end()));
}

std::string read_text_file(const std::string &path) {
  const auto bytes = binio::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void save_run(const TrainedRun &run, const std::string &dir) {
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / kConfigFile).string(), run.report.config.to_text());
  std::string classes;
  for (const auto &c : run.report.class_names)
    classes += c + "\n";
  write_text_file((fs::path(dir) / kClassesFile).string(), classes);
  save_model(run.model, dir);
  write_text_file((fs::path(dir) / kCurvesFile).string(), format_curves_csv(run.report.curves));
  write_text_file((fs::path(dir) / kReportText).string(), format_report_text(run.report));
  write_text_file((fs::path(dir) / kReportJson).string(), format_report_json(run.report));
}

} // namespace ccvnet
