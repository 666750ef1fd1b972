#include "ccvnet/datalab.hpp"

#include "ccvnet/binary_io.hpp"
#include "ccvnet/errors.hpp"
#include "ccvnet/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace ccvnet {

namespace {

constexpr char kTrialMagic[] = "EEGT";

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

} // namespace

std::vector<char> encode_trial(const Trial &trial, float sample_rate_hz) {
  if (trial.data.rank() != 2)
    throw DimensionError("trial data must be [channels x samples]");
  if (trial.label < 0)
    throw DataError("trial " + trial.trial_id + " has negative label");
  binio::Writer w;
  w.bytes(std::string_view(kTrialMagic, 4));
  w.u32(kTrialFormatVersion);
  w.u32(static_cast<std::uint32_t>(trial.channels()));
  w.u32(static_cast<std::uint32_t>(trial.samples()));
  w.u32(static_cast<std::uint32_t>(trial.label));
  w.f32(sample_rate_hz);
  for (double v : trial.data.data())
    w.f32(static_cast<float>(v));
  return w.buffer();
}

Trial decode_trial(const std::string &path, const std::vector<char> &bytes, TrialHeader *header) {
  binio::Reader r(path, bytes);
  if (r.bytes(4, "magic") != std::string_view(kTrialMagic, 4))
    r.fail_at(0, "bad magic, expected \"EEGT\"");
  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("format version"); version != kTrialFormatVersion)
    r.fail_at(version_at, "unsupported format version " + std::to_string(version));
  TrialHeader h;
  const std::size_t channels_at = r.offset();
  h.channels = r.u32("channel count");
  h.samples = r.u32("sample count");
  h.label = r.u32("label");
  h.sample_rate_hz = r.f32("sample rate");
  if (h.channels < 2 || h.samples < 2)
    r.fail_at(channels_at, "need at least 2 channels and 2 samples, got " +
                               std::to_string(h.channels) + " x " + std::to_string(h.samples));

  const std::size_t n = static_cast<std::size_t>(h.channels) * h.samples;
  if (r.remaining() < n * 4)
    r.fail_at(kTrialHeaderBytes + (r.remaining() / 4) * 4,
              "truncated payload: expected " + std::to_string(n * 4) + " bytes, found " +
                  std::to_string(r.remaining()));
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const float v = r.f32("sample");
    if (!std::isfinite(v))
      r.fail_at(at, "non-finite sample");
    values[i] = v;
  }
  if (r.remaining() != 0)
    r.fail(std::to_string(r.remaining()) + " trailing bytes after payload");

  if (header)
    *header = h;
  Trial t;
  t.data = Tensor({h.channels, h.samples}, std::move(values));
  t.label = static_cast<int>(h.label);
  t.trial_id = fs::path(path).stem().string();
  return t;
}

void save_trial(const Trial &trial, const std::string &path, float sample_rate_hz) {
  binio::write_file(path, encode_trial(trial, sample_rate_hz));
}

Trial load_trial(const std::string &path, TrialHeader *header) {
  if (!fs::exists(path))
    throw DataError("trial file not found: " + path);
  return decode_trial(path, binio::read_file(path), header);
}

std::string Manifest::resolve(const std::string &trial_path) const {
  const fs::path p(trial_path);
  if (p.is_absolute() || base_dir.empty())
    return p.string();
  return (fs::path(base_dir) / p).string();
}

Manifest parse_manifest(const std::string &path, const std::string &text) {
  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool saw_classes = false;
  auto fail = [&](const std::string &what) {
    throw DataError(path + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "task") {
      m.task = value;
    } else if (key == "subject") {
      m.subject = value;
    } else if (key == "classes") {
      if (saw_classes)
        fail("'classes' given twice");
      saw_classes = true;
      std::istringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (item.empty())
          fail("empty class name");
        for (const auto &existing : m.class_names)
          if (existing == item)
            fail("duplicate class name '" + item + "'");
        m.class_names.push_back(item);
      }
    } else if (key == "trial") {
      if (value.empty())
        fail("empty trial path");
      m.trial_paths.push_back(value);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (m.class_names.empty())
    throw DataError(path + ": manifest declares no classes");
  return m;
}

Manifest read_manifest(const std::string &path) {
  if (!fs::exists(path))
    throw DataError("manifest not found: " + path);
  const auto bytes = binio::read_file(path);
  return parse_manifest(path, std::string(bytes.begin(), bytes.end()));
}

std::string format_manifest(const Manifest &m) {
  std::ostringstream out;
  if (!m.task.empty())
    out << "task = " << m.task << "\n";
  if (!m.subject.empty())
    out << "subject = " << m.subject << "\n";
  out << "classes = ";
  for (std::size_t i = 0; i < m.class_names.size(); ++i)
    out << (i ? ", " : "") << m.class_names[i];
  out << "\n";
  for (const auto &p : m.trial_paths)
    out << "trial = " << p << "\n";
  return out.str();
}

void write_manifest(const Manifest &m, const std::string &path) {
  const std::string text = format_manifest(m);
  binio::write_file(path, std::vector<char>(text.begin(), text.end()));
}

std::vector<Trial> load(const std::string &manifest_path, Manifest *manifest_out) {
  Manifest m = read_manifest(manifest_path);
  std::vector<Trial> trials;
  trials.reserve(m.trial_paths.size());
  for (const auto &rel : m.trial_paths) {
    const std::string path = m.resolve(rel);
    Trial t = load_trial(path);
    if (static_cast<std::size_t>(t.label) >= m.class_count())
      throw ParseError(path, 16,
                       "label " + std::to_string(t.label) + " outside the " +
                           std::to_string(m.class_count()) + " classes of " + manifest_path);
    t.subject_id = m.subject;
    trials.push_back(std::move(t));
  }
  if (manifest_out)
    *manifest_out = std::move(m);
  return trials;
}

const std::vector<TaskClasses> &known_tasks() {
  static const std::vector<TaskClasses> tasks{
      {"vowels", {"a", "i", "u"}},
      {"short-words", {"in", "out", "up"}},
      {"long-words", {"cooperate", "independent"}},
  };
  return tasks;
}

const TaskClasses &task_classes(const std::string &task) {
  for (const auto &t : known_tasks())
    if (task == t.task)
      return t;
  throw ConfigError("unknown task '" + task + "' (expected vowels, short-words or long-words)");
}

void SynthSpec::validate() const {
  if (channels < 2 || samples < 2 || classes < 1 || trials_per_class < 1)
    throw ConfigError("synth: need >= 2 channels, >= 2 samples, >= 1 class and trial");
  if (samples <= channels)
    throw ConfigError("synth: need more samples than channels");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw ConfigError("synth: noise sigma must be finite and >= 0");
  if (!(signal_strength > 0.0) || !std::isfinite(signal_strength))
    throw ConfigError("synth: signal strength must be finite and > 0");
}

std::vector<Trial> gen_synth(const SynthSpec &spec) {
  spec.validate();
  const std::size_t c = spec.channels;
  const std::size_t t_len = spec.samples;

  std::vector<Tensor> mixing;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    Rng rng = Rng::derive(spec.seed, 100 + k);
    Tensor a({c, c});
    const double scale = spec.signal_strength / std::sqrt(static_cast<double>(c));
    for (std::size_t i = 0; i < a.size(); ++i)
      a[i] = scale * rng.normal();
    mixing.push_back(std::move(a));
  }

  const double max_cycles = std::max(2.0, static_cast<double>(t_len) / 8.0);
  std::vector<Trial> trials;
  trials.reserve(spec.classes * spec.trials_per_class);
  for (std::size_t k = 0; k < spec.classes; ++k)
    for (std::size_t n = 0; n < spec.trials_per_class; ++n) {
      Rng rng = Rng::derive(spec.seed, 10000 + k * spec.trials_per_class + n);
      // Sources are centred and orthonormalised so their sample covariance is
      // the identity; the class covariance is then exactly A A^T before noise.
      Tensor sources({c, t_len});
      const double unit = std::sqrt(static_cast<double>(t_len - 1));
      for (std::size_t s = 0; s < c; ++s) {
        std::span<double> row = sources.data().subspan(s * t_len, t_len);
        double norm = 0.0;
        while (norm < 1e-6 * unit) {
          const double cycles = rng.uniform(1.0, max_cycles);
          const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
          for (std::size_t t = 0; t < t_len; ++t)
            row[t] = std::sin(2.0 * std::numbers::pi * cycles * static_cast<double>(t) /
                                  static_cast<double>(t_len) +
                              phase);
          const double mean = std::accumulate(row.begin(), row.end(), 0.0) /
                              static_cast<double>(t_len);
          for (double &v : row)
            v -= mean;
          for (std::size_t p = 0; p < s; ++p) {
            std::span<const double> prev = sources.data().subspan(p * t_len, t_len);
            const double dot = std::inner_product(row.begin(), row.end(), prev.begin(), 0.0);
            for (std::size_t t = 0; t < t_len; ++t)
              row[t] -= dot * prev[t];
          }
          norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
        }
        for (double &v : row)
          v /= norm;
      }
      for (double &v : sources.storage())
        v *= unit;
      Trial trial;
      trial.data = Tensor({c, t_len});
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t t = 0; t < t_len; ++t) {
          double v = 0.0;
          for (std::size_t s = 0; s < c; ++s)
            v += mixing[k].at(i, s) * sources.at(s, t);
          v += spec.noise_sigma * rng.normal();
          trial.data.at(i, t) = static_cast<double>(static_cast<float>(v));
        }
      trial.label = static_cast<int>(k);
      trial.subject_id = "synth";
      trial.trial_id = "c" + std::to_string(k) + "-" + std::to_string(n);
      trials.push_back(std::move(trial));
    }
  return trials;
}

} // namespace ccvnet
