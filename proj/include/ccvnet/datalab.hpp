#pragma once

// Trial files, manifests and the synthetic EEG generator.

#include "ccvnet/covariance.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ccvnet {

// Trial file: "EEGT", u32 version, u32 channels, u32 samples, u32 label,
// f32 sample rate (Hz), then channels*samples f32, row-major. Little-endian.
inline constexpr std::uint32_t kTrialFormatVersion = 1;
inline constexpr std::size_t kTrialHeaderBytes = 24;

struct TrialHeader {
  std::uint32_t channels = 0;
  std::uint32_t samples = 0;
  std::uint32_t label = 0;
  float sample_rate_hz = 0.0f;
};

/// Samples are stored as f32; values that are not f32-representable round.
std::vector<char> encode_trial(const Trial &trial, float sample_rate_hz);
/// `path` appears in error messages and becomes the trial id (file stem).
Trial decode_trial(const std::string &path, const std::vector<char> &bytes,
                   TrialHeader *header = nullptr);

void save_trial(const Trial &trial, const std::string &path, float sample_rate_hz = 0.0f);
Trial load_trial(const std::string &path, TrialHeader *header = nullptr);

/// Text manifest: one `key = value` per line, '#' starts a comment.
///   task = long-words
///   subject = S3
///   classes = cooperate, independent
///   trial = S3/long-words/0001.eegt     (repeatable, relative to the manifest)
struct Manifest {
  std::string task;
  std::string subject;
  std::vector<std::string> class_names;
  std::vector<std::string> trial_paths; // as written
  std::string base_dir;                 // directory of the manifest file

  std::size_t class_count() const { return class_names.size(); }
  std::string resolve(const std::string &trial_path) const;
};

Manifest parse_manifest(const std::string &path, const std::string &text);
Manifest read_manifest(const std::string &path);
std::string format_manifest(const Manifest &m);
void write_manifest(const Manifest &m, const std::string &path);

/// Loads every trial in manifest order and checks labels against the class list.
std::vector<Trial> load(const std::string &manifest_path, Manifest *manifest_out = nullptr);

/// Class inventories of the public imagined-speech recordings, in label order.
struct TaskClasses {
  const char *task;
  std::vector<std::string> class_names;
};
const std::vector<TaskClasses> &known_tasks();
/// Throws ConfigError for unknown task names.
const TaskClasses &task_classes(const std::string &task);

struct SynthSpec {
  std::size_t channels = 8;
  std::size_t samples = 128;
  std::size_t classes = 3;
  std::size_t trials_per_class = 40;
  double noise_sigma = 0.1;
  double signal_strength = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Trials whose class identity lives in the channel covariance: each trial
/// mixes C sinusoids (random frequency and phase per trial, whitened to unit
/// sample covariance) through a class-specific C x C matrix scaled by
/// `signal_strength`, then adds white noise of std `noise_sigma`. Needs more
/// samples than channels. Values are rounded to f32 so they survive
/// save/load unchanged. Ordered class by class.
std::vector<Trial> gen_synth(const SynthSpec &spec);

} // namespace ccvnet
