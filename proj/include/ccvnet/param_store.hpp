#pragma once

#include "ccvnet/autodiff.hpp"
#include "ccvnet/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ccvnet {

/// Named, insertion-ordered parameter tensors of one network stage, with
/// their gradient slots and the Adam moment buffers that go with them.
class ParamStore {
public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}
  ParamStore(ParamStore &&) noexcept = default;
  ParamStore &operator=(ParamStore &&) noexcept = default;
  // Copies would alias the parameter nodes; use clone().
  ParamStore(const ParamStore &) = delete;
  ParamStore &operator=(const ParamStore &) = delete;

  /// Registers a trainable tensor. Names must be unique and may not contain '#'.
  Var &add(const std::string &name, Tensor init);

  bool contains(const std::string &name) const { return index_.count(name) != 0; }
  /// Throws StateError when the parameter is absent.
  const Var &get(const std::string &name) const;
  Var &get(const std::string &name);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t parameter_count() const;

  const std::vector<std::pair<std::string, Var>> &entries() const noexcept { return entries_; }

  void zero_grad();

  /// Deep copy of the current values, for checkpointing.
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor> &values);

  /// Fresh store with copied values and no shared nodes.
  ParamStore clone() const;

  // Adam state.
  struct Moments {
    Tensor m;
    Tensor v;
  };
  const std::map<std::string, Moments> &moments() const noexcept { return moments_; }
  std::int64_t adam_steps() const noexcept { return adam_steps_; }

  /// Exact value equality (names, shapes, bits); ignores optimizer state.
  bool same_values(const ParamStore &other) const;

private:
  friend void adam_step(ParamStore &, double, double, double, double, std::int64_t);
  friend std::vector<char> serialize(const ParamStore &);
  friend ParamStore deserialize(const std::string &, const std::vector<char> &);

  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Moments> moments_;
  std::int64_t adam_steps_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update at step t (1-based), applied in place.
/// Throws NumericError naming the first parameter with a non-finite gradient.
void adam_step(ParamStore &params, double lr, double beta1, double beta2, double eps,
               std::int64_t t);
inline void adam_step(ParamStore &params, const AdamConfig &cfg, std::int64_t t) {
  adam_step(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, t);
}

// Initializers. fan_in/fan_out are given explicitly for conv kernels.
Tensor he_normal(Shape shape, std::size_t fan_in, Rng &rng);
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng &rng);
Tensor scaled_normal(Shape shape, double stddev, Rng &rng);

// On-disk layout: "CVDP", u32 version, u32 count, then per entry u16 name
// length, name bytes, u32 rank, u32 dims, f64 payload. All little-endian.
// Adam state rides along as extra entries named "<param>#adam_m",
// "<param>#adam_v" and "#adam_t".
inline constexpr std::uint32_t kParamFormatVersion = 1;

std::vector<char> serialize(const ParamStore &store);
/// `path` is used for error messages only.
ParamStore deserialize(const std::string &path, const std::vector<char> &bytes);
void save_params(const ParamStore &store, const std::string &path);
ParamStore load_params(const std::string &path);

} // namespace ccvnet
