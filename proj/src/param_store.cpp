#include "ccvnet/param_store.hpp"

#include "ccvnet/binary_io.hpp"
#include "ccvnet/errors.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace ccvnet {

namespace binio {

std::vector<char> read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string &path, const std::vector<char> &data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw DataError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out)
    throw DataError("short write to " + path);
}

} // namespace binio

namespace {
constexpr char kMagic[] = "CVDP";
constexpr char kMomentM[] = "#adam_m";
constexpr char kMomentV[] = "#adam_v";
constexpr char kStepName[] = "#adam_t";
} // namespace

Var &ParamStore::add(const std::string &name, Tensor init) {
  if (name.empty() || name.find('#') != std::string::npos)
    throw ConfigError("invalid parameter name '" + name + "'");
  if (contains(name))
    throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, Var::leaf(std::move(init), true));
  return entries_.back().second;
}

const Var &ParamStore::get(const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw StateError("missing parameter '" + name + "'");
  return entries_[it->second].second;
}

Var &ParamStore::get(const std::string &name) {
  return const_cast<Var &>(std::as_const(*this).get(name));
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto &[name, var] : entries_)
    n += var.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto &[name, var] : entries_)
    var.zero_grad();
}

std::vector<Tensor> ParamStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto &[name, var] : entries_)
    out.push_back(var.value());
  return out;
}

void ParamStore::restore(const std::vector<Tensor> &values) {
  if (values.size() != entries_.size())
    throw StateError("checkpoint holds " + std::to_string(values.size()) + " tensors, store has " +
                     std::to_string(entries_.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != entries_[i].second.shape())
      throw DimensionError("checkpoint shape mismatch for '" + entries_[i].first + "'");
    entries_[i].second.mutable_value() = values[i];
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out(seed_);
  for (const auto &[name, var] : entries_)
    out.add(name, var.value());
  out.moments_ = moments_;
  out.adam_steps_ = adam_steps_;
  return out;
}

bool ParamStore::same_values(const ParamStore &other) const {
  if (entries_.size() != other.entries_.size())
    return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.value() != other.entries_[i].second.value())
      return false;
  return true;
}

void adam_step(ParamStore &params, double lr, double beta1, double beta2, double eps,
               std::int64_t t) {
  if (t < 1)
    throw ConfigError("adam_step: step count must be >= 1");
  for (const auto &[name, var] : params.entries_)
    if (!var.grad().all_finite())
      throw NumericError("non-finite gradient in parameter '" + name + "'");

  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto &[name, var] : params.entries_) {
    auto [it, fresh] = params.moments_.try_emplace(name);
    auto &mom = it->second;
    if (fresh || mom.m.shape() != var.shape()) {
      mom.m = Tensor::zeros(var.shape());
      mom.v = Tensor::zeros(var.shape());
    }
    Tensor &w = var.mutable_value();
    const Tensor &g = var.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g[i];
      mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / correction1;
      const double v_hat = mom.v[i] / correction2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  params.adam_steps_ = t;
}

Tensor he_normal(Shape shape, std::size_t fan_in, Rng &rng) {
  return scaled_normal(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng &rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-limit, limit);
  return t;
}

Tensor scaled_normal(Shape shape, double stddev, Rng &rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = stddev * rng.normal();
  return t;
}

namespace {

void write_entry(binio::Writer &w, const std::string &name, const Tensor &t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape())
    w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data())
    w.f64(v);
}

} // namespace

std::vector<char> serialize(const ParamStore &store) {
  std::size_t count = store.entries_.size();
  for (const auto &[name, var] : store.entries_)
    if (store.moments_.count(name))
      count += 2;
  if (store.adam_steps_ > 0)
    count += 1;

  binio::Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kParamFormatVersion);
  w.u32(static_cast<std::uint32_t>(count));
  for (const auto &[name, var] : store.entries_)
    write_entry(w, name, var.value());
  for (const auto &[name, var] : store.entries_) {
    auto it = store.moments_.find(name);
    if (it == store.moments_.end())
      continue;
    write_entry(w, name + kMomentM, it->second.m);
    write_entry(w, name + kMomentV, it->second.v);
  }
  if (store.adam_steps_ > 0)
    write_entry(w, kStepName, Tensor({1}, {static_cast<double>(store.adam_steps_)}));
  return w.buffer();
}

ParamStore deserialize(const std::string &path, const std::vector<char> &bytes) {
  binio::Reader r(path, bytes);
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4))
    r.fail_at(0, "bad magic, expected \"CVDP\"");
  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("format version"); version != kParamFormatVersion)
    r.fail_at(version_at, "unsupported format version " + std::to_string(version));
  const std::uint32_t count = r.u32("entry count");

  ParamStore store;
  std::vector<std::pair<std::string, Tensor>> extras;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_at = r.offset();
    const std::uint16_t name_len = r.u16("name length");
    std::string name = r.bytes(name_len, "name");
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8)
      r.fail_at(rank_at, "implausible rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.offset();
      const std::uint32_t dim = r.u32("dimension");
      if (dim == 0)
        r.fail_at(dim_at, "zero dimension in '" + name + "'");
      shape.push_back(dim);
    }
    const std::size_t n = shape_size(shape);
    if (r.remaining() / 8 < n)
      r.fail("truncated payload of '" + name + "' (need " + std::to_string(n * 8) + " bytes, " +
             std::to_string(r.remaining()) + " left)");
    std::vector<double> values(n);
    for (auto &v : values)
      v = r.f64("payload");
    Tensor t(std::move(shape), std::move(values));
    if (name.find('#') != std::string::npos) {
      extras.emplace_back(std::move(name), std::move(t));
      continue;
    }
    if (store.contains(name))
      r.fail_at(entry_at, "duplicate entry '" + name + "'");
    store.add(name, std::move(t));
  }
  if (r.remaining() != 0)
    r.fail(std::to_string(r.remaining()) + " trailing bytes");

  for (auto &[name, t] : extras) {
    if (name == kStepName) {
      store.adam_steps_ = static_cast<std::int64_t>(t[0]);
      continue;
    }
    const auto hash = name.find('#');
    const std::string base = name.substr(0, hash);
    const std::string suffix = name.substr(hash);
    if (!store.contains(base) || (suffix != kMomentM && suffix != kMomentV))
      throw ParseError(path, 0, "orphan optimizer entry '" + name + "'");
    auto &mom = store.moments_[base];
    (suffix == kMomentM ? mom.m : mom.v) = std::move(t);
  }
  return store;
}

void save_params(const ParamStore &store, const std::string &path) {
  binio::write_file(path, serialize(store));
}

ParamStore load_params(const std::string &path) {
  return deserialize(path, binio::read_file(path));
}

} // namespace ccvnet
