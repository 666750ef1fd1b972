#include "ccvnet/layers.hpp"

#include "ccvnet/errors.hpp"

namespace ccvnet::layers {

void add_dense(ParamStore &p, const std::string &name, std::size_t in, std::size_t out, Init init,
               Rng &rng) {
  Tensor w;
  switch (init) {
  case Init::He:
    w = he_normal({in, out}, in, rng);
    break;
  case Init::Xavier:
    w = xavier_uniform({in, out}, in, out, rng);
    break;
  case Init::Small:
    w = scaled_normal({in, out}, 1e-2, rng);
    break;
  }
  p.add(name + ".w", std::move(w));
  p.add(name + ".b", Tensor({out}));
}

void add_conv(ParamStore &p, const std::string &name, std::size_t in, std::size_t out,
              std::size_t kernel, Rng &rng) {
  p.add(name + ".w", he_normal({out, in, kernel}, in * kernel, rng));
  p.add(name + ".b", Tensor({out}));
}

void add_lstm(ParamStore &p, const std::string &name, std::size_t in, std::size_t hidden,
              Rng &rng) {
  for (const char *gate : {"i", "f", "o", "g"}) {
    p.add(name + ".w_" + gate, xavier_uniform({in, hidden}, in, hidden, rng));
    p.add(name + ".u_" + gate, xavier_uniform({hidden, hidden}, hidden, hidden, rng));
    p.add(name + ".b_" + gate,
          Tensor::filled({hidden}, std::string(gate) == "f" ? 1.0 : 0.0));
  }
}

Var dense(const Var &x, const ParamStore &p, const std::string &name) {
  return add_bias(matmul(x, p.get(name + ".w")), p.get(name + ".b"));
}

Var conv(const Var &x, const ParamStore &p, const std::string &name) {
  return conv1d(x, p.get(name + ".w"), p.get(name + ".b"));
}

LstmParams lstm(const ParamStore &p, const std::string &name) {
  auto g = [&](const char *suffix) { return p.get(name + "." + suffix); };
  return {g("w_i"), g("w_f"), g("w_o"), g("w_g"), g("u_i"), g("u_f"),
          g("u_o"), g("u_g"), g("b_i"), g("b_f"), g("b_o"), g("b_g")};
}

void require_layout(const std::string &stage, const ParamStore &expected,
                    const ParamStore &actual) {
  for (const auto &[name, var] : expected.entries()) {
    if (!actual.contains(name))
      throw StateError("stage '" + stage + "': missing parameter '" + name + "'");
    if (actual.get(name).shape() != var.shape())
      throw StateError("stage '" + stage + "': parameter '" + name + "' has shape " +
                       shape_str(actual.get(name).shape()) + ", expected " +
                       shape_str(var.shape()));
  }
  if (actual.size() != expected.size())
    throw StateError("stage '" + stage + "': unexpected extra parameters");
}

Tensor stack(const std::vector<const Tensor *> &items) {
  if (items.empty())
    throw DataError("stack: empty batch");
  const Shape &inner = items.front()->shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> values;
  values.reserve(shape_size(shape));
  for (const Tensor *t : items) {
    if (t->shape() != inner)
      throw DimensionError("stack: mixed shapes " + shape_str(inner) + " and " +
                           shape_str(t->shape()));
    values.insert(values.end(), t->data().begin(), t->data().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

} // namespace ccvnet::layers
