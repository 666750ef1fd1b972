#include "ccvnet/gradcheck.hpp"

#include "ccvnet/autoencoder.hpp"
#include "ccvnet/branches.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ccvnet {

namespace {
constexpr double kKinkTolerance = 1e-7;
} // namespace

GradcheckResult check_gradients(const std::string &op, const std::function<Var()> &loss,
                                const std::vector<Var> &wrt, const GradcheckOptions &opts,
                                Rng &rng) {
  std::vector<Var> vars = wrt;
  for (auto &v : vars)
    v.zero_grad();
  backward(loss());

  GradcheckResult result{op, 0.0, 0, 0, true};
  for (auto &v : vars) {
    const Tensor analytic = v.grad();
    std::vector<std::size_t> entries(v.value().size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (entries.size() > opts.max_entries) {
      rng.shuffle(std::span<std::size_t>(entries));
      entries.resize(opts.max_entries);
      std::sort(entries.begin(), entries.end());
    }

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    const std::size_t skipped_before = result.entries_skipped;
    for (auto i : entries) {
      double &x = v.mutable_value()[i];
      const double saved = x;
      auto central = [&](double h) {
        x = saved + h;
        const double up = loss().value()[0];
        x = saved - h;
        const double down = loss().value()[0];
        x = saved;
        return (up - down) / (2.0 * h);
      };
      const double numeric = central(opts.epsilon);
      // A ReLU kink inside [x - eps, x + eps] makes the difference quotient
      // depend on the step; smooth points agree to O(eps^2).
      const double half = central(opts.epsilon / 2.0);
      if (std::abs(numeric - half) > kKinkTolerance * std::max(1.0, std::abs(numeric))) {
        ++result.entries_skipped;
        continue;
      }
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double err = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
    result.max_rel_error = std::max(result.max_rel_error, err);
    result.entries_checked += entries.size() - (result.entries_skipped - skipped_before);
    v.zero_grad();
  }
  result.passed = result.max_rel_error < opts.tolerance && std::isfinite(result.max_rel_error);
  return result;
}

namespace {

Tensor random_tensor(Shape shape, Rng &rng, double min_abs = 0.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = rng.normal();
    while (std::abs(v) < min_abs)
      v = rng.normal();
    t[i] = v;
  }
  return t;
}

/// Scalar projection <out, weights> built only from matmul and reshape.
Var project(const Var &out, const Tensor &weights) {
  const std::size_t n = out.value().size();
  return matmul(reshape(out, {1, n}), Var::constant(weights.reshaped({n, 1})));
}

Var param(Tensor t) { return Var::leaf(std::move(t), true); }

std::vector<Var> all_params(const ParamStore &p) {
  std::vector<Var> out;
  for (const auto &[name, v] : p.entries())
    out.push_back(v);
  return out;
}

} // namespace

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions &opts) {
  Rng rng(opts.seed);
  std::vector<GradcheckResult> results;

  {
    Var a = param(random_tensor({3, 4}, rng));
    Var b = param(random_tensor({4, 2}, rng));
    const Tensor r = random_tensor({3, 2}, rng);
    results.push_back(
        check_gradients("matmul", [&] { return project(matmul(a, b), r); }, {a, b}, opts, rng));
  }
  {
    Var x = param(random_tensor({2, 8}, rng));
    Var w = param(random_tensor({4, 2, 3}, rng));
    Var b = param(random_tensor({4}, rng));
    const Tensor r = random_tensor({4, 6}, rng);
    results.push_back(check_gradients(
        "conv1d", [&] { return project(conv1d(x, w, b), r); }, {x, w, b}, opts, rng));
  }
  {
    const std::size_t d = 4, h = 3, steps = 5;
    LstmParams p;
    std::vector<Var> wrt;
    for (Var *m : {&p.w_i, &p.w_f, &p.w_o, &p.w_g})
      wrt.push_back(*m = param(scaled_normal({d, h}, 0.5, rng)));
    for (Var *m : {&p.u_i, &p.u_f, &p.u_o, &p.u_g})
      wrt.push_back(*m = param(scaled_normal({h, h}, 0.5, rng)));
    for (Var *m : {&p.b_i, &p.b_f, &p.b_o, &p.b_g})
      wrt.push_back(*m = param(scaled_normal({h}, 0.5, rng)));
    std::vector<Var> xs;
    for (std::size_t t = 0; t < steps; ++t)
      wrt.push_back(xs.emplace_back(param(random_tensor({1, d}, rng))));
    const Tensor r = random_tensor({1, h}, rng);
    const Tensor rc = random_tensor({1, h}, rng);
    results.push_back(check_gradients(
        "lstm_cell",
        [&] {
          LstmState s{Var::constant(Tensor({1, h})), Var::constant(Tensor({1, h}))};
          for (const auto &x : xs)
            s = lstm_cell(x, s.h, s.c, p);
          return add(project(s.h, r), project(s.c, rc));
        },
        wrt, opts, rng));
  }
  for (const char *name : {"relu", "sigmoid", "tanh"}) {
    Var x = param(random_tensor({2, 5}, rng, 0.1));
    const Tensor r = random_tensor({2, 5}, rng);
    const std::string op = name;
    results.push_back(check_gradients(
        op,
        [&] {
          const Var y = op == "relu" ? relu(x) : op == "sigmoid" ? sigmoid(x) : ccvnet::tanh(x);
          return project(y, r);
        },
        {x}, opts, rng));
  }
  {
    Var logits = param(random_tensor({4, 3}, rng));
    const std::vector<int> labels{0, 2, 1, 2};
    results.push_back(check_gradients(
        "softmax_xent", [&] { return softmax_xent(logits, labels); }, {logits}, opts, rng));
  }
  {
    Var pred = param(random_tensor({8}, rng));
    const Tensor target = random_tensor({8}, rng);
    results.push_back(
        check_gradients("mse", [&] { return mse(pred, target); }, {pred}, opts, rng));
  }
  {
    CnnSpec spec;
    spec.channels = 6;
    const CnnBranch cnn(spec, rng.bits());
    const Tensor input = random_tensor({2, 6, 6}, rng);
    const std::vector<int> labels{1, 2};
    results.push_back(check_gradients(
        "cnn_forward", [&] { return softmax_xent(cnn.forward(input).logits, labels); },
        all_params(cnn.params()), opts, rng));
  }
  {
    RnnSpec spec;
    spec.channels = 5;
    const RnnBranch rnn(spec, rng.bits());
    const Tensor input = random_tensor({2, 5, 5}, rng);
    const std::vector<int> labels{0, 2};
    results.push_back(check_gradients(
        "rnn_forward", [&] { return softmax_xent(rnn.forward(input).logits, labels); },
        all_params(rnn.params()), opts, rng));
  }
  {
    const Autoencoder dae(DaeSpec{}, rng.bits());
    const Tensor features = random_tensor({3, DaeSpec{}.input_width}, rng);
    results.push_back(check_gradients(
        "dae_loss", [&] { return dae.loss(features); }, all_params(dae.params()), opts, rng));
  }
  {
    const ClassifierHead head(HeadSpec{}, rng.bits());
    const Tensor latent = random_tensor({4, HeadSpec{}.input_width}, rng);
    const std::vector<int> labels{0, 1, 2, 1};
    results.push_back(check_gradients(
        "head_forward",
        [&] { return softmax_xent(head.forward(Var::constant(latent)), labels); },
        all_params(head.params()), opts, rng));
  }
  return results;
}

} // namespace ccvnet
