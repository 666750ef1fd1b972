#include "ccvnet/autodiff.hpp"

#include "ccvnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace ccvnet {

namespace {

thread_local bool g_grad_enabled = true;

std::string g_fault_op;
double g_fault_factor = 1.0;

double fault(const char *op) {
  if (!g_fault_op.empty() && g_fault_op == op)
    return g_fault_factor;
  return 1.0;
}

using NodePtr = std::shared_ptr<Node>;

Var make_result(Tensor value, const char *op, std::vector<NodePtr> parents,
                std::function<void(Node &)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->op = op;
  const bool needs_grad =
      g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                    [](const NodePtr &p) { return p->requires_grad; });
  if (needs_grad) {
    node->requires_grad = true;
    node->grad = Tensor::zeros(value.shape());
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  node->value = std::move(value);
  return Var(std::move(node));
}

void require_rank(const Var &x, std::size_t rank, const char *op) {
  if (x.value().rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " operand, got " + shape_str(x.shape()));
}

void require_same_shape(const Var &a, const Var &b, const char *op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename Fwd, typename Deriv>
Var unary(const Var &x, const char *op, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = fwd(in[i]);
  return make_result(std::move(out), op, {x.node()}, [op, deriv](Node &self) {
    Node &p = *self.parents[0];
    const double f = fault(op);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += f * self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

} // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->requires_grad = requires_grad;
  if (requires_grad)
    node->grad = Tensor::zeros(value.shape());
  node->value = std::move(value);
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (node_->grad.shape() != node_->value.shape())
    node_->grad = Tensor::zeros(node_->value.shape());
  else
    node_->grad.fill(0.0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Var &root) {
  if (root.value().size() != 1)
    throw DimensionError("backward: root must be a scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad())
    return;

  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  std::vector<std::pair<Node *, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn)
      (*it)->backward_fn(**it);
}

Var matmul(const Var &a, const Var &b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  Tensor out({m, n});
  const auto &A = a.value();
  const auto &B = b.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0)
        continue;
      const double *brow = &B.data()[p * n];
      double *orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j)
        orow[j] += aip * brow[j];
    }
  return make_result(std::move(out), "matmul", {a.node(), b.node()}, [m, k, n](Node &self) {
    Node &pa = *self.parents[0];
    Node &pb = *self.parents[1];
    const double f = fault("matmul");
    const Tensor &G = self.grad;
    if (pa.requires_grad) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            acc += G[i * n + j] * pb.value[p * n + j];
          pa.grad[i * k + p] += f * acc;
        }
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = f * pa.value[i * k + p];
          if (aip == 0.0)
            continue;
          for (std::size_t j = 0; j < n; ++j)
            pb.grad[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Var add(const Var &a, const Var &b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += b.value()[i];
  return make_result(std::move(out), "add", {a.node(), b.node()}, [](Node &self) {
    const double f = fault("add");
    for (auto &p : self.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          p->grad[i] += f * self.grad[i];
  });
}

Var mul(const Var &a, const Var &b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] *= b.value()[i];
  return make_result(std::move(out), "mul", {a.node(), b.node()}, [](Node &self) {
    Node &pa = *self.parents[0];
    Node &pb = *self.parents[1];
    const double f = fault("mul");
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad)
        pa.grad[i] += f * self.grad[i] * pb.value[i];
      if (pb.requires_grad)
        pb.grad[i] += f * self.grad[i] * pa.value[i];
    }
  });
}

Var add_bias(const Var &x, const Var &b) {
  require_rank(x, 2, "add_bias");
  require_rank(b, 1, "add_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (b.shape()[0] != n)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " +
                         shape_str(x.shape()));
  Tensor out = x.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] += b.value()[j];
  return make_result(std::move(out), "add_bias", {x.node(), b.node()}, [m, n](Node &self) {
    Node &px = *self.parents[0];
    Node &pb = *self.parents[1];
    const double f = fault("add_bias");
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = f * self.grad[i * n + j];
        if (px.requires_grad)
          px.grad[i * n + j] += g;
        if (pb.requires_grad)
          pb.grad[j] += g;
      }
  });
}

Var relu(const Var &x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var &x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0)
          return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Var tanh(const Var &x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Var reshape(const Var &x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), "reshape", {x.node()}, [](Node &self) {
    Node &p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i];
  });
}

Var conv1d(const Var &x, const Var &w, const Var &b) {
  const bool batched = x.value().rank() == 3;
  if (!batched)
    require_rank(x, 2, "conv1d");
  require_rank(w, 3, "conv1d");
  require_rank(b, 1, "conv1d");
  const std::size_t batch = batched ? x.shape()[0] : 1;
  const std::size_t cin = x.shape()[batched ? 1 : 0];
  const std::size_t len = x.shape()[batched ? 2 : 1];
  const std::size_t cout = w.shape()[0], kw = w.shape()[2];
  if (w.shape()[1] != cin || b.shape()[0] != cout)
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                         shape_str(w.shape()) + " and bias " + shape_str(b.shape()));
  if (kw > len)
    throw ConfigError("conv1d: kernel width " + std::to_string(kw) + " exceeds input length " +
                      std::to_string(len));
  const std::size_t lout = len - kw + 1;

  Shape out_shape = batched ? Shape{batch, cout, lout} : Shape{cout, lout};
  Tensor out(out_shape);
  const auto &X = x.value();
  const auto &W = w.value();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < cout; ++o) {
      double *orow = &out[(n * cout + o) * lout];
      for (std::size_t t = 0; t < lout; ++t)
        orow[t] = b.value()[o];
      for (std::size_t i = 0; i < cin; ++i) {
        const double *xrow = &X.data()[(n * cin + i) * len];
        for (std::size_t k = 0; k < kw; ++k) {
          const double wv = W[(o * cin + i) * kw + k];
          for (std::size_t t = 0; t < lout; ++t)
            orow[t] += wv * xrow[t + k];
        }
      }
    }

  return make_result(
      std::move(out), "conv1d", {x.node(), w.node(), b.node()},
      [batch, cin, len, cout, kw, lout](Node &self) {
        Node &px = *self.parents[0];
        Node &pw = *self.parents[1];
        Node &pb = *self.parents[2];
        const double f = fault("conv1d");
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t o = 0; o < cout; ++o) {
            const double *grow = &self.grad[(n * cout + o) * lout];
            if (pb.requires_grad)
              for (std::size_t t = 0; t < lout; ++t)
                pb.grad[o] += f * grow[t];
            for (std::size_t i = 0; i < cin; ++i)
              for (std::size_t k = 0; k < kw; ++k) {
                const std::size_t widx = (o * cin + i) * kw + k;
                const std::size_t xbase = (n * cin + i) * len + k;
                if (pw.requires_grad) {
                  double acc = 0.0;
                  for (std::size_t t = 0; t < lout; ++t)
                    acc += grow[t] * px.value[xbase + t];
                  pw.grad[widx] += f * acc;
                }
                if (px.requires_grad) {
                  const double wv = f * pw.value[widx];
                  for (std::size_t t = 0; t < lout; ++t)
                    px.grad[xbase + t] += wv * grow[t];
                }
              }
          }
      });
}

Tensor softmax(const Tensor &logits) {
  const bool vec = logits.rank() == 1;
  if (!vec && logits.rank() != 2)
    throw DimensionError("softmax: expected [K] or [B x K], got " + shape_str(logits.shape()));
  const std::size_t rows = vec ? 1 : logits.dim(0);
  const std::size_t k = vec ? logits.dim(0) : logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double *in = &logits.data()[r * k];
    double *o = &out[r * k];
    const double mx = *std::max_element(in, in + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < k; ++j)
      o[j] /= sum;
  }
  return out;
}

Var softmax_xent(const Var &logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_xent");
  const std::size_t batch = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != batch)
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
  for (std::size_t n = 0; n < batch; ++n)
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= k)
      throw DataError("softmax_xent: label " + std::to_string(labels[n]) + " of trial " +
                      std::to_string(n) + " outside [0, " + std::to_string(k) + ")");

  Tensor probs = softmax(logits.value());
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double *row = &logits.value().data()[n * k];
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      sum += std::exp(row[j] - mx);
    loss += (mx + std::log(sum)) - row[labels[n]];
  }
  loss /= static_cast<double>(batch);

  std::vector<int> targets(labels.begin(), labels.end());
  return make_result(Tensor({1}, {loss}), "softmax_xent", {logits.node()},
                     [probs = std::move(probs), targets = std::move(targets), batch,
                      k](Node &self) {
                       Node &p = *self.parents[0];
                       const double scale =
                           fault("softmax_xent") * self.grad[0] / static_cast<double>(batch);
                       for (std::size_t n = 0; n < batch; ++n)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot =
                               static_cast<std::size_t>(targets[n]) == j ? 1.0 : 0.0;
                           p.grad[n * k + j] += scale * (probs[n * k + j] - onehot);
                         }
                     });
}

Var mse(const Var &pred, const Tensor &target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  const std::size_t n = target.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value()[i] - target[i];
    acc += d * d;
  }
  return make_result(Tensor({1}, {acc / static_cast<double>(n)}), "mse", {pred.node()},
                     [target, n](Node &self) {
                       Node &p = *self.parents[0];
                       const double scale =
                           fault("mse") * 2.0 * self.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i)
                         p.grad[i] += scale * (p.value[i] - target[i]);
                     });
}

LstmState lstm_cell(const Var &x, const Var &h_prev, const Var &c_prev, const LstmParams &p) {
  require_rank(x, 2, "lstm_cell");
  require_rank(h_prev, 2, "lstm_cell");
  require_same_shape(h_prev, c_prev, "lstm_cell");
  if (x.shape()[0] != h_prev.shape()[0])
    throw DimensionError("lstm_cell: batch of x " + shape_str(x.shape()) +
                         " differs from state " + shape_str(h_prev.shape()));
  auto gate = [&](const Var &w, const Var &u, const Var &b) {
    return add_bias(add(matmul(x, w), matmul(h_prev, u)), b);
  };
  const Var i = sigmoid(gate(p.w_i, p.u_i, p.b_i));
  const Var f = sigmoid(gate(p.w_f, p.u_f, p.b_f));
  const Var o = sigmoid(gate(p.w_o, p.u_o, p.b_o));
  const Var g = tanh(gate(p.w_g, p.u_g, p.b_g));
  Var c = add(mul(f, c_prev), mul(i, g));
  Var h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

namespace testing {
void inject_backward_fault(const std::string &op, double factor) {
  g_fault_op = op;
  g_fault_factor = factor;
}
void clear_backward_fault() {
  g_fault_op.clear();
  g_fault_factor = 1.0;
}
} // namespace testing

} // namespace ccvnet
