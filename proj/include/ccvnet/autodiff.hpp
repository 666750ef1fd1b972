#pragma once

// Tape-free reverse-mode differentiation over small dense tensors.
//
// Every operation returns a Var that owns its forward value and, when any
// input requires a gradient, references its parents plus a closure that
// scatters the incoming gradient back to them. backward() walks the graph
// once in reverse topological order.

#include "ccvnet/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ccvnet {

class Var;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char *op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward_fn;
};

class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Leaf holding `value`; parameters pass requires_grad = true.
  static Var leaf(Tensor value, bool requires_grad = false);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor &value() const { return node_->value; }
  Tensor &mutable_value() { return node_->value; }
  const Tensor &grad() const { return node_->grad; }
  Tensor &mutable_grad() { return node_->grad; }
  const Shape &shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char *op() const { return node_->op; }

  void zero_grad();

  explicit operator bool() const noexcept { return static_cast<bool>(node_); }
  const std::shared_ptr<Node> &node() const { return node_; }

private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive. Ops still compute
/// values but keep no parents, so nothing can accumulate into parameters.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

bool grad_enabled();

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
/// node that requires them. Root must hold a single element.
void backward(const Var &root);

// Differentiable operations.
Var matmul(const Var &a, const Var &b);
Var add(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
/// x [m x n] + b [n], bias broadcast over rows.
Var add_bias(const Var &x, const Var &b);
Var relu(const Var &x);
Var sigmoid(const Var &x);
Var tanh(const Var &x);
Var reshape(const Var &x, Shape shape);
/// Valid cross-correlation, stride 1. x is [Cin x L] or [B x Cin x L];
/// w is [Cout x Cin x K]; b is [Cout].
Var conv1d(const Var &x, const Var &w, const Var &b);
/// Mean over the batch of -log softmax(logits)[label]. logits is [B x K].
Var softmax_xent(const Var &logits, std::span<const int> labels);
/// Mean of squared differences.
Var mse(const Var &pred, const Tensor &target);

/// Row-wise softmax of a [B x K] (or [K]) tensor.
Tensor softmax(const Tensor &logits);

struct LstmParams {
  Var w_i, w_f, w_o, w_g; // [d x H]
  Var u_i, u_f, u_o, u_g; // [H x H]
  Var b_i, b_f, b_o, b_g; // [H]
};

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM step over a batch: x [B x d], h_prev and c_prev [B x H].
LstmState lstm_cell(const Var &x, const Var &h_prev, const Var &c_prev, const LstmParams &p);

namespace testing {
/// Scales the backward contribution of every op tagged `op` by `factor`.
/// Used only to prove the gradient checker catches broken derivatives.
void inject_backward_fault(const std::string &op, double factor = 1.5);
void clear_backward_fault();
} // namespace testing

} // namespace ccvnet
