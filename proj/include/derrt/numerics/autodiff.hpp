#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "derrt/numerics/tensor.hpp"

// Tensor-level reverse-mode automatic differentiation.
//
// A Var is a shared handle to a graph node. Operations on Vars record their
// inputs and a closure that pushes the output gradient back to them. Calling
// backward() on a scalar walks the recorded graph once; the graph is released
// afterwards, so a second backward() on the same loss is an error.

namespace derrt::num::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// In-place access for optimizers; only meaningful on leaves.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  /// Accumulated gradient; zeros if nothing has flowed here yet.
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Populates gradients of every requires_grad leaf reachable from `loss` and
/// returns those leaves. `loss` must hold exactly one element.
std::vector<Var> backward(const Var& loss);

// Elementwise, shapes must match exactly (no broadcasting).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
/// 1 - a
Var one_minus(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);

/// [m,k] x [k,n] -> [m,n], or [m,k] x [k] -> [m].
Var matmul(const Var& a, const Var& b);
/// Sum of all elements, shape [1].
Var sum(const Var& a);
/// Flattened concatenation, shape [total].
Var concat(std::span<const Var> parts);
/// Flat slice [begin, begin+len), shape [len].
Var slice(const Var& a, std::size_t begin, std::size_t len);
Var reshape(const Var& a, Shape shape);

/// input [C,H,W], weight [O,C,kh,kw], bias [O] -> [O,H-kh+1,W-kw+1].
Var conv2d(const Var& input, const Var& weight, const Var& bias);
/// [C,H,W] -> [C,H/2,W/2].
Var maxpool2x2(const Var& input);

/// Diagonal Gaussian log density of a fixed point x, differentiable in mean
/// and stddev (both shape [d], stddev > 0). Result shape [1].
Var gaussian_logpdf(const Var& mean, const Var& stddev, std::span<const double> x);
/// log(sum(exp(v))) over all elements, shape [1].
Var logsumexp(const Var& v);

}  // namespace derrt::num::ad
