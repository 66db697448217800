#include "derrt/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "derrt/numerics/kernels.hpp"

namespace derrt::num::ad {

namespace {

thread_local bool g_grad_enabled = true;

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw std::domain_error(std::string("non-finite value produced by ") + op);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
}

Var make_result(Tensor value, std::vector<std::shared_ptr<Node>> parents,
                std::function<void(Node&)> backward_fn, const char* op) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const auto& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv, const char* op) {
  Tensor out(a.shape());
  const auto in = a.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  auto pa = a.node();
  // deriv(x, y) gives dy/dx from the input and output values.
  return make_result(std::move(out), {pa},
                     [pa, deriv](Node& self) {
                       if (!pa->requires_grad) return;
                       Tensor& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * deriv(pa->value[i], self.value[i]);
                     },
                     op);
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

void Var::zero_grad() { node_->grad_buffer().fill(0.0); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::vector<Var> backward(const Var& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  Node* root = loss.node().get();
  if (root->consumed) throw std::logic_error("backward: graph already consumed");
  if (!root->requires_grad) return {};
  if (root->is_leaf) {
    root->grad_buffer()[0] += 1.0;
    return {loss};
  }

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients start from zero on every pass; leaves accumulate.
  for (Node* n : order)
    if (!n->is_leaf) n->grad_buffer().fill(0.0);
  root->grad_buffer()[0] += 1.0;

  std::vector<Var> leaves;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf) continue;
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->is_leaf) continue;
    for (auto& p : n->parents)
      if (p->is_leaf && p->requires_grad) leaves.emplace_back(p);
  }
  std::sort(leaves.begin(), leaves.end(), [](const Var& a, const Var& b) { return a.node() < b.node(); });
  leaves.erase(std::unique(leaves.begin(), leaves.end(),
                           [](const Var& a, const Var& b) { return a.node() == b.node(); }),
               leaves.end());
  for (Node* n : order) {
    if (n->is_leaf) continue;
    n->consumed = true;
    n->parents.clear();
    n->backward_fn = nullptr;
  }
  return leaves;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_result(std::move(out), {pa, pb},
                     [pa, pb](Node& self) {
                       for (auto* p : {pa.get(), pb.get()}) {
                         if (!p->requires_grad) continue;
                         Tensor& g = p->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       }
                     },
                     "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_result(std::move(out), {pa, pb},
                     [pa, pb](Node& self) {
                       if (pa->requires_grad) {
                         Tensor& g = pa->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       }
                       if (pb->requires_grad) {
                         Tensor& g = pb->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                       }
                     },
                     "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_result(std::move(out), {pa, pb},
                     [pa, pb](Node& self) {
                       if (pa->requires_grad) {
                         Tensor& g = pa->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
                       }
                       if (pb->requires_grad) {
                         Tensor& g = pb->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
                       }
                     },
                     "mul");
}

Var scale(const Var& a, double k) {
  return unary(a, [k](double x) { return k * x; }, [k](double, double) { return k; }, "scale");
}

Var add_scalar(const Var& a, double k) {
  return unary(a, [k](double x) { return x + k; }, [](double, double) { return 1.0; }, "add_scalar");
}

Var one_minus(const Var& a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; }, "one_minus");
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      "softplus");
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; },
               "relu");
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2) throw std::invalid_argument("matmul: lhs must be rank 2");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const bool vec = b.value().rank() == 1;
  if (b.shape()[0] != k)
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  const std::size_t n = vec ? 1 : b.shape()[1];
  Tensor out(vec ? Shape{m} : Shape{m, n});
  if (vec) {
    kernels::matvec(m, k, a.value().data(), b.value().data(), out.data());
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a.value()[i * k + p];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.value()[p * n + j];
      }
  }
  auto pa = a.node(), pb = b.node();
  return make_result(std::move(out), {pa, pb},
                     [pa, pb, m, k, n](Node& self) {
                       const Tensor& g = self.grad;
                       if (pa->requires_grad) {
                         Tensor& ga = pa->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->value[p * n + j];
                             ga[i * k + p] += acc;
                           }
                       }
                       if (pb->requires_grad) {
                         Tensor& gb = pb->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = pa->value[i * k + p];
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                           }
                       }
                     },
                     "matmul");
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  auto pa = a.node();
  return make_result(Tensor::scalar(s), {pa},
                     [pa](Node& self) {
                       Tensor& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
                     },
                     "sum");
}

Var concat(std::span<const Var> parts) {
  std::vector<double> values;
  std::vector<std::shared_ptr<Node>> parents;
  for (const Var& p : parts) {
    const auto v = p.value().values();
    values.insert(values.end(), v.begin(), v.end());
    parents.push_back(p.node());
  }
  auto captured = parents;
  return make_result(Tensor::vector(std::move(values)), std::move(parents),
                     [captured](Node& self) {
                       std::size_t offset = 0;
                       for (const auto& p : captured) {
                         const std::size_t n = p->value.size();
                         if (p->requires_grad) {
                           Tensor& g = p->grad_buffer();
                           for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                         }
                         offset += n;
                       }
                     },
                     "concat");
}

Var slice(const Var& a, std::size_t begin, std::size_t len) {
  if (begin + len > a.size()) throw std::invalid_argument("slice: out of range");
  const auto v = a.value().values();
  auto pa = a.node();
  return make_result(Tensor::vector(std::vector<double>(v.begin() + begin, v.begin() + begin + len)), {pa},
                     [pa, begin, len](Node& self) {
                       Tensor& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < len; ++i) g[begin + i] += self.grad[i];
                     },
                     "slice");
}

Var reshape(const Var& a, Shape shape) {
  auto pa = a.node();
  return make_result(a.value().reshaped(std::move(shape)), {pa},
                     [pa](Node& self) {
                       Tensor& g = pa->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     },
                     "reshape");
}

Var conv2d(const Var& input, const Var& weight, const Var& bias) {
  if (input.value().rank() != 3 || weight.value().rank() != 4)
    throw std::invalid_argument("conv2d: expected input [C,H,W] and weight [O,C,kh,kw]");
  const kernels::ConvShape s{input.shape()[0], input.shape()[1], input.shape()[2],
                             weight.shape()[0], weight.shape()[2], weight.shape()[3]};
  if (weight.shape()[1] != s.in_channels) throw std::invalid_argument("conv2d: channel mismatch");
  if (bias.size() != s.out_channels) throw std::invalid_argument("conv2d: bias size mismatch");
  if (s.kernel_h > s.height || s.kernel_w > s.width) throw std::invalid_argument("conv2d: kernel larger than input");
  Tensor out({s.out_channels, s.out_h(), s.out_w()});
  kernels::conv2d_forward(s, input.value().data(), weight.value().data(), bias.value().data(), out.data());
  auto pi = input.node(), pw = weight.node(), pb = bias.node();
  return make_result(std::move(out), {pi, pw, pb},
                     [pi, pw, pb, s](Node& self) {
                       // Weight gradients are always needed for the call; route them to
                       // a scratch buffer if the weight is frozen.
                       Tensor scratch_w;
                       double* gw = nullptr;
                       if (pw->requires_grad) {
                         gw = pw->grad_buffer().data();
                       } else {
                         scratch_w = Tensor(pw->value.shape());
                         gw = scratch_w.data();
                       }
                       kernels::conv2d_backward(s, pi->value.data(), pw->value.data(), self.grad.data(),
                                                pi->requires_grad ? pi->grad_buffer().data() : nullptr, gw,
                                                pb->requires_grad ? pb->grad_buffer().data() : nullptr);
                     },
                     "conv2d");
}

Var maxpool2x2(const Var& input) {
  if (input.value().rank() != 3) throw std::invalid_argument("maxpool2x2: expected [C,H,W]");
  const std::size_t c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  if (h < 2 || w < 2) throw std::invalid_argument("maxpool2x2: input smaller than window");
  Tensor out({c, h / 2, w / 2});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  kernels::maxpool2x2_forward(c, h, w, input.value().data(), out.data(), argmax->data());
  auto pi = input.node();
  return make_result(std::move(out), {pi},
                     [pi, argmax](Node& self) {
                       Tensor& g = pi->grad_buffer();
                       for (std::size_t i = 0; i < argmax->size(); ++i) g[(*argmax)[i]] += self.grad[i];
                     },
                     "maxpool2x2");
}

Var gaussian_logpdf(const Var& mean, const Var& stddev, std::span<const double> x) {
  require_same_shape(mean, stddev, "gaussian_logpdf");
  if (mean.size() != x.size()) throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = stddev.value()[i];
    if (!(s > 0.0)) throw std::domain_error("gaussian_logpdf: stddev must be positive");
    const double z = (x[i] - mean.value()[i]) / s;
    lp -= 0.5 * z * z + std::log(s) + kHalfLog2Pi;
  }
  auto pm = mean.node(), ps = stddev.node();
  std::vector<double> xs(x.begin(), x.end());
  return make_result(Tensor::scalar(lp), {pm, ps},
                     [pm, ps, xs](Node& self) {
                       const double g = self.grad[0];
                       for (std::size_t i = 0; i < xs.size(); ++i) {
                         const double s = ps->value[i];
                         const double d = xs[i] - pm->value[i];
                         if (pm->requires_grad) pm->grad_buffer()[i] += g * d / (s * s);
                         if (ps->requires_grad) ps->grad_buffer()[i] += g * (d * d / (s * s * s) - 1.0 / s);
                       }
                     },
                     "gaussian_logpdf");
}

Var logsumexp(const Var& v) {
  const auto vals = v.value().values();
  if (vals.empty()) throw std::invalid_argument("logsumexp: empty input");
  const double m = *std::max_element(vals.begin(), vals.end());
  double s = 0.0;
  for (double x : vals) s += std::exp(x - m);
  const double out = m + std::log(s);
  auto pv = v.node();
  return make_result(Tensor::scalar(out), {pv},
                     [pv, out](Node& self) {
                       Tensor& g = pv->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * std::exp(pv->value[i] - out);
                     },
                     "logsumexp");
}

}  // namespace derrt::num::ad
