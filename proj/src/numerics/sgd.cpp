#include "derrt/numerics/sgd.hpp"

#include <stdexcept>

namespace derrt::num {

void sgd_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads, double lr,
              double momentum, std::vector<Tensor>& velocity) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: params/grads count mismatch");
  if (velocity.size() != params.size()) {
    velocity.clear();
    for (const Tensor* p : params) velocity.emplace_back(p->shape(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& v = velocity[i];
    if (p.shape() != g.shape() || p.shape() != v.shape())
      throw std::invalid_argument("sgd_step: shape mismatch " + shape_string(p.shape()) + " vs " +
                                  shape_string(g.shape()));
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

Sgd::Sgd(std::vector<ad::Var> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {}

void Sgd::step() {
  std::vector<Tensor*> ps;
  std::vector<const Tensor*> gs;
  for (auto& p : params_) {
    ps.push_back(&p.mutable_value());
    gs.push_back(&p.grad());
  }
  sgd_step(std::move(ps), gs, lr_, momentum_, velocity_);
  zero_grad();
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace derrt::num
