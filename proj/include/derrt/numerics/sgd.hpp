#pragma once

#include <vector>

#include "derrt/numerics/autodiff.hpp"
#include "derrt/numerics/tensor.hpp"

namespace derrt::num {

/// One momentum-SGD update: v <- momentum*v + g; p <- p - lr*v.
/// `velocity` is resized to zeros on first use. Throws on shape mismatch.
void sgd_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads, double lr,
              double momentum, std::vector<Tensor>& velocity);

class Sgd {
 public:
  Sgd(std::vector<ad::Var> params, double lr, double momentum);

  /// Applies the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<ad::Var> params_;
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

}  // namespace derrt::num
