#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "derrt/neural/recurrent_model.hpp"

namespace derrt::test {

/// Plain-double re-implementation of the recurrent model's sequence loss,
/// read from a copy of the parameter values. Encoder activations are cached
/// per step so that perturbing one parameter entry recomputes only what that
/// entry feeds: one conv channel, one embedding row, or the recurrent part.
class FdOracle {
 public:
  FdOracle(const neural::RecurrentSteeringModel& model, const neural::Sequence& seq);

  double base_loss() const { return base_loss_; }

  struct Probe {
    double numeric = 0.0;
    /// A ReLU sign or max-pool winner differs between the +h and -h passes
    /// and the base pass, so the loss is not smooth across the interval.
    bool kink = false;
  };
  /// Central difference of the loss in entry `index` of parameter `name`.
  Probe central_difference(const std::string& name, std::size_t index, double h);

 private:
  struct StepCache {
    std::vector<double> conv1;  // [c1][19][19] pre-activation
    std::vector<double> pool1;  // [c1][9][9]
    std::vector<std::size_t> pool1_arg;
    std::vector<double> conv2;  // [c2][7][7]
    std::vector<double> code;   // [c2*3*3] or the raw observation
    std::vector<std::size_t> pool2_arg;
    std::vector<double> emb_pre;
  };

  double loss_from_embeddings(const std::vector<std::vector<double>>& emb) const;
  std::vector<double> embed(const std::vector<double>& pre) const;
  void conv1_channel(const std::vector<double>& obs, std::size_t c, double* out) const;
  void conv2_channel(const std::vector<double>& pool1, std::size_t o, double* out) const;
  double perturbed_loss(const std::string& name, std::size_t index, bool& kink);

  const double& w(const std::string& name, std::size_t i) const { return params_.at(name)[i]; }

  neural::ArchConfig arch_;
  neural::Sequence seq_;
  std::map<std::string, std::vector<double>> params_;
  std::vector<StepCache> cache_;
  std::vector<std::vector<double>> emb_;
  double base_loss_ = 0.0;
  std::size_t s1_ = 0, p1_ = 0, s2_ = 0, p2_ = 0;
};

}  // namespace derrt::test
