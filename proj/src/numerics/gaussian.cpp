#include "derrt/numerics/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace derrt::num {

DiagonalGaussian::DiagonalGaussian(std::vector<double> mean_, std::vector<double> log_std_)
    : mean(std::move(mean_)), log_std(std::move(log_std_)) {
  if (mean.size() != log_std.size())
    throw std::invalid_argument("DiagonalGaussian: mean/log_std dimension mismatch");
  for (double& l : log_std) l = std::max(l, std::log(kStdFloor));
}

DiagonalGaussian DiagonalGaussian::from_std(std::vector<double> mean, std::span<const double> stddev) {
  std::vector<double> log_std(stddev.size());
  std::transform(stddev.begin(), stddev.end(), log_std.begin(),
                 [](double s) { return std::log(std::max(s, kStdFloor)); });
  return DiagonalGaussian(std::move(mean), std::move(log_std));
}

double DiagonalGaussian::stddev(std::size_t i) const { return std::exp(log_std[i]); }

double gaussian_logpdf(const DiagonalGaussian& g, std::span<const double> x) {
  if (x.size() != g.dim()) throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - g.mean[i]) * std::exp(-g.log_std[i]);
    acc -= 0.5 * z * z + g.log_std[i] + kHalfLog2Pi;
  }
  return acc;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace derrt::num
