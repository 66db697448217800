#pragma once

#include <span>
#include <vector>

namespace derrt::num {

inline constexpr double kStdFloor = 1e-3;
/// Stand-in for log(0) that stays finite under a few additions.
inline constexpr double kLogZero = -1e250;

/// Multivariate normal with diagonal covariance, parameterized by log std.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> log_std;

  DiagonalGaussian() = default;
  DiagonalGaussian(std::vector<double> mean_, std::vector<double> log_std_);
  static DiagonalGaussian from_std(std::vector<double> mean, std::span<const double> stddev);

  std::size_t dim() const { return mean.size(); }
  double stddev(std::size_t i) const;
};

/// Log density of x. Throws std::invalid_argument on dimension mismatch.
double gaussian_logpdf(const DiagonalGaussian& g, std::span<const double> x);

/// log(sum(exp(v))), stable for large magnitudes. Throws on empty input.
double logsumexp(std::span<const double> v);

}  // namespace derrt::num
