#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>

namespace derrt::env {

/// A point in configuration space: 2 coordinates for the robot alone, up to
/// 2*(1+8) for the joint robot+agents space. Fixed capacity, value type.
class Configuration {
 public:
  static constexpr std::size_t kMaxDim = 18;

  Configuration() = default;
  explicit Configuration(std::size_t dim) : dim_(checked(dim)) {}
  Configuration(std::initializer_list<double> values) : dim_(checked(values.size())) {
    std::size_t i = 0;
    for (double v : values) v_[i++] = v;
  }
  explicit Configuration(std::span<const double> values) : dim_(checked(values.size())) {
    for (std::size_t i = 0; i < values.size(); ++i) v_[i] = values[i];
  }

  std::size_t dim() const { return dim_; }
  double operator[](std::size_t i) const { return v_[i]; }
  double& operator[](std::size_t i) { return v_[i]; }
  std::span<const double> values() const { return {v_.data(), dim_}; }
  std::span<double> values() { return {v_.data(), dim_}; }

  double x() const { return v_[0]; }
  double y() const { return v_[1]; }

  bool finite() const {
    for (std::size_t i = 0; i < dim_; ++i)
      if (!std::isfinite(v_[i])) return false;
    return true;
  }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    if (a.dim_ != b.dim_) return false;
    for (std::size_t i = 0; i < a.dim_; ++i)
      if (a.v_[i] != b.v_[i]) return false;
    return true;
  }

  Configuration& operator+=(const Configuration& o) {
    same_dim(o);
    for (std::size_t i = 0; i < dim_; ++i) v_[i] += o.v_[i];
    return *this;
  }
  Configuration& operator-=(const Configuration& o) {
    same_dim(o);
    for (std::size_t i = 0; i < dim_; ++i) v_[i] -= o.v_[i];
    return *this;
  }
  Configuration& operator*=(double k) {
    for (std::size_t i = 0; i < dim_; ++i) v_[i] *= k;
    return *this;
  }

  double norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += v_[i] * v_[i];
    return std::sqrt(s);
  }

  /// The first two coordinates (the robot's position in a joint configuration).
  Configuration head2() const { return Configuration{v_[0], v_[1]}; }

 private:
  static std::uint8_t checked(std::size_t dim) {
    if (dim > kMaxDim) throw std::invalid_argument("Configuration: dimension exceeds capacity");
    return static_cast<std::uint8_t>(dim);
  }
  void same_dim(const Configuration& o) const {
    if (o.dim_ != dim_) throw std::invalid_argument("Configuration: dimension mismatch");
  }

  std::array<double, kMaxDim> v_{};
  std::uint8_t dim_ = 0;
};

inline Configuration operator+(Configuration a, const Configuration& b) { return a += b; }
inline Configuration operator-(Configuration a, const Configuration& b) { return a -= b; }
inline Configuration operator*(Configuration a, double k) { return a *= k; }
inline Configuration operator*(double k, Configuration a) { return a *= k; }

inline double distance(const Configuration& a, const Configuration& b) { return (a - b).norm(); }

/// Point at fraction s along a -> b.
inline Configuration lerp(const Configuration& a, const Configuration& b, double s) {
  Configuration out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + (b[i] - a[i]) * s;
  return out;
}

}  // namespace derrt::env
