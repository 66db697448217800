#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace derrt::bench {

inline constexpr int kReportVersion = 1;
inline constexpr std::size_t kBootstrapResamples = 1000;

struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;  ///< environment seed
  std::string planner;
  int agents = 0;
  bool success = false;
  double length = 0.0;
  std::size_t proposed = 0;
  std::size_t valid = 0;
  double seconds = 0.0;

  double valid_fraction() const { return proposed == 0 ? 0.0 : static_cast<double>(valid) / proposed; }
};

struct PlannerSummary {
  std::string planner;
  int agents = 0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double success_std = 0.0;  ///< bootstrap standard deviation of the rate
  // Over successful trials only; empty when none succeeded.
  std::optional<double> length_mean;
  std::optional<double> length_stderr;
  std::optional<double> length_median;
  double valid_fraction = 0.0;         ///< pooled valid / proposed
  double valid_fraction_median = 0.0;  ///< median of per-trial proportions
};

/// One point of a progress curve, aggregated over trials.
struct CurvePoint {
  std::string planner;
  std::size_t samples = 0;
  double success_rate = 0.0;
  std::optional<double> length_mean;  ///< successful trials only
  double valid_fraction_median = 0.0;
};

struct BenchmarkReport {
  std::string experiment;
  nlohmann::json config;
  std::vector<TrialRecord> trials;
  std::vector<PlannerSummary> summaries;
  std::vector<CurvePoint> curves;
  /// Wall-clock dependent details; emitted only with timing.
  nlohmann::json timing = nlohmann::json::object();

  const PlannerSummary& summary(const std::string& planner, int agents = -1) const;
};

double median(std::vector<double> values);

/// Standard deviation of the mean over `resamples` bootstrap resamples.
double bootstrap_std(const std::vector<double>& values, std::size_t resamples, std::uint64_t seed);

/// Groups records by (planner, agents) in first-appearance order.
std::vector<PlannerSummary> summarize(const std::vector<TrialRecord>& trials, std::uint64_t seed);

/// Wall times appear only when `timing` is set, so reports are reproducible.
nlohmann::json to_json(const BenchmarkReport& report, bool timing);

/// planner,samples,success_rate,length_mean,valid_fraction_median
std::string curves_csv(const std::vector<CurvePoint>& curves);

}  // namespace derrt::bench
