#include "derrt/bench/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "derrt/numerics/rng.hpp"

namespace derrt::bench {

using nlohmann::json;

namespace {

std::uint64_t hash_label(const std::string& s, int agents) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return num::splitmix64(h ^ static_cast<std::uint64_t>(agents));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

const PlannerSummary& BenchmarkReport::summary(const std::string& planner, int agents) const {
  for (const auto& s : summaries)
    if (s.planner == planner && (agents < 0 || s.agents == agents)) return s;
  throw std::out_of_range("no summary for planner " + planner);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double bootstrap_std(const std::vector<double>& values, std::size_t resamples, std::uint64_t seed) {
  if (values.empty() || resamples < 2) return 0.0;
  num::RngStream rng(seed, 0x424F4F54);  // "BOOT"
  const std::size_t n = values.size();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t b = 0; b < resamples; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += values[rng.uniform_int(n)];
    m /= static_cast<double>(n);
    sum += m;
    sum_sq += m * m;
  }
  const double mean = sum / static_cast<double>(resamples);
  const double var = (sum_sq - resamples * mean * mean) / static_cast<double>(resamples - 1);
  return std::sqrt(std::max(0.0, var));
}

std::vector<PlannerSummary> summarize(const std::vector<TrialRecord>& trials, std::uint64_t seed) {
  std::vector<std::pair<std::string, int>> keys;
  for (const auto& t : trials) {
    const std::pair<std::string, int> k{t.planner, t.agents};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::vector<PlannerSummary> out;
  for (const auto& [planner, agents] : keys) {
    PlannerSummary s;
    s.planner = planner;
    s.agents = agents;
    std::vector<double> succ, lengths, fractions;
    std::size_t proposed = 0, valid = 0;
    for (const auto& t : trials) {
      if (t.planner != planner || t.agents != agents) continue;
      succ.push_back(t.success ? 1.0 : 0.0);
      if (t.success) lengths.push_back(t.length);
      fractions.push_back(t.valid_fraction());
      proposed += t.proposed;
      valid += t.valid;
    }
    s.trials = succ.size();
    s.successes = lengths.size();
    s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.trials);
    s.success_std = bootstrap_std(succ, kBootstrapResamples, seed ^ hash_label(planner, agents));
    if (!lengths.empty()) {
      double m = 0.0;
      for (double l : lengths) m += l;
      m /= static_cast<double>(lengths.size());
      double ss = 0.0;
      for (double l : lengths) ss += (l - m) * (l - m);
      s.length_mean = m;
      s.length_stderr = lengths.size() > 1 ? std::sqrt(ss / (lengths.size() - 1) / lengths.size()) : 0.0;
      s.length_median = median(lengths);
    }
    s.valid_fraction = proposed == 0 ? 0.0 : static_cast<double>(valid) / proposed;
    s.valid_fraction_median = median(fractions);
    out.push_back(std::move(s));
  }
  return out;
}

json to_json(const BenchmarkReport& report, bool timing) {
  json summaries = json::array();
  for (const auto& s : report.summaries)
    summaries.push_back({{"planner", s.planner},
                         {"agents", s.agents},
                         {"trials", s.trials},
                         {"successes", s.successes},
                         {"success_rate", s.success_rate},
                         {"success_std", s.success_std},
                         {"length_mean", optional_json(s.length_mean)},
                         {"length_stderr", optional_json(s.length_stderr)},
                         {"length_median", optional_json(s.length_median)},
                         {"valid_fraction", s.valid_fraction},
                         {"valid_fraction_median", s.valid_fraction_median}});
  json trials = json::array();
  for (const auto& t : report.trials) {
    json j = {{"trial", t.trial},       {"seed", t.seed},         {"planner", t.planner},
              {"agents", t.agents},     {"success", t.success},   {"length", t.success ? json(t.length) : json(nullptr)},
              {"proposed", t.proposed}, {"valid", t.valid}};
    if (timing) j["seconds"] = t.seconds;
    trials.push_back(std::move(j));
  }
  json out = {{"version", kReportVersion},
              {"experiment", report.experiment},
              {"config", report.config},
              {"length_aggregation", "successful trials only"},
              {"success_std_method", "bootstrap over trials, 1000 resamples"},
              {"summaries", summaries},
              {"trials", trials}};
  if (timing && !report.timing.empty()) out["timing"] = report.timing;
  if (!report.curves.empty()) {
    json curves = json::array();
    for (const auto& c : report.curves)
      curves.push_back({{"planner", c.planner},
                        {"samples", c.samples},
                        {"success_rate", c.success_rate},
                        {"length_mean", optional_json(c.length_mean)},
                        {"valid_fraction_median", c.valid_fraction_median}});
    out["curves"] = std::move(curves);
  }
  return out;
}

std::string curves_csv(const std::vector<CurvePoint>& curves) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "planner,samples,success_rate,length_mean,valid_fraction_median\n";
  for (const auto& c : curves) {
    os << c.planner << ',' << c.samples << ',' << c.success_rate << ',';
    if (c.length_mean) os << *c.length_mean;
    os << ',' << c.valid_fraction_median << '\n';
  }
  return os.str();
}

}  // namespace derrt::bench
