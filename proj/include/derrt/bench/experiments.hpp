#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "derrt/bench/report.hpp"
#include "derrt/env/observations.hpp"
#include "derrt/hmm/hmm.hpp"
#include "derrt/neural/recurrent_model.hpp"
#include "derrt/planner/planner.hpp"

namespace derrt::bench {

// Planner labels used in reports and on the command line.
inline constexpr const char* kRrtStar = "rrt_star";
inline constexpr const char* kDerrtHmm = "derrt_hmm";
inline constexpr const char* kDerrtGru = "derrt_gru";
inline constexpr const char* kRrtStarJoint = "rrt_star_joint";

struct LoadedHmm {
  hmm::HmmModel model;
  env::ObservationKind kind;
};
using LoadedModel = std::variant<LoadedHmm, neural::RecurrentSteeringModel>;

/// Reads a parameter file and dispatches on its manifest kind.
LoadedModel load_model(const std::filesystem::path& path);
std::unique_ptr<planner::SteeringModel> make_steering(const LoadedModel& model);

struct PassageBenchConfig {
  std::uint64_t seed = 1;
  /// Keys the test maps and planner seeds; defaults to `seed`. Fixing it
  /// evaluates models from several training seeds on one test set.
  std::optional<std::uint64_t> test_seed;
  std::size_t rounds = 50;
  std::size_t samples = 600;
  double radius = 10.0;
  std::size_t candidates = 10;
  double goal_bias = 0.05;
  int width = 600;
  int height = 300;
  double narrowing = 0.3;
  int train_width = 300;
  int train_height = 300;
  std::size_t train_traces = 50;
  std::size_t collect_budget = 3000;
  std::size_t hmm_states = 3;
  int gru_epochs = 10;
  std::vector<std::string> planners{kRrtStar, kDerrtHmm, kDerrtGru};
  /// Pre-trained models; trained in-run from `seed` when absent and needed.
  std::shared_ptr<const hmm::HmmModel> hmm_model;
  std::shared_ptr<const neural::RecurrentSteeringModel> gru_model;
  /// Non-empty: write each trial's tree as <dir>/<planner>_<trial>.jsonl.
  std::filesystem::path tree_dir;
};

struct BugtrapBenchConfig {
  std::uint64_t seed = 1;
  std::size_t trials = 10;
  std::size_t samples = 2000;
  std::size_t curve_step = 100;
  double radius = 5.0;
  std::size_t candidates = 10;
  double goal_bias = 0.05;
  std::size_t train_traces = 200;
  std::size_t collect_budget = 3000;
  int gru_epochs = 10;
  std::vector<std::string> planners{kRrtStar, kDerrtGru};
  std::shared_ptr<const neural::RecurrentSteeringModel> gru_model;
  std::filesystem::path tree_dir;
};

struct RoundaboutBenchConfig {
  std::uint64_t seed = 1;
  std::size_t trials = 20;
  std::vector<int> agent_counts{2, 4, 6, 8};
  std::size_t samples_per_step = 100;
  int max_steps = 300;
  double radius = 5.0;
  std::size_t candidates = 10;
  double goal_bias = 0.05;
  int train_agents = 2;
  std::size_t train_traces = 50;
  int gru_epochs = 10;
  std::vector<std::string> planners{kRrtStar, kDerrtHmm, kDerrtGru, kRrtStarJoint};
  /// The joint planner gets the GRU planner's mean wall time per re-plan at
  /// the same agent count (samples_per_step when the GRU row is absent).
  bool joint_time_matched = true;
  std::shared_ptr<const hmm::HmmModel> hmm_model;
  std::shared_ptr<const neural::RecurrentSteeringModel> gru_model;
};

BenchmarkReport run_passage(const PassageBenchConfig& cfg);
BenchmarkReport run_bugtrap(const BugtrapBenchConfig& cfg);
BenchmarkReport run_roundabout(const RoundaboutBenchConfig& cfg);

// Training pieces shared with the CLI; `seed` keys every random choice.
hmm::HmmModel train_passage_hmm(const PassageBenchConfig& cfg);
neural::RecurrentSteeringModel train_passage_gru(const PassageBenchConfig& cfg);
neural::RecurrentSteeringModel train_bugtrap_gru(const BugtrapBenchConfig& cfg);
hmm::HmmModel train_roundabout_hmm(const RoundaboutBenchConfig& cfg);
neural::RecurrentSteeringModel train_roundabout_gru(const RoundaboutBenchConfig& cfg);

}  // namespace derrt::bench
