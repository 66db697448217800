#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "derrt/env/environment.hpp"
#include "derrt/planner/steering.hpp"
#include "derrt/planner/tree.hpp"

namespace derrt::planner {

/// Stream ids of the planner's RngStream(seed, id) draws.
inline constexpr std::uint64_t kPlanStream = 0x504C414E;    // "PLAN"
inline constexpr std::uint64_t kReplanStream = 0x52504C4E;  // "RPLN"

struct PlannerConfig {
  double radius = 10.0;          ///< steering radius r
  double gamma = 0.0;            ///< near-radius constant; 0 derives it from free-space volume
  std::size_t candidates = 10;   ///< k
  std::size_t iterations = 600;  ///< n
  double goal_bias = 0.05;
  std::uint64_t seed = 0;
  bool rewire = true;
  int t = 0;                     ///< time step the agents are frozen at
  double time_budget_s = 0.0;    ///< > 0 stops early once exceeded
  std::vector<std::size_t> checkpoints;  ///< iteration counts to record progress at

  /// Throws std::invalid_argument if a field is out of range.
  void validate() const;
};

struct Checkpoint {
  std::size_t iteration = 0;
  bool success = false;
  double length = 0.0;
  std::size_t proposed = 0;
  std::size_t valid = 0;
};

struct PlanResult {
  bool success = false;
  std::vector<Configuration> path;  ///< robot positions, start first
  double length = 0.0;
  std::size_t iterations = 0;
  std::size_t proposed = 0;
  std::size_t valid = 0;
  std::uint64_t seed = 0;
  std::vector<Checkpoint> checkpoints;
  double seconds = 0.0;

  double valid_fraction() const { return proposed == 0 ? 0.0 : static_cast<double>(valid) / proposed; }
};

struct PlanOutput {
  PlanResult result;
  PlanTree tree;
  std::size_t goal_node = kNoParent;  ///< end of the best path, if any
};

/// Uniform over free map cells by rejection; with probability goal_bias
/// returns goal_center instead. No draw is spent on the bias when it is 0.
Configuration sample_free(const env::Environment& env, num::RngStream& rng, double goal_bias);

/// min(r, gamma * (log n / n)^(1/d)).
double near_radius(double gamma, double r, std::size_t n, std::size_t d);
/// Standard RRT* constant 2 (1 + 1/d)^(1/d) (free volume / unit-ball volume)^(1/d).
double rrt_star_gamma(double free_volume, std::size_t d);

/// Makes node id's cached model state current, recomputing stale ancestors first.
const ModelState& refresh_state(PlanTree& tree, std::size_t id, const SteeringModel& model, const StepContext& ctx);
const NodeObservation* node_observation(PlanTree& tree, std::size_t id, const SteeringModel& model,
                                        const StepContext& ctx);
/// Folds the model along the root path of id, ignoring every cache except the root's.
ModelState recompute_from_root(const PlanTree& tree, std::size_t id, const SteeringModel& model,
                               const StepContext& ctx);

/// RRT* (model == nullptr) or DeRRT* from `start` with the given root model state.
PlanOutput plan_from(const env::Environment& env, const SteeringModel* model, const PlannerConfig& cfg,
                     const Configuration& start, const ModelState& root_state);

PlanResult plan(const env::Environment& env, const SteeringModel* model, const PlannerConfig& cfg);

/// True iff the joint edge keeps the robot and every agent on free cells,
/// keeps every agent agent_clearance from the robot, and moves no agent
/// clockwise around the orbit center. The robot occupies coordinates 0-1.
bool joint_segment_free(const env::Environment& env, const Configuration& a, const Configuration& b);

/// RRT* over robot + agent positions (dimension 2 (1 + n)) from the agents'
/// positions at cfg.t; the steering radius scales by sqrt(1 + n).
PlanOutput plan_joint_from(const env::Environment& env, const PlannerConfig& cfg, const Configuration& start);
PlanResult plan_joint(const env::Environment& env, const PlannerConfig& cfg);

/// Obstacle-aware distance to the goal region over the 8-connected cell grid.
class DistanceField {
 public:
  explicit DistanceField(const env::Environment& env);
  double at(const Configuration& x) const;

 private:
  const env::OccupancyMap* map_;
  std::vector<double> dist_;
};

enum class ReplanPlanner { rrt_star, model, joint };

struct ReplanConfig {
  PlannerConfig planner;
  std::size_t samples_per_step = 100;
  int max_steps = 300;
  ReplanPlanner kind = ReplanPlanner::rrt_star;
};

struct ExecutedStep {
  Configuration x_prev;
  Configuration x_next;
  Configuration mu;
  int t = 0;
};

struct ReplanResult {
  bool success = false;
  bool collision = false;
  bool timeout = false;
  std::vector<Configuration> trajectory;
  std::vector<ExecutedStep> steps;
  double length = 0.0;
  std::size_t proposed = 0;
  std::size_t valid = 0;
  double plan_seconds = 0.0;  ///< total wall time spent planning
  int replans = 0;
};

/// Plan with samples_per_step iterations from the current position and time,
/// execute the first edge while agents advance one step, repeat. A failed
/// plan moves toward the tree node closest to the goal by DistanceField.
ReplanResult replan_loop(const env::Environment& env, const SteeringModel* model, const ReplanConfig& cfg);

nlohmann::json to_json(const PlanResult& r);
/// One JSON object per node: id, parent (-1 for the root), x, cost.
void write_tree_jsonl(std::ostream& out, const PlanTree& tree);

}  // namespace derrt::planner
