#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "derrt/env/environment.hpp"
#include "derrt/env/observations.hpp"
#include "derrt/hmm/hmm.hpp"
#include "derrt/neural/recurrent_model.hpp"
#include "derrt/numerics/rng.hpp"

namespace derrt::planner {

using env::Configuration;

/// Snapshot the model sees during one plan: the map and the time step at
/// which agents are frozen.
struct StepContext {
  const env::Environment* env = nullptr;
  int t = 0;
};

/// Sequence-model state cached on a tree node.
using ModelState = std::variant<std::monostate, hmm::ForwardState, neural::RecurrentState>;

/// Per-node observation cache (embedding and agent features at the node).
struct NodeObservation {
  std::vector<double> embedding;
  std::vector<std::vector<double>> agents;
};

/// A model step from one node toward target mu, shared across candidates.
class PreparedStep {
 public:
  virtual ~PreparedStep() = default;
  /// Log-likelihood of stepping to x_next.
  virtual double score(const Configuration& x_next) const = 0;
  /// Model state of the child reached at x_next.
  virtual ModelState advance(const Configuration& x_next) const = 0;
};

class SteeringModel {
 public:
  virtual ~SteeringModel() = default;
  virtual ModelState initial_state() const = 0;
  /// Observation at a node, or nullptr if the model does not use one.
  virtual std::shared_ptr<const NodeObservation> observe(const StepContext& ctx, const Configuration& x) const = 0;
  virtual std::unique_ptr<PreparedStep> prepare(const ModelState& state, const Configuration& x_nearest,
                                                const NodeObservation* obs, const Configuration& mu,
                                                const StepContext& ctx) const = 0;
};

class HmmSteering final : public SteeringModel {
 public:
  HmmSteering(hmm::HmmModel model, env::ObservationKind kind);
  const hmm::HmmModel& model() const { return model_; }

  ModelState initial_state() const override;
  std::shared_ptr<const NodeObservation> observe(const StepContext& ctx, const Configuration& x) const override;
  std::unique_ptr<PreparedStep> prepare(const ModelState& state, const Configuration& x_nearest,
                                        const NodeObservation* obs, const Configuration& mu,
                                        const StepContext& ctx) const override;

 private:
  hmm::HmmModel model_;
  env::ObservationKind kind_;
};

class RecurrentSteering final : public SteeringModel {
 public:
  explicit RecurrentSteering(neural::RecurrentSteeringModel model);
  const neural::RecurrentSteeringModel& model() const { return model_; }

  ModelState initial_state() const override;
  std::shared_ptr<const NodeObservation> observe(const StepContext& ctx, const Configuration& x) const override;
  std::unique_ptr<PreparedStep> prepare(const ModelState& state, const Configuration& x_nearest,
                                        const NodeObservation* obs, const Configuration& mu,
                                        const StepContext& ctx) const override;

 private:
  neural::RecurrentSteeringModel model_;
  env::ObservationKind kind_;
};

/// argmin over the closed ball B(x_nearest, r) of |z - x_rand|.
Configuration steer_baseline(const Configuration& x_nearest, const Configuration& x_rand, double r);

/// Uniform point in the closed ball B(center, r).
Configuration sample_in_ball(const Configuration& center, double r, num::RngStream& rng);

/// Index drawn with probability proportional to exp(score). Falls back to 0
/// when no score is above the log-zero stand-in. Always consumes one draw.
std::size_t sample_proportional(const std::vector<double>& scores, num::RngStream& rng, bool* fallback = nullptr);

struct SteerOutcome {
  Configuration x_new;
  Configuration mu;
  ModelState state;
  std::vector<Configuration> candidates;  ///< mu first
  std::vector<double> scores;
  std::size_t chosen = 0;
  bool fallback = false;
};

/// Candidates {mu} + (k - 1) uniform points in B(x_nearest, r), scored by the
/// model from the nearest node's state and sampled proportionally to
/// exp(score). The returned state is the model advanced through the choice.
SteerOutcome steer_with_model(const SteeringModel& model, const ModelState& nearest_state,
                              const Configuration& x_nearest, const NodeObservation* obs,
                              const Configuration& x_rand, const StepContext& ctx, double r, std::size_t k,
                              num::RngStream& rng);

}  // namespace derrt::planner
