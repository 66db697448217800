#include "derrt/env/observations.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "derrt/env/collision.hpp"
#include "derrt/env/features.hpp"

namespace derrt::env {

std::string to_string(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::passage: return "passage";
    case ObservationKind::bugtrap: return "bugtrap";
    case ObservationKind::roundabout: return "roundabout";
  }
  return "unknown";
}

ObservationKind observation_kind_from_string(const std::string& name) {
  if (name == "passage") return ObservationKind::passage;
  if (name == "bugtrap") return ObservationKind::bugtrap;
  if (name == "roundabout") return ObservationKind::roundabout;
  throw std::invalid_argument("unknown observation kind '" + name + "'");
}

std::vector<double> hmm_env_features(ObservationKind kind, const Environment& env, const Configuration& x, int t) {
  switch (kind) {
    case ObservationKind::passage: {
      const auto f = passage_features(env, x);
      return {f.begin(), f.end()};
    }
    case ObservationKind::roundabout: {
      const auto f = agent_features(env, x, t, nearest_agent(env, x, t));
      return {f.begin(), f.end()};
    }
    case ObservationKind::bugtrap: break;
  }
  throw std::invalid_argument("HMM features are not defined for " + to_string(kind));
}

std::size_t hmm_env_feature_dim(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::passage: return kPassageFeatureDim;
    case ObservationKind::roundabout: return kAgentFeatureDim;
    case ObservationKind::bugtrap: break;
  }
  throw std::invalid_argument("HMM features are not defined for " + to_string(kind));
}

std::vector<double> local_observation(ObservationKind kind, const Environment& env, const Configuration& x, int t) {
  switch (kind) {
    case ObservationKind::passage: {
      auto f = passage_features(env, x);
      return {f[0] / env.map.world_height(), f[1], f[2], f[3]};
    }
    case ObservationKind::bugtrap: return extract_patch(env, x, kPatchSize);
    case ObservationKind::roundabout: {
      (void)t;
      const double theta = orientation_around_obstacle(env, x);
      const double dx = env.goal_center[0] - x[0];
      const double dy = env.goal_center[1] - x[1];
      const double d = std::hypot(dx, dy);
      const double ux = d > 0.0 ? dx / d : 0.0;
      const double uy = d > 0.0 ? dy / d : 0.0;
      return {std::cos(theta), std::sin(theta), d / kRoundaboutDistanceScale, ux, uy};
    }
  }
  return {};
}

std::size_t local_observation_dim(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::passage: return kPassageFeatureDim;
    case ObservationKind::bugtrap: return static_cast<std::size_t>(kPatchSize * kPatchSize);
    case ObservationKind::roundabout: return 5;
  }
  return 0;
}

std::vector<std::vector<double>> agent_observations(ObservationKind kind, const Environment& env,
                                                    const Configuration& x, int t) {
  std::vector<std::vector<double>> out;
  if (kind != ObservationKind::roundabout) return out;
  for (std::size_t i = 0; i < env.agents.size(); ++i) {
    const auto f = agent_features(env, x, t, i);
    out.push_back({f[0], f[1], f[2] / kRoundaboutDistanceScale, f[3] / kRoundaboutDistanceScale,
                   f[4] / std::numbers::pi});
  }
  return out;
}

}  // namespace derrt::env
