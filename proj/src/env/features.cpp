#include "derrt/env/features.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace derrt::env {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

std::array<double, kPassageFeatureDim> passage_features(const Environment& env, const Configuration& x) {
  if (!env.passage) throw std::invalid_argument("passage_features: environment has no passage metadata");
  const auto& p = *env.passage;
  const double dist = std::hypot(x[0] - p.entrance[0], x[1] - p.entrance[1]);
  const bool inside = x[0] >= p.x0 && x[0] <= p.x1 && x[1] >= p.y0 && x[1] <= p.y1;
  return {inside ? 0.0 : dist, inside ? 1.0 : 0.0, x[0] / env.map.world_width(), x[1] / env.map.world_height()};
}

double orientation_around_obstacle(const Environment& env, const Configuration& x) {
  const double cx = env.roundabout ? env.roundabout->center[0] : 0.5 * env.map.world_width();
  const double cy = env.roundabout ? env.roundabout->center[1] : 0.5 * env.map.world_height();
  return std::atan2(x[1] - cy, x[0] - cx);
}

std::array<double, kAgentFeatureDim> agent_features(const Environment& env, const Configuration& x, int t,
                                                    std::size_t agent_index) {
  if (agent_index >= env.agents.size())
    throw std::out_of_range("agent_features: agent index " + std::to_string(agent_index) + " out of range");
  const double theta = orientation_around_obstacle(env, x);
  const Configuration& a = env.agents[agent_index].at(t);
  const double goal_dist = std::hypot(env.goal_center[0] - x[0], env.goal_center[1] - x[1]);
  const double dx = a[0] - x[0];
  const double dy = a[1] - x[1];
  const double agent_dist = std::hypot(dx, dy);
  const double bearing = agent_dist > 0.0 ? wrap_angle(std::atan2(dy, dx) - theta) : 0.0;
  return {std::cos(theta), std::sin(theta), goal_dist, agent_dist, bearing};
}

std::size_t nearest_agent(const Environment& env, const Configuration& x, int t) {
  if (env.agents.empty()) throw std::invalid_argument("nearest_agent: environment has no agents");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < env.agents.size(); ++i) {
    const Configuration& a = env.agents[i].at(t);
    const double d = std::hypot(a[0] - x[0], a[1] - x[1]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace derrt::env
