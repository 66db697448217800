#pragma once

#include <array>

#include "derrt/env/environment.hpp"

namespace derrt::env {

inline constexpr std::size_t kPassageFeatureDim = 4;
inline constexpr std::size_t kAgentFeatureDim = 5;

/// (distance to passage entrance, in-passage indicator, x / map width,
/// y / map height). The indicator is 1 on the closed corridor rectangle,
/// where the distance is 0.
/// Throws std::invalid_argument if env has no passage metadata.
std::array<double, kPassageFeatureDim> passage_features(const Environment& env, const Configuration& x);

/// Angle of x around the orbit center (obstacle center, or map center if the
/// environment has no roundabout metadata).
double orientation_around_obstacle(const Environment& env, const Configuration& x);

/// (cos theta, sin theta, distance to goal, distance to agent, bearing to the
/// agent relative to theta in (-pi, pi]) where theta is the robot's angle
/// around the obstacle. Throws std::out_of_range on a bad agent index.
std::array<double, kAgentFeatureDim> agent_features(const Environment& env, const Configuration& x, int t,
                                                    std::size_t agent_index);

/// Index of the agent closest to x at step t; env must have agents.
std::size_t nearest_agent(const Environment& env, const Configuration& x, int t);

double wrap_angle(double a);

}  // namespace derrt::env
