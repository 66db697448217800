#include "derrt/env/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "derrt/env/collision.hpp"

namespace derrt::env {

OccupancyMap::OccupancyMap(int width_, int height_, double resolution_)
    : width(width_), height(height_), resolution(resolution_) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("OccupancyMap: dimensions must be positive");
  if (!(resolution > 0.0)) throw std::invalid_argument("OccupancyMap: resolution must be positive");
  cells.assign(static_cast<std::size_t>(width) * height, 0);
}

int OccupancyMap::cell_of(double coord) const { return static_cast<int>(std::floor(coord / resolution)); }

bool OccupancyMap::occupied_at(double x, double y) const {
  if (!(x >= 0.0 && y >= 0.0 && x < world_width() && y < world_height())) return true;
  return occupied(cell_of(x), cell_of(y));
}

std::size_t OccupancyMap::free_cell_count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{0}));
}

const Configuration& AgentTrack::at(int t) const {
  if (waypoints.empty()) throw std::logic_error("AgentTrack has no waypoints");
  const int last = static_cast<int>(waypoints.size()) - 1;
  return waypoints[static_cast<std::size_t>(std::clamp(t, 0, last))];
}

Configuration AgentTrack::at(double t) const {
  const int lo = static_cast<int>(std::floor(t));
  const double frac = t - lo;
  if (frac == 0.0) return at(lo);
  return lerp(at(lo), at(lo + 1), frac);
}

std::vector<std::string> validate(const Environment& env) {
  std::vector<std::string> errors;
  const auto& m = env.map;
  if (m.width <= 0 || m.height <= 0) errors.emplace_back("map dimensions must be positive");
  if (m.cells.size() != static_cast<std::size_t>(std::max(m.width, 0)) * std::max(m.height, 0))
    errors.emplace_back("cell count does not match width*height");
  if (std::any_of(m.cells.begin(), m.cells.end(), [](std::uint8_t c) { return c > 1; }))
    errors.emplace_back("cells must be 0 or 1");
  if (!errors.empty()) return errors;
  if (env.start.dim() != 2 || !env.start.finite()) errors.emplace_back("start must be a finite 2-D point");
  if (env.goal_center.dim() != 2 || !env.goal_center.finite())
    errors.emplace_back("goal must be a finite 2-D point");
  if (!(env.goal_radius > 0.0)) errors.emplace_back("goal_radius must be positive");
  if (!errors.empty()) return errors;
  if (!point_free(env, env.start, 0)) errors.emplace_back("start is in collision");
  if (!point_free_static(env, env.goal_center)) errors.emplace_back("goal center is in collision");
  for (std::size_t i = 0; i < env.agents.size(); ++i) {
    const auto& track = env.agents[i];
    if (track.waypoints.empty()) {
      errors.push_back("agent " + std::to_string(i) + " has no waypoints");
      continue;
    }
    for (std::size_t k = 0; k < track.waypoints.size(); ++k) {
      if (!point_free_static(env, track.waypoints[k])) {
        errors.push_back("agent " + std::to_string(i) + " waypoint " + std::to_string(k) + " is in collision");
        break;
      }
    }
  }
  return errors;
}

}  // namespace derrt::env
