#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "derrt/env/configuration.hpp"

namespace derrt::env {

/// Binary occupancy grid, row-major with row index = y cell. 1 = obstacle.
struct OccupancyMap {
  int width = 0;
  int height = 0;
  double resolution = 1.0;
  std::vector<std::uint8_t> cells;

  OccupancyMap() = default;
  OccupancyMap(int width_, int height_, double resolution_ = 1.0);

  double world_width() const { return width * resolution; }
  double world_height() const { return height * resolution; }
  bool in_bounds(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < width && cy < height; }
  /// Out-of-bounds cells read as occupied.
  bool occupied(int cx, int cy) const {
    return !in_bounds(cx, cy) || cells[static_cast<std::size_t>(cy) * width + cx] != 0;
  }
  void set(int cx, int cy, bool value) { cells[static_cast<std::size_t>(cy) * width + cx] = value ? 1 : 0; }
  int cell_of(double coord) const;
  /// Occupancy of the cell containing world point (x, y).
  bool occupied_at(double x, double y) const;
  std::size_t free_cell_count() const;

  friend bool operator==(const OccupancyMap&, const OccupancyMap&) = default;
};

struct AgentTrack {
  std::vector<Configuration> waypoints;  ///< one per time step
  bool counter_clockwise = true;

  /// Waypoint at step t, clamped to the track's ends.
  const Configuration& at(int t) const;
  /// Linear interpolation for fractional times.
  Configuration at(double t) const;

  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

/// Passage geometry recorded by the narrow-passage generator.
struct PassageInfo {
  double x0, y0, x1, y1;  ///< corridor rectangle in world units
  Configuration entrance;  ///< midpoint of the corridor's left mouth
  friend bool operator==(const PassageInfo&, const PassageInfo&) = default;
};

struct BugtrapInfo {
  Configuration center;
  double angle;             ///< rotation of the canonical trap, radians
  double half_size;         ///< outer half-extent of the trap box
  double wall;              ///< wall thickness
  double channel_half_width;
  double channel_length;    ///< inward extent of the channel walls
  friend bool operator==(const BugtrapInfo&, const BugtrapInfo&) = default;
};

struct RoundaboutInfo {
  Configuration center;     ///< obstacle center, also the orbit center
  double half_x, half_y;    ///< obstacle half-extents
  friend bool operator==(const RoundaboutInfo&, const RoundaboutInfo&) = default;
};

struct Environment {
  OccupancyMap map;
  Configuration start;
  Configuration goal_center;
  double goal_radius = 1.0;
  std::vector<AgentTrack> agents;
  /// Minimum robot-to-agent center distance (robot radius + agent radius).
  double agent_clearance = 2.0;

  std::string generator;
  std::uint64_t seed = 0;
  std::optional<PassageInfo> passage;
  std::optional<BugtrapInfo> bugtrap;
  std::optional<RoundaboutInfo> roundabout;

  bool in_goal(const Configuration& x) const { return distance(x.head2(), goal_center) <= goal_radius; }

  friend bool operator==(const Environment&, const Environment&) = default;
};

/// Checks the type invariants of a generated environment; returns a list of
/// violations (empty when valid).
std::vector<std::string> validate(const Environment& env);

}  // namespace derrt::env
