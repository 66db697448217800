#pragma once

#include <cstdint>

#include "derrt/env/environment.hpp"

namespace derrt::env {

struct PassageOptions {
  int thickness_min = 6;        ///< corridor width range, cells
  int thickness_max = 12;
  double length_min_frac = 0.20;  ///< corridor length as a fraction of map width
  double length_max_frac = 0.35;
  /// Multiplies the sampled thickness (test maps use a narrower corridor).
  double narrowing = 1.0;
  double goal_radius = 10.0;
  double margin = 8.0;          ///< keep start/goal this far from walls and borders
};

/// Two chambers separated by a full-height wall pierced by one horizontal
/// corridor. Start in the left chamber, goal in the right.
Environment gen_narrow_passage(std::uint64_t seed, int width, int height, const PassageOptions& opt = {});

struct BugtrapOptions {
  int map_size = 110;
  double half_size = 20.0;
  double wall = 2.0;
  double channel_half_width = 2.5;
  double channel_length = 12.0;
  double goal_radius = 4.0;
};

/// True iff local point (u, v) of the canonical, unrotated trap is wall.
/// The exit channel points along +u.
bool bugtrap_wall(double u, double v, const BugtrapOptions& opt);
/// True iff (u, v) lies in the exit channel (between the channel walls,
/// from their inner end out through the outer wall).
bool bugtrap_channel(double u, double v, const BugtrapOptions& opt);

/// Randomly rotated and translated bug trap; start in the inner chamber,
/// goal in the free space outside.
Environment gen_bugtrap(std::uint64_t seed, const BugtrapOptions& opt = {});

struct RoundaboutOptions {
  int map_size = 100;
  double half_extent_min = 8.0;   ///< obstacle half-sizes
  double half_extent_max = 14.0;
  double center_jitter = 5.0;
  double orbit_gap_min = 5.0;     ///< agent orbit radius minus obstacle half-diagonal
  double orbit_gap_max = 16.0;
  double robot_gap = 10.0;        ///< robot start/goal radius minus half-diagonal
  double speed_min = 1.0;         ///< agent speed, world units per step
  double speed_max = 2.0;
  double phase_jitter = 0.3;      ///< radians
  double goal_radius = 3.0;
  int horizon = 400;              ///< waypoints per track
};

/// Central rectangular obstacle with n_agents tracks orbiting it
/// counter-clockwise at constant angular speed; robot start and goal on
/// opposite sides of the obstacle. 1 <= n_agents <= 8.
Environment gen_roundabout(std::uint64_t seed, int n_agents, const RoundaboutOptions& opt = {});

}  // namespace derrt::env
