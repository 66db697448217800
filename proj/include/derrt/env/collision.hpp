#pragma once

#include <vector>

#include "derrt/env/environment.hpp"

namespace derrt::env {

/// Largest spacing between collision samples along a segment, in cells.
inline constexpr double kSegmentSpacingCells = 0.25;

/// True iff x lies on a free in-bounds cell and keeps agent_clearance from
/// every agent at step t. Only the first two coordinates are inspected.
bool point_free(const Environment& env, const Configuration& x, int t);

/// Static-map-only variant of point_free.
bool point_free_static(const Environment& env, const Configuration& x);

/// True iff every sample along a -> b (spacing <= 0.25 cell) is point_free.
/// Endpoints are put in a canonical order first so the result is symmetric.
bool segment_free(const Environment& env, const Configuration& a, const Configuration& b, int t);

/// size x size occupancy window around the cell containing `center`
/// (row-major, row = y). Out-of-map cells read as 1. `size` must be odd.
std::vector<double> extract_patch(const Environment& env, const Configuration& center, int size);

}  // namespace derrt::env
