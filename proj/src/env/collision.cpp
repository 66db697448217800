#include "derrt/env/collision.hpp"

#include <cmath>
#include <stdexcept>

namespace derrt::env {

bool point_free_static(const Environment& env, const Configuration& x) {
  return env.map.occupied_at(x[0], x[1]) == false;
}

bool point_free(const Environment& env, const Configuration& x, int t) {
  if (!point_free_static(env, x)) return false;
  const double c2 = env.agent_clearance * env.agent_clearance;
  for (const auto& agent : env.agents) {
    const Configuration& a = agent.at(t);
    const double dx = x[0] - a[0];
    const double dy = x[1] - a[1];
    if (dx * dx + dy * dy < c2) return false;
  }
  return true;
}

bool segment_free(const Environment& env, const Configuration& a, const Configuration& b, int t) {
  const bool swap = b[0] < a[0] || (b[0] == a[0] && b[1] < a[1]);
  const Configuration& p = swap ? b : a;
  const Configuration& q = swap ? a : b;
  const double len = std::hypot(q[0] - p[0], q[1] - p[1]);
  const auto steps = static_cast<long>(std::ceil(len / (kSegmentSpacingCells * env.map.resolution)));
  for (long i = 0; i <= steps; ++i) {
    const double s = steps == 0 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps);
    const Configuration x{p[0] + (q[0] - p[0]) * s, p[1] + (q[1] - p[1]) * s};
    if (!point_free(env, x, t)) return false;
  }
  return true;
}

std::vector<double> extract_patch(const Environment& env, const Configuration& center, int size) {
  if (size <= 0 || size % 2 == 0) throw std::invalid_argument("extract_patch: size must be odd and positive");
  const int cx = env.map.cell_of(center[0]);
  const int cy = env.map.cell_of(center[1]);
  const int half = size / 2;
  std::vector<double> patch(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      patch[static_cast<std::size_t>(i) * size + j] = env.map.occupied(cx - half + j, cy - half + i) ? 1.0 : 0.0;
  return patch;
}

}  // namespace derrt::env
