#include "derrt/env/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "derrt/env/collision.hpp"
#include "derrt/numerics/rng.hpp"

namespace derrt::env {

namespace {

// Distinct stream ids keep generators independent for the same seed.
constexpr std::uint64_t kPassageStream = 0x5041535341474531ULL;
constexpr std::uint64_t kBugtrapStream = 0x4255475452415031ULL;
constexpr std::uint64_t kRoundaboutStream = 0x524F554E44414231ULL;
constexpr int kMaxAttempts = 10000;

int uniform_int_in(num::RngStream& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

Environment gen_narrow_passage(std::uint64_t seed, int width, int height, const PassageOptions& opt) {
  if (width < 50 || height < 50) throw std::invalid_argument("gen_narrow_passage: map must be at least 50x50");
  num::RngStream rng(seed, kPassageStream);
  const int m = static_cast<int>(std::ceil(opt.margin));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const int length = std::max(1, static_cast<int>(std::lround(rng.uniform(opt.length_min_frac, opt.length_max_frac) * width)));
    const int base_thickness = uniform_int_in(rng, opt.thickness_min, opt.thickness_max);
    const int thickness = std::max(2, static_cast<int>(std::lround(base_thickness * opt.narrowing)));
    const int wall_lo = static_cast<int>(std::ceil(0.25 * width));
    const int wall_hi = static_cast<int>(std::floor(width - length - 0.2 * width));
    const int open_hi = height - m - thickness;
    if (wall_hi < wall_lo || open_hi < m) continue;
    const int wall_x = uniform_int_in(rng, wall_lo, wall_hi);
    const int open_y = uniform_int_in(rng, m, open_hi);

    Environment env;
    env.map = OccupancyMap(width, height);
    for (int cx = wall_x; cx < wall_x + length; ++cx)
      for (int cy = 0; cy < height; ++cy)
        if (cy < open_y || cy >= open_y + thickness) env.map.set(cx, cy, true);

    const double res = env.map.resolution;
    env.start = Configuration{rng.uniform(opt.margin, (wall_x - m) * res), rng.uniform(opt.margin, height * res - opt.margin)};
    env.goal_center = Configuration{rng.uniform((wall_x + length + m) * res, width * res - opt.margin),
                                    rng.uniform(opt.margin, height * res - opt.margin)};
    env.goal_radius = opt.goal_radius;
    env.generator = "passage";
    env.seed = seed;
    PassageInfo info{wall_x * res, open_y * res, (wall_x + length) * res, (open_y + thickness) * res, {}};
    info.entrance = Configuration{info.x0, 0.5 * (info.y0 + info.y1)};
    env.passage = info;
    if (!validate(env).empty()) continue;
    return env;
  }
  throw std::runtime_error("gen_narrow_passage: no valid layout found");
}

bool bugtrap_wall(double u, double v, const BugtrapOptions& opt) {
  const double s = opt.half_size, w = opt.wall, c = opt.channel_half_width;
  const double au = std::abs(u), av = std::abs(v);
  if (au > s || av > s) return false;
  if (au >= s - w || av >= s - w) return !(u >= s - w && av < c);
  return u >= s - w - opt.channel_length && av >= c && av <= c + w;
}

bool bugtrap_channel(double u, double v, const BugtrapOptions& opt) {
  const double s = opt.half_size, w = opt.wall;
  return u >= s - w - opt.channel_length && u <= s && std::abs(v) < opt.channel_half_width;
}

Environment gen_bugtrap(std::uint64_t seed, const BugtrapOptions& opt) {
  num::RngStream rng(seed, kBugtrapStream);
  const int n = opt.map_size;
  const double reach = opt.half_size * std::numbers::sqrt2 + 2.0;
  if (2.0 * reach >= n) throw std::invalid_argument("gen_bugtrap: trap does not fit the map");
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Configuration center{rng.uniform(reach, n - reach), rng.uniform(reach, n - reach)};
    const double ca = std::cos(angle), sa = std::sin(angle);
    auto to_local = [&](double x, double y) {
      const double dx = x - center[0], dy = y - center[1];
      return std::pair{ca * dx + sa * dy, -sa * dx + ca * dy};
    };
    auto to_world = [&](double u, double v) { return Configuration{center[0] + ca * u - sa * v, center[1] + sa * u + ca * v}; };

    Environment env;
    env.map = OccupancyMap(n, n);
    for (int cy = 0; cy < n; ++cy)
      for (int cx = 0; cx < n; ++cx) {
        const auto [u, v] = to_local(cx + 0.5, cy + 0.5);
        if (bugtrap_wall(u, v, opt)) env.map.set(cx, cy, true);
      }

    const double s = opt.half_size, w = opt.wall;
    env.start = to_world(rng.uniform(-s + w + 2.0, s - w - opt.channel_length - 2.0), rng.uniform(-s + w + 2.0, s - w - 2.0));
    bool goal_ok = false;
    for (int g = 0; g < kMaxAttempts && !goal_ok; ++g) {
      env.goal_center = Configuration{rng.uniform(opt.goal_radius + 1.0, n - opt.goal_radius - 1.0),
                                      rng.uniform(opt.goal_radius + 1.0, n - opt.goal_radius - 1.0)};
      const auto [u, v] = to_local(env.goal_center[0], env.goal_center[1]);
      goal_ok = (std::abs(u) > s + opt.goal_radius + 2.0 || std::abs(v) > s + opt.goal_radius + 2.0) &&
                point_free_static(env, env.goal_center);
    }
    if (!goal_ok) continue;
    env.goal_radius = opt.goal_radius;
    env.generator = "bugtrap";
    env.seed = seed;
    env.bugtrap = BugtrapInfo{center, angle, s, w, opt.channel_half_width, opt.channel_length};
    if (!validate(env).empty()) continue;
    return env;
  }
  throw std::runtime_error("gen_bugtrap: no valid layout found");
}

Environment gen_roundabout(std::uint64_t seed, int n_agents, const RoundaboutOptions& opt) {
  if (n_agents < 1 || n_agents > 8) throw std::invalid_argument("gen_roundabout: n_agents must be in [1, 8]");
  num::RngStream rng(seed, kRoundaboutStream);
  const int n = opt.map_size;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Configuration center{0.5 * n + rng.uniform(-opt.center_jitter, opt.center_jitter),
                               0.5 * n + rng.uniform(-opt.center_jitter, opt.center_jitter)};
    const double hx = rng.uniform(opt.half_extent_min, opt.half_extent_max);
    const double hy = rng.uniform(opt.half_extent_min, opt.half_extent_max);
    const double half_diag = std::hypot(hx, hy);

    Environment env;
    env.map = OccupancyMap(n, n);
    for (int cy = 0; cy < n; ++cy)
      for (int cx = 0; cx < n; ++cx)
        if (std::abs(cx + 0.5 - center[0]) <= hx && std::abs(cy + 0.5 - center[1]) <= hy) env.map.set(cx, cy, true);

    const double start_angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double robot_r = half_diag + opt.robot_gap;
    env.start = Configuration{center[0] + robot_r * std::cos(start_angle), center[1] + robot_r * std::sin(start_angle)};
    env.goal_center = Configuration{center[0] - robot_r * std::cos(start_angle), center[1] - robot_r * std::sin(start_angle)};
    env.goal_radius = opt.goal_radius;

    const double base_phase = rng.uniform(-std::numbers::pi, std::numbers::pi);
    bool ok = true;
    for (int i = 0; i < n_agents && ok; ++i) {
      const double radius = half_diag + rng.uniform(opt.orbit_gap_min, opt.orbit_gap_max);
      const double speed = rng.uniform(opt.speed_min, opt.speed_max);
      const double phase = base_phase + 2.0 * std::numbers::pi * i / n_agents + rng.uniform(-opt.phase_jitter, opt.phase_jitter);
      const double omega = speed / radius;
      AgentTrack track;
      track.counter_clockwise = true;
      track.waypoints.reserve(static_cast<std::size_t>(opt.horizon));
      for (int k = 0; k < opt.horizon; ++k) {
        const double a = phase + omega * k;
        track.waypoints.push_back(Configuration{center[0] + radius * std::cos(a), center[1] + radius * std::sin(a)});
      }
      // Agents must not start on top of the robot.
      ok = distance(track.waypoints.front(), env.start) >= env.agent_clearance + 6.0;
      env.agents.push_back(std::move(track));
    }
    if (!ok) continue;
    env.generator = "roundabout";
    env.seed = seed;
    env.roundabout = RoundaboutInfo{center, hx, hy};
    if (!validate(env).empty()) continue;
    return env;
  }
  throw std::runtime_error("gen_roundabout: no valid layout found");
}

}  // namespace derrt::env
