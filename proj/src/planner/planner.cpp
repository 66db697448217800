#include "derrt/planner/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "derrt/env/collision.hpp"
#include "derrt/env/features.hpp"

namespace derrt::planner {

namespace {

constexpr int kMaxSampleTries = 1000000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Configuration robot_part(const Configuration& x) { return Configuration{x[0], x[1]}; }

Configuration uniform_point(const env::Environment& env, num::RngStream& rng) {
  for (int i = 0; i < kMaxSampleTries; ++i) {
    Configuration x{rng.uniform(0.0, env.map.world_width()), rng.uniform(0.0, env.map.world_height())};
    if (env::point_free_static(env, x)) return x;
  }
  throw std::runtime_error("sample_free: no free cell found");
}

/// Geometry the core loop is generic over: the single robot, or robot plus
/// agents in the joint space.
struct Space {
  std::size_t dim = 2;
  double radius = 1.0;
  double gamma = 1.0;
  std::function<Configuration(num::RngStream&)> sample;
  std::function<bool(const Configuration&, const Configuration&)> edge_free;
};

PlanOutput run_rrt_star(const env::Environment& env, const SteeringModel* model, const PlannerConfig& cfg,
                        const Space& space, const Configuration& start, const ModelState& root_state) {
  cfg.validate();
  const auto t0 = Clock::now();
  const StepContext ctx{&env, cfg.t};
  num::RngStream rng(cfg.seed, kPlanStream);
  PlanOutput out{PlanResult{}, PlanTree(start, root_state, env.map.world_width(), env.map.world_height(),
                                        space.dim == 2 ? cfg.radius : 0.0)};
  PlanResult& res = out.result;
  PlanTree& tree = out.tree;
  res.seed = cfg.seed;
  std::vector<std::size_t> goal_nodes;
  if (env.in_goal(robot_part(start))) goal_nodes.push_back(0);

  auto best_goal = [&]() {
    std::size_t best = kNoParent;
    for (std::size_t id : goal_nodes)
      if (best == kNoParent || tree.node(id).cost < tree.node(best).cost) best = id;
    return best;
  };
  auto robot_length = [&](std::size_t id) {
    double len = 0.0;
    const auto ids = tree.path_to(id);
    for (std::size_t i = 1; i < ids.size(); ++i)
      len += distance(robot_part(tree.node(ids[i - 1]).x), robot_part(tree.node(ids[i]).x));
    return len;
  };
  std::size_t next_checkpoint = 0;
  auto record_checkpoints = [&](std::size_t it) {
    while (next_checkpoint < cfg.checkpoints.size() && cfg.checkpoints[next_checkpoint] <= it) {
      Checkpoint c;
      c.iteration = cfg.checkpoints[next_checkpoint++];
      const std::size_t g = best_goal();
      c.success = g != kNoParent;
      c.length = c.success ? robot_length(g) : 0.0;
      c.proposed = res.proposed;
      c.valid = res.valid;
      res.checkpoints.push_back(c);
    }
  };

  std::size_t it = 0;
  if (goal_nodes.empty()) {
    for (it = 1; it <= cfg.iterations; ++it) {
      if (cfg.time_budget_s > 0.0 && seconds_since(t0) > cfg.time_budget_s) {
        --it;
        break;
      }
      const Configuration x_rand = space.sample(rng);
      const std::size_t nearest = tree.nearest(x_rand);
      const Configuration x_nearest = tree.node(nearest).x;
      Configuration x_new, mu;
      ModelState state;
      if (model) {
        refresh_state(tree, nearest, *model, ctx);
        const NodeObservation* obs = node_observation(tree, nearest, *model, ctx);
        auto so = steer_with_model(*model, tree.node(nearest).state, x_nearest, obs, x_rand, ctx, space.radius,
                                   cfg.candidates, rng);
        x_new = so.x_new;
        mu = so.mu;
        state = std::move(so.state);
      } else {
        x_new = mu = steer_baseline(x_nearest, x_rand, space.radius);
      }
      if (distance(x_new, x_nearest) == 0.0) {
        record_checkpoints(it);
        continue;
      }
      ++res.proposed;
      if (!space.edge_free(x_nearest, x_new)) {
        record_checkpoints(it);
        continue;
      }
      ++res.valid;

      // ChooseParent: cheapest collision-free neighbor, ties to the lowest id.
      const double rn = near_radius(space.gamma, space.radius, tree.size() + 1, space.dim);
      const auto near = tree.near(x_new, rn);
      std::size_t parent = nearest;
      double c_min = tree.node(nearest).cost + distance(x_nearest, x_new);
      for (std::size_t id : near) {
        if (id == nearest) continue;
        const double c = tree.node(id).cost + distance(tree.node(id).x, x_new);
        if ((c < c_min || (c == c_min && id < parent)) && space.edge_free(tree.node(id).x, x_new)) {
          parent = id;
          c_min = c;
        }
      }
      if (model && parent != nearest) {
        refresh_state(tree, parent, *model, ctx);
        const NodeObservation* obs = node_observation(tree, parent, *model, ctx);
        state = model->prepare(tree.node(parent).state, tree.node(parent).x, obs, mu, ctx)->advance(x_new);
      }
      const std::size_t new_id = tree.add(x_new, mu, parent, c_min, std::move(state));

      if (cfg.rewire) {
        for (std::size_t id : near) {
          if (id == parent) continue;
          const double c = c_min + distance(x_new, tree.node(id).x);
          if (c < tree.node(id).cost && space.edge_free(x_new, tree.node(id).x)) {
            tree.reparent(id, new_id, c);
            if (model) {
              const NodeObservation* obs = node_observation(tree, new_id, *model, ctx);
              TreeNode& n = tree.node(id);
              n.state = model->prepare(tree.node(new_id).state, x_new, obs, n.mu, ctx)->advance(n.x);
              n.stale = false;
              tree.mark_descendants_stale(id);
            }
          }
        }
      }
      if (env.in_goal(robot_part(x_new))) goal_nodes.push_back(new_id);
      record_checkpoints(it);
    }
    if (it > cfg.iterations) it = cfg.iterations;
  }
  record_checkpoints(std::numeric_limits<std::size_t>::max());
  res.iterations = it;
  out.goal_node = best_goal();
  res.success = out.goal_node != kNoParent;
  if (res.success) {
    for (std::size_t id : tree.path_to(out.goal_node)) res.path.push_back(robot_part(tree.node(id).x));
    res.length = robot_length(out.goal_node);
  }
  res.seconds = seconds_since(t0);
  return out;
}

double free_area(const env::Environment& env) {
  return static_cast<double>(env.map.free_cell_count()) * env.map.resolution * env.map.resolution;
}

Configuration orbit_center(const env::Environment& env) {
  if (env.roundabout) return env.roundabout->center;
  return Configuration{0.5 * env.map.world_width(), 0.5 * env.map.world_height()};
}

}  // namespace

void PlannerConfig::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("planner: radius must be > 0");
  if (candidates < 1) throw std::invalid_argument("planner: candidate count must be >= 1");
  if (iterations < 1) throw std::invalid_argument("planner: iterations must be >= 1");
  if (!(goal_bias >= 0.0 && goal_bias < 1.0)) throw std::invalid_argument("planner: goal bias must be in [0, 1)");
  if (gamma < 0.0) throw std::invalid_argument("planner: gamma must be >= 0");
}

Configuration sample_free(const env::Environment& env, num::RngStream& rng, double goal_bias) {
  if (goal_bias > 0.0 && rng.uniform() < goal_bias) return env.goal_center;
  return uniform_point(env, rng);
}

double near_radius(double gamma, double r, std::size_t n, std::size_t d) {
  if (n < 2) return 0.0;
  const double nn = static_cast<double>(n);
  return std::min(r, gamma * std::pow(std::log(nn) / nn, 1.0 / static_cast<double>(d)));
}

double rrt_star_gamma(double free_volume, std::size_t d) {
  const double dd = static_cast<double>(d);
  const double log_unit_ball = 0.5 * dd * std::log(std::numbers::pi) - std::lgamma(0.5 * dd + 1.0);
  return 2.0 * std::pow(1.0 + 1.0 / dd, 1.0 / dd) * std::exp((std::log(free_volume) - log_unit_ball) / dd);
}

const NodeObservation* node_observation(PlanTree& tree, std::size_t id, const SteeringModel& model,
                                        const StepContext& ctx) {
  TreeNode& n = tree.node(id);
  if (!n.observed) {
    n.obs = model.observe(ctx, n.x);
    n.observed = true;
  }
  return n.obs.get();
}

const ModelState& refresh_state(PlanTree& tree, std::size_t id, const SteeringModel& model, const StepContext& ctx) {
  std::vector<std::size_t> chain;
  for (std::size_t a = id; tree.node(a).stale; a = tree.node(a).parent) chain.push_back(a);
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    TreeNode& n = tree.node(*it);
    const std::size_t p = n.parent;
    const NodeObservation* obs = node_observation(tree, p, model, ctx);
    n.state = model.prepare(tree.node(p).state, tree.node(p).x, obs, n.mu, ctx)->advance(n.x);
    n.stale = false;
  }
  return tree.node(id).state;
}

ModelState recompute_from_root(const PlanTree& tree, std::size_t id, const SteeringModel& model,
                               const StepContext& ctx) {
  const auto ids = tree.path_to(id);
  ModelState s = tree.node(ids.front()).state;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    const TreeNode& p = tree.node(ids[i - 1]);
    const TreeNode& n = tree.node(ids[i]);
    const auto obs = model.observe(ctx, p.x);
    s = model.prepare(s, p.x, obs.get(), n.mu, ctx)->advance(n.x);
  }
  return s;
}

PlanOutput plan_from(const env::Environment& env, const SteeringModel* model, const PlannerConfig& cfg,
                     const Configuration& start, const ModelState& root_state) {
  Space space;
  space.dim = 2;
  space.radius = cfg.radius;
  space.gamma = cfg.gamma > 0.0 ? cfg.gamma : rrt_star_gamma(free_area(env), 2);
  const double bias = cfg.goal_bias;
  space.sample = [&env, bias](num::RngStream& rng) { return sample_free(env, rng, bias); };
  const int t = cfg.t;
  space.edge_free = [&env, t](const Configuration& a, const Configuration& b) {
    return env::segment_free(env, a, b, t);
  };
  return run_rrt_star(env, model, cfg, space, start, root_state);
}

PlanResult plan(const env::Environment& env, const SteeringModel* model, const PlannerConfig& cfg) {
  const ModelState root = model ? model->initial_state() : ModelState{};
  return plan_from(env, model, cfg, env.start, root).result;
}

bool joint_segment_free(const env::Environment& env, const Configuration& a, const Configuration& b) {
  const std::size_t n_agents = (a.dim() - 2) / 2;
  const Configuration c = orbit_center(env);
  double longest = 0.0;
  for (std::size_t i = 0; i <= n_agents; ++i) {
    const double ax = a[2 * i], ay = a[2 * i + 1], bx = b[2 * i], by = b[2 * i + 1];
    longest = std::max(longest, std::hypot(bx - ax, by - ay));
    if (i == 0) continue;
    const double turn = env::wrap_angle(std::atan2(by - c[1], bx - c[0]) - std::atan2(ay - c[1], ax - c[0]));
    if (turn < 0.0) return false;
  }
  const auto steps = static_cast<long>(std::ceil(longest / (env::kSegmentSpacingCells * env.map.resolution)));
  const double c2 = env.agent_clearance * env.agent_clearance;
  for (long k = 0; k <= steps; ++k) {
    const double s = steps == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps);
    const double rx = a[0] + (b[0] - a[0]) * s, ry = a[1] + (b[1] - a[1]) * s;
    if (env.map.occupied_at(rx, ry)) return false;
    for (std::size_t i = 1; i <= n_agents; ++i) {
      const double qx = a[2 * i] + (b[2 * i] - a[2 * i]) * s;
      const double qy = a[2 * i + 1] + (b[2 * i + 1] - a[2 * i + 1]) * s;
      if (env.map.occupied_at(qx, qy)) return false;
      if ((qx - rx) * (qx - rx) + (qy - ry) * (qy - ry) < c2) return false;
    }
  }
  return true;
}

PlanOutput plan_joint_from(const env::Environment& env, const PlannerConfig& cfg, const Configuration& start) {
  const std::size_t n = env.agents.size();
  if (n == 0) return plan_from(env, nullptr, cfg, start, ModelState{});
  const std::size_t d = 2 * (1 + n);
  if (d > Configuration::kMaxDim) throw std::invalid_argument("plan_joint: too many agents");
  Configuration root(d);
  root[0] = start[0];
  root[1] = start[1];
  for (std::size_t i = 0; i < n; ++i) {
    const Configuration& p = env.agents[i].at(cfg.t);
    root[2 + 2 * i] = p[0];
    root[3 + 2 * i] = p[1];
  }
  Space space;
  space.dim = d;
  space.radius = cfg.radius * std::sqrt(static_cast<double>(1 + n));
  space.gamma = cfg.gamma > 0.0 ? cfg.gamma : rrt_star_gamma(std::pow(free_area(env), 1.0 + n), d);
  const double bias = cfg.goal_bias;
  space.sample = [&env, bias, d, n](num::RngStream& rng) {
    Configuration x(d);
    const Configuration r = sample_free(env, rng, bias);
    x[0] = r[0];
    x[1] = r[1];
    for (std::size_t i = 0; i < n; ++i) {
      const Configuration q = uniform_point(env, rng);
      x[2 + 2 * i] = q[0];
      x[3 + 2 * i] = q[1];
    }
    return x;
  };
  space.edge_free = [&env](const Configuration& a, const Configuration& b) { return joint_segment_free(env, a, b); };
  return run_rrt_star(env, nullptr, cfg, space, root, ModelState{});
}

PlanResult plan_joint(const env::Environment& env, const PlannerConfig& cfg) {
  return plan_joint_from(env, cfg, env.start).result;
}

DistanceField::DistanceField(const env::Environment& env) : map_(&env.map) {
  const auto& m = env.map;
  const std::size_t n = static_cast<std::size_t>(m.width) * m.height;
  dist_.assign(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (int cy = 0; cy < m.height; ++cy)
    for (int cx = 0; cx < m.width; ++cx) {
      if (m.occupied(cx, cy)) continue;
      const Configuration c{(cx + 0.5) * m.resolution, (cy + 0.5) * m.resolution};
      if (env.in_goal(c)) {
        const std::size_t i = static_cast<std::size_t>(cy) * m.width + cx;
        dist_[i] = 0.0;
        pq.emplace(0.0, i);
      }
    }
  {
    const int gx = m.cell_of(env.goal_center[0]), gy = m.cell_of(env.goal_center[1]);
    if (m.in_bounds(gx, gy) && !m.occupied(gx, gy)) {
      const std::size_t i = static_cast<std::size_t>(gy) * m.width + gx;
      if (dist_[i] != 0.0) {
        dist_[i] = 0.0;
        pq.emplace(0.0, i);
      }
    }
  }
  const double diag = std::sqrt(2.0) * m.resolution;
  while (!pq.empty()) {
    const auto [d, i] = pq.top();
    pq.pop();
    if (d > dist_[i]) continue;
    const int cx = static_cast<int>(i % m.width), cy = static_cast<int>(i / m.width);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cx + dx, ny = cy + dy;
        if (m.occupied(nx, ny)) continue;
        // No corner cutting between two blocked cells.
        if (dx != 0 && dy != 0 && (m.occupied(cx + dx, cy) || m.occupied(cx, cy + dy))) continue;
        const double nd = d + (dx != 0 && dy != 0 ? diag : m.resolution);
        const std::size_t j = static_cast<std::size_t>(ny) * m.width + nx;
        if (nd < dist_[j]) {
          dist_[j] = nd;
          pq.emplace(nd, j);
        }
      }
  }
}

double DistanceField::at(const Configuration& x) const {
  const int cx = map_->cell_of(x[0]), cy = map_->cell_of(x[1]);
  if (!map_->in_bounds(cx, cy)) return std::numeric_limits<double>::infinity();
  return dist_[static_cast<std::size_t>(cy) * map_->width + cx];
}

ReplanResult replan_loop(const env::Environment& env, const SteeringModel* model, const ReplanConfig& cfg) {
  if (cfg.kind == ReplanPlanner::model && !model) throw std::invalid_argument("replan_loop: model planner without a model");
  const SteeringModel* steer = cfg.kind == ReplanPlanner::model ? model : nullptr;
  const DistanceField field(env);
  ReplanResult res;
  Configuration x = env.start;
  ModelState carried = steer ? steer->initial_state() : ModelState{};
  res.trajectory.push_back(x);
  num::RngStream seeds(cfg.planner.seed, kReplanStream);
  const double c2 = env.agent_clearance * env.agent_clearance;

  for (int t = 0;; ++t) {
    if (env.in_goal(x)) {
      res.success = true;
      break;
    }
    if (t >= cfg.max_steps) {
      res.timeout = true;
      break;
    }
    PlannerConfig pc = cfg.planner;
    pc.iterations = cfg.samples_per_step;
    pc.t = t;
    pc.seed = seeds.next_u64();
    pc.checkpoints.clear();
    PlanOutput po = cfg.kind == ReplanPlanner::joint ? plan_joint_from(env, pc, x) : plan_from(env, steer, pc, x, carried);
    ++res.replans;
    res.plan_seconds += po.result.seconds;
    res.proposed += po.result.proposed;
    res.valid += po.result.valid;

    std::size_t target = 0;
    if (po.goal_node != kNoParent && po.goal_node != 0) {
      target = po.tree.path_to(po.goal_node)[1];
    } else {
      // Closest node to the goal; the root wins ties, so no progress means wait.
      double best_f = field.at(robot_part(po.tree.node(0).x));
      double best_e = distance(robot_part(po.tree.node(0).x), env.goal_center);
      for (std::size_t id = 1; id < po.tree.size(); ++id) {
        const Configuration p = robot_part(po.tree.node(id).x);
        const double f = field.at(p), e = distance(p, env.goal_center);
        if (f < best_f || (f == best_f && e < best_e)) {
          best_f = f;
          best_e = e;
          target = id;
        }
      }
      if (target != 0) target = po.tree.path_to(target)[1];
    }
    const Configuration y = robot_part(po.tree.node(target).x);

    // Execute over [t, t + 1] while the agents move; check clearance densely.
    double longest = distance(x, y);
    for (const auto& a : env.agents) longest = std::max(longest, distance(a.at(t), a.at(t + 1)));
    const auto sub = std::max<long>(1, static_cast<long>(std::ceil(longest / env::kSegmentSpacingCells)));
    for (long k = 1; k <= sub && !res.collision; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(sub);
      const Configuration p = lerp(x, y, s);
      for (const auto& a : env.agents) {
        const Configuration q = a.at(static_cast<double>(t) + s);
        if ((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) < c2) {
          res.collision = true;
          break;
        }
      }
    }
    if (target != 0) {
      res.steps.push_back(ExecutedStep{x, y, robot_part(po.tree.node(target).mu), t});
      if (steer) carried = refresh_state(po.tree, target, *steer, StepContext{&env, t});
    }
    res.length += distance(x, y);
    x = y;
    res.trajectory.push_back(x);
    if (res.collision) break;
  }
  return res;
}

nlohmann::json to_json(const PlanResult& r) {
  nlohmann::json path = nlohmann::json::array();
  for (const auto& p : r.path) path.push_back({p[0], p[1]});
  return {{"success", r.success}, {"path", path},         {"length", r.length}, {"iterations", r.iterations},
          {"proposed", r.proposed}, {"valid", r.valid}, {"seed", r.seed}};
}

void write_tree_jsonl(std::ostream& out, const PlanTree& tree) {
  for (const auto& n : tree.nodes()) {
    nlohmann::json x = nlohmann::json::array();
    for (std::size_t i = 0; i < n.x.dim(); ++i) x.push_back(n.x[i]);
    nlohmann::json j = {{"id", n.id},
                        {"parent", n.parent == kNoParent ? -1 : static_cast<long long>(n.parent)},
                        {"x", x},
                        {"cost", n.cost}};
    out << j.dump() << '\n';
  }
}

}  // namespace derrt::planner
