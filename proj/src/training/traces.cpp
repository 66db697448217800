#include "derrt/training/traces.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "derrt/env/collision.hpp"
#include "derrt/env/env_io.hpp"
#include "derrt/env/features.hpp"
#include "derrt/env/generators.hpp"
#include "derrt/planner/planner.hpp"

namespace derrt::training {

using env::Configuration;
using nlohmann::json;

namespace {

constexpr int kDatasetVersion = 1;
constexpr std::uint64_t kTrainEnvStream = 0x545241494E;  // "TRAIN"
constexpr std::uint64_t kMuStream = 0x4D55;

json step_to_json(const TraceStep& s, bool patch, const std::vector<double>* next_features) {
  json j = {{"x_prev", env::to_json(s.x_prev)}, {"x_next", env::to_json(s.x_next)}, {"mu", env::to_json(s.mu)},
            {"t", s.t}};
  if (patch) {
    std::vector<std::uint8_t> cells(s.observation.size());
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = s.observation[i] != 0.0 ? 1 : 0;
    j["patch"] = env::rle_encode(cells);
  } else {
    j["obs"] = s.observation;
  }
  if (!s.agents.empty()) j["agents"] = s.agents;
  if (next_features) j["next_features"] = *next_features;
  return j;
}

}  // namespace

std::string to_string(MuSource m) { return m == MuSource::executed ? "executed" : "sampled"; }

MuSource mu_source_from_string(const std::string& s) {
  if (s == "executed") return MuSource::executed;
  if (s == "sampled") return MuSource::sampled;
  throw std::invalid_argument("unknown mu source '" + s + "' (expected executed or sampled)");
}

FeatureSchema schema_for(env::ObservationKind kind) {
  FeatureSchema s;
  s.kind = kind;
  s.observation_dim = env::local_observation_dim(kind);
  s.agent_dim = kind == env::ObservationKind::roundabout ? env::kAgentFeatureDim : 0;
  s.hmm_feature_dim = kind == env::ObservationKind::bugtrap ? 0 : env::hmm_env_feature_dim(kind);
  return s;
}

void TraceDataset::validate() const {
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Trace& tr = traces[i];
    const std::string where = "trace " + std::to_string(i);
    if (tr.sequence.steps.empty()) throw std::invalid_argument(where + " is empty");
    if (schema.hmm_feature_dim > 0 && tr.next_features.size() != tr.sequence.steps.size())
      throw std::invalid_argument(where + " lacks HMM features");
    for (std::size_t k = 0; k < tr.sequence.steps.size(); ++k) {
      const auto& s = tr.sequence.steps[k];
      if (s.observation.size() != schema.observation_dim)
        throw std::invalid_argument(where + " has an observation of the wrong width");
      for (const auto& a : s.agents)
        if (a.size() != schema.agent_dim) throw std::invalid_argument(where + " has agent features of the wrong width");
      if (schema.hmm_feature_dim > 0 && tr.next_features[k].size() != schema.hmm_feature_dim)
        throw std::invalid_argument(where + " has HMM features of the wrong width");
    }
  }
}

void write_dataset(std::ostream& out, const TraceDataset& ds) {
  ds.validate();
  const bool patch = ds.schema.kind == env::ObservationKind::bugtrap;
  json header = {{"version", kDatasetVersion},
                 {"kind", env::to_string(ds.schema.kind)},
                 {"generator", ds.generator},
                 {"radius", ds.radius},
                 {"mu", to_string(ds.mu)},
                 {"observation_dim", ds.schema.observation_dim},
                 {"agent_dim", ds.schema.agent_dim},
                 {"hmm_feature_dim", ds.schema.hmm_feature_dim},
                 {"traces", ds.traces.size()}};
  out << header.dump() << '\n';
  for (const auto& tr : ds.traces) {
    json steps = json::array();
    for (std::size_t k = 0; k < tr.sequence.steps.size(); ++k)
      steps.push_back(step_to_json(tr.sequence.steps[k], patch,
                                   tr.next_features.empty() ? nullptr : &tr.next_features[k]));
    json line = {{"env_seed", tr.env_seed},
                 {"world", {tr.sequence.world_width, tr.sequence.world_height}},
                 {"steps", steps}};
    out << line.dump() << '\n';
  }
}

TraceDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace dataset: missing header");
  const json header = json::parse(line);
  if (header.at("version").get<int>() != kDatasetVersion) throw std::runtime_error("trace dataset: unsupported version");
  TraceDataset ds;
  ds.schema.kind = env::observation_kind_from_string(header.at("kind").get<std::string>());
  ds.schema.observation_dim = header.at("observation_dim").get<std::size_t>();
  ds.schema.agent_dim = header.at("agent_dim").get<std::size_t>();
  ds.schema.hmm_feature_dim = header.at("hmm_feature_dim").get<std::size_t>();
  ds.generator = header.at("generator").get<std::string>();
  ds.radius = header.at("radius").get<double>();
  ds.mu = mu_source_from_string(header.at("mu").get<std::string>());
  const bool patch = ds.schema.kind == env::ObservationKind::bugtrap;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Trace tr;
    tr.env_seed = j.at("env_seed").get<std::uint64_t>();
    tr.sequence.world_width = j.at("world").at(0).get<double>();
    tr.sequence.world_height = j.at("world").at(1).get<double>();
    for (const auto& js : j.at("steps")) {
      TraceStep s;
      s.x_prev = env::config_from_json(js.at("x_prev"));
      s.x_next = env::config_from_json(js.at("x_next"));
      s.mu = env::config_from_json(js.at("mu"));
      s.t = js.at("t").get<int>();
      if (patch) {
        const auto cells = env::rle_decode(js.at("patch").get<std::vector<std::size_t>>(), ds.schema.observation_dim);
        s.observation.assign(cells.begin(), cells.end());
      } else {
        s.observation = js.at("obs").get<std::vector<double>>();
      }
      if (js.contains("agents")) s.agents = js.at("agents").get<std::vector<std::vector<double>>>();
      if (js.contains("next_features")) tr.next_features.push_back(js.at("next_features").get<std::vector<double>>());
      tr.sequence.steps.push_back(std::move(s));
    }
    ds.traces.push_back(std::move(tr));
  }
  if (ds.traces.size() != header.at("traces").get<std::size_t>())
    throw std::runtime_error("trace dataset: trace count differs from header");
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const TraceDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset(out, ds);
}

TraceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_dataset(in);
}

Trace make_trace(const env::Environment& env, env::ObservationKind kind, const std::vector<Configuration>& path,
                 const std::vector<int>& times, MuSource mu, double radius, num::RngStream& rng) {
  Trace tr;
  tr.env_seed = env.seed;
  tr.sequence.world_width = env.map.world_width();
  tr.sequence.world_height = env.map.world_height();
  const bool hmm_features = kind != env::ObservationKind::bugtrap;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const int t = times.empty() ? 0 : times[i];
    TraceStep s;
    s.x_prev = path[i];
    s.x_next = path[i + 1];
    s.mu = mu == MuSource::executed ? path[i + 1]
                                    : planner::steer_baseline(path[i], planner::sample_free(env, rng, 0.0), radius);
    s.observation = env::local_observation(kind, env, path[i], t);
    s.agents = env::agent_observations(kind, env, path[i], t);
    s.t = t;
    if (hmm_features) tr.next_features.push_back(env::hmm_env_features(kind, env, path[i + 1], t));
    tr.sequence.steps.push_back(std::move(s));
  }
  return tr;
}

TraceDataset collect_traces(const CollectOptions& opt) {
  if (opt.n_envs == 0 || opt.runs_per_env == 0) throw std::invalid_argument("collect_traces: nothing to run");
  TraceDataset ds;
  ds.schema = schema_for(opt.kind);
  ds.radius = opt.radius;
  ds.mu = opt.mu;
  ds.generator = env::to_string(opt.kind);

  std::vector<std::vector<Trace>> per_env(opt.n_envs);
  const auto n = static_cast<long>(opt.n_envs);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    const std::uint64_t env_seed = num::splitmix64(opt.seed ^ num::splitmix64(kTrainEnvStream + static_cast<std::uint64_t>(i)));
    env::Environment e;
    switch (opt.kind) {
      case env::ObservationKind::passage: e = env::gen_narrow_passage(env_seed, opt.passage_width, opt.passage_height, opt.passage); break;
      case env::ObservationKind::bugtrap: e = env::gen_bugtrap(env_seed); break;
      case env::ObservationKind::roundabout: e = env::gen_roundabout(env_seed, opt.agents); break;
    }
    for (std::size_t run = 0; run < opt.runs_per_env; ++run) {
      const std::uint64_t run_seed = num::splitmix64(env_seed + run);
      num::RngStream mu_rng(run_seed, kMuStream);
      planner::PlannerConfig pc;
      pc.radius = opt.radius;
      pc.goal_bias = opt.goal_bias;
      pc.seed = run_seed;
      pc.iterations = opt.budget;
      if (opt.kind == env::ObservationKind::roundabout) {
        planner::ReplanConfig rc;
        rc.planner = pc;
        rc.samples_per_step = opt.budget;
        rc.max_steps = opt.max_steps;
        const auto r = planner::replan_loop(e, nullptr, rc);
        if (!r.success || r.steps.empty()) continue;
        std::vector<Configuration> path{r.steps.front().x_prev};
        std::vector<int> times;
        for (const auto& s : r.steps) {
          path.push_back(s.x_next);
          times.push_back(s.t);
        }
        times.push_back(times.back() + 1);
        per_env[static_cast<std::size_t>(i)].push_back(make_trace(e, opt.kind, path, times, opt.mu, opt.radius, mu_rng));
      } else {
        const auto r = planner::plan(e, nullptr, pc);
        if (!r.success || r.path.size() < 2) continue;
        per_env[static_cast<std::size_t>(i)].push_back(make_trace(e, opt.kind, r.path, {}, opt.mu, opt.radius, mu_rng));
      }
    }
  }
  for (auto& v : per_env)
    for (auto& tr : v) {
      if (opt.max_traces > 0 && ds.traces.size() >= opt.max_traces) break;
      ds.traces.push_back(std::move(tr));
    }
  if (ds.traces.empty()) throw std::runtime_error("collect_traces: no successful plans in the budget");
  return ds;
}

}  // namespace derrt::training
