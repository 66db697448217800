#include "derrt/bench/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "derrt/bench/pool.hpp"
#include "derrt/env/generators.hpp"
#include "derrt/numerics/param_file.hpp"
#include "derrt/numerics/rng.hpp"
#include "derrt/training/traces.hpp"
#include "derrt/training/trainers.hpp"

namespace derrt::bench {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainSalt = 0x5452;  // "TR"
constexpr std::uint64_t kGruSalt = 0x4752;    // "GR"

struct TrialSeeds {
  std::uint64_t env = 0;
  std::uint64_t plan = 0;
};

TrialSeeds trial_seeds(std::uint64_t seed, std::size_t trial) {
  num::RngStream rng(seed, trial);
  TrialSeeds s;
  s.env = rng.next_u64();
  s.plan = rng.next_u64();
  return s;
}

bool wants(const std::vector<std::string>& planners, const std::string& p) {
  return std::find(planners.begin(), planners.end(), p) != planners.end();
}

void check_planners(const std::vector<std::string>& planners, const std::vector<std::string>& allowed) {
  if (planners.empty()) throw std::invalid_argument("benchmark needs at least one planner");
  for (const auto& p : planners)
    if (!wants(allowed, p)) throw std::invalid_argument("planner '" + p + "' is not available for this experiment");
}

TrialRecord record_from(const planner::PlanResult& r, std::size_t trial, std::uint64_t env_seed, const std::string& p) {
  TrialRecord t;
  t.trial = trial;
  t.seed = env_seed;
  t.planner = p;
  t.success = r.success;
  t.length = r.length;
  t.proposed = r.proposed;
  t.valid = r.valid;
  t.seconds = r.seconds;
  return t;
}

void dump_tree(const std::filesystem::path& dir, const std::string& planner, std::size_t trial,
               const planner::PlanTree& tree) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / (planner + "_" + std::to_string(trial) + ".jsonl"));
  if (!out) throw std::runtime_error("cannot write tree dump in " + dir.string());
  planner::write_tree_jsonl(out, tree);
}

training::RecurrentTrainOptions gru_options(std::uint64_t seed, int epochs) {
  training::RecurrentTrainOptions o;
  o.seed = num::splitmix64(seed ^ kGruSalt);
  o.epochs = epochs;
  return o;
}

training::CollectOptions passage_collect(const PassageBenchConfig& cfg, training::MuSource mu) {
  training::CollectOptions co;
  co.kind = env::ObservationKind::passage;
  co.n_envs = cfg.train_traces * 2;
  co.max_traces = cfg.train_traces;
  co.budget = cfg.collect_budget;
  co.radius = cfg.radius;
  co.goal_bias = cfg.goal_bias;
  co.seed = num::splitmix64(cfg.seed ^ kTrainSalt);
  co.passage_width = cfg.train_width;
  co.passage_height = cfg.train_height;
  co.mu = mu;
  return co;
}

training::CollectOptions roundabout_collect(const RoundaboutBenchConfig& cfg, training::MuSource mu) {
  training::CollectOptions co;
  co.kind = env::ObservationKind::roundabout;
  co.n_envs = cfg.train_traces * 2;
  co.max_traces = cfg.train_traces;
  co.budget = cfg.samples_per_step;
  co.radius = cfg.radius;
  co.goal_bias = cfg.goal_bias;
  co.seed = num::splitmix64(cfg.seed ^ kTrainSalt);
  co.agents = cfg.train_agents;
  co.max_steps = cfg.max_steps;
  co.mu = mu;
  return co;
}

training::TraceDataset collect_exact(const training::CollectOptions& co) {
  auto ds = training::collect_traces(co);
  if (ds.traces.size() < co.max_traces)
    throw std::runtime_error("collected " + std::to_string(ds.traces.size()) + " of " +
                             std::to_string(co.max_traces) + " requested " + ds.generator + " traces");
  return ds;
}

hmm::HmmModel fit_hmm(const training::TraceDataset& ds, std::size_t states, std::uint64_t seed) {
  training::HmmTrainOptions o;
  o.states = states;
  o.seed = seed;
  return training::train_hmm(ds, o).model;
}

}  // namespace

LoadedModel load_model(const std::filesystem::path& path) {
  const auto file = num::read_params(path);
  const auto manifest = json::parse(file.manifest_json);
  const std::string kind = manifest.value("kind", "");
  if (kind == "hmm")
    return LoadedHmm{hmm::from_param_file(file), env::observation_kind_from_string(manifest.at("observation").get<std::string>())};
  if (kind == "recurrent") return neural::RecurrentSteeringModel::from_param_file(file);
  throw std::runtime_error(path.string() + ": unknown model kind '" + kind + "'");
}

std::unique_ptr<planner::SteeringModel> make_steering(const LoadedModel& model) {
  if (const auto* h = std::get_if<LoadedHmm>(&model)) return std::make_unique<planner::HmmSteering>(h->model, h->kind);
  return std::make_unique<planner::RecurrentSteering>(std::get<neural::RecurrentSteeringModel>(model));
}

hmm::HmmModel train_passage_hmm(const PassageBenchConfig& cfg) {
  return fit_hmm(collect_exact(passage_collect(cfg, training::MuSource::executed)), cfg.hmm_states, cfg.seed);
}

neural::RecurrentSteeringModel train_passage_gru(const PassageBenchConfig& cfg) {
  const auto ds = collect_exact(passage_collect(cfg, training::MuSource::sampled));
  return training::train_recurrent(ds, training::default_arch(env::ObservationKind::passage, cfg.radius),
                                   gru_options(cfg.seed, cfg.gru_epochs))
      .model;
}

neural::RecurrentSteeringModel train_bugtrap_gru(const BugtrapBenchConfig& cfg) {
  training::CollectOptions co;
  co.kind = env::ObservationKind::bugtrap;
  co.n_envs = cfg.train_traces * 5 / 2;
  co.max_traces = cfg.train_traces;
  co.budget = cfg.collect_budget;
  co.radius = cfg.radius;
  co.goal_bias = cfg.goal_bias;
  co.seed = num::splitmix64(cfg.seed ^ kTrainSalt);
  co.mu = training::MuSource::sampled;
  const auto ds = collect_exact(co);
  return training::train_recurrent(ds, training::default_arch(env::ObservationKind::bugtrap, cfg.radius),
                                   gru_options(cfg.seed, cfg.gru_epochs))
      .model;
}

hmm::HmmModel train_roundabout_hmm(const RoundaboutBenchConfig& cfg) {
  return fit_hmm(collect_exact(roundabout_collect(cfg, training::MuSource::executed)), 3, cfg.seed);
}

neural::RecurrentSteeringModel train_roundabout_gru(const RoundaboutBenchConfig& cfg) {
  const auto ds = collect_exact(roundabout_collect(cfg, training::MuSource::sampled));
  return training::train_recurrent(ds, training::default_arch(env::ObservationKind::roundabout, cfg.radius),
                                   gru_options(cfg.seed, cfg.gru_epochs))
      .model;
}

BenchmarkReport run_passage(const PassageBenchConfig& cfg) {
  check_planners(cfg.planners, {kRrtStar, kDerrtHmm, kDerrtGru});
  if (cfg.rounds == 0) throw std::invalid_argument("run_passage: rounds must be > 0");
  std::vector<std::pair<std::string, std::unique_ptr<planner::SteeringModel>>> planners;
  for (const auto& p : cfg.planners) {
    if (p == kRrtStar) {
      planners.emplace_back(p, nullptr);
    } else if (p == kDerrtHmm) {
      auto m = cfg.hmm_model ? *cfg.hmm_model : train_passage_hmm(cfg);
      planners.emplace_back(p, std::make_unique<planner::HmmSteering>(std::move(m), env::ObservationKind::passage));
    } else {
      auto m = cfg.gru_model ? *cfg.gru_model : train_passage_gru(cfg);
      planners.emplace_back(p, std::make_unique<planner::RecurrentSteering>(std::move(m)));
    }
  }

  const std::uint64_t test_seed = cfg.test_seed.value_or(cfg.seed);
  const auto per_trial = run_trials(cfg.rounds, worker_count(), [&](std::size_t i) {
    const auto seeds = trial_seeds(test_seed, i);
    env::PassageOptions po;
    po.narrowing = cfg.narrowing;
    const auto e = env::gen_narrow_passage(seeds.env, cfg.width, cfg.height, po);
    planner::PlannerConfig pc;
    pc.radius = cfg.radius;
    pc.candidates = cfg.candidates;
    pc.iterations = cfg.samples;
    pc.goal_bias = cfg.goal_bias;
    pc.seed = seeds.plan;
    std::vector<TrialRecord> out;
    for (const auto& [name, model] : planners) {
      const auto root = model ? model->initial_state() : planner::ModelState{};
      const auto run = planner::plan_from(e, model.get(), pc, e.start, root);
      if (!cfg.tree_dir.empty()) dump_tree(cfg.tree_dir, name, i, run.tree);
      out.push_back(record_from(run.result, i, seeds.env, name));
    }
    return out;
  });

  BenchmarkReport rep;
  rep.experiment = "passage";
  rep.config = {{"seed", cfg.seed},
                {"test_seed", test_seed},
                {"rounds", cfg.rounds},
                {"samples", cfg.samples},
                {"radius", cfg.radius},
                {"candidates", cfg.candidates},
                {"goal_bias", cfg.goal_bias},
                {"map", {cfg.width, cfg.height}},
                {"narrowing", cfg.narrowing},
                {"train_map", {cfg.train_width, cfg.train_height}},
                {"train_traces", cfg.train_traces},
                {"collect_budget", cfg.collect_budget},
                {"hmm_states", cfg.hmm_states},
                {"gru_epochs", cfg.gru_epochs},
                {"planners", cfg.planners},
                {"pretrained_hmm", cfg.hmm_model != nullptr},
                {"pretrained_gru", cfg.gru_model != nullptr}};
  for (const auto& v : per_trial) rep.trials.insert(rep.trials.end(), v.begin(), v.end());
  rep.summaries = summarize(rep.trials, test_seed);
  return rep;
}

BenchmarkReport run_bugtrap(const BugtrapBenchConfig& cfg) {
  check_planners(cfg.planners, {kRrtStar, kDerrtGru});
  if (cfg.trials == 0) throw std::invalid_argument("run_bugtrap: trials must be > 0");
  if (cfg.curve_step == 0) throw std::invalid_argument("run_bugtrap: curve_step must be > 0");
  std::vector<std::pair<std::string, std::unique_ptr<planner::SteeringModel>>> planners;
  for (const auto& p : cfg.planners) {
    if (p == kRrtStar) {
      planners.emplace_back(p, nullptr);
    } else {
      auto m = cfg.gru_model ? *cfg.gru_model : train_bugtrap_gru(cfg);
      planners.emplace_back(p, std::make_unique<planner::RecurrentSteering>(std::move(m)));
    }
  }
  std::vector<std::size_t> checkpoints;
  for (std::size_t s = cfg.curve_step; s <= cfg.samples; s += cfg.curve_step) checkpoints.push_back(s);

  struct TrialOut {
    std::vector<TrialRecord> records;
    std::vector<std::vector<planner::Checkpoint>> checkpoints;
  };
  const auto per_trial = run_trials(cfg.trials, worker_count(), [&](std::size_t i) {
    const auto seeds = trial_seeds(cfg.seed, i);
    const auto e = env::gen_bugtrap(seeds.env);
    planner::PlannerConfig pc;
    pc.radius = cfg.radius;
    pc.candidates = cfg.candidates;
    pc.iterations = cfg.samples;
    pc.goal_bias = cfg.goal_bias;
    pc.seed = seeds.plan;
    pc.checkpoints = checkpoints;
    TrialOut out;
    for (const auto& [name, model] : planners) {
      const auto root = model ? model->initial_state() : planner::ModelState{};
      const auto run = planner::plan_from(e, model.get(), pc, e.start, root);
      if (!cfg.tree_dir.empty()) dump_tree(cfg.tree_dir, name, i, run.tree);
      out.records.push_back(record_from(run.result, i, seeds.env, name));
      out.checkpoints.push_back(run.result.checkpoints);
    }
    return out;
  });

  BenchmarkReport rep;
  rep.experiment = "bugtrap";
  rep.config = {{"seed", cfg.seed},
                {"trials", cfg.trials},
                {"samples", cfg.samples},
                {"curve_step", cfg.curve_step},
                {"radius", cfg.radius},
                {"candidates", cfg.candidates},
                {"goal_bias", cfg.goal_bias},
                {"train_traces", cfg.train_traces},
                {"collect_budget", cfg.collect_budget},
                {"gru_epochs", cfg.gru_epochs},
                {"planners", cfg.planners},
                {"pretrained_gru", cfg.gru_model != nullptr}};
  for (const auto& t : per_trial) rep.trials.insert(rep.trials.end(), t.records.begin(), t.records.end());
  rep.summaries = summarize(rep.trials, cfg.seed);
  for (std::size_t p = 0; p < planners.size(); ++p)
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      CurvePoint pt;
      pt.planner = planners[p].first;
      pt.samples = checkpoints[c];
      std::vector<double> lengths, fractions;
      std::size_t ok = 0;
      for (const auto& t : per_trial) {
        const auto& ck = t.checkpoints[p].at(c);
        if (ck.success) {
          ++ok;
          lengths.push_back(ck.length);
        }
        fractions.push_back(ck.proposed == 0 ? 0.0 : static_cast<double>(ck.valid) / ck.proposed);
      }
      pt.success_rate = static_cast<double>(ok) / static_cast<double>(per_trial.size());
      if (!lengths.empty()) {
        double m = 0.0;
        for (double l : lengths) m += l;
        pt.length_mean = m / static_cast<double>(lengths.size());
      }
      pt.valid_fraction_median = median(fractions);
      rep.curves.push_back(std::move(pt));
    }
  return rep;
}

BenchmarkReport run_roundabout(const RoundaboutBenchConfig& cfg) {
  check_planners(cfg.planners, {kRrtStar, kDerrtHmm, kDerrtGru, kRrtStarJoint});
  if (cfg.trials == 0) throw std::invalid_argument("run_roundabout: trials must be > 0");
  if (cfg.agent_counts.empty()) throw std::invalid_argument("run_roundabout: no agent counts");
  std::vector<std::pair<std::string, std::unique_ptr<planner::SteeringModel>>> planners;
  for (const auto& p : cfg.planners) {
    if (p == kRrtStar) {
      planners.emplace_back(p, nullptr);
    } else if (p == kDerrtHmm) {
      auto m = cfg.hmm_model ? *cfg.hmm_model : train_roundabout_hmm(cfg);
      planners.emplace_back(p, std::make_unique<planner::HmmSteering>(std::move(m), env::ObservationKind::roundabout));
    } else if (p == kDerrtGru) {
      auto m = cfg.gru_model ? *cfg.gru_model : train_roundabout_gru(cfg);
      planners.emplace_back(p, std::make_unique<planner::RecurrentSteering>(std::move(m)));
    }
  }
  const bool joint = wants(cfg.planners, kRrtStarJoint);

  auto replan_config = [&](std::uint64_t plan_seed) {
    planner::ReplanConfig rc;
    rc.planner.radius = cfg.radius;
    rc.planner.candidates = cfg.candidates;
    rc.planner.goal_bias = cfg.goal_bias;
    rc.planner.seed = plan_seed;
    rc.samples_per_step = cfg.samples_per_step;
    rc.max_steps = cfg.max_steps;
    return rc;
  };
  auto record = [](const planner::ReplanResult& r, std::size_t trial, std::uint64_t env_seed, const std::string& p,
                   int agents) {
    TrialRecord t;
    t.trial = trial;
    t.seed = env_seed;
    t.planner = p;
    t.agents = agents;
    t.success = r.success;
    t.length = r.length;
    t.proposed = r.proposed;
    t.valid = r.valid;
    t.seconds = r.plan_seconds;
    return t;
  };

  BenchmarkReport rep;
  rep.experiment = "roundabout";
  json joint_budgets = json::object();
  for (const int n : cfg.agent_counts) {
    double gru_seconds = 0.0;
    int gru_replans = 0;
    const auto per_trial = run_trials(cfg.trials, worker_count(), [&](std::size_t i) {
      const auto seeds = trial_seeds(cfg.seed, i);
      const auto e = env::gen_roundabout(seeds.env, n);
      std::vector<std::pair<TrialRecord, int>> out;
      for (const auto& [name, model] : planners) {
        auto rc = replan_config(seeds.plan);
        rc.kind = model ? planner::ReplanPlanner::model : planner::ReplanPlanner::rrt_star;
        const auto r = planner::replan_loop(e, model.get(), rc);
        out.emplace_back(record(r, i, seeds.env, name, n), r.replans);
      }
      return out;
    });
    std::vector<TrialRecord> rows;
    for (const auto& v : per_trial)
      for (const auto& [t, replans] : v) {
        rows.push_back(t);
        if (t.planner == kDerrtGru) {
          gru_seconds += t.seconds;
          gru_replans += replans;
        }
      }
    if (joint) {
      const bool matched = cfg.joint_time_matched && gru_replans > 0;
      const double budget = matched ? gru_seconds / gru_replans : 0.0;
      if (matched) joint_budgets[std::to_string(n)] = budget;
      const auto joint_rows = run_trials(cfg.trials, worker_count(), [&](std::size_t i) {
        const auto seeds = trial_seeds(cfg.seed, i);
        const auto e = env::gen_roundabout(seeds.env, n);
        auto rc = replan_config(seeds.plan);
        rc.kind = planner::ReplanPlanner::joint;
        if (matched) {
          rc.samples_per_step = std::numeric_limits<std::uint32_t>::max();
          rc.planner.time_budget_s = budget;
        }
        return record(planner::replan_loop(e, nullptr, rc), i, seeds.env, kRrtStarJoint, n);
      });
      rows.insert(rows.end(), joint_rows.begin(), joint_rows.end());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const TrialRecord& a, const TrialRecord& b) { return a.trial < b.trial; });
    rep.trials.insert(rep.trials.end(), rows.begin(), rows.end());
  }
  rep.config = {{"seed", cfg.seed},
                {"trials", cfg.trials},
                {"agent_counts", cfg.agent_counts},
                {"samples_per_step", cfg.samples_per_step},
                {"max_steps", cfg.max_steps},
                {"radius", cfg.radius},
                {"candidates", cfg.candidates},
                {"goal_bias", cfg.goal_bias},
                {"train_agents", cfg.train_agents},
                {"train_traces", cfg.train_traces},
                {"gru_epochs", cfg.gru_epochs},
                {"planners", cfg.planners},
                {"joint_time_matched", cfg.joint_time_matched},
                {"pretrained_hmm", cfg.hmm_model != nullptr},
                {"pretrained_gru", cfg.gru_model != nullptr}};
  rep.summaries = summarize(rep.trials, cfg.seed);
  rep.timing["joint_time_budget_s"] = joint_budgets;
  return rep;
}

}  // namespace derrt::bench
