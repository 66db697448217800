#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derrt/bench/experiments.hpp"
#include "derrt/bench/heatmap.hpp"
#include "derrt/env/env_io.hpp"
#include "derrt/env/generators.hpp"
#include "derrt/env/observations.hpp"
#include "derrt/numerics/param_file.hpp"
#include "derrt/planner/planner.hpp"
#include "derrt/training/traces.hpp"
#include "derrt/training/trainers.hpp"

using namespace derrt;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPlanFailed = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::uint64_t seed = 0;
  bool json_out = false;
  bool timing = false;
};

double default_radius(env::ObservationKind kind) { return kind == env::ObservationKind::passage ? 10.0 : 5.0; }

env::ObservationKind kind_of(const env::Environment& e) { return env::observation_kind_from_string(e.generator); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void emit_json(const json& j, const std::string& out_path) {
  const std::string text = j.dump(2) + "\n";
  if (!out_path.empty()) write_text(out_path, text);
  std::cout << text;
}

json replan_json(const planner::ReplanResult& r, bool timing) {
  json traj = json::array();
  for (const auto& p : r.trajectory) traj.push_back({p[0], p[1]});
  json j = {{"success", r.success},   {"collision", r.collision}, {"timeout", r.timeout},
            {"trajectory", traj},     {"length", r.length},       {"proposed", r.proposed},
            {"valid", r.valid},       {"replans", r.replans}};
  if (timing) j["plan_seconds"] = r.plan_seconds;
  return j;
}

void print_summaries(const bench::BenchmarkReport& rep) {
  std::fprintf(stderr, "%-16s %6s %7s %9s %9s %10s %10s\n", "planner", "agents", "trials", "success", "std", "length",
               "valid");
  for (const auto& s : rep.summaries)
    std::fprintf(stderr, "%-16s %6d %7zu %9.4f %9.4f %10s %10.4f\n", s.planner.c_str(), s.agents, s.trials,
                 s.success_rate, s.success_std, s.length_mean ? std::to_string(*s.length_mean).c_str() : "-",
                 s.valid_fraction_median);
}

template <class Model>
std::shared_ptr<const Model> load_typed(const std::string& path) {
  if (path.empty()) return nullptr;
  auto loaded = bench::load_model(path);
  if constexpr (std::is_same_v<Model, hmm::HmmModel>) {
    auto* h = std::get_if<bench::LoadedHmm>(&loaded);
    if (!h) throw std::invalid_argument(path + " does not hold an HMM");
    return std::make_shared<const hmm::HmmModel>(std::move(h->model));
  } else {
    auto* m = std::get_if<neural::RecurrentSteeringModel>(&loaded);
    if (!m) throw std::invalid_argument(path + " does not hold a recurrent model");
    return std::make_shared<const Model>(std::move(*m));
  }
}

void add_common(CLI::App* sub, Globals& g) {
  sub->add_option("--seed", g.seed, "Seed for all randomness");
  sub->add_flag("--json", g.json_out, "Machine-readable JSON on stdout");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeRRT*: RRT* with learned, co-evolving steering models"};
  app.require_subcommand(1);
  Globals g;
  int status = kExitOk;

  // env gen
  auto* env_cmd = app.add_subcommand("env", "Environment tools");
  env_cmd->require_subcommand(1);
  auto* env_gen = env_cmd->add_subcommand("gen", "Generate an environment");
  std::string gen_kind, gen_out;
  int gen_agents = 2, gen_width = 600, gen_height = 300;
  double gen_narrowing = 0.3;
  add_common(env_gen, g);
  env_gen->add_option("--kind", gen_kind, "passage | bugtrap | roundabout")
      ->required()
      ->check(CLI::IsMember({"passage", "bugtrap", "roundabout"}));
  env_gen->add_option("--agents", gen_agents, "Roundabout agent count")->check(CLI::Range(1, 8));
  env_gen->add_option("--width", gen_width, "Passage map width")->check(CLI::Range(50, 100000));
  env_gen->add_option("--height", gen_height, "Passage map height")->check(CLI::Range(50, 100000));
  env_gen->add_option("--narrowing", gen_narrowing, "Passage thickness multiplier")->check(CLI::Range(0.0, 10.0));
  env_gen->add_option("-o,--output", gen_out, "Output JSON file")->required();
  env_gen->callback([&] {
    env::Environment e;
    if (gen_kind == "passage") {
      env::PassageOptions po;
      po.narrowing = gen_narrowing;
      e = env::gen_narrow_passage(g.seed, gen_width, gen_height, po);
    } else if (gen_kind == "bugtrap") {
      e = env::gen_bugtrap(g.seed);
    } else {
      e = env::gen_roundabout(g.seed, gen_agents);
    }
    env::save_environment(gen_out, e);
    if (g.json_out) std::cout << json{{"output", gen_out}, {"generator", e.generator}, {"seed", e.seed}}.dump() << "\n";
  });

  // collect
  auto* collect = app.add_subcommand("collect", "Harvest successful baseline RRT* plans as traces");
  add_common(collect, g);
  training::CollectOptions co;
  std::string co_kind, co_mu = "executed", co_out;
  std::optional<double> co_radius;
  collect->add_option("--kind", co_kind, "passage | bugtrap | roundabout")
      ->required()
      ->check(CLI::IsMember({"passage", "bugtrap", "roundabout"}));
  collect->add_option("--envs", co.n_envs, "Environments to generate")->check(CLI::PositiveNumber);
  collect->add_option("--runs", co.runs_per_env, "Planner runs per environment")->check(CLI::PositiveNumber);
  collect->add_option("--budget", co.budget, "Planner iterations (per re-plan for roundabouts)")->check(CLI::PositiveNumber);
  collect->add_option("--radius", co_radius, "Steering radius")->check(CLI::PositiveNumber);
  collect->add_option("--goal-bias", co.goal_bias, "Goal sampling probability")->check(CLI::Range(0.0, 1.0));
  collect->add_option("--agents", co.agents, "Roundabout agent count")->check(CLI::Range(1, 8));
  collect->add_option("--max-traces", co.max_traces, "Keep at most this many traces (0 = all)");
  collect->add_option("--mu", co_mu, "Step target source: executed | sampled")
      ->check(CLI::IsMember({"executed", "sampled"}));
  collect->add_option("-o,--output", co_out, "Output JSONL file")->required();
  collect->callback([&] {
    co.kind = env::observation_kind_from_string(co_kind);
    co.radius = co_radius.value_or(default_radius(co.kind));
    co.seed = g.seed;
    co.mu = training::mu_source_from_string(co_mu);
    const auto ds = training::collect_traces(co);
    training::save_dataset(co_out, ds);
    std::size_t steps = 0;
    for (const auto& t : ds.traces) steps += t.sequence.steps.size();
    if (g.json_out)
      std::cout << json{{"output", co_out}, {"traces", ds.traces.size()}, {"steps", steps}}.dump() << "\n";
    else
      std::cout << "wrote " << ds.traces.size() << " traces (" << steps << " steps) to " << co_out << "\n";
  });

  // train-hmm
  auto* train_hmm = app.add_subcommand("train-hmm", "Fit a Gaussian-emission HMM with EM");
  add_common(train_hmm, g);
  std::string th_traces, th_out;
  training::HmmTrainOptions ho;
  train_hmm->add_option("--traces", th_traces, "Trace dataset (JSONL)")->required()->check(CLI::ExistingFile);
  train_hmm->add_option("--states", ho.states, "Hidden states")->check(CLI::Range(1, 64));
  train_hmm->add_option("--max-iters", ho.max_iters, "EM iteration cap")->check(CLI::PositiveNumber);
  train_hmm->add_option("--tol", ho.tol, "Stop when the log-likelihood gain falls below this");
  train_hmm->add_option("-o,--output", th_out, "Output parameter file")->required();
  train_hmm->callback([&] {
    const auto ds = training::load_dataset(th_traces);
    ho.seed = g.seed;
    const auto r = training::train_hmm(ds, ho);
    num::write_params(th_out, hmm::to_param_file(r.model, env::to_string(ds.schema.kind)));
    if (g.json_out)
      std::cout << json{{"output", th_out}, {"log_likelihood", r.log_likelihood}, {"sequences", r.sequences_used}}.dump()
                << "\n";
    else
      std::cout << "EM: " << r.log_likelihood.size() << " iterations, final log-likelihood " << r.log_likelihood.back()
                << "\n";
  });

  // train-gru
  auto* train_gru = app.add_subcommand("train-gru", "Train the recurrent steering model");
  add_common(train_gru, g);
  std::string tg_traces, tg_out;
  training::RecurrentTrainOptions ro;
  train_gru->add_option("--traces", tg_traces, "Trace dataset (JSONL)")->required()->check(CLI::ExistingFile);
  train_gru->add_option("--epochs", ro.epochs, "Passes over the dataset")->check(CLI::PositiveNumber);
  train_gru->add_option("--lr", ro.lr, "Learning rate")->check(CLI::PositiveNumber);
  train_gru->add_option("--momentum", ro.momentum, "SGD momentum")->check(CLI::Range(0.0, 1.0));
  train_gru->add_option("--clip", ro.clip_norm, "Gradient-norm clip (0 disables)");
  train_gru->add_option("--gate-samples", ro.gate_samples, "Entries in the pre-training gradient check (0 skips)");
  train_gru->add_option("-o,--output", tg_out, "Output parameter file")->required();
  train_gru->callback([&] {
    const auto ds = training::load_dataset(tg_traces);
    ro.seed = g.seed;
    const auto r = training::train_recurrent(ds, training::default_arch(ds.schema.kind, ds.radius), ro);
    num::write_params(tg_out, r.model.to_param_file());
    if (g.json_out)
      std::cout << json{{"output", tg_out}, {"epoch_loss", r.epoch_loss}, {"gate_checked", r.gate.checked}}.dump() << "\n";
    else
      std::cout << "trained " << r.epoch_loss.size() << " epochs, final mean step NLL " << r.epoch_loss.back() << "\n";
  });

  // plan
  auto* plan = app.add_subcommand("plan", "Plan once on an environment file");
  add_common(plan, g);
  std::string pl_env, pl_model, pl_tree, pl_out;
  std::optional<double> pl_radius;
  planner::PlannerConfig pc;
  bool pl_replan = false, pl_joint = false;
  std::size_t pl_per_step = 100;
  int pl_max_steps = 300;
  plan->add_option("--env", pl_env, "Environment JSON")->required()->check(CLI::ExistingFile);
  plan->add_option("--model", pl_model, "Steering model parameter file (omit for RRT*)")->check(CLI::ExistingFile);
  plan->add_option("--samples", pc.iterations, "Planner iterations")->check(CLI::PositiveNumber);
  plan->add_option("--radius", pl_radius, "Steering radius")->check(CLI::PositiveNumber);
  plan->add_option("--candidates", pc.candidates, "Candidates per steering step")->check(CLI::PositiveNumber);
  plan->add_option("--goal-bias", pc.goal_bias, "Goal sampling probability")->check(CLI::Range(0.0, 1.0));
  plan->add_flag("--replan", pl_replan, "Re-plan every time step among moving agents");
  plan->add_flag("--joint", pl_joint, "With --replan: plan jointly over robot and agent positions");
  plan->add_option("--per-step", pl_per_step, "Iterations per re-plan")->check(CLI::PositiveNumber);
  plan->add_option("--max-steps", pl_max_steps, "Re-planning time limit")->check(CLI::PositiveNumber);
  plan->add_option("--tree", pl_tree, "Write the search tree as JSONL");
  plan->add_flag("--timing", g.timing, "Include wall time in the output");
  plan->add_option("-o,--output", pl_out, "Also write the JSON result here");
  plan->callback([&] {
    const auto e = env::load_environment(pl_env);
    pc.radius = pl_radius.value_or(default_radius(kind_of(e)));
    pc.seed = g.seed;
    std::unique_ptr<planner::SteeringModel> model;
    if (!pl_model.empty()) model = bench::make_steering(bench::load_model(pl_model));
    if (pl_joint && !pl_replan) throw CLI::ValidationError("--joint", "requires --replan");
    if (pl_joint && model) throw CLI::ValidationError("--joint", "cannot be combined with --model");
    if (pl_replan) {
      planner::ReplanConfig rc;
      rc.planner = pc;
      rc.samples_per_step = pl_per_step;
      rc.max_steps = pl_max_steps;
      rc.kind = pl_joint ? planner::ReplanPlanner::joint
                         : (model ? planner::ReplanPlanner::model : planner::ReplanPlanner::rrt_star);
      const auto r = planner::replan_loop(e, model.get(), rc);
      const auto j = replan_json(r, g.timing);
      if (g.json_out || !pl_out.empty()) emit_json(j, pl_out);
      if (!g.json_out)
        std::cerr << (r.success ? "reached goal" : "failed") << ", length " << r.length << ", " << r.replans
                  << " re-plans\n";
      if (!r.success) status = kExitPlanFailed;
      return;
    }
    const auto root = model ? model->initial_state() : planner::ModelState{};
    const auto out = planner::plan_from(e, model.get(), pc, e.start, root);
    if (!pl_tree.empty()) {
      std::ofstream t(pl_tree);
      if (!t) throw std::runtime_error("cannot write " + pl_tree);
      planner::write_tree_jsonl(t, out.tree);
    }
    auto j = planner::to_json(out.result);
    if (g.timing) j["seconds"] = out.result.seconds;
    if (g.json_out || !pl_out.empty()) emit_json(j, pl_out);
    if (!g.json_out)
      std::cerr << (out.result.success ? "found path" : "no path") << ", length " << out.result.length << ", valid "
                << out.result.valid << "/" << out.result.proposed << "\n";
    if (!out.result.success) status = kExitPlanFailed;
  });

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Reproduce an experiment suite");
  bench_cmd->require_subcommand(1);
  std::string b_out, b_hmm, b_gru, b_trees, b_curves;
  std::vector<std::string> b_planners;

  bench::PassageBenchConfig bp;
  auto* bench_passage = bench_cmd->add_subcommand("passage", "Narrow passage success rates");
  add_common(bench_passage, g);
  bench_passage->add_option("--rounds", bp.rounds, "Test maps")->check(CLI::PositiveNumber);
  bench_passage->add_option("--test-seed", bp.test_seed, "Seed for the test maps (default: --seed)");
  bench_passage->add_option("--samples", bp.samples, "Planner iterations per round")->check(CLI::PositiveNumber);
  bench_passage->add_option("--narrowing", bp.narrowing, "Test thickness multiplier")->check(CLI::Range(0.0, 10.0));
  bench_passage->add_option("--train-traces", bp.train_traces, "Traces for in-run training")->check(CLI::PositiveNumber);
  bench_passage->add_option("--epochs", bp.gru_epochs, "GRU epochs for in-run training")->check(CLI::PositiveNumber);

  bench::BugtrapBenchConfig bb;
  auto* bench_bug = bench_cmd->add_subcommand("bugtrap", "Bug trap valid-move proportion and curves");
  add_common(bench_bug, g);
  bench_bug->add_option("--trials", bb.trials, "Test environments")->check(CLI::PositiveNumber);
  bench_bug->add_option("--samples", bb.samples, "Planner iterations per trial")->check(CLI::PositiveNumber);
  bench_bug->add_option("--curve-step", bb.curve_step, "Curve resolution in samples")->check(CLI::PositiveNumber);
  bench_bug->add_option("--train-traces", bb.train_traces, "Traces for in-run training")->check(CLI::PositiveNumber);
  bench_bug->add_option("--epochs", bb.gru_epochs, "GRU epochs for in-run training")->check(CLI::PositiveNumber);
  bench_bug->add_option("--curves", b_curves, "Write curves as CSV");

  bench::RoundaboutBenchConfig br;
  auto* bench_round = bench_cmd->add_subcommand("roundabout", "Roundabout success rates and path lengths");
  add_common(bench_round, g);
  bench_round->add_option("--trials", br.trials, "Trials per agent count")->check(CLI::PositiveNumber);
  bench_round->add_option("--agents", br.agent_counts, "Agent counts")->check(CLI::Range(1, 8));
  bench_round->add_option("--per-step", br.samples_per_step, "Iterations per re-plan")->check(CLI::PositiveNumber);
  bench_round->add_option("--train-traces", br.train_traces, "Traces for in-run training")->check(CLI::PositiveNumber);
  bench_round->add_option("--epochs", br.gru_epochs, "GRU epochs for in-run training")->check(CLI::PositiveNumber);

  for (auto* sub : {bench_passage, bench_bug, bench_round}) {
    sub->add_option("--planners", b_planners, "Planner rows: rrt_star derrt_hmm derrt_gru rrt_star_joint");
    sub->add_option("--hmm", b_hmm, "Pre-trained HMM parameter file")->check(CLI::ExistingFile);
    sub->add_option("--gru", b_gru, "Pre-trained recurrent parameter file")->check(CLI::ExistingFile);
    sub->add_flag("--timing", g.timing, "Include wall times in the report");
    sub->add_option("-o,--output", b_out, "Also write the JSON report here");
  }
  for (auto* sub : {bench_passage, bench_bug}) sub->add_option("--trees", b_trees, "Write every search tree to this directory");

  bench_passage->callback([&] {
    bp.seed = g.seed;
    if (!b_planners.empty()) bp.planners = b_planners;
    bp.hmm_model = load_typed<hmm::HmmModel>(b_hmm);
    bp.gru_model = load_typed<neural::RecurrentSteeringModel>(b_gru);
    bp.tree_dir = b_trees;
    const auto rep = bench::run_passage(bp);
    print_summaries(rep);
    emit_json(bench::to_json(rep, g.timing), b_out);
  });
  bench_bug->callback([&] {
    bb.seed = g.seed;
    if (!b_planners.empty()) bb.planners = b_planners;
    if (!b_hmm.empty()) throw CLI::ValidationError("--hmm", "the bug trap has no HMM features");
    bb.gru_model = load_typed<neural::RecurrentSteeringModel>(b_gru);
    bb.tree_dir = b_trees;
    const auto rep = bench::run_bugtrap(bb);
    print_summaries(rep);
    if (!b_curves.empty()) write_text(b_curves, bench::curves_csv(rep.curves));
    emit_json(bench::to_json(rep, g.timing), b_out);
  });
  bench_round->callback([&] {
    br.seed = g.seed;
    if (!b_planners.empty()) br.planners = b_planners;
    br.hmm_model = load_typed<hmm::HmmModel>(b_hmm);
    br.gru_model = load_typed<neural::RecurrentSteeringModel>(b_gru);
    const auto rep = bench::run_roundabout(br);
    print_summaries(rep);
    emit_json(bench::to_json(rep, g.timing), b_out);
  });

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "Render tree visit counts as a PGM image");
  add_common(heat, g);
  std::vector<std::string> hm_trees;
  std::string hm_env, hm_out;
  std::optional<double> hm_anchor;
  heat->add_option("--trees", hm_trees, "Tree dumps (JSONL)")->required()->check(CLI::ExistingFile);
  heat->add_option("--env", hm_env, "Environment JSON giving the map size")->required()->check(CLI::ExistingFile);
  heat->add_option("--anchor", hm_anchor, "Sample fraction drawn pure black")->check(CLI::PositiveNumber);
  heat->add_option("-o,--output", hm_out, "Output PGM")->required();
  heat->callback([&] {
    const auto e = env::load_environment(hm_env);
    bench::HeatmapGrid grid(e.map.width, e.map.height);
    for (const auto& path : hm_trees) {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot read " + path);
      bench::accumulate_tree_jsonl(grid, in);
    }
    const double anchor = hm_anchor.value_or(kind_of(e) == env::ObservationKind::bugtrap ? bench::kBugtrapHeatAnchor
                                                                                         : bench::kPassageHeatAnchor);
    std::ofstream out(hm_out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + hm_out);
    bench::write_pgm(out, grid, anchor);
    if (g.json_out) std::cout << json{{"output", hm_out}, {"nodes", grid.total()}, {"anchor", anchor}}.dump() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return status;
}
