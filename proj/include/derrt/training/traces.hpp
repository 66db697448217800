#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "derrt/env/environment.hpp"
#include "derrt/env/generators.hpp"
#include "derrt/env/observations.hpp"
#include "derrt/neural/recurrent_model.hpp"
#include "derrt/numerics/rng.hpp"

namespace derrt::training {

using TraceStep = neural::SequenceStep;

struct Trace {
  std::uint64_t env_seed = 0;
  neural::Sequence sequence;
  /// HMM environment features at each step's x_next (empty for the bug trap).
  std::vector<std::vector<double>> next_features;

  friend bool operator==(const Trace&, const Trace&) = default;
};

struct FeatureSchema {
  env::ObservationKind kind = env::ObservationKind::passage;
  std::size_t observation_dim = 0;
  std::size_t agent_dim = 0;
  std::size_t hmm_feature_dim = 0;  ///< 0 when HMM features are undefined
  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

/// Where each step's mu comes from. `executed`: mu = x_next, the baseline's own
/// steering target. `sampled`: the baseline step from x_prev toward a fresh
/// uniform free sample, as the planner would see it at test time.
enum class MuSource { executed, sampled };

std::string to_string(MuSource m);
MuSource mu_source_from_string(const std::string& s);

struct TraceDataset {
  FeatureSchema schema;
  MuSource mu = MuSource::executed;
  std::string generator;
  double radius = 0.0;
  std::vector<Trace> traces;

  /// Throws std::invalid_argument if any trace disagrees with the schema.
  void validate() const;
  friend bool operator==(const TraceDataset&, const TraceDataset&) = default;
};

FeatureSchema schema_for(env::ObservationKind kind);

// JSONL: a header object, then one trace per line. Bug-trap patches are
// written as run lengths.
void write_dataset(std::ostream& out, const TraceDataset& ds);
TraceDataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const TraceDataset& ds);
TraceDataset load_dataset(const std::filesystem::path& path);

struct CollectOptions {
  env::ObservationKind kind = env::ObservationKind::passage;
  std::size_t n_envs = 50;
  std::size_t runs_per_env = 1;
  std::size_t budget = 3000;          ///< planner iterations (per re-plan for roundabouts)
  double radius = 10.0;
  double goal_bias = 0.05;
  std::uint64_t seed = 0;
  int passage_width = 300;
  int passage_height = 300;
  env::PassageOptions passage;
  int agents = 2;
  int max_steps = 300;                ///< roundabout time limit
  /// Stop once this many traces are collected (0 = no limit).
  std::size_t max_traces = 0;
  MuSource mu = MuSource::executed;
};

/// Runs baseline RRT* on generated environments and records successful
/// solution paths with mu chosen by opt.mu. Throws std::runtime_error if no
/// run succeeds.
TraceDataset collect_traces(const CollectOptions& opt);

/// Step record for a path through env; times holds each position's time step
/// (empty means all 0). rng and radius are used only for MuSource::sampled.
Trace make_trace(const env::Environment& env, env::ObservationKind kind, const std::vector<env::Configuration>& path,
                 const std::vector<int>& times, MuSource mu, double radius, num::RngStream& rng);

}  // namespace derrt::training
