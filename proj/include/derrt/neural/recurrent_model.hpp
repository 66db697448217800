#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "derrt/env/configuration.hpp"
#include "derrt/numerics/autodiff.hpp"
#include "derrt/numerics/gaussian.hpp"
#include "derrt/numerics/param_file.hpp"

namespace derrt::neural {

namespace ad = num::ad;

enum class EncoderKind { features, conv };

/// Architecture hyperparameters; recorded in the parameter-file manifest.
struct ArchConfig {
  EncoderKind encoder = EncoderKind::features;
  std::size_t obs_dim = 4;        ///< local observation width (conv: patch_size^2)
  std::size_t patch_size = 21;    ///< conv encoder input side
  std::size_t conv1_channels = 32;
  std::size_t conv2_channels = 64;
  std::size_t embed_dim = 16;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t agent_dim = 0;      ///< 0 disables per-agent proposal heads
  std::size_t agent_hidden = 16;
  double radius = 10.0;           ///< steering radius r; proposals are scaled by it
  double sigma_rrt = 5.0;         ///< std of the N(mu, sigma) mixture component
  /// Weight of the N(mu, sigma) component; negative means uniform over all
  /// components. The learned components share the remainder equally.
  double rrt_weight = -1.0;
  std::string observation = "passage";

  std::size_t gru_input_dim() const { return 4 + embed_dim; }
  /// Length of the flattened conv code (576 for the 21x21 default).
  std::size_t conv_code_dim() const;
  void validate() const;
};

nlohmann::json to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

/// Concatenated per-layer hidden vectors.
struct RecurrentState {
  std::vector<double> hidden;
  friend bool operator==(const RecurrentState&, const RecurrentState&) = default;
};

struct ProposalVar {
  ad::Var mean;
  ad::Var stddev;
};

/// Inputs to one recurrent step: the step starts at x_prev with target mu.
struct StepInput {
  env::Configuration x_prev;
  env::Configuration mu;
  std::vector<double> embedding;  ///< output of encode()
  std::vector<std::vector<double>> agents;
  double world_width = 1.0;
  double world_height = 1.0;
};

struct StepOutput {
  RecurrentState state;
  /// Local proposal first, then one per agent; all over displacement from x_prev.
  std::vector<num::DiagonalGaussian> proposals;
};

/// One supervised step of a trace.
struct SequenceStep {
  env::Configuration x_prev;
  env::Configuration x_next;
  env::Configuration mu;
  std::vector<double> observation;  ///< local observation at x_prev
  std::vector<std::vector<double>> agents;
  int t = 0;

  friend bool operator==(const SequenceStep&, const SequenceStep&) = default;
};

struct Sequence {
  double world_width = 1.0;
  double world_height = 1.0;
  std::vector<SequenceStep> steps;

  friend bool operator==(const Sequence&, const Sequence&) = default;
};

/// Encoder -> stacked GRU -> Gaussian proposal head(s).
class RecurrentSteeringModel {
 public:
  RecurrentSteeringModel(ArchConfig arch, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  const std::vector<ad::Var>& parameters() const { return params_; }
  const ad::Var& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  // Differentiable pieces, shared by training and inference.
  ad::Var encode_var(std::span<const double> observation) const;
  ad::Var gru_input_var(const env::Configuration& x_prev, const env::Configuration& mu, const ad::Var& embedding,
                        double world_width, double world_height) const;
  /// Returns the per-layer hidden vectors after one step.
  std::vector<ad::Var> gru_step_var(const std::vector<ad::Var>& hidden, const ad::Var& input) const;
  ProposalVar local_proposal_var(const ad::Var& top) const;
  ProposalVar agent_proposal_var(const ad::Var& top, std::span<const double> agent) const;

  /// Mixture weights for n agents: learned components first, RRT* last.
  std::vector<double> mixture_weights(std::size_t n_agents) const;

  RecurrentState initial_state() const;
  std::vector<double> encode(std::span<const double> observation) const;
  StepOutput step(const RecurrentState& state, const StepInput& input) const;

  num::ParamFile to_param_file() const;
  static RecurrentSteeringModel from_param_file(const num::ParamFile& file);

 private:
  void add_param(const std::string& name, num::Shape shape, double bound, std::uint64_t seed, double bias = 0.0);
  ad::Var p(const std::string& name) const { return parameter(name); }

  ArchConfig arch_;
  std::vector<std::string> names_;
  std::vector<ad::Var> params_;
};

/// log[ sum_i w_i N(x_next - x_nearest; proposal_i) + w_rrt N(x_next; mu, sigma_rrt) ].
/// `weights` has proposals.size() + 1 entries, the last being w_rrt; zero
/// weights drop their component. Throws on an empty proposal list.
double mixture_score(std::span<const num::DiagonalGaussian> proposals, std::span<const double> weights,
                     const env::Configuration& mu, double sigma_rrt, const env::Configuration& x_next,
                     const env::Configuration& x_nearest);

ad::Var mixture_score_var(const std::vector<ProposalVar>& proposals, std::span<const double> weights,
                          const env::Configuration& mu, double sigma_rrt, const env::Configuration& x_next,
                          const env::Configuration& x_nearest);

/// Negative sum of mixture scores along the sequence, differentiable in every
/// model parameter. Throws on an empty sequence.
ad::Var nll_loss(const RecurrentSteeringModel& model, const Sequence& sequence);

/// Proposal mean shortened to length <= r.
env::Configuration clipped_mean(const num::DiagonalGaussian& proposal, double r);

}  // namespace derrt::neural
