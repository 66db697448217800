#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "derrt/env/configuration.hpp"
#include "derrt/numerics/gaussian.hpp"
#include "derrt/numerics/param_file.hpp"

namespace derrt::hmm {

/// Discrete-state HMM with diagonal-Gaussian emissions over F features.
struct HmmModel {
  std::size_t states = 0;    ///< K
  std::size_t features = 0;  ///< F
  std::vector<double> log_pi;  ///< [K]
  std::vector<double> log_a;   ///< [K*K], row = from-state
  std::vector<num::DiagonalGaussian> emissions;

  double log_transition(std::size_t from, std::size_t to) const { return log_a[from * states + to]; }
  /// Throws std::invalid_argument if any invariant is violated.
  void validate() const;
  double emission_logpdf(std::size_t state, std::span<const double> feature) const;
};

/// Last column of the forward lattice, normalized, plus the prefix
/// log-likelihood it was normalized by.
struct ForwardState {
  std::vector<double> log_alpha;
  double log_likelihood_prefix = 0.0;
  std::size_t length = 0;  ///< emissions consumed so far

  friend bool operator==(const ForwardState&, const ForwardState&) = default;
};

/// [x_next - mu ; env_features]. x_nearest is accepted for interface symmetry
/// with the other steering scorers and does not enter the feature.
std::vector<double> emission_feature(const env::Configuration& x_nearest, const env::Configuration& x_next,
                                     const env::Configuration& mu, std::span<const double> env_features);

ForwardState forward_init(const HmmModel& model);

/// Log-probabilities of the hidden state at the next emission given `state`.
std::vector<double> predict(const HmmModel& model, const ForwardState& state);

struct ForwardStep {
  ForwardState state;
  double delta_loglik;  ///< log P(feature | everything before it)
};

ForwardStep forward_step(const HmmModel& model, const ForwardState& state, std::span<const double> feature);
/// forward_step with a precomputed prediction (shared across candidates).
ForwardStep forward_step_predicted(const HmmModel& model, const ForwardState& state,
                                   std::span<const double> predicted, std::span<const double> feature);

/// delta_loglik of forward_step for the candidate move; `state` is untouched.
double score_candidate(const HmmModel& model, const ForwardState& state, const env::Configuration& x_nearest,
                       const env::Configuration& x_next, const env::Configuration& mu,
                       std::span<const double> env_features);

using Sequence = std::vector<std::vector<double>>;

double sequence_log_likelihood(const HmmModel& model, const Sequence& seq);

struct EmOptions {
  std::size_t states = 3;
  std::uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-6;
  double variance_floor = 1e-4;
  /// Per-feature variance floors, raised to variance_floor; empty means uniform.
  std::vector<double> feature_variance_floor;

  double floor_for(std::size_t d) const {
    return d < feature_variance_floor.size() ? std::max(variance_floor, feature_variance_floor[d]) : variance_floor;
  }
  int kmeans_iters = 25;
};

struct EmResult {
  HmmModel model;
  /// Total log-likelihood of the data under the model entering each iteration.
  std::vector<double> log_likelihood;
  /// M-steps applied.
  int iterations = 0;
};

/// Baum-Welch with Gaussian M-step, initialized from seeded k-means.
/// Requires >= 1 sequence, each of length >= 2, all of one feature width.
EmResult em_fit(const std::vector<Sequence>& sequences, const EmOptions& options);

/// Model with the given shape and k-means initialization but no EM updates.
HmmModel em_initial_model(const std::vector<Sequence>& sequences, const EmOptions& options);

num::ParamFile to_param_file(const HmmModel& model, const std::string& observation_kind);
HmmModel from_param_file(const num::ParamFile& file);

}  // namespace derrt::hmm
