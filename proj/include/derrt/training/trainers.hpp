#pragma once

#include <cstdint>
#include <vector>

#include "derrt/hmm/hmm.hpp"
#include "derrt/neural/recurrent_model.hpp"
#include "derrt/training/traces.hpp"

namespace derrt::training {

struct HmmTrainOptions {
  std::size_t states = 3;
  std::uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-6;
  /// Std floor of the step-offset emission, as a fraction of the steering radius.
  double offset_std_frac = 0.5;
};

struct HmmTrainResult {
  hmm::HmmModel model;
  std::vector<double> log_likelihood;
  std::size_t sequences_used = 0;
};

/// Emission features [x_next - mu ; env features at x_next] per trace.
std::vector<hmm::Sequence> hmm_sequences(const TraceDataset& ds);

/// EM on every trace of length >= 2. Throws if the dataset has no HMM
/// features or no usable trace.
HmmTrainResult train_hmm(const TraceDataset& ds, const HmmTrainOptions& opt);

/// Default architecture for an observation kind.
neural::ArchConfig default_arch(env::ObservationKind kind, double radius);

struct GradientCheckReport {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t kinks = 0;  ///< entries where one-sided differences disagree (non-smooth point)
  double max_rel_err = 0.0;
  bool ok() const { return passed + kinks == checked; }
};

/// Relative error used by the gradient checks: |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-5;
double gradient_rel_err(double analytic, double numeric);

/// Central differences with step h on `samples` random parameter entries
/// (every parameter tensor gets at least one when samples allows).
GradientCheckReport gradient_check(const neural::RecurrentSteeringModel& model, const neural::Sequence& seq,
                                   double h, double tol, std::size_t samples, std::uint64_t seed);

struct RecurrentTrainOptions {
  double lr = 1e-3;
  double momentum = 0.9;
  int epochs = 20;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;        ///< global gradient-norm clip per update; 0 disables
  std::size_t gate_samples = 24;  ///< 0 skips the gradient-check gate
};

struct RecurrentTrainResult {
  neural::RecurrentSteeringModel model;
  std::vector<double> epoch_loss;  ///< mean per-step NLL over each epoch
  GradientCheckReport gate;
};

/// Momentum SGD, one trace per update, shuffled per epoch. Throws
/// std::runtime_error on a failed gradient gate or a non-finite loss.
RecurrentTrainResult train_recurrent(const TraceDataset& ds, const neural::ArchConfig& arch,
                                     const RecurrentTrainOptions& opt);

/// Mean per-step NLL of the model over the dataset.
double mean_step_nll(const neural::RecurrentSteeringModel& model, const TraceDataset& ds);

}  // namespace derrt::training
