#include "derrt/training/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "derrt/env/features.hpp"
#include "derrt/numerics/sgd.hpp"

namespace derrt::training {

namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546;  // "SHUF"
constexpr std::uint64_t kGateStream = 0x47415445;     // "GATE"

double loss_value(const neural::RecurrentSteeringModel& model, const neural::Sequence& seq) {
  num::ad::NoGradGuard guard;
  return neural::nll_loss(model, seq).item();
}

}  // namespace

std::vector<hmm::Sequence> hmm_sequences(const TraceDataset& ds) {
  if (ds.schema.hmm_feature_dim == 0)
    throw std::invalid_argument("dataset of kind " + env::to_string(ds.schema.kind) + " has no HMM features");
  std::vector<hmm::Sequence> out;
  for (const auto& tr : ds.traces) {
    if (tr.sequence.steps.size() < 2) continue;
    hmm::Sequence seq;
    for (std::size_t k = 0; k < tr.sequence.steps.size(); ++k) {
      const auto& s = tr.sequence.steps[k];
      seq.push_back(hmm::emission_feature(s.x_prev, s.x_next, s.mu, tr.next_features[k]));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

HmmTrainResult train_hmm(const TraceDataset& ds, const HmmTrainOptions& opt) {
  ds.validate();
  const auto seqs = hmm_sequences(ds);
  if (seqs.empty()) throw std::invalid_argument("train_hmm: no trace has 2 or more steps");
  hmm::EmOptions em;
  em.states = opt.states;
  em.seed = opt.seed;
  em.max_iters = opt.max_iters;
  em.tol = opt.tol;
  const double offset_std = opt.offset_std_frac * ds.radius;
  em.feature_variance_floor.assign(seqs.front().front().size(), 0.0);
  for (std::size_t d = 0; d < 2; ++d) em.feature_variance_floor[d] = offset_std * offset_std;
  auto fit = hmm::em_fit(seqs, em);
  return HmmTrainResult{std::move(fit.model), std::move(fit.log_likelihood), seqs.size()};
}

neural::ArchConfig default_arch(env::ObservationKind kind, double radius) {
  neural::ArchConfig a;
  a.observation = env::to_string(kind);
  a.radius = radius;
  a.sigma_rrt = radius / 2.0;
  a.obs_dim = env::local_observation_dim(kind);
  if (kind == env::ObservationKind::bugtrap) {
    a.encoder = neural::EncoderKind::conv;
    a.patch_size = static_cast<std::size_t>(env::kPatchSize);
  }
  if (kind == env::ObservationKind::roundabout) a.agent_dim = env::kAgentFeatureDim;
  return a;
}

double gradient_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

GradientCheckReport gradient_check(const neural::RecurrentSteeringModel& model, const neural::Sequence& seq,
                                   double h, double tol, std::size_t samples, std::uint64_t seed) {
  GradientCheckReport rep;
  const auto& params = model.parameters();
  for (auto v : params) v.zero_grad();
  const num::ad::Var loss = neural::nll_loss(model, seq);
  const double f0 = loss.item();
  num::ad::backward(loss);
  num::RngStream rng(seed, kGateStream);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t pi = s < params.size() ? s : rng.uniform_int(params.size());
    num::ad::Var p = params[pi];
    const std::size_t j = rng.uniform_int(p.size());
    const double analytic = p.grad()[j];
    const double orig = p.value()[j];
    p.mutable_value()[j] = orig + h;
    const double fp = loss_value(model, seq);
    p.mutable_value()[j] = orig - h;
    const double fm = loss_value(model, seq);
    p.mutable_value()[j] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = gradient_rel_err(analytic, numeric);
    ++rep.checked;
    if (err < tol) {
      ++rep.passed;
      rep.max_rel_err = std::max(rep.max_rel_err, err);
      continue;
    }
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    if (gradient_rel_err(fwd, bwd) > 1e-2) {
      ++rep.kinks;
      continue;
    }
    rep.max_rel_err = std::max(rep.max_rel_err, err);
  }
  for (auto v : params) v.zero_grad();
  return rep;
}

RecurrentTrainResult train_recurrent(const TraceDataset& ds, const neural::ArchConfig& arch,
                                     const RecurrentTrainOptions& opt) {
  ds.validate();
  if (ds.traces.empty()) throw std::invalid_argument("train_recurrent: empty dataset");
  if (arch.obs_dim != ds.schema.observation_dim)
    throw std::invalid_argument("train_recurrent: architecture observation width differs from the dataset");
  RecurrentTrainResult res{neural::RecurrentSteeringModel(arch, opt.seed), {}, {}};
  auto& model = res.model;

  if (opt.gate_samples > 0) {
    neural::Sequence probe = ds.traces.front().sequence;
    if (probe.steps.size() > 3) probe.steps.resize(3);
    res.gate = gradient_check(model, probe, 1e-5, 1e-4, opt.gate_samples, opt.seed);
    if (!res.gate.ok())
      throw std::runtime_error("gradient check failed: " + std::to_string(res.gate.checked - res.gate.passed -
                                                                          res.gate.kinks) +
                               " of " + std::to_string(res.gate.checked) + " entries, max rel err " +
                               std::to_string(res.gate.max_rel_err));
  }

  num::Sgd sgd(model.parameters(), opt.lr, opt.momentum);
  std::vector<std::size_t> order(ds.traces.size());
  std::size_t total_steps = 0;
  for (const auto& tr : ds.traces) total_steps += tr.sequence.steps.size();
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    num::RngStream rng(opt.seed, kShuffleStream + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      num::ad::Var loss;
      try {
        loss = neural::nll_loss(model, ds.traces[idx].sequence);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", trace " +
                                 std::to_string(idx) + ": " + e.what());
      }
      epoch_loss += loss.item();
      num::ad::backward(loss);
      if (opt.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : model.parameters())
          for (double g : p.grad().values()) sq += g * g;
        if (!std::isfinite(sq))
          throw std::runtime_error("non-finite gradient at epoch " + std::to_string(epoch));
        const double norm = std::sqrt(sq);
        if (norm > opt.clip_norm)
          for (const auto& p : model.parameters())
            for (double& g : p.node()->grad_buffer().values()) g *= opt.clip_norm / norm;
      }
      sgd.step();
    }
    res.epoch_loss.push_back(epoch_loss / static_cast<double>(total_steps));
  }
  return res;
}

double mean_step_nll(const neural::RecurrentSteeringModel& model, const TraceDataset& ds) {
  double total = 0.0;
  std::size_t steps = 0;
  for (const auto& tr : ds.traces) {
    total += loss_value(model, tr.sequence);
    steps += tr.sequence.steps.size();
  }
  return steps == 0 ? 0.0 : total / static_cast<double>(steps);
}

}  // namespace derrt::training
