#include "derrt/planner/steering.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace derrt::planner {

namespace {

class PreparedHmm final : public PreparedStep {
 public:
  PreparedHmm(const hmm::HmmModel& model, hmm::ForwardState state, Configuration x_nearest, Configuration mu,
              StepContext ctx, env::ObservationKind kind)
      : model_(model),
        state_(std::move(state)),
        predicted_(hmm::predict(model, state_)),
        x_nearest_(x_nearest),
        mu_(mu),
        ctx_(ctx),
        kind_(kind) {}

  double score(const Configuration& x_next) const override { return step(x_next).delta_loglik; }
  ModelState advance(const Configuration& x_next) const override { return step(x_next).state; }

 private:
  hmm::ForwardStep step(const Configuration& x_next) const {
    const auto f = hmm::emission_feature(x_nearest_, x_next, mu_, env::hmm_env_features(kind_, *ctx_.env, x_next, ctx_.t));
    return hmm::forward_step_predicted(model_, state_, predicted_, f);
  }

  const hmm::HmmModel& model_;
  hmm::ForwardState state_;
  std::vector<double> predicted_;
  Configuration x_nearest_;
  Configuration mu_;
  StepContext ctx_;
  env::ObservationKind kind_;
};

class PreparedRecurrent final : public PreparedStep {
 public:
  PreparedRecurrent(neural::StepOutput out, std::vector<double> weights, Configuration x_nearest, Configuration mu,
                    double sigma)
      : out_(std::move(out)), weights_(std::move(weights)), x_nearest_(x_nearest), mu_(mu), sigma_(sigma) {}

  double score(const Configuration& x_next) const override {
    return neural::mixture_score(out_.proposals, weights_, mu_, sigma_, x_next, x_nearest_);
  }
  ModelState advance(const Configuration&) const override { return out_.state; }

 private:
  neural::StepOutput out_;
  std::vector<double> weights_;
  Configuration x_nearest_;
  Configuration mu_;
  double sigma_;
};

}  // namespace

HmmSteering::HmmSteering(hmm::HmmModel model, env::ObservationKind kind) : model_(std::move(model)), kind_(kind) {
  model_.validate();
  if (model_.features != 2 + env::hmm_env_feature_dim(kind_))
    throw std::invalid_argument("HMM feature width does not match the observation kind");
}

ModelState HmmSteering::initial_state() const { return hmm::forward_init(model_); }

std::shared_ptr<const NodeObservation> HmmSteering::observe(const StepContext&, const Configuration&) const {
  return nullptr;
}

std::unique_ptr<PreparedStep> HmmSteering::prepare(const ModelState& state, const Configuration& x_nearest,
                                                   const NodeObservation*, const Configuration& mu,
                                                   const StepContext& ctx) const {
  const auto* fs = std::get_if<hmm::ForwardState>(&state);
  if (!fs) throw std::invalid_argument("HmmSteering: node state is not a forward state");
  return std::make_unique<PreparedHmm>(model_, *fs, x_nearest, mu, ctx, kind_);
}

RecurrentSteering::RecurrentSteering(neural::RecurrentSteeringModel model)
    : model_(std::move(model)), kind_(env::observation_kind_from_string(model_.arch().observation)) {}

ModelState RecurrentSteering::initial_state() const { return model_.initial_state(); }

std::shared_ptr<const NodeObservation> RecurrentSteering::observe(const StepContext& ctx,
                                                                 const Configuration& x) const {
  auto obs = std::make_shared<NodeObservation>();
  obs->embedding = model_.encode(env::local_observation(kind_, *ctx.env, x, ctx.t));
  obs->agents = env::agent_observations(kind_, *ctx.env, x, ctx.t);
  return obs;
}

std::unique_ptr<PreparedStep> RecurrentSteering::prepare(const ModelState& state, const Configuration& x_nearest,
                                                         const NodeObservation* obs, const Configuration& mu,
                                                         const StepContext& ctx) const {
  const auto* rs = std::get_if<neural::RecurrentState>(&state);
  if (!rs) throw std::invalid_argument("RecurrentSteering: node state is not a recurrent state");
  if (!obs) throw std::invalid_argument("RecurrentSteering: missing node observation");
  neural::StepInput in{x_nearest, mu, obs->embedding, obs->agents, ctx.env->map.world_width(),
                       ctx.env->map.world_height()};
  return std::make_unique<PreparedRecurrent>(model_.step(*rs, in), model_.mixture_weights(obs->agents.size()),
                                             x_nearest, mu, model_.arch().sigma_rrt);
}

Configuration steer_baseline(const Configuration& x_nearest, const Configuration& x_rand, double r) {
  const Configuration d = x_rand - x_nearest;
  const double n = d.norm();
  if (n <= r) return x_rand;
  return x_nearest + d * (r / n);
}

Configuration sample_in_ball(const Configuration& center, double r, num::RngStream& rng) {
  const std::size_t d = center.dim();
  if (d == 2) {
    const double rho = r * std::sqrt(rng.uniform());
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    return Configuration{center[0] + rho * std::cos(phi), center[1] + rho * std::sin(phi)};
  }
  Configuration dir(d);
  double n = 0.0;
  while (n == 0.0) {
    for (std::size_t i = 0; i < d; ++i) dir[i] = rng.normal();
    n = dir.norm();
  }
  const double rho = r * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  return center + dir * (rho / n);
}

std::size_t sample_proportional(const std::vector<double>& scores, num::RngStream& rng, bool* fallback) {
  if (scores.empty()) throw std::invalid_argument("sample_proportional: no scores");
  const double u = rng.uniform();
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores)
    if (s > m) m = s;
  if (!(m > 0.5 * num::kLogZero)) {
    if (fallback) *fallback = true;
    return 0;
  }
  if (fallback) *fallback = false;
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::isnan(scores[i]) ? 0.0 : std::exp(scores[i] - m);
    total += w[i];
  }
  double acc = u * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (acc < w[i]) return i;
    acc -= w[i];
  }
  // Rounding left a sliver past the last bucket.
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  return 0;
}

SteerOutcome steer_with_model(const SteeringModel& model, const ModelState& nearest_state,
                              const Configuration& x_nearest, const NodeObservation* obs,
                              const Configuration& x_rand, const StepContext& ctx, double r, std::size_t k,
                              num::RngStream& rng) {
  if (k == 0) throw std::invalid_argument("steer_with_model: k must be >= 1");
  SteerOutcome out;
  out.mu = steer_baseline(x_nearest, x_rand, r);
  out.candidates.reserve(k);
  out.candidates.push_back(out.mu);
  for (std::size_t i = 1; i < k; ++i) out.candidates.push_back(sample_in_ball(x_nearest, r, rng));
  const auto prepared = model.prepare(nearest_state, x_nearest, obs, out.mu, ctx);
  out.scores.reserve(k);
  for (const auto& c : out.candidates) out.scores.push_back(prepared->score(c));
  out.chosen = sample_proportional(out.scores, rng, &out.fallback);
  out.x_new = out.candidates[out.chosen];
  out.state = prepared->advance(out.x_new);
  return out;
}

}  // namespace derrt::planner
