#include "derrt/neural/recurrent_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "derrt/numerics/rng.hpp"

namespace derrt::neural {

namespace ad = num::ad;
using env::Configuration;
using num::Tensor;

namespace {

// softplus(raw) * r + floor = r / 2 at initialization.
constexpr double kInitStdRaw = -0.43275212956718856;

std::string encoder_name(EncoderKind k) { return k == EncoderKind::conv ? "conv" : "features"; }

EncoderKind encoder_from_name(const std::string& s) {
  if (s == "conv") return EncoderKind::conv;
  if (s == "features") return EncoderKind::features;
  throw std::invalid_argument("unknown encoder kind '" + s + "'");
}

ad::Var constant_vector(std::vector<double> v) { return ad::Var::constant(Tensor::vector(std::move(v))); }

ad::Var affine(const ad::Var& w, const ad::Var& x, const ad::Var& b) { return ad::add(ad::matmul(w, x), b); }

ProposalVar head_to_proposal(const ad::Var& out, double r) {
  ProposalVar p;
  p.mean = ad::scale(ad::slice(out, 0, 2), r);
  p.stddev = ad::add_scalar(ad::scale(ad::softplus(ad::slice(out, 2, 2)), r), num::kStdFloor);
  return p;
}

num::DiagonalGaussian to_gaussian(const ProposalVar& p) {
  const auto m = p.mean.value().values();
  const auto s = p.stddev.value().values();
  return num::DiagonalGaussian::from_std(std::vector<double>(m.begin(), m.end()), s);
}

}  // namespace

std::size_t ArchConfig::conv_code_dim() const {
  const std::size_t c1 = patch_size - 2;
  const std::size_t p1 = c1 / 2;
  const std::size_t c2 = p1 - 2;
  const std::size_t p2 = c2 / 2;
  return conv2_channels * p2 * p2;
}

void ArchConfig::validate() const {
  if (hidden == 0 || layers == 0 || embed_dim == 0) throw std::invalid_argument("ArchConfig: empty layer");
  if (!(radius > 0.0) || !(sigma_rrt > 0.0)) throw std::invalid_argument("ArchConfig: radius and sigma must be > 0");
  if (rrt_weight > 1.0) throw std::invalid_argument("ArchConfig: rrt_weight must be <= 1");
  if (encoder == EncoderKind::conv) {
    if (patch_size < 9 || patch_size % 2 == 0) throw std::invalid_argument("ArchConfig: patch size must be odd and >= 9");
    if (obs_dim != patch_size * patch_size) throw std::invalid_argument("ArchConfig: obs_dim must equal patch_size^2");
  } else if (obs_dim == 0) {
    throw std::invalid_argument("ArchConfig: obs_dim must be > 0");
  }
}

nlohmann::json to_json(const ArchConfig& a) {
  return {{"encoder", encoder_name(a.encoder)}, {"obs_dim", a.obs_dim},
          {"patch_size", a.patch_size},         {"conv1_channels", a.conv1_channels},
          {"conv2_channels", a.conv2_channels}, {"embed_dim", a.embed_dim},
          {"hidden", a.hidden},                 {"layers", a.layers},
          {"agent_dim", a.agent_dim},           {"agent_hidden", a.agent_hidden},
          {"radius", a.radius},                 {"sigma_rrt", a.sigma_rrt},
          {"rrt_weight", a.rrt_weight},         {"observation", a.observation}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.encoder = encoder_from_name(j.at("encoder").get<std::string>());
  a.obs_dim = j.at("obs_dim").get<std::size_t>();
  a.patch_size = j.at("patch_size").get<std::size_t>();
  a.conv1_channels = j.at("conv1_channels").get<std::size_t>();
  a.conv2_channels = j.at("conv2_channels").get<std::size_t>();
  a.embed_dim = j.at("embed_dim").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::size_t>();
  a.layers = j.at("layers").get<std::size_t>();
  a.agent_dim = j.at("agent_dim").get<std::size_t>();
  a.agent_hidden = j.at("agent_hidden").get<std::size_t>();
  a.radius = j.at("radius").get<double>();
  a.sigma_rrt = j.at("sigma_rrt").get<double>();
  a.rrt_weight = j.at("rrt_weight").get<double>();
  a.observation = j.at("observation").get<std::string>();
  a.validate();
  return a;
}

void RecurrentSteeringModel::add_param(const std::string& name, num::Shape shape, double bound, std::uint64_t seed,
                                       double bias) {
  Tensor t(std::move(shape));
  num::RngStream rng(seed, 0x5041524Dull + names_.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = bias + (bound > 0.0 ? rng.uniform(-bound, bound) : 0.0);
  names_.push_back(name);
  params_.push_back(ad::Var::parameter(std::move(t)));
}

RecurrentSteeringModel::RecurrentSteeringModel(ArchConfig arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  const auto& a = arch_;
  auto inv_sqrt = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  if (a.encoder == EncoderKind::conv) {
    add_param("conv1.W", {a.conv1_channels, 1, 3, 3}, inv_sqrt(9), seed);
    add_param("conv1.b", {a.conv1_channels}, inv_sqrt(9), seed);
    add_param("conv2.W", {a.conv2_channels, a.conv1_channels, 3, 3}, inv_sqrt(9 * a.conv1_channels), seed);
    add_param("conv2.b", {a.conv2_channels}, inv_sqrt(9 * a.conv1_channels), seed);
    add_param("enc.W", {a.embed_dim, a.conv_code_dim()}, inv_sqrt(a.conv_code_dim()), seed);
  } else {
    add_param("enc.W", {a.embed_dim, a.obs_dim}, inv_sqrt(a.obs_dim), seed);
  }
  add_param("enc.b", {a.embed_dim}, 0.0, seed);
  for (std::size_t l = 0; l < a.layers; ++l) {
    const std::size_t in = l == 0 ? a.gru_input_dim() : a.hidden;
    const std::string pre = "gru" + std::to_string(l) + ".";
    add_param(pre + "W", {3 * a.hidden, in}, inv_sqrt(in), seed);
    add_param(pre + "U", {3 * a.hidden, a.hidden}, inv_sqrt(a.hidden), seed);
    add_param(pre + "b", {3 * a.hidden}, inv_sqrt(a.hidden), seed);
    add_param(pre + "bhn", {a.hidden}, inv_sqrt(a.hidden), seed);
  }
  add_param("head.W", {4, a.hidden}, 0.1 * inv_sqrt(a.hidden), seed);
  add_param("head.b", {4}, 0.0, seed);
  params_.back().mutable_value()[2] = kInitStdRaw;
  params_.back().mutable_value()[3] = kInitStdRaw;
  if (a.agent_dim > 0) {
    add_param("agent.W1", {a.agent_hidden, a.hidden + a.agent_dim}, inv_sqrt(a.hidden + a.agent_dim), seed);
    add_param("agent.b1", {a.agent_hidden}, 0.0, seed);
    add_param("agent.W2", {4, a.agent_hidden}, 0.1 * inv_sqrt(a.agent_hidden), seed);
    add_param("agent.b2", {4}, 0.0, seed);
    params_.back().mutable_value()[2] = kInitStdRaw;
    params_.back().mutable_value()[3] = kInitStdRaw;
  }
}

const ad::Var& RecurrentSteeringModel::parameter(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t RecurrentSteeringModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : params_) n += v.size();
  return n;
}

ad::Var RecurrentSteeringModel::encode_var(std::span<const double> observation) const {
  if (observation.size() != arch_.obs_dim)
    throw std::invalid_argument("encode: observation has " + std::to_string(observation.size()) +
                                " values, expected " + std::to_string(arch_.obs_dim));
  std::vector<double> obs(observation.begin(), observation.end());
  if (arch_.encoder == EncoderKind::features) {
    return ad::tanh(affine(p("enc.W"), constant_vector(std::move(obs)), p("enc.b")));
  }
  const std::size_t s = arch_.patch_size;
  auto x = ad::Var::constant(Tensor({1, s, s}, std::move(obs)));
  x = ad::maxpool2x2(ad::relu(ad::conv2d(x, p("conv1.W"), p("conv1.b"))));
  x = ad::maxpool2x2(ad::relu(ad::conv2d(x, p("conv2.W"), p("conv2.b"))));
  x = ad::reshape(x, {arch_.conv_code_dim()});
  return ad::tanh(affine(p("enc.W"), x, p("enc.b")));
}

ad::Var RecurrentSteeringModel::gru_input_var(const Configuration& x_prev, const Configuration& mu,
                                              const ad::Var& embedding, double world_width,
                                              double world_height) const {
  const double r = arch_.radius;
  const std::vector<ad::Var> parts{
      constant_vector({x_prev[0] / world_width, x_prev[1] / world_height, (mu[0] - x_prev[0]) / r,
                       (mu[1] - x_prev[1]) / r}),
      embedding};
  return ad::concat(parts);
}

std::vector<ad::Var> RecurrentSteeringModel::gru_step_var(const std::vector<ad::Var>& hidden,
                                                          const ad::Var& input) const {
  const std::size_t h = arch_.hidden;
  std::vector<ad::Var> out;
  out.reserve(arch_.layers);
  ad::Var x = input;
  for (std::size_t l = 0; l < arch_.layers; ++l) {
    const std::string pre = "gru" + std::to_string(l) + ".";
    const ad::Var gx = affine(p(pre + "W"), x, p(pre + "b"));
    const ad::Var gh = ad::matmul(p(pre + "U"), hidden[l]);
    const ad::Var z = ad::sigmoid(ad::add(ad::slice(gx, 0, h), ad::slice(gh, 0, h)));
    const ad::Var r = ad::sigmoid(ad::add(ad::slice(gx, h, h), ad::slice(gh, h, h)));
    const ad::Var n =
        ad::tanh(ad::add(ad::slice(gx, 2 * h, h), ad::mul(r, ad::add(ad::slice(gh, 2 * h, h), p(pre + "bhn")))));
    // (1 - z) * n + z * h_prev
    x = ad::add(n, ad::mul(z, ad::sub(hidden[l], n)));
    out.push_back(x);
  }
  return out;
}

ProposalVar RecurrentSteeringModel::local_proposal_var(const ad::Var& top) const {
  return head_to_proposal(affine(p("head.W"), top, p("head.b")), arch_.radius);
}

ProposalVar RecurrentSteeringModel::agent_proposal_var(const ad::Var& top, std::span<const double> agent) const {
  if (arch_.agent_dim == 0) throw std::logic_error("model has no agent heads");
  if (agent.size() != arch_.agent_dim) throw std::invalid_argument("agent observation has the wrong width");
  const std::vector<ad::Var> parts{top, constant_vector(std::vector<double>(agent.begin(), agent.end()))};
  const ad::Var a = ad::tanh(affine(p("agent.W1"), ad::concat(parts), p("agent.b1")));
  return head_to_proposal(affine(p("agent.W2"), a, p("agent.b2")), arch_.radius);
}

std::vector<double> RecurrentSteeringModel::mixture_weights(std::size_t n_agents) const {
  const std::size_t learned = 1 + (arch_.agent_dim > 0 ? n_agents : 0);
  std::vector<double> w(learned + 1);
  if (arch_.rrt_weight < 0.0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(learned + 1));
  } else {
    std::fill(w.begin(), w.end() - 1, (1.0 - arch_.rrt_weight) / static_cast<double>(learned));
    w.back() = arch_.rrt_weight;
  }
  return w;
}

RecurrentState RecurrentSteeringModel::initial_state() const {
  return RecurrentState{std::vector<double>(arch_.layers * arch_.hidden, 0.0)};
}

std::vector<double> RecurrentSteeringModel::encode(std::span<const double> observation) const {
  ad::NoGradGuard guard;
  const ad::Var e = encode_var(observation);
  const auto v = e.value().values();
  return {v.begin(), v.end()};
}

StepOutput RecurrentSteeringModel::step(const RecurrentState& state, const StepInput& input) const {
  if (state.hidden.size() != arch_.layers * arch_.hidden)
    throw std::invalid_argument("step: state dimension does not match the model");
  if (input.embedding.size() != arch_.embed_dim) throw std::invalid_argument("step: embedding has the wrong width");
  for (std::size_t i = 0; i < 2; ++i)
    if (!std::isfinite(input.x_prev[i]) || !std::isfinite(input.mu[i]))
      throw std::invalid_argument("step: non-finite input");
  ad::NoGradGuard guard;
  std::vector<ad::Var> hidden;
  for (std::size_t l = 0; l < arch_.layers; ++l)
    hidden.push_back(constant_vector(std::vector<double>(state.hidden.begin() + l * arch_.hidden,
                                                         state.hidden.begin() + (l + 1) * arch_.hidden)));
  const ad::Var in = gru_input_var(input.x_prev, input.mu, constant_vector(input.embedding), input.world_width,
                                   input.world_height);
  const auto next = gru_step_var(hidden, in);
  StepOutput out;
  out.state.hidden.reserve(state.hidden.size());
  for (const auto& h : next) {
    const auto v = h.value().values();
    out.state.hidden.insert(out.state.hidden.end(), v.begin(), v.end());
  }
  out.proposals.push_back(to_gaussian(local_proposal_var(next.back())));
  if (arch_.agent_dim > 0)
    for (const auto& a : input.agents) out.proposals.push_back(to_gaussian(agent_proposal_var(next.back(), a)));
  return out;
}

num::ParamFile RecurrentSteeringModel::to_param_file() const {
  num::ParamFile f;
  f.manifest_json = nlohmann::json{{"kind", "recurrent"}, {"arch", to_json(arch_)}}.dump();
  for (std::size_t i = 0; i < names_.size(); ++i) f.tensors.push_back({names_[i], params_[i].value()});
  return f;
}

RecurrentSteeringModel RecurrentSteeringModel::from_param_file(const num::ParamFile& file) {
  const auto manifest = nlohmann::json::parse(file.manifest_json);
  if (manifest.value("kind", "") != "recurrent")
    throw std::runtime_error("parameter file does not hold a recurrent model");
  RecurrentSteeringModel m(arch_from_json(manifest.at("arch")), 0);
  for (std::size_t i = 0; i < m.names_.size(); ++i) {
    const Tensor& t = file.get(m.names_[i]);
    if (t.shape() != m.params_[i].shape())
      throw std::runtime_error("parameter '" + m.names_[i] + "' has shape " + num::shape_string(t.shape()) +
                               ", expected " + num::shape_string(m.params_[i].shape()));
    m.params_[i].mutable_value() = t;
  }
  return m;
}

double mixture_score(std::span<const num::DiagonalGaussian> proposals, std::span<const double> weights,
                     const Configuration& mu, double sigma_rrt, const Configuration& x_next,
                     const Configuration& x_nearest) {
  if (proposals.empty()) throw std::invalid_argument("mixture_score: no proposals");
  if (weights.size() != proposals.size() + 1) throw std::invalid_argument("mixture_score: weight count mismatch");
  const double delta[2] = {x_next[0] - x_nearest[0], x_next[1] - x_nearest[1]};
  std::vector<double> terms;
  terms.reserve(weights.size());
  for (std::size_t i = 0; i < proposals.size(); ++i)
    if (weights[i] > 0.0) terms.push_back(std::log(weights[i]) + num::gaussian_logpdf(proposals[i], delta));
  if (weights.back() > 0.0) {
    const double s[2] = {sigma_rrt, sigma_rrt};
    const auto rrt = num::DiagonalGaussian::from_std({mu[0], mu[1]}, s);
    const double x[2] = {x_next[0], x_next[1]};
    terms.push_back(std::log(weights.back()) + num::gaussian_logpdf(rrt, x));
  }
  if (terms.empty()) return num::kLogZero;
  return num::logsumexp(terms);
}

ad::Var mixture_score_var(const std::vector<ProposalVar>& proposals, std::span<const double> weights,
                          const Configuration& mu, double sigma_rrt, const Configuration& x_next,
                          const Configuration& x_nearest) {
  if (proposals.empty()) throw std::invalid_argument("mixture_score: no proposals");
  if (weights.size() != proposals.size() + 1) throw std::invalid_argument("mixture_score: weight count mismatch");
  const double delta[2] = {x_next[0] - x_nearest[0], x_next[1] - x_nearest[1]};
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < proposals.size(); ++i)
    if (weights[i] > 0.0)
      terms.push_back(
          ad::add_scalar(ad::gaussian_logpdf(proposals[i].mean, proposals[i].stddev, delta), std::log(weights[i])));
  if (weights.back() > 0.0) {
    const double s[2] = {sigma_rrt, sigma_rrt};
    const auto rrt = num::DiagonalGaussian::from_std({mu[0], mu[1]}, s);
    const double x[2] = {x_next[0], x_next[1]};
    terms.push_back(ad::Var::constant(Tensor::scalar(std::log(weights.back()) + num::gaussian_logpdf(rrt, x))));
  }
  if (terms.empty()) throw std::invalid_argument("mixture_score: every component has zero weight");
  return ad::logsumexp(ad::concat(terms));
}

ad::Var nll_loss(const RecurrentSteeringModel& model, const Sequence& sequence) {
  if (sequence.steps.empty()) throw std::invalid_argument("nll_loss: empty sequence");
  const auto& arch = model.arch();
  std::vector<ad::Var> hidden(arch.layers, ad::Var::constant(Tensor({arch.hidden}, 0.0)));
  std::vector<ad::Var> scores;
  scores.reserve(sequence.steps.size());
  for (const auto& s : sequence.steps) {
    const ad::Var emb = model.encode_var(s.observation);
    const ad::Var in = model.gru_input_var(s.x_prev, s.mu, emb, sequence.world_width, sequence.world_height);
    hidden = model.gru_step_var(hidden, in);
    std::vector<ProposalVar> props{model.local_proposal_var(hidden.back())};
    if (arch.agent_dim > 0)
      for (const auto& a : s.agents) props.push_back(model.agent_proposal_var(hidden.back(), a));
    scores.push_back(mixture_score_var(props, model.mixture_weights(s.agents.size()), s.mu, arch.sigma_rrt,
                                       s.x_next, s.x_prev));
  }
  return ad::scale(ad::sum(ad::concat(scores)), -1.0);
}

Configuration clipped_mean(const num::DiagonalGaussian& proposal, double r) {
  Configuration m{proposal.mean[0], proposal.mean[1]};
  const double n = m.norm();
  if (n > r) m *= r / n;
  return m;
}

}  // namespace derrt::neural
