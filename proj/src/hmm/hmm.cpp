#include "derrt/hmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "derrt/numerics/rng.hpp"

namespace derrt::hmm {

using num::kLogZero;

namespace {

double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

double clamp_log(double v) { return std::max(v, kLogZero); }

void normalize_in_place(std::vector<double>& log_v, double& log_norm) {
  log_norm = num::logsumexp(log_v);
  for (double& v : log_v) v = clamp_log(v - log_norm);
}

}  // namespace

void HmmModel::validate() const {
  const std::size_t k = states;
  if (k == 0) throw std::invalid_argument("HmmModel: no states");
  if (log_pi.size() != k || log_a.size() != k * k || emissions.size() != k)
    throw std::invalid_argument("HmmModel: parameter sizes do not match state count");
  if (std::abs(num::logsumexp(log_pi)) > 1e-9) throw std::invalid_argument("HmmModel: pi does not normalize");
  for (std::size_t i = 0; i < k; ++i) {
    std::span<const double> row(log_a.data() + i * k, k);
    if (std::abs(num::logsumexp(row)) > 1e-9)
      throw std::invalid_argument("HmmModel: transition row " + std::to_string(i) + " does not normalize");
  }
  for (const auto& e : emissions)
    if (e.dim() != features) throw std::invalid_argument("HmmModel: emission dimension differs from F");
}

double HmmModel::emission_logpdf(std::size_t state, std::span<const double> feature) const {
  return num::gaussian_logpdf(emissions[state], feature);
}

std::vector<double> emission_feature(const env::Configuration& /*x_nearest*/, const env::Configuration& x_next,
                                     const env::Configuration& mu, std::span<const double> env_features) {
  if (x_next.dim() != mu.dim()) throw std::invalid_argument("emission_feature: x_next/mu dimension mismatch");
  std::vector<double> f;
  f.reserve(x_next.dim() + env_features.size());
  for (std::size_t i = 0; i < x_next.dim(); ++i) f.push_back(x_next[i] - mu[i]);
  f.insert(f.end(), env_features.begin(), env_features.end());
  return f;
}

ForwardState forward_init(const HmmModel& model) {
  ForwardState s;
  s.log_alpha = model.log_pi;
  double norm = 0.0;
  normalize_in_place(s.log_alpha, norm);
  return s;
}

std::vector<double> predict(const HmmModel& model, const ForwardState& state) {
  const std::size_t k = model.states;
  if (state.log_alpha.size() != k) throw std::invalid_argument("predict: state size does not match model");
  if (state.length == 0) return state.log_alpha;
  std::vector<double> out(k);
  std::vector<double> terms(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) terms[i] = state.log_alpha[i] + model.log_transition(i, j);
    out[j] = clamp_log(num::logsumexp(terms));
  }
  return out;
}

ForwardStep forward_step_predicted(const HmmModel& model, const ForwardState& state,
                                   std::span<const double> predicted, std::span<const double> feature) {
  if (feature.size() != model.features)
    throw std::invalid_argument("forward_step: feature has " + std::to_string(feature.size()) +
                                " entries, model expects " + std::to_string(model.features));
  for (double v : feature)
    if (!std::isfinite(v)) throw std::invalid_argument("forward_step: non-finite feature");
  ForwardStep out;
  out.state.log_alpha.resize(model.states);
  for (std::size_t j = 0; j < model.states; ++j)
    out.state.log_alpha[j] = clamp_log(predicted[j] + model.emission_logpdf(j, feature));
  normalize_in_place(out.state.log_alpha, out.delta_loglik);
  out.delta_loglik = clamp_log(out.delta_loglik);
  out.state.log_likelihood_prefix = state.log_likelihood_prefix + out.delta_loglik;
  out.state.length = state.length + 1;
  return out;
}

ForwardStep forward_step(const HmmModel& model, const ForwardState& state, std::span<const double> feature) {
  const auto predicted = predict(model, state);
  return forward_step_predicted(model, state, predicted, feature);
}

double score_candidate(const HmmModel& model, const ForwardState& state, const env::Configuration& x_nearest,
                       const env::Configuration& x_next, const env::Configuration& mu,
                       std::span<const double> env_features) {
  const auto f = emission_feature(x_nearest, x_next, mu, env_features);
  return forward_step(model, state, f).delta_loglik;
}

double sequence_log_likelihood(const HmmModel& model, const Sequence& seq) {
  ForwardState s = forward_init(model);
  for (const auto& f : seq) s = forward_step(model, s, f).state;
  return s.log_likelihood_prefix;
}

namespace {

struct Standardizer {
  std::vector<double> mean, scale;
};

Standardizer standardizer(const std::vector<const std::vector<double>*>& points, std::size_t f) {
  Standardizer s{std::vector<double>(f, 0.0), std::vector<double>(f, 0.0)};
  for (const auto* p : points)
    for (std::size_t d = 0; d < f; ++d) s.mean[d] += (*p)[d];
  for (double& m : s.mean) m /= static_cast<double>(points.size());
  for (const auto* p : points)
    for (std::size_t d = 0; d < f; ++d) s.scale[d] += ((*p)[d] - s.mean[d]) * ((*p)[d] - s.mean[d]);
  for (double& v : s.scale) v = std::sqrt(v / static_cast<double>(points.size()));
  for (double& v : s.scale) v = v > 1e-12 ? v : 1.0;
  return s;
}

// Seeded Lloyd iterations on standardized features; returns a cluster per point.
std::vector<std::size_t> kmeans(const std::vector<const std::vector<double>*>& points, std::size_t f, std::size_t k,
                                num::RngStream& rng, int iters) {
  const Standardizer st = standardizer(points, f);
  auto z = [&](std::size_t i, std::size_t d) { return ((*points[i])[d] - st.mean[d]) / st.scale[d]; };
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centers;
  // k-means++ seeding.
  centers.push_back(std::vector<double>(f));
  {
    const std::size_t first = rng.uniform_int(n);
    for (std::size_t d = 0; d < f; ++d) centers[0][d] = z(first, d);
  }
  std::vector<double> dist2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) {
        double acc = 0.0;
        for (std::size_t d = 0; d < f; ++d) acc += (z(i, d) - c[d]) * (z(i, d) - c[d]);
        best = std::min(best, acc);
      }
      dist2[i] = best;
      total += best;
    }
    std::size_t pick = rng.uniform_int(n);
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= dist2[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::vector<double> c(f);
    for (std::size_t d = 0; d < f; ++d) c[d] = z(pick, d);
    centers.push_back(std::move(c));
  }
  std::vector<std::size_t> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best_c = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (std::size_t d = 0; d < f; ++d) acc += (z(i, d) - centers[c][d]) * (z(i, d) - centers[c][d]);
        if (acc < best) {
          best = acc;
          best_c = c;
        }
      }
      if (assign[i] != best_c || it == 0) changed = changed || assign[i] != best_c;
      assign[i] = best_c;
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(f, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t d = 0; d < f; ++d) sums[assign[i]][d] += z(i, d);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the old center for an empty cluster
      for (std::size_t d = 0; d < f; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    if (!changed && it > 0) break;
  }
  return assign;
}

void check_dataset(const std::vector<Sequence>& sequences, std::size_t& f) {
  if (sequences.empty()) throw std::invalid_argument("em_fit: empty dataset");
  f = sequences.front().empty() ? 0 : sequences.front().front().size();
  for (const auto& s : sequences) {
    if (s.size() < 2) throw std::invalid_argument("em_fit: every sequence needs at least 2 steps");
    for (const auto& x : s) {
      if (x.size() != f || f == 0) throw std::invalid_argument("em_fit: inconsistent feature width");
      for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("em_fit: non-finite feature");
    }
  }
}

}  // namespace

HmmModel em_initial_model(const std::vector<Sequence>& sequences, const EmOptions& options) {
  std::size_t f = 0;
  check_dataset(sequences, f);
  const std::size_t k = options.states;
  if (k == 0) throw std::invalid_argument("em_fit: need at least one state");
  num::RngStream rng(options.seed, 0x484D4D494E4954ULL);

  std::vector<const std::vector<double>*> points;
  for (const auto& s : sequences)
    for (const auto& x : s) points.push_back(&x);
  const auto assign = kmeans(points, f, k, rng, options.kmeans_iters);

  HmmModel m;
  m.states = k;
  m.features = f;
  // Emissions from the hard clusters; an empty cluster borrows a random point.
  std::vector<std::vector<double>> sum(k, std::vector<double>(f, 0.0)), sq(k, std::vector<double>(f, 0.0));
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    count[assign[i]] += 1.0;
    for (std::size_t d = 0; d < f; ++d) sum[assign[i]][d] += (*points[i])[d];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0.0) {
      const auto* p = points[rng.uniform_int(points.size())];
      sum[c] = *p;
      count[c] = 1.0;
    }
  }
  std::vector<std::vector<double>> mean(k, std::vector<double>(f));
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < f; ++d) mean[c][d] = sum[c][d] / count[c];
  std::vector<double> global_var(f, 0.0);
  {
    std::vector<double> gm(f, 0.0);
    for (const auto* p : points)
      for (std::size_t d = 0; d < f; ++d) gm[d] += (*p)[d];
    for (double& v : gm) v /= static_cast<double>(points.size());
    for (const auto* p : points)
      for (std::size_t d = 0; d < f; ++d) global_var[d] += ((*p)[d] - gm[d]) * ((*p)[d] - gm[d]);
    for (double& v : global_var) v /= static_cast<double>(points.size());
  }
  std::vector<double> cnt2(k, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    cnt2[assign[i]] += 1.0;
    for (std::size_t d = 0; d < f; ++d) {
      const double dv = (*points[i])[d] - mean[assign[i]][d];
      sq[assign[i]][d] += dv * dv;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> log_std(f);
    for (std::size_t d = 0; d < f; ++d) {
      double var = cnt2[c] > 1.0 ? sq[c][d] / cnt2[c] : global_var[d];
      var = std::max(var, options.floor_for(d));
      log_std[d] = 0.5 * std::log(var);
    }
    m.emissions.emplace_back(mean[c], std::move(log_std));
  }
  // Transitions and initial distribution from hard-assignment counts, add-one smoothed.
  std::vector<double> pi(k, 1.0), a(k * k, 1.0);
  std::size_t idx = 0;
  for (const auto& s : sequences) {
    pi[assign[idx]] += 1.0;
    for (std::size_t t = 0; t + 1 < s.size(); ++t) a[assign[idx + t] * k + assign[idx + t + 1]] += 1.0;
    idx += s.size();
  }
  const double pi_sum = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double p : pi) m.log_pi.push_back(std::log(p / pi_sum));
  m.log_a.resize(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += a[i * k + j];
    for (std::size_t j = 0; j < k; ++j) m.log_a[i * k + j] = std::log(a[i * k + j] / row);
  }
  return m;
}

EmResult em_fit(const std::vector<Sequence>& sequences, const EmOptions& options) {
  EmResult result;
  result.model = em_initial_model(sequences, options);
  HmmModel& m = result.model;
  const std::size_t k = m.states, f = m.features;

  std::vector<double> terms(k);
  for (int iter = 0; iter < options.max_iters; ++iter) {
    // E-step accumulators.
    std::vector<double> pi_acc(k, 0.0), a_num(k * k, 0.0), a_den(k, 0.0), w(k, 0.0);
    std::vector<std::vector<double>> mu_acc(k, std::vector<double>(f, 0.0));
    double total_ll = 0.0;
    std::vector<std::vector<double>> gammas;
    gammas.reserve(sequences.size());

    for (const auto& seq : sequences) {
      const std::size_t n = seq.size();
      std::vector<double> emit(n * k), la(n * k), lb(n * k, 0.0);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < k; ++j) emit[t * k + j] = m.emission_logpdf(j, seq[t]);
      for (std::size_t j = 0; j < k; ++j) la[j] = clamp_log(m.log_pi[j] + emit[j]);
      for (std::size_t t = 1; t < n; ++t)
        for (std::size_t j = 0; j < k; ++j) {
          for (std::size_t i = 0; i < k; ++i) terms[i] = la[(t - 1) * k + i] + m.log_transition(i, j);
          la[t * k + j] = clamp_log(num::logsumexp(terms) + emit[t * k + j]);
        }
      for (std::size_t t = n - 1; t-- > 0;)
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j)
            terms[j] = m.log_transition(i, j) + emit[(t + 1) * k + j] + lb[(t + 1) * k + j];
          lb[t * k + i] = clamp_log(num::logsumexp(terms));
        }
      const double ll = num::logsumexp(std::span<const double>(la.data() + (n - 1) * k, k));
      total_ll += ll;

      std::vector<double> gamma(n * k);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < k; ++j) gamma[t * k + j] = std::exp(la[t * k + j] + lb[t * k + j] - ll);
      for (std::size_t j = 0; j < k; ++j) pi_acc[j] += gamma[j];
      for (std::size_t t = 0; t + 1 < n; ++t)
        for (std::size_t i = 0; i < k; ++i) {
          a_den[i] += gamma[t * k + i];
          for (std::size_t j = 0; j < k; ++j)
            a_num[i * k + j] += std::exp(la[t * k + i] + m.log_transition(i, j) + emit[(t + 1) * k + j] +
                                         lb[(t + 1) * k + j] - ll);
        }
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < k; ++j) {
          w[j] += gamma[t * k + j];
          for (std::size_t d = 0; d < f; ++d) mu_acc[j][d] += gamma[t * k + j] * seq[t][d];
        }
      gammas.push_back(std::move(gamma));
    }

    result.log_likelihood.push_back(total_ll);
    if (iter > 0) {
      const double gain = total_ll - result.log_likelihood[result.log_likelihood.size() - 2];
      if (gain < options.tol) break;
    }
    result.iterations = iter + 1;

    // M-step.
    const double pi_sum = std::accumulate(pi_acc.begin(), pi_acc.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) m.log_pi[j] = safe_log(pi_acc[j] / pi_sum);
    for (std::size_t i = 0; i < k; ++i) {
      if (a_den[i] <= 0.0) continue;  // state never left; its row does not affect the likelihood
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) row += a_num[i * k + j];
      for (std::size_t j = 0; j < k; ++j) m.log_a[i * k + j] = safe_log(a_num[i * k + j] / row);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (w[j] <= 0.0) continue;
      std::vector<double> mean(f), var(f, 0.0);
      for (std::size_t d = 0; d < f; ++d) mean[d] = mu_acc[j][d] / w[j];
      std::size_t s_idx = 0;
      for (const auto& seq : sequences) {
        const auto& gamma = gammas[s_idx++];
        for (std::size_t t = 0; t < seq.size(); ++t)
          for (std::size_t d = 0; d < f; ++d) {
            const double dv = seq[t][d] - mean[d];
            var[d] += gamma[t * k + j] * dv * dv;
          }
      }
      std::vector<double> log_std(f);
      for (std::size_t d = 0; d < f; ++d) log_std[d] = 0.5 * std::log(std::max(var[d] / w[j], options.floor_for(d)));
      m.emissions[j] = num::DiagonalGaussian(std::move(mean), std::move(log_std));
    }
    // Re-normalize exactly so the model invariants hold after every iteration.
    double norm = 0.0;
    normalize_in_place(m.log_pi, norm);
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> row(m.log_a.begin() + i * k, m.log_a.begin() + (i + 1) * k);
      normalize_in_place(row, norm);
      std::copy(row.begin(), row.end(), m.log_a.begin() + i * k);
    }
  }
  m.validate();
  return result;
}

num::ParamFile to_param_file(const HmmModel& model, const std::string& observation_kind) {
  model.validate();
  num::ParamFile file;
  nlohmann::json manifest = {{"kind", "hmm"},
                             {"states", model.states},
                             {"features", model.features},
                             {"observation", observation_kind}};
  file.manifest_json = manifest.dump();
  const std::size_t k = model.states;
  std::vector<double> pi(k), a(k * k);
  std::transform(model.log_pi.begin(), model.log_pi.end(), pi.begin(), [](double l) { return std::exp(l); });
  std::transform(model.log_a.begin(), model.log_a.end(), a.begin(), [](double l) { return std::exp(l); });
  file.tensors.push_back({"pi", num::Tensor({k}, pi)});
  file.tensors.push_back({"A", num::Tensor({k, k}, a)});
  for (std::size_t j = 0; j < k; ++j) {
    file.tensors.push_back({"emission_mean_" + std::to_string(j), num::Tensor({model.features}, model.emissions[j].mean)});
    file.tensors.push_back(
        {"emission_logstd_" + std::to_string(j), num::Tensor({model.features}, model.emissions[j].log_std)});
  }
  return file;
}

HmmModel from_param_file(const num::ParamFile& file) {
  const auto manifest = nlohmann::json::parse(file.manifest_json);
  if (manifest.value("kind", "") != "hmm") throw std::runtime_error("parameter file does not hold an HMM");
  HmmModel m;
  m.states = manifest.at("states").get<std::size_t>();
  m.features = manifest.at("features").get<std::size_t>();
  for (double p : file.get("pi").values()) m.log_pi.push_back(safe_log(p));
  for (double p : file.get("A").values()) m.log_a.push_back(safe_log(p));
  for (std::size_t j = 0; j < m.states; ++j) {
    const auto mean = file.get("emission_mean_" + std::to_string(j)).values();
    const auto ls = file.get("emission_logstd_" + std::to_string(j)).values();
    m.emissions.emplace_back(std::vector<double>(mean.begin(), mean.end()), std::vector<double>(ls.begin(), ls.end()));
  }
  // Probabilities were stored linearly; renormalize away the rounding.
  double norm = 0.0;
  normalize_in_place(m.log_pi, norm);
  for (std::size_t i = 0; i < m.states; ++i) {
    std::vector<double> row(m.log_a.begin() + i * m.states, m.log_a.begin() + (i + 1) * m.states);
    normalize_in_place(row, norm);
    std::copy(row.begin(), row.end(), m.log_a.begin() + i * m.states);
  }
  m.validate();
  return m;
}

}  // namespace derrt::hmm
