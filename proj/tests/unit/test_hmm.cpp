#include <doctest.h>

#include <cmath>
#include <limits>

#include "derrt/hmm/hmm.hpp"
#include "derrt/numerics/rng.hpp"

using namespace derrt;
using namespace derrt::hmm;

namespace {

std::vector<double> normalized_log(std::vector<double> w) {
  double s = 0.0;
  for (double v : w) s += v;
  for (double& v : w) v = std::log(v / s);
  return w;
}

HmmModel random_model(std::size_t k, std::size_t f, num::RngStream& rng) {
  HmmModel m;
  m.states = k;
  m.features = f;
  std::vector<double> pi(k);
  for (double& v : pi) v = rng.uniform(0.1, 1.0);
  m.log_pi = normalized_log(pi);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> row(k);
    for (double& v : row) v = rng.uniform(0.1, 1.0);
    const auto lr = normalized_log(row);
    m.log_a.insert(m.log_a.end(), lr.begin(), lr.end());
    std::vector<double> mean(f), sd(f);
    for (std::size_t d = 0; d < f; ++d) {
      mean[d] = rng.uniform(-2.0, 2.0);
      sd[d] = rng.uniform(0.5, 1.5);
    }
    m.emissions.push_back(num::DiagonalGaussian::from_std(mean, sd));
  }
  m.validate();
  return m;
}

Sequence random_sequence(std::size_t t, std::size_t f, num::RngStream& rng) {
  Sequence s(t, std::vector<double>(f));
  for (auto& row : s)
    for (double& v : row) v = rng.normal(0.0, 2.0);
  return s;
}

double brute_force(const HmmModel& m, const Sequence& seq) {
  const std::size_t k = m.states, t = seq.size();
  std::size_t paths = 1;
  for (std::size_t i = 0; i < t; ++i) paths *= k;
  long double total = 0.0L;
  for (std::size_t p = 0; p < paths; ++p) {
    std::size_t code = p, prev = 0;
    long double lp = 0.0L;
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t s = code % k;
      code /= k;
      lp += i == 0 ? m.log_pi[s] : m.log_transition(prev, s);
      lp += m.emission_logpdf(s, seq[i]);
      prev = s;
    }
    total += std::exp(lp);
  }
  return static_cast<double>(std::log(total));
}

// Samples a 2-state, 1-feature HMM with well-separated emissions.
std::vector<Sequence> sample_two_state(const double a[2][2], std::size_t n, std::size_t len, num::RngStream& rng) {
  const double means[2] = {-3.0, 3.0};
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sequence s;
    std::size_t z = rng.uniform() < 0.5 ? 0 : 1;
    for (std::size_t j = 0; j < len; ++j) {
      s.push_back({rng.normal(means[z], 1.0)});
      z = rng.uniform() < a[z][0] ? 0 : 1;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_SUITE("hmm") {
  TEST_CASE("forward_init") {
    HmmModel m;
    m.states = 3;
    m.features = 1;
    m.log_pi = normalized_log({1.0, 1.0, 1.0});
    m.log_a = normalized_log({1, 1, 1, 1, 1, 1, 1, 1, 1});
    for (double& v : m.log_a) v = -std::log(3.0);
    m.emissions.assign(3, num::DiagonalGaussian::from_std({0.0}, std::vector<double>{1.0}));
    auto s = forward_init(m);
    for (double v : s.log_alpha) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));
    CHECK(s.log_likelihood_prefix == 0.0);
    CHECK(s.length == 0);

    m.log_pi = {0.0, num::kLogZero, num::kLogZero};
    s = forward_init(m);
    CHECK(s.log_alpha[0] == 0.0);
    CHECK(s.log_alpha[1] <= num::kLogZero / 2);
    CHECK(s.log_alpha[2] <= num::kLogZero / 2);

    num::RngStream rng(5, 0);
    for (int i = 0; i < 20; ++i) {
      const auto r = random_model(1 + rng.uniform_int(4), 2, rng);
      CHECK(num::logsumexp(forward_init(r).log_alpha) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }

  TEST_CASE("single state reduces to the emission density") {
    num::RngStream rng(6, 0);
    const auto m = random_model(1, 3, rng);
    auto s = forward_init(m);
    for (int i = 0; i < 10; ++i) {
      const auto f = random_sequence(1, 3, rng)[0];
      const auto step = forward_step(m, s, f);
      CHECK(step.delta_loglik == doctest::Approx(m.emission_logpdf(0, f)).epsilon(1e-14));
      s = step.state;
    }
    CHECK(s.length == 10);
  }

  TEST_CASE("forward recursion matches all 3^5 state paths") {
    num::RngStream rng(7, 0);
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = random_model(3, 2, rng);
      const auto seq = random_sequence(5, 2, rng);
      auto s = forward_init(m);
      double sum = 0.0;
      for (const auto& f : seq) {
        const auto step = forward_step(m, s, f);
        sum += step.delta_loglik;
        s = step.state;
      }
      const double ref = brute_force(m, seq);
      CHECK(std::abs(sum - ref) <= 1e-9 * std::max(1.0, std::abs(ref)));
      CHECK(s.log_likelihood_prefix == doctest::Approx(sum).epsilon(1e-14));
      CHECK(sequence_log_likelihood(m, seq) == doctest::Approx(ref).epsilon(1e-12));
      CHECK(num::logsumexp(s.log_alpha) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }

  TEST_CASE("repeating one feature converges to the power-iteration fixed point") {
    num::RngStream rng(8, 0);
    const auto m = random_model(3, 1, rng);
    const std::vector<double> f{0.4};
    auto s = forward_init(m);
    for (int i = 0; i < 300; ++i) s = forward_step(m, s, f).state;

    // Power iteration on M[i][j] = a[i][j] * b_j(f) in linear space.
    std::vector<double> v(3, 1.0 / 3.0);
    for (int it = 0; it < 2000; ++it) {
      std::vector<double> w(3, 0.0);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
          w[j] += v[i] * std::exp(m.log_transition(i, j) + m.emission_logpdf(j, f));
      const double z = w[0] + w[1] + w[2];
      for (std::size_t j = 0; j < 3; ++j) v[j] = w[j] / z;
    }
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::exp(s.log_alpha[j]) == doctest::Approx(v[j]).epsilon(1e-9));
  }

  TEST_CASE("score_candidate is pure and consistent with forward_step") {
    num::RngStream rng(9, 0);
    const auto m = random_model(3, 4, rng);
    auto s = forward_init(m);
    for (int i = 0; i < 3; ++i) s = forward_step(m, s, random_sequence(1, 4, rng)[0]).state;
    const ForwardState before = s;
    const env::Configuration xn{10.0, 10.0}, mu{12.0, 9.0};
    const std::vector<double> obs{0.3, 0.1};
    for (int i = 0; i < 100; ++i) {
      const env::Configuration x{rng.uniform(5.0, 15.0), rng.uniform(5.0, 15.0)};
      const double sc = score_candidate(m, s, xn, x, mu, obs);
      const auto feat = emission_feature(xn, x, mu, obs);
      CHECK(feat.size() == 4);
      CHECK(feat[0] == x[0] - mu[0]);
      CHECK(feat[1] == x[1] - mu[1]);
      CHECK(sc == forward_step(m, s, feat).delta_loglik);
      CHECK(sc == forward_step_predicted(m, s, predict(m, s), feat).delta_loglik);
      CHECK(sc == score_candidate(m, s, {0.0, 0.0}, x, mu, obs));
    }
    CHECK(s == before);
    CHECK_THROWS(forward_step(m, s, std::vector<double>{0.0, 0.0, 0.0}));
    CHECK_THROWS(forward_step(m, s, std::vector<double>{0.0, std::nan(""), 0.0, 0.0}));
  }

  TEST_CASE("candidate nearer mu scores higher under zero-mean displacement emissions") {
    num::RngStream rng(10, 0);
    auto m = random_model(3, 4, rng);
    for (auto& g : m.emissions) g.mean[0] = g.mean[1] = 0.0;
    const auto s = forward_init(m);
    const env::Configuration mu{20.0, 20.0};
    const std::vector<double> obs{1.0, 0.0};
    for (int i = 0; i < 200; ++i) {
      const double dx = rng.uniform(-1.0, 1.0), dy = rng.uniform(-1.0, 1.0), k = rng.uniform(1.1, 3.0);
      const env::Configuration near{mu[0] + dx, mu[1] + dy}, far{mu[0] + k * dx, mu[1] + k * dy};
      CHECK(score_candidate(m, s, mu, near, mu, obs) > score_candidate(m, s, mu, far, mu, obs));
    }
  }

  TEST_CASE("single-state EM recovers the dataset moments") {
    num::RngStream rng(11, 0);
    std::vector<Sequence> data;
    for (int i = 0; i < 10; ++i) data.push_back(random_sequence(8, 2, rng));
    std::vector<double> sum(2, 0.0), sq(2, 0.0);
    double n = 0.0;
    for (const auto& s : data)
      for (const auto& f : s) {
        n += 1.0;
        for (std::size_t d = 0; d < 2; ++d) {
          sum[d] += f[d];
          sq[d] += f[d] * f[d];
        }
      }
    EmOptions opt;
    opt.states = 1;
    opt.max_iters = 5;
    const auto r = em_fit(data, opt);
    for (std::size_t d = 0; d < 2; ++d) {
      const double mean = sum[d] / n;
      CHECK(r.model.emissions[0].mean[d] == doctest::Approx(mean).epsilon(1e-10));
      CHECK(r.model.emissions[0].stddev(d) == doctest::Approx(std::sqrt(sq[d] / n - mean * mean)).epsilon(1e-9));
    }
    CHECK(r.model.log_pi[0] == doctest::Approx(0.0));
    CHECK(r.model.log_a[0] == doctest::Approx(0.0));
  }

  TEST_CASE("two-state transition matrix is recovered up to relabeling") {
    const double a[2][2] = {{0.9, 0.1}, {0.3, 0.7}};
    num::RngStream rng(12, 0);
    const auto data = sample_two_state(a, 60, 50, rng);
    EmOptions opt;
    opt.states = 2;
    opt.seed = 3;
    opt.max_iters = 200;
    const auto m = em_fit(data, opt).model;
    const std::size_t lo = m.emissions[0].mean[0] < m.emissions[1].mean[0] ? 0 : 1, hi = 1 - lo;
    const std::size_t order[2] = {lo, hi};
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(std::abs(std::exp(m.log_transition(order[i], order[j])) - a[i][j]) < 0.1);
  }

  TEST_CASE("EM is monotone and keeps the model normalized") {
    num::RngStream rng(13, 0);
    for (int trial = 0; trial < 5; ++trial) {
      const auto truth = random_model(3, 2, rng);
      std::vector<Sequence> data;
      for (int i = 0; i < 8; ++i) data.push_back(random_sequence(2 + rng.uniform_int(10), 2, rng));
      EmOptions opt;
      opt.seed = static_cast<std::uint64_t>(trial);
      opt.max_iters = 40;
      opt.tol = -std::numeric_limits<double>::infinity();
      const auto r = em_fit(data, opt);
      CHECK(r.iterations == 40);
      for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
        CHECK(r.log_likelihood[i] >= r.log_likelihood[i - 1] - 1e-8);
      CHECK_NOTHROW(r.model.validate());
      CHECK(num::logsumexp(r.model.log_pi) == doctest::Approx(0.0).epsilon(1e-12));
      for (std::size_t i = 0; i < 3; ++i)
        CHECK(num::logsumexp(std::span(r.model.log_a).subspan(i * 3, 3)) == doctest::Approx(0.0).epsilon(1e-12));
      for (const auto& g : r.model.emissions)
        for (std::size_t d = 0; d < 2; ++d) CHECK(g.stddev(d) * g.stddev(d) >= opt.variance_floor * (1 - 1e-12));
      (void)truth;
    }
  }

  TEST_CASE("EM stops early under a loose tolerance and rejects bad input") {
    num::RngStream rng(14, 0);
    std::vector<Sequence> data{random_sequence(6, 1, rng), random_sequence(6, 1, rng)};
    EmOptions opt;
    opt.tol = 1e6;
    CHECK(em_fit(data, opt).iterations <= 2);
    CHECK_THROWS(em_fit({}, opt));
    CHECK_THROWS(em_fit({random_sequence(1, 1, rng)}, opt));
    CHECK_THROWS(em_fit({random_sequence(4, 1, rng), random_sequence(4, 2, rng)}, opt));
  }

  TEST_CASE("variance floor holds on constant data") {
    std::vector<Sequence> data{Sequence(5, {1.0, 2.0}), Sequence(4, {1.0, 2.0})};
    EmOptions opt;
    opt.states = 2;
    opt.feature_variance_floor = {0.25};
    const auto m = em_fit(data, opt).model;
    for (const auto& g : m.emissions) {
      CHECK(g.stddev(0) == doctest::Approx(0.5));
      CHECK(g.stddev(1) == doctest::Approx(std::sqrt(opt.variance_floor)));
    }
  }

  TEST_CASE("parameter file round trip") {
    num::RngStream rng(15, 0);
    const auto m = random_model(3, 4, rng);
    const auto back = from_param_file(num::decode_params(num::encode_params(to_param_file(m, "passage"))));
    CHECK(back.states == m.states);
    CHECK(back.features == m.features);
    // Probabilities are stored, so log entries round-trip through exp/log.
    for (std::size_t i = 0; i < 3; ++i) CHECK(back.log_pi[i] == doctest::Approx(m.log_pi[i]).epsilon(1e-14));
    for (std::size_t i = 0; i < 9; ++i) CHECK(back.log_a[i] == doctest::Approx(m.log_a[i]).epsilon(1e-14));
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(back.emissions[k].mean == m.emissions[k].mean);
      CHECK(back.emissions[k].log_std == m.emissions[k].log_std);
    }
  }
}
