#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "derrt/numerics/autodiff.hpp"
#include "derrt/numerics/gaussian.hpp"
#include "derrt/numerics/kernels.hpp"
#include "derrt/numerics/param_file.hpp"
#include "derrt/numerics/rng.hpp"
#include "derrt/numerics/sgd.hpp"
#include "derrt/numerics/tensor.hpp"

using namespace derrt;
using num::Tensor;
namespace ad = num::ad;

namespace {

Tensor random_tensor(num::RngStream& rng, num::Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5}); }

// Central differences of sum(out * weights) against backward(), over every input entry.
double fd_max_error(const std::function<ad::Var(const std::vector<ad::Var>&)>& f, std::vector<Tensor> inputs,
                    num::RngStream& rng) {
  std::vector<ad::Var> params;
  for (auto& t : inputs) params.push_back(ad::Var::parameter(t));
  const ad::Var out0 = f(params);
  const Tensor weights = random_tensor(rng, out0.shape());
  auto loss_of = [&](const std::vector<ad::Var>& ps) {
    return ad::sum(ad::mul(f(ps), ad::Var::constant(weights)));
  };
  ad::backward(loss_of(params));
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      auto value_at = [&](double delta) {
        ad::NoGradGuard guard;
        std::vector<ad::Var> ps;
        for (std::size_t q = 0; q < inputs.size(); ++q) {
          Tensor t = inputs[q];
          if (q == p) t[i] += delta;
          ps.push_back(ad::Var::constant(t));
        }
        return loss_of(ps).item();
      };
      const double numeric = (value_at(h) - value_at(-h)) / (2.0 * h);
      worst = std::max(worst, rel_err(params[p].grad()[i], numeric));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("gaussian_logpdf closed forms") {
    const num::DiagonalGaussian unit({0.0}, {0.0});
    const double x0[] = {0.0};
    CHECK(num::gaussian_logpdf(unit, x0) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));

    const std::vector<double> m{1.5, -2.0, 0.25};
    const double s[] = {0.5, 2.0, 3.0};
    const auto g = num::DiagonalGaussian::from_std(m, s);
    const double expect = -(std::log(0.5) + std::log(2.0) + std::log(3.0)) - 1.5 * std::log(2.0 * std::numbers::pi);
    CHECK(num::gaussian_logpdf(g, m) == doctest::Approx(expect).epsilon(1e-12));

    const double bad[] = {0.0, 0.0};
    CHECK_THROWS_AS(num::gaussian_logpdf(g, bad), std::invalid_argument);
  }

  TEST_CASE("gaussian_logpdf matches an independent formula on random inputs") {
    num::RngStream rng(11, 0);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 1 + rng.uniform_int(5);
      std::vector<double> mean(d), sd(d), x(d);
      double ref = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        mean[i] = rng.uniform(-5.0, 5.0);
        sd[i] = rng.uniform(0.01, 4.0);
        x[i] = rng.uniform(-8.0, 8.0);
        ref += std::log(1.0 / (sd[i] * std::sqrt(2.0 * std::numbers::pi)) *
                        std::exp(-(x[i] - mean[i]) * (x[i] - mean[i]) / (2.0 * sd[i] * sd[i])));
      }
      if (!std::isfinite(ref)) continue;
      const auto g = num::DiagonalGaussian::from_std(mean, sd);
      CHECK(num::gaussian_logpdf(g, x) == doctest::Approx(ref).epsilon(1e-10));
    }
  }

  TEST_CASE("gaussian density integrates to one") {
    for (double sd : {0.1, 1.0, 7.5}) {
      const std::vector<double> sdv{sd};
      const auto g = num::DiagonalGaussian::from_std({2.0}, sdv);
      const int n = 4000;
      const double lo = 2.0 - 8.0 * sd, hi = 2.0 + 8.0 * sd, step = (hi - lo) / n;
      double acc = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double x[] = {lo + i * step};
        acc += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(num::gaussian_logpdf(g, x));
      }
      CHECK(std::abs(acc * step - 1.0) < 1e-3);
    }
  }

  TEST_CASE("logsumexp") {
    const double two[] = {0.0, 0.0};
    CHECK(num::logsumexp(two) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const double low[] = {-1000.0, -1000.0};
    CHECK(num::logsumexp(low) == doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
    const double high[] = {1000.0, 1000.0};
    CHECK(num::logsumexp(high) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS(num::logsumexp(std::span<const double>{}));

    num::RngStream rng(12, 0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> v(1 + rng.uniform_int(20));
      for (auto& x : v) x = rng.uniform(-30.0, 30.0);
      long double acc = 0.0L;
      for (double x : v) acc += std::exp(static_cast<long double>(x));
      const double ref = static_cast<double>(std::log(acc));
      const double got = num::logsumexp(v);
      CHECK(std::abs(got - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
      const double mx = *std::max_element(v.begin(), v.end());
      CHECK(got >= mx);
      CHECK(got <= mx + std::log(static_cast<double>(v.size())) + 1e-12);
    }
  }

  TEST_CASE("RngStream reproducibility and ranges") {
    num::RngStream a(42, 7), b(42, 7), c(42, 8);
    bool differs = false;
    for (int i = 0; i < 10000; ++i) {
      const double x = a.uniform();
      CHECK(x == b.uniform());
      differs = differs || x != c.uniform();
      CHECK(x >= 0.0);
      CHECK(x < 1.0);
    }
    CHECK(differs);

    num::RngStream r(1, 1);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double z = r.normal();
      sum += z;
      sq += z * z;
      CHECK(r.uniform_int(7) < 7);
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
  }

  TEST_CASE("Tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.all_finite());
    t[4] = NAN;
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}));
    const Tensor r = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0}).reshaped({4});
    CHECK(r.shape() == num::Shape{4});
    CHECK(r[3] == 4.0);
  }

  TEST_CASE("backward of a sum of squares is 2x") {
    const auto x = ad::Var::parameter(Tensor::vector({1.0, -2.0, 3.5}));
    const auto leaves = ad::backward(ad::sum(ad::square(x)));
    CHECK(leaves.size() == 1);
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == -4.0);
    CHECK(x.grad()[2] == 7.0);
  }

  TEST_CASE("backward on constants, non-scalars and consumed graphs") {
    const auto c = ad::Var::constant(Tensor::vector({1.0, 2.0}));
    CHECK(ad::backward(ad::sum(ad::square(c))).empty());
    const auto x = ad::Var::parameter(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS(ad::backward(ad::square(x)));
    const auto loss = ad::sum(x);
    ad::backward(loss);
    CHECK_THROWS(ad::backward(loss));
  }

  TEST_CASE("primitive identities") {
    num::RngStream rng(13, 0);
    const Tensor a = random_tensor(rng, {3, 4});
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    CHECK(ad::matmul(ad::Var::constant(a), ad::Var::constant(eye)).value() == a);
    CHECK(ad::reshape(ad::Var::constant(a), {12}).value().storage() == a.storage());

    // A centered delta kernel copies the interior of the input.
    const Tensor img = random_tensor(rng, {1, 5, 5});
    Tensor k({1, 1, 3, 3});
    k[4] = 1.0;
    const auto out = ad::conv2d(ad::Var::constant(img), ad::Var::constant(k), ad::Var::constant(Tensor({1})));
    CHECK(out.shape() == num::Shape{1, 3, 3});
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 3; ++x) CHECK(out.value()[y * 3 + x] == img[(y + 1) * 5 + x + 1]);

    const Tensor p({1, 2, 4}, {1.0, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 7.0});
    const auto pooled = ad::maxpool2x2(ad::Var::constant(p));
    CHECK(pooled.shape() == num::Shape{1, 1, 2});
    CHECK(pooled.value()[0] == 5.0);
    CHECK(pooled.value()[1] == 7.0);

    const auto s = ad::slice(ad::Var::constant(Tensor::vector({1.0, 2.0, 3.0, 4.0})), 1, 2);
    CHECK(s.value().storage() == std::vector<double>{2.0, 3.0});
    CHECK(ad::relu(ad::Var::constant(Tensor::vector({-1.0, 2.0}))).value().storage() == std::vector<double>{0.0, 2.0});
  }

  TEST_CASE("every differentiable primitive passes finite differences") {
    using Fn = std::function<ad::Var(const std::vector<ad::Var>&)>;
    struct Case {
      const char* name;
      Fn f;
      std::vector<num::Shape> shapes;
      double lo = -1.0, hi = 1.0;
    };
    const std::vector<Case> cases{
        {"add", [](auto& v) { return ad::add(v[0], v[1]); }, {{5}, {5}}},
        {"sub", [](auto& v) { return ad::sub(v[0], v[1]); }, {{5}, {5}}},
        {"mul", [](auto& v) { return ad::mul(v[0], v[1]); }, {{5}, {5}}},
        {"scale", [](auto& v) { return ad::scale(ad::add_scalar(v[0], 0.3), -2.5); }, {{4}}},
        {"one_minus", [](auto& v) { return ad::one_minus(v[0]); }, {{4}}},
        {"tanh", [](auto& v) { return ad::tanh(v[0]); }, {{6}}, -2.0, 2.0},
        {"sigmoid", [](auto& v) { return ad::sigmoid(v[0]); }, {{6}}, -3.0, 3.0},
        {"softplus", [](auto& v) { return ad::softplus(v[0]); }, {{6}}, -3.0, 3.0},
        {"relu", [](auto& v) { return ad::relu(v[0]); }, {{6}}, 0.1, 2.0},
        {"exp", [](auto& v) { return ad::exp(v[0]); }, {{6}}},
        {"log", [](auto& v) { return ad::log(v[0]); }, {{6}}, 0.5, 3.0},
        {"square", [](auto& v) { return ad::square(v[0]); }, {{6}}},
        {"matmul", [](auto& v) { return ad::matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
        {"matvec", [](auto& v) { return ad::matmul(v[0], v[1]); }, {{3, 4}, {4}}},
        {"sum", [](auto& v) { return ad::sum(v[0]); }, {{7}}},
        {"concat", [](auto& v) { return ad::concat(std::vector<ad::Var>{v[0], v[1]}); }, {{3}, {2}}},
        {"slice", [](auto& v) { return ad::slice(v[0], 2, 3); }, {{7}}},
        {"reshape", [](auto& v) { return ad::reshape(v[0], {6}); }, {{2, 3}}},
        {"conv2d", [](auto& v) { return ad::conv2d(v[0], v[1], v[2]); }, {{2, 6, 5}, {3, 2, 3, 3}, {3}}},
        {"maxpool", [](auto& v) { return ad::maxpool2x2(v[0]); }, {{2, 4, 5}}},
        {"gaussian_logpdf",
         [](auto& v) {
           const double x[] = {0.3, -0.7};
           return ad::gaussian_logpdf(v[0], ad::add_scalar(ad::softplus(v[1]), 0.1), x);
         },
         {{2}, {2}}},
        {"logsumexp", [](auto& v) { return ad::logsumexp(v[0]); }, {{5}}, -5.0, 5.0},
    };
    for (const auto& c : cases) {
      CAPTURE(c.name);
      for (int trial = 0; trial < 100; ++trial) {
        num::RngStream rng(14, static_cast<std::uint64_t>(trial));
        std::vector<Tensor> inputs;
        for (const auto& s : c.shapes) inputs.push_back(random_tensor(rng, s, c.lo, c.hi));
        CHECK(fd_max_error(c.f, inputs, rng) < 1e-4);
      }
    }
  }

  TEST_CASE("sgd_step examples") {
    Tensor p = Tensor::vector({1.0, -3.0});
    const Tensor g = Tensor::vector({2.0, 5.0});
    std::vector<Tensor> vel;
    num::sgd_step({&p}, {&g}, 0.0, 0.9, vel);
    CHECK(p.storage() == std::vector<double>{1.0, -3.0});

    Tensor q = Tensor::scalar(1.0);
    const Tensor gq = Tensor::scalar(2.0);
    std::vector<Tensor> vq;
    num::sgd_step({&q}, {&gq}, 0.1, 0.0, vq);
    CHECK(q.item() == doctest::Approx(0.8).epsilon(1e-15));

    const Tensor wrong = Tensor::vector({1.0, 2.0, 3.0});
    std::vector<Tensor> vw;
    CHECK_THROWS(num::sgd_step({&p}, {&wrong}, 0.1, 0.0, vw));
  }

  TEST_CASE("momentum SGD reaches the minimum of a quadratic bowl") {
    // f(p) = sum a_i (p_i - c_i)^2, minimum at c.
    const std::vector<double> a{1.0, 3.0, 0.5}, c{2.0, -1.0, 4.0};
    auto p = ad::Var::parameter(Tensor::vector({0.0, 0.0, 0.0}));
    num::Sgd opt({p}, 0.05, 0.9);
    int steps = 0;
    for (; steps < 10000; ++steps) {
      const auto diff = ad::sub(p, ad::Var::constant(Tensor::vector(c)));
      ad::backward(ad::sum(ad::mul(ad::Var::constant(Tensor::vector(a)), ad::square(diff))));
      opt.step();
      double worst = 0.0;
      for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(p.value()[i] - c[i]));
      if (worst < 1e-6) break;
    }
    CHECK(steps < 10000);
  }

  TEST_CASE("OpenMP kernels are bit-identical to the serial references") {
    num::RngStream rng(15, 0);
    const num::kernels::ConvShape s{8, 11, 9, 16, 3, 3};
    const Tensor in = random_tensor(rng, {8, 11, 9});
    const Tensor w = random_tensor(rng, {16, 8, 3, 3});
    const Tensor b = random_tensor(rng, {16});
    std::vector<double> o1(16 * s.out_h() * s.out_w()), o2(o1.size());
    num::kernels::conv2d_forward_serial(s, in.data(), w.data(), b.data(), o1.data());
    num::kernels::conv2d_forward(s, in.data(), w.data(), b.data(), o2.data());
    CHECK(o1 == o2);
    // Naive reference for one output element.
    double ref = b[5];
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) ref += w[((5 * 8 + c) * 3 + ky) * 3 + kx] * in[(c * 11 + 2 + ky) * 9 + 4 + kx];
    CHECK(o1[(5 * s.out_h() + 2) * s.out_w() + 4] == doctest::Approx(ref).epsilon(1e-13));

    const Tensor go = random_tensor(rng, {16, s.out_h(), s.out_w()});
    std::vector<double> gi1(in.size()), gi2(in.size()), gw1(w.size()), gw2(w.size()), gb1(16), gb2(16);
    num::kernels::conv2d_backward_serial(s, in.data(), w.data(), go.data(), gi1.data(), gw1.data(), gb1.data());
    num::kernels::conv2d_backward(s, in.data(), w.data(), go.data(), gi2.data(), gw2.data(), gb2.data());
    CHECK(gi1 == gi2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);

    std::vector<double> p1(8 * 5 * 4), p2(p1.size());
    std::vector<std::size_t> a1(p1.size()), a2(p1.size());
    num::kernels::maxpool2x2_forward_serial(8, 11, 9, in.data(), p1.data(), a1.data());
    num::kernels::maxpool2x2_forward(8, 11, 9, in.data(), p2.data(), a2.data());
    CHECK(p1 == p2);
    CHECK(a1 == a2);

    const Tensor m = random_tensor(rng, {37, 53});
    const Tensor x = random_tensor(rng, {53});
    std::vector<double> y1(37), y2(37);
    num::kernels::matvec_serial(37, 53, m.data(), x.data(), y1.data());
    num::kernels::matvec(37, 53, m.data(), x.data(), y2.data());
    CHECK(y1 == y2);
  }

  TEST_CASE("parameter files round-trip byte for byte") {
    num::RngStream rng(16, 0);
    num::ParamFile f;
    f.manifest_json = R"({"kind":"test"})";
    f.tensors.push_back({"a", random_tensor(rng, {2, 3})});
    f.tensors.push_back({"b", random_tensor(rng, {4})});
    const std::string bytes = num::encode_params(f);
    const auto back = num::decode_params(bytes);
    CHECK(back.manifest_json == f.manifest_json);
    CHECK(back.get("a") == f.tensors[0].tensor);
    CHECK(back.get("b") == f.tensors[1].tensor);
    CHECK(num::encode_params(back) == bytes);
    std::string corrupt = bytes;
    corrupt[0] = 'X';
    CHECK_THROWS(num::decode_params(corrupt));
    CHECK_THROWS(num::decode_params(bytes.substr(0, bytes.size() - 3)));
    CHECK_THROWS(back.get("missing"));
  }
}
