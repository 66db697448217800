// Serial reference vs OpenMP variants of the encoder kernels and the trial pool.
#include <benchmark/benchmark.h>

#include <vector>

#include "derrt/bench/pool.hpp"
#include "derrt/env/generators.hpp"
#include "derrt/numerics/kernels.hpp"
#include "derrt/numerics/rng.hpp"
#include "derrt/planner/planner.hpp"

using namespace derrt;
namespace k = derrt::num::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  num::RngStream rng(seed, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

k::ConvShape conv_shape(const benchmark::State& st) {
  const auto c = static_cast<std::size_t>(st.range(0));
  return {c, 32, 32, 2 * c, 3, 3};
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& st) {
  const auto s = conv_shape(st);
  const auto in = random_vec(s.in_channels * s.height * s.width, 1);
  const auto w = random_vec(s.out_channels * s.in_channels * 9, 2);
  const auto b = random_vec(s.out_channels, 3);
  std::vector<double> out(s.out_channels * s.out_h() * s.out_w());
  for (auto _ : st) {
    if constexpr (Parallel)
      k::conv2d_forward(s, in.data(), w.data(), b.data(), out.data());
    else
      k::conv2d_forward_serial(s, in.data(), w.data(), b.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& st) {
  const auto s = conv_shape(st);
  const auto in = random_vec(s.in_channels * s.height * s.width, 1);
  const auto w = random_vec(s.out_channels * s.in_channels * 9, 2);
  const auto go = random_vec(s.out_channels * s.out_h() * s.out_w(), 3);
  std::vector<double> gi(in.size()), gw(w.size()), gb(s.out_channels);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::conv2d_backward(s, in.data(), w.data(), go.data(), gi.data(), gw.data(), gb.data());
    else
      k::conv2d_backward_serial(s, in.data(), w.data(), go.data(), gi.data(), gw.data(), gb.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Matvec(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto w = random_vec(n * n, 1);
  const auto x = random_vec(n, 2);
  std::vector<double> y(n);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::matvec(n, n, w.data(), x.data(), y.data());
    else
      k::matvec_serial(n, n, w.data(), x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * n));
}

// 16 baseline RRT* runs on the bug trap.
void BM_TrialPool(benchmark::State& st) {
  const auto workers = st.range(0) == 0 ? bench::worker_count() : static_cast<std::size_t>(st.range(0));
  const auto env = env::gen_bugtrap(3);
  for (auto _ : st) {
    const auto res = bench::run_trials(16, workers, [&](std::size_t i) {
      planner::PlannerConfig cfg;
      cfg.radius = 5.0;
      cfg.iterations = 800;
      cfg.seed = i;
      return planner::plan(env, nullptr, cfg).valid;
    });
    benchmark::DoNotOptimize(res.data());
  }
  st.counters["workers"] = static_cast<double>(workers);
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Arg(4)->Arg(16);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->Arg(4)->Arg(16);
BENCHMARK(BM_Matvec<false>)->Name("matvec/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_Matvec<true>)->Name("matvec/omp")->Arg(64)->Arg(512);
BENCHMARK(BM_TrialPool)->Name("trial_pool")->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
