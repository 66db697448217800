#include <doctest.h>

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "derrt/bench/heatmap.hpp"
#include "derrt/bench/pool.hpp"
#include "derrt/bench/report.hpp"
#include "derrt/numerics/rng.hpp"

using namespace derrt;
using namespace derrt::bench;

namespace {

std::vector<TrialRecord> random_records(std::uint64_t seed) {
  num::RngStream rng(seed, 1);
  std::vector<TrialRecord> out;
  const char* planners[] = {"rrt_star", "derrt_hmm", "derrt_gru"};
  for (std::size_t t = 0; t < 30; ++t)
    for (int p = 0; p < 3; ++p)
      for (int agents : {0, 4}) {
        TrialRecord r;
        r.trial = t;
        r.seed = 100 + t;
        r.planner = planners[p];
        r.agents = agents;
        r.success = rng.uniform() < 0.3 + 0.2 * p;
        r.length = rng.uniform(50.0, 150.0);
        r.proposed = 100 + rng.uniform_int(500);
        r.valid = rng.uniform_int(r.proposed + 1);
        r.seconds = rng.uniform();
        out.push_back(r);
      }
  return out;
}

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("heatmap pixels follow the anchored scale") {
    HeatmapGrid g(10, 6);
    num::RngStream rng(1, 1);
    std::vector<std::uint64_t> ref(60, 0);
    for (int i = 0; i < 5000; ++i) {
      const double x = rng.uniform(-2.0, 12.0), y = rng.uniform(-2.0, 8.0);
      g.add({x, y});
      const int cx = std::clamp(static_cast<int>(std::floor(x)), 0, 9);
      const int cy = std::clamp(static_cast<int>(std::floor(y)), 0, 5);
      ++ref[cy * 10 + cx];
    }
    CHECK(g.total() == 5000);
    for (int cy = 0; cy < 6; ++cy)
      for (int cx = 0; cx < 10; ++cx) {
        CHECK(g.count(cx, cy) == ref[cy * 10 + cx]);
        for (double anchor : {kPassageHeatAnchor, kBugtrapHeatAnchor, 0.05}) {
          const double frac = std::min(1.0, static_cast<double>(ref[cy * 10 + cx]) / 5000.0 / anchor);
          CHECK(g.pixel(cx, cy, anchor) == static_cast<int>(std::lround(255.0 * (1.0 - frac))));
        }
      }
  }

  TEST_CASE("heatmap edge cases") {
    HeatmapGrid one(4, 4);
    one.add({2.5, 1.5});
    CHECK(one.pixel(2, 1, 0.01) == 0);
    CHECK(one.pixel(0, 0, 0.01) == 255);

    // Uniform visits below the anchor render one flat gray.
    HeatmapGrid flat(10, 10);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) flat.add({x + 0.5, y + 0.5});
    const auto v = flat.pixel(0, 0, 0.02);
    CHECK(v == static_cast<int>(std::lround(255.0 * 0.5)));
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) CHECK(flat.pixel(x, y, 0.02) == v);

    HeatmapGrid empty(3, 2);
    CHECK_THROWS(empty.pixel(1, 1, 0.01));
    CHECK_THROWS(one.pixel(0, 0, 0.0));
  }

  TEST_CASE("PGM layout puts the top of the map first") {
    HeatmapGrid g(3, 2);
    g.add({0.5, 1.5});  // top-left in image space
    std::ostringstream os;
    write_pgm(os, g, 0.5);
    const std::string s = os.str();
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(s.size() == header.size() + 6);
    CHECK(s.substr(0, header.size()) == header);
    const auto* px = reinterpret_cast<const unsigned char*>(s.data() + header.size());
    CHECK(px[0] == 0);
    for (int i = 1; i < 6; ++i) CHECK(px[i] == 255);
  }

  TEST_CASE("tree dumps accumulate node positions") {
    std::istringstream in(
        "{\"id\":0,\"parent\":-1,\"x\":[1.5,1.5],\"cost\":0}\n"
        "{\"id\":1,\"parent\":0,\"x\":[2.5,1.5],\"cost\":1}\n"
        "\n"
        "{\"id\":2,\"parent\":1,\"x\":[2.7,1.2],\"cost\":1.4}\n");
    HeatmapGrid g(4, 4);
    accumulate_tree_jsonl(g, in);
    CHECK(g.total() == 3);
    CHECK(g.count(1, 1) == 1);
    CHECK(g.count(2, 1) == 2);
    std::istringstream bad("{\"id\":0}\n");
    CHECK_THROWS(accumulate_tree_jsonl(g, bad));
  }

  TEST_CASE("median and bootstrap") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS(median({}));
    const std::vector<double> v{1, 0, 0, 1, 1, 1, 0, 1, 0, 1};
    CHECK(bootstrap_std(v, 1000, 5) == bootstrap_std(v, 1000, 5));
    CHECK(bootstrap_std(v, 1000, 5) != bootstrap_std(v, 1000, 6));
    // Large-sample bootstrap std of a mean approaches sqrt(p (1 - p) / n).
    CHECK(bootstrap_std(v, 20000, 1) == doctest::Approx(std::sqrt(0.6 * 0.4 / 10.0)).epsilon(0.05));
    CHECK(bootstrap_std(std::vector<double>(8, 1.0), 100, 1) == 0.0);
    CHECK(bootstrap_std({}, 100, 1) == 0.0);
  }

  TEST_CASE("summaries agree with a recomputation from the records") {
    const auto recs = random_records(2);
    const auto sums = summarize(recs, 9);
    REQUIRE(sums.size() == 6);
    CHECK(sums[0].planner == "rrt_star");
    CHECK(sums[0].agents == 0);
    CHECK(sums[1].agents == 4);
    for (const auto& s : sums) {
      std::vector<double> lengths, fr;
      std::size_t n = 0, ok = 0, prop = 0, val = 0;
      for (const auto& r : recs) {
        if (r.planner != s.planner || r.agents != s.agents) continue;
        ++n;
        prop += r.proposed;
        val += r.valid;
        fr.push_back(static_cast<double>(r.valid) / r.proposed);
        if (r.success) {
          ++ok;
          lengths.push_back(r.length);
        }
      }
      CHECK(s.trials == n);
      CHECK(s.successes == ok);
      CHECK(s.success_rate == doctest::Approx(static_cast<double>(ok) / n));
      CHECK(s.valid_fraction == doctest::Approx(static_cast<double>(val) / prop));
      CHECK(s.valid_fraction_median == doctest::Approx(median(fr)));
      REQUIRE(s.length_mean.has_value());
      double m = 0.0;
      for (double l : lengths) m += l;
      m /= lengths.size();
      double ss = 0.0;
      for (double l : lengths) ss += (l - m) * (l - m);
      CHECK(*s.length_mean == doctest::Approx(m));
      CHECK(*s.length_median == doctest::Approx(median(lengths)));
      CHECK(*s.length_stderr == doctest::Approx(std::sqrt(ss / (lengths.size() - 1)) / std::sqrt(lengths.size())));
      CHECK(s.success_std > 0.0);
    }
    CHECK(summarize(recs, 9)[3].success_std == sums[3].success_std);

    std::vector<TrialRecord> failed(3);
    for (auto& r : failed) r.planner = "x";
    const auto none = summarize(failed, 1);
    CHECK_FALSE(none[0].length_mean.has_value());
    CHECK(none[0].success_rate == 0.0);
  }

  TEST_CASE("report JSON omits wall times unless asked") {
    BenchmarkReport rep;
    rep.experiment = "passage";
    rep.config = {{"seed", 1}};
    rep.trials = random_records(3);
    rep.summaries = summarize(rep.trials, 1);
    rep.timing = {{"total_seconds", 12.5}};
    const auto plain = to_json(rep, false), timed = to_json(rep, true);
    CHECK(plain.at("version") == kReportVersion);
    CHECK_FALSE(plain.contains("timing"));
    CHECK_FALSE(plain.at("trials")[0].contains("seconds"));
    CHECK(timed.contains("timing"));
    CHECK(timed.at("trials")[0].contains("seconds"));
    CHECK(plain.at("summaries").size() == 6);
    CHECK(rep.summary("derrt_gru", 4).planner == "derrt_gru");
    CHECK_THROWS(rep.summary("missing"));
    for (std::size_t i = 0; i < rep.trials.size(); ++i)
      CHECK(plain.at("trials")[i].at("length").is_null() == !rep.trials[i].success);
  }

  TEST_CASE("curve CSV") {
    std::vector<CurvePoint> c{{"rrt_star", 100, 0.5, 12.25, 0.75}, {"derrt_gru", 200, 0.0, std::nullopt, 0.5}};
    CHECK(curves_csv(c) ==
          "planner,samples,success_rate,length_mean,valid_fraction_median\n"
          "rrt_star,100,0.5,12.25,0.75\n"
          "derrt_gru,200,0,,0.5\n");
  }

  TEST_CASE("run_trials returns results in index order") {
    for (std::size_t workers : {1u, 2u, 4u}) {
      const auto out = run_trials(50, workers, [](std::size_t i) {
        std::this_thread::sleep_for(std::chrono::microseconds((50 - i) * 20));
        return static_cast<int>(i * i);
      });
      REQUIRE(out.size() == 50);
      for (std::size_t i = 0; i < 50; ++i) CHECK(out[i] == static_cast<int>(i * i));
    }
    CHECK(run_trials(0, 2, [](std::size_t) { return 1; }).empty());
    CHECK(worker_count() >= 1);
  }

  TEST_CASE("run_trials propagates the first exception") {
    std::atomic<int> ran{0};
    CHECK_THROWS_WITH_AS(run_trials(20, 3,
                                    [&](std::size_t i) {
                                      ++ran;
                                      if (i == 7) throw std::runtime_error("trial 7 failed");
                                      return 0;
                                    }),
                         "trial 7 failed", std::runtime_error);
    CHECK(ran.load() == 20);
  }
}
