#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "derrt/env/collision.hpp"
#include "derrt/env/features.hpp"
#include "derrt/training/trainers.hpp"

using namespace derrt;
using namespace derrt::training;

namespace {

CollectOptions small_collect(env::ObservationKind kind, std::uint64_t seed) {
  CollectOptions o;
  o.kind = kind;
  o.seed = seed;
  o.n_envs = 4;
  switch (kind) {
    case env::ObservationKind::passage: o.budget = 3000; o.radius = 10.0; break;
    case env::ObservationKind::bugtrap: o.budget = 3000; o.radius = 5.0; break;
    case env::ObservationKind::roundabout: o.budget = 60; o.radius = 5.0; o.n_envs = 2; break;
  }
  return o;
}

env::Environment regenerate(const CollectOptions& o, std::uint64_t env_seed) {
  switch (o.kind) {
    case env::ObservationKind::passage: return env::gen_narrow_passage(env_seed, o.passage_width, o.passage_height, o.passage);
    case env::ObservationKind::bugtrap: return env::gen_bugtrap(env_seed);
    case env::ObservationKind::roundabout: return env::gen_roundabout(env_seed, o.agents);
  }
  return {};
}

TraceDataset toy_dataset() {
  // Ten straight-line traces on an open map that always step +3 in x.
  TraceDataset ds;
  ds.schema = schema_for(env::ObservationKind::passage);
  ds.generator = "passage";
  ds.radius = 5.0;
  for (int i = 0; i < 10; ++i) {
    Trace tr;
    tr.sequence.world_width = tr.sequence.world_height = 100.0;
    env::Configuration x{10.0, 10.0 + 7.0 * i};
    for (int t = 0; t < 6; ++t) {
      neural::SequenceStep st;
      st.x_prev = x;
      st.x_next = {x[0] + 3.0, x[1]};
      st.mu = {x[0] + 3.0, x[1] + (t % 2 ? 2.0 : -2.0)};
      st.observation = {x[0] / 100.0, 0.0, x[0] / 100.0, x[1] / 100.0};
      st.t = t;
      tr.sequence.steps.push_back(st);
      tr.next_features.push_back({100.0 - st.x_next[0], 0.0, st.x_next[0] / 100.0, st.x_next[1] / 100.0});
      x = st.x_next;
    }
    ds.traces.push_back(std::move(tr));
  }
  ds.validate();
  return ds;
}

neural::ArchConfig toy_arch() {
  neural::ArchConfig a = default_arch(env::ObservationKind::passage, 5.0);
  a.hidden = 8;
  a.embed_dim = 4;
  return a;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("datasets round-trip through JSONL") {
    for (auto kind : {env::ObservationKind::passage, env::ObservationKind::bugtrap, env::ObservationKind::roundabout}) {
      for (auto mu : {MuSource::executed, MuSource::sampled}) {
        auto opt = small_collect(kind, 3);
        opt.mu = mu;
        const auto ds = collect_traces(opt);
        CAPTURE(env::to_string(kind));
        CHECK_NOTHROW(ds.validate());
        CHECK(ds.mu == mu);
        std::stringstream ss;
        write_dataset(ss, ds);
        const auto back = read_dataset(ss);
        CHECK(back == ds);
      }
    }
    const auto ds = toy_dataset();
    const auto dir = std::filesystem::temp_directory_path() / ("derrt_unit_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    save_dataset(dir / "toy.jsonl", ds);
    CHECK(load_dataset(dir / "toy.jsonl") == ds);
    std::filesystem::remove_all(dir);
    std::stringstream bad("{\"not\": \"a header\"}\n");
    CHECK_THROWS(read_dataset(bad));
  }

  TEST_CASE("harvested traces replay collision-free") {
    for (auto kind : {env::ObservationKind::passage, env::ObservationKind::bugtrap, env::ObservationKind::roundabout}) {
      const auto opt = small_collect(kind, 5);
      const auto ds = collect_traces(opt);
      CAPTURE(env::to_string(kind));
      CHECK_FALSE(ds.traces.empty());
      for (const auto& tr : ds.traces) {
        const auto e = regenerate(opt, tr.env_seed);
        const auto& steps = tr.sequence.steps;
        REQUIRE_FALSE(steps.empty());
        CHECK(steps.front().x_prev == e.start);
        CHECK(e.in_goal(steps.back().x_next));
        for (std::size_t i = 0; i < steps.size(); ++i) {
          const auto& s = steps[i];
          CHECK(env::segment_free(e, s.x_prev, s.x_next, s.t));
          CHECK(env::point_free(e, s.x_next, s.t + (kind == env::ObservationKind::roundabout ? 1 : 0)));
          CHECK(env::distance(s.x_prev, s.x_next) <= opt.radius + 1e-9);
          CHECK(s.mu == s.x_next);
          if (i > 0) CHECK(s.x_prev == steps[i - 1].x_next);
          CHECK(s.observation == env::local_observation(kind, e, s.x_prev, s.t));
          if (kind != env::ObservationKind::bugtrap)
            CHECK(tr.next_features[i] == env::hmm_env_features(kind, e, s.x_next, s.t));
        }
      }
    }
  }

  TEST_CASE("sampled steering targets stay inside the steering ball") {
    auto opt = small_collect(env::ObservationKind::passage, 6);
    opt.mu = MuSource::sampled;
    const auto ds = collect_traces(opt);
    for (const auto& tr : ds.traces)
      for (const auto& s : tr.sequence.steps) CHECK(env::distance(s.x_prev, s.mu) <= opt.radius + 1e-9);
    CHECK(to_string(MuSource::sampled) == "sampled");
    CHECK(mu_source_from_string("executed") == MuSource::executed);
    CHECK_THROWS(mu_source_from_string("other"));
  }

  TEST_CASE("collection fails loudly when nothing succeeds") {
    auto opt = small_collect(env::ObservationKind::bugtrap, 7);
    opt.budget = 1;
    CHECK_THROWS_AS(collect_traces(opt), std::runtime_error);
    opt.n_envs = 0;
    CHECK_THROWS_AS(collect_traces(opt), std::invalid_argument);
  }

  TEST_CASE("HMM sequences are step offsets plus environment features") {
    const auto ds = toy_dataset();
    const auto seqs = hmm_sequences(ds);
    REQUIRE(seqs.size() == ds.traces.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto& tr = ds.traces[i];
      REQUIRE(seqs[i].size() == tr.sequence.steps.size());
      for (std::size_t t = 0; t < seqs[i].size(); ++t) {
        const auto& s = tr.sequence.steps[t];
        std::vector<double> f{s.x_next[0] - s.mu[0], s.x_next[1] - s.mu[1]};
        f.insert(f.end(), tr.next_features[t].begin(), tr.next_features[t].end());
        CHECK(seqs[i][t] == f);
      }
    }
  }

  TEST_CASE("trained HMM beats its initialization on held-out traces") {
    auto opt = small_collect(env::ObservationKind::passage, 11);
    opt.n_envs = 12;
    const auto train = collect_traces(opt);
    opt.seed = 12;
    const auto held = collect_traces(opt);
    HmmTrainOptions ho;
    ho.seed = 1;
    ho.max_iters = 50;
    const auto r = train_hmm(train, ho);
    CHECK(r.sequences_used > 0);
    CHECK_NOTHROW(r.model.validate());

    hmm::EmOptions eo;
    eo.states = ho.states;
    eo.seed = ho.seed;
    eo.feature_variance_floor = {std::pow(ho.offset_std_frac * train.radius, 2), std::pow(ho.offset_std_frac * train.radius, 2)};
    const auto init = hmm::em_initial_model(hmm_sequences(train), eo);
    double trained = 0.0, initial = 0.0;
    for (const auto& s : hmm_sequences(held)) {
      if (s.size() < 2) continue;
      trained += hmm::sequence_log_likelihood(r.model, s);
      initial += hmm::sequence_log_likelihood(init, s);
    }
    CHECK(trained > initial);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
      CHECK(r.log_likelihood[i] >= r.log_likelihood[i - 1] - 1e-8);
  }

  TEST_CASE("recurrent training lowers the loss on a toy set") {
    const auto ds = toy_dataset();
    RecurrentTrainOptions o;
    o.epochs = 20;  // 10 traces -> 200 updates
    o.seed = 3;
    const auto r = train_recurrent(ds, toy_arch(), o);
    REQUIRE(r.epoch_loss.size() == 20);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    CHECK(r.gate.ok());
    const double before = mean_step_nll(neural::RecurrentSteeringModel(toy_arch(), o.seed), ds);
    CHECK(mean_step_nll(r.model, ds) < before);
    CHECK(mean_step_nll(r.model, ds) == doctest::Approx(r.epoch_loss.back()).epsilon(0.5));
  }

  TEST_CASE("recurrent training is deterministic") {
    const auto ds = toy_dataset();
    RecurrentTrainOptions o;
    o.epochs = 3;
    o.seed = 8;
    const auto a = train_recurrent(ds, toy_arch(), o), b = train_recurrent(ds, toy_arch(), o);
    CHECK(a.epoch_loss == b.epoch_loss);
    for (const auto& n : a.model.parameter_names()) {
      const auto x = a.model.parameter(n).value().values(), y = b.model.parameter(n).value().values();
      CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    }
    o.seed = 9;
    CHECK(train_recurrent(ds, toy_arch(), o).epoch_loss != a.epoch_loss);
  }

  TEST_CASE("HMM training is deterministic and rejects unusable data") {
    const auto ds = toy_dataset();
    HmmTrainOptions o;
    o.states = 2;
    o.seed = 4;
    const auto a = train_hmm(ds, o), b = train_hmm(ds, o);
    CHECK(a.model.log_a == b.model.log_a);
    CHECK(a.log_likelihood == b.log_likelihood);

    auto trap = ds;
    trap.schema = schema_for(env::ObservationKind::bugtrap);
    CHECK_THROWS(train_hmm(trap, o));
    auto shortened = ds;
    for (auto& tr : shortened.traces) {
      tr.sequence.steps.resize(1);
      tr.next_features.resize(1);
    }
    CHECK_THROWS(train_hmm(shortened, o));
  }

  TEST_CASE("make_trace with executed mu") {
    const auto e = env::gen_narrow_passage(2, 300, 300);
    num::RngStream rng(1, 1);
    const std::vector<env::Configuration> path{e.start, {e.start[0] + 3.0, e.start[1]}, {e.start[0] + 6.0, e.start[1] + 1.0}};
    const auto tr = make_trace(e, env::ObservationKind::passage, path, {}, MuSource::executed, 10.0, rng);
    REQUIRE(tr.sequence.steps.size() == 2);
    CHECK(tr.sequence.steps[1].x_prev == path[1]);
    CHECK(tr.sequence.steps[1].mu == path[2]);
    CHECK(tr.sequence.world_width == 300.0);
    const auto f = env::passage_features(e, path[2]);
    CHECK(tr.next_features[1] == std::vector<double>(f.begin(), f.end()));
  }
}
