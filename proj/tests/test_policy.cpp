#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "edgepart/policy.hpp"

using namespace edgepart;

namespace {
ModelSpec toy() { return make_model_spec("toy", 2, 2, 64, 1e6); }
NetworkState wifi() { return {100e6, 0.010, 0.0, 0.0}; }
}  // namespace

TEST_CASE("baseline controllers") {
  auto s = toy();
  DeviceProfile dev;
  SystemState st;
  auto e = make_baseline("edge-only", s);
  auto c = make_baseline("cloud-only", s);
  auto l = make_baseline("layer-split", s);
  CHECK(e->decide(st, s, dev, wifi()) == edge_only(s));
  CHECK(c->decide(st, s, dev, wifi()) == cloud_only(s));
  CHECK(l->decide(st, s, dev, wifi()) == layer_split(s, 1));
  auto l0 = make_baseline("layer-split", s, 0);
  CHECK(l0->decide(st, s, dev, wifi()) == cloud_only(s));
  CHECK_THROWS_AS(make_baseline("oracle", s), std::invalid_argument);

  auto l13 = build_model_spec("llama-13b");
  auto big = make_baseline("edge-only", l13);
  CHECK_THROWS_AS(big->decide(st, l13, dev, wifi()), InfeasibleError);
}

TEST_CASE("candidate construction") {
  auto s = toy();
  DeviceProfile dev;
  auto coarse = build_candidates(s, dev);
  // edge, cloud, splits 0..L with duplicates removed
  CHECK(coarse.plans.size() == static_cast<std::size_t>(s.layers + 1));
  for (const auto& p : coarse.plans) CHECK(validate(p, s, dev).ok());
  for (std::size_t i = 0; i < coarse.plans.size(); ++i)
    for (std::size_t j = i + 1; j < coarse.plans.size(); ++j)
      CHECK_FALSE(coarse.plans[i] == coarse.plans[j]);

  auto fine = build_candidates(s, dev, 2);
  CHECK(fine.plans.size() > coarse.plans.size());
  for (const auto& p : fine.plans) CHECK(validate(p, s, dev).ok());

  DeviceProfile tiny = dev;
  tiny.mem_edge = 1.0;
  auto forced_cloud = build_candidates(s, tiny);
  CHECK(forced_cloud.plans.size() == 1);
  CHECK(forced_cloud.plans[0] == cloud_only(s));
}

TEST_CASE("candidate scoring decomposition") {
  auto s = toy();
  DeviceProfile dev;
  SystemState st;
  st.queue = 10.0;
  st.arrival_rate = 3.0;
  st.seq_len = 64;
  CostWeights w;
  CostOptions opt;
  auto plan = cloud_only(s);
  auto sc = score_candidate(plan, st, s, dev, wifi(), 2.0, w, opt, nullptr);
  CHECK(sc.latency > 0.0);
  CHECK(sc.drift == doctest::Approx(10.0 * (3.0 - 1.0 / sc.latency)));
  CHECK(sc.score == doctest::Approx(sc.drift + 2.0 * sc.cost));
  auto nc = score_candidate(plan, st, s, dev, wifi(), 2.0, w, opt, nullptr, false);
  CHECK(nc.score == doctest::Approx(2.0 * nc.cost));
}

TEST_CASE("greedy decision matches brute force on random states") {
  auto s = toy();
  DeviceProfile dev;
  CostWeights w;
  CostOptions opt;
  auto cands = build_candidates(s, dev, 2);
  Rng rng(17);
  std::uniform_real_distribution<double> uq(0.0, 40.0), ul(0.5, 8.0), ub(5e6, 100e6);
  std::uniform_int_distribution<int> un(16, 512);
  for (int trial = 0; trial < 100; ++trial) {
    SystemState st;
    st.queue = uq(rng);
    st.arrival_rate = ul(rng);
    st.seq_len = un(rng);
    NetworkState net{ub(rng), 0.02, 0.0, 0.0};
    double v = ul(rng);
    std::size_t got = greedy_dpp_decide(st, cands, s, dev, net, v, w, opt, nullptr);
    std::size_t want = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.plans.size(); ++i) {
      double sc = score_candidate(cands.plans[i], st, s, dev, net, v, w, opt, nullptr).score;
      if (sc < best) {
        best = sc;
        want = i;
      }
    }
    CHECK(got == want);
  }
}

TEST_CASE("greedy controller adapts with backlog") {
  auto s = toy();
  // make edge meaningfully slower than cloud so the tradeoff is real
  DeviceProfile dev;
  dev.cc_edge = 4e8;
  dev.cc_cloud = 4e9;
  CostWeights w;
  LyapunovConfig lyap;
  QuantConfig quant;
  quant.alpha = 1e-3;
  GreedyDppController ctl(s, dev, w, lyap, quant);
  CHECK(ctl.name() == "greedy-dpp");
  CHECK(ctl.candidates().plans.size() >= 3);

  SystemState st;
  st.arrival_rate = 3.0;
  st.seq_len = 64;
  st.queue = 0.0;
  auto p0 = ctl.decide(st, s, dev, wifi());
  CHECK(validate(p0, s, dev).ok());
  st.queue = 200.0;
  auto p1 = ctl.decide(st, s, dev, wifi());
  CHECK(validate(p1, s, dev).ok());

  GreedyDppOptions nodrift;
  nodrift.use_drift = false;
  GreedyDppController pure(s, dev, w, lyap, quant, {}, nodrift);
  CHECK(pure.name() == "greedy-cost");
  // pure cost ignores backlog entirely
  st.queue = 0.0;
  auto a = pure.decide(st, s, dev, wifi());
  st.queue = 500.0;
  auto b = pure.decide(st, s, dev, wifi());
  CHECK(a == b);
}
