#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "edgepart/learn.hpp"

using namespace edgepart;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("softmax basics") {
  auto p = softmax({1.0, 1.0, 1.0});
  for (double x : p) CHECK(x == doctest::Approx(1.0 / 3));
  auto q = softmax({1000.0, 0.0});  // overflow-safe
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[0] + q[1] == doctest::Approx(1.0));
}

TEST_CASE("gumbel-softmax class frequencies match the categorical") {
  Rng rng(42);
  // logits {5, 0}: p0 = 1/(1+e^-5) ~ 0.99331
  int hits = 0;
  const int n = 20000;
  double lp0 = 0.0;
  for (int i = 0; i < n; ++i) {
    auto s = gumbel_softmax_sample({5.0, 0.0}, 0.7, rng);
    CHECK(s.relaxed.size() == 2);
    CHECK(s.relaxed[0] + s.relaxed[1] == doctest::Approx(1.0));
    if (s.symbol == 0) {
      ++hits;
      lp0 = s.log_prob;
    }
  }
  double p0 = 1.0 / (1.0 + std::exp(-5.0));
  double freq = static_cast<double>(hits) / n;
  CHECK(std::abs(freq - p0) < 4 * std::sqrt(p0 * (1 - p0) / n));
  CHECK(lp0 == doctest::Approx(std::log(p0)));
  CHECK_THROWS_AS(gumbel_softmax_sample({0.0, 0.0}, 0.0, rng), std::invalid_argument);
}

TEST_CASE("gae hand oracle") {
  // gamma=1, lambda=1 degenerates to reward-to-go minus value
  auto g = gae({1.0, 1.0}, {0.0, 0.0}, 0.0, 1.0, 1.0);
  CHECK(g.advantages[0] == doctest::Approx(2.0));
  CHECK(g.advantages[1] == doctest::Approx(1.0));
  CHECK(g.returns[0] == doctest::Approx(2.0));
  // gamma=0: advantage is the TD error r - v
  auto g0 = gae({1.0, 2.0}, {0.5, 0.5}, 0.0, 1e-12, 0.5);
  CHECK(g0.advantages[1] == doctest::Approx(1.5));
  CHECK_THROWS_AS(gae({1.0}, {}, 0.0, 0.9, 0.9), std::invalid_argument);
}

TEST_CASE("temperature annealing floors at temp_min") {
  double t = 1.0;
  for (int i = 0; i < 10000; ++i) t = anneal_temperature(t, 0.99, 0.1);
  CHECK(t == doctest::Approx(0.1));
  CHECK(anneal_temperature(1.0, 0.5, 0.1) == doctest::Approx(0.5));
}

TEST_CASE("mlp gradients match finite differences") {
  Rng rng(3);
  Mlp net({4, 6, 3}, rng);
  auto x = random_vec(4, rng);
  auto w = random_vec(3, rng);  // scalar objective: w . f(x)

  Mlp::Trace tr;
  net.forward(x, &tr);
  auto grads = net.zero_grads();
  std::vector<double> d_input;
  net.backward(tr, w, grads, &d_input);
  auto flat = Mlp::flatten_grads(grads);

  auto params = net.get_params();
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); i += 7) {  // sampled coordinates
    auto p = params;
    p[i] += h;
    net.set_params(p);
    auto up = net.forward(x);
    p[i] -= 2 * h;
    net.set_params(p);
    auto dn = net.forward(x);
    net.set_params(params);
    double fd = 0.0;
    for (std::size_t k = 0; k < 3; ++k) fd += w[k] * (up[k] - dn[k]);
    fd /= 2 * h;
    CHECK(rel_err(fd, flat[i]) < 1e-5);
  }
  // input gradient
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xx = x;
    xx[i] += h;
    auto up = net.forward(xx);
    xx[i] -= 2 * h;
    auto dn = net.forward(xx);
    double fd = 0.0;
    for (std::size_t k = 0; k < 3; ++k) fd += w[k] * (up[k] - dn[k]);
    fd /= 2 * h;
    CHECK(rel_err(fd, d_input[i]) < 1e-5);
  }
}

TEST_CASE("hierarchical policy shapes and action plumbing") {
  Rng rng(5);
  HierarchicalPolicy pol(6, 3, 2, rng, 8, 4, 3);
  CHECK(pol.layers() == 3);
  CHECK(pol.group_logits() == 7);
  auto x = random_vec(6, rng);
  auto logits = pol.forward(x);
  REQUIRE(logits.size() == 3);
  for (const auto& l : logits) CHECK(l.size() == 7);

  auto sample = pol.sample(logits, 1.0, rng);
  CHECK(sample.action.size() == 9);  // 3 layers x (2 heads + 1 ffn)
  for (std::size_t k = 0; k < sample.action.size(); ++k) {
    int lim = (k % 3 == 2) ? 3 : 2;
    CHECK(sample.action[k] >= 0);
    CHECK(sample.action[k] < lim);
  }
  auto info = pol.log_prob(logits, sample.action);
  CHECK(info.log_prob == doctest::Approx(sample.log_prob));
  CHECK(info.entropy > 0.0);

  auto greedy = pol.greedy_action(logits);
  auto ginfo = pol.log_prob(logits, greedy);
  CHECK(ginfo.log_prob >= info.log_prob - 1e-12);

  // parameter vector round trip
  auto p = pol.get_params();
  HierarchicalPolicy other(6, 3, 2, rng, 8, 4, 3);
  other.set_params(p);
  auto logits2 = other.forward(x);
  for (int l = 0; l < 3; ++l)
    for (int j = 0; j < 7; ++j) CHECK(logits2[l][j] == doctest::Approx(logits[l][j]));
}

TEST_CASE("policy log-prob gradient matches finite differences") {
  Rng rng(7);
  HierarchicalPolicy pol(5, 2, 2, rng, 6, 4, 3);
  auto x = random_vec(5, rng);
  std::vector<int> action = {0, 1, 2, 1, 0, 1};

  auto objective = [&](HierarchicalPolicy& p) {
    auto lg = p.forward(x);
    auto info = p.log_prob(lg, action);
    return info.log_prob + 0.5 * info.entropy;
  };

  HierarchicalPolicy::Trace tr;
  auto logits = pol.forward(x, &tr);
  auto grads = pol.zero_grads();
  std::vector<std::vector<double>> d_logits(pol.layers());
  std::size_t k = 0;
  for (int l = 0; l < pol.layers(); ++l) {
    d_logits[l].assign(pol.group_logits(), 0.0);
    int off = 0;
    for (int g = 0; g <= pol.heads(); ++g, ++k) {
      int gsz = g < pol.heads() ? 2 : 3;
      std::vector<double> dg(gsz, 0.0);
      detail::add_group_logit_grad(pol.group(logits[l], g), action[k], 1.0, 0.5, dg);
      for (int j = 0; j < gsz; ++j) d_logits[l][off + j] += dg[j];
      off += gsz;
    }
  }
  pol.backward(tr, d_logits, grads);
  auto flat = pol.flatten_grads(grads);

  auto params = pol.get_params();
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); i += 11) {
    auto p = params;
    p[i] += h;
    pol.set_params(p);
    double up = objective(pol);
    p[i] -= 2 * h;
    pol.set_params(p);
    double dn = objective(pol);
    pol.set_params(params);
    CHECK(rel_err((up - dn) / (2 * h), flat[i]) < 1e-5);
  }
}

TEST_CASE("ppo update runs and reports sane stats") {
  Rng rng(11);
  HierarchicalPolicy pol(4, 2, 2, rng, 6, 4, 3);
  DualCritics critics{Mlp({4, 6, 1}, rng), Mlp({4, 6, 1}, rng)};
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.buffer_size = 8;
  cfg.ppo_epochs = 2;

  TrajectoryBatch batch;
  for (int i = 0; i < 8; ++i) {
    Transition t;
    t.features = random_vec(4, rng);
    auto logits = pol.forward(t.features);
    auto s = pol.sample(logits, 1.0, rng);
    t.action = s.action;
    t.log_prob = s.log_prob;
    t.reward = -1.0 + 0.1 * i;
    t.perf_reward = t.reward;
    t.v_weight = 1.0;
    t.value_perf = critics.perf.forward(t.features)[0];
    t.value_stab = critics.stab.forward(t.features)[0];
    t.q_target = 2.0;
    batch.push_back(std::move(t));
  }
  Adam a(pol.get_params().size(), cfg.lr_actor);
  Adam p(critics.perf.get_params().size(), cfg.lr_critic);
  Adam st(critics.stab.get_params().size(), cfg.lr_critic);
  auto before = pol.get_params();
  auto stats = ppo_update(pol, critics, batch, cfg, a, p, st);
  CHECK_FALSE(stats.aborted);
  CHECK(std::isfinite(stats.policy_loss));
  CHECK(stats.perf_critic_loss >= 0.0);
  CHECK(stats.stab_critic_loss >= 0.0);
  CHECK(stats.clip_fraction >= 0.0);
  CHECK(stats.clip_fraction <= 1.0);
  CHECK(stats.entropy > 0.0);
  CHECK(pol.get_params() != before);
  CHECK_THROWS_AS(ppo_update(pol, critics, {}, cfg, a, p, st), std::invalid_argument);

  // repeated regression on a fixed batch drives the stab critic toward q_target
  double first = stats.stab_critic_loss;
  for (int i = 0; i < 60; ++i) stats = ppo_update(pol, critics, batch, cfg, a, p, st);
  CHECK(stats.stab_critic_loss < first);
}

TEST_CASE("online adaptation") {
  Rng rng(13);
  HierarchicalPolicy pol(4, 2, 2, rng, 6, 4, 3);
  CHECK_FALSE(online_adapt(pol, {}, 1e-3, 2.0, 0.99, 0.95));
  TrajectoryBatch recent;
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.features = random_vec(4, rng);
    auto s = pol.sample(pol.forward(t.features), 1.0, rng);
    t.action = s.action;
    t.log_prob = s.log_prob;
    t.perf_reward = -1.0;
    t.v_weight = 1.0;
    t.q_target = 1.0;
    recent.push_back(std::move(t));
  }
  auto before = pol.get_params();
  CHECK(online_adapt(pol, recent, 1e-3, 2.0, 0.99, 0.95));
  CHECK(pol.get_params() != before);
  // alpha 0 is a sanctioned no-op
  auto mid = pol.get_params();
  CHECK(online_adapt(pol, recent, 0.0, 2.0, 0.99, 0.95));
  CHECK(pol.get_params() == mid);
}
