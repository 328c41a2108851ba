#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "edgepart/learn.hpp"
#include "edgepart/lyapunov.hpp"
#include "edgepart/network.hpp"
#include "edgepart/policy.hpp"

namespace edgepart {

struct BackoffConfig {
  double base_s = 0.05;
  double multiplier = 2.0;
  int max_retries = 5;
};

struct EpisodeConfig {
  ModelSpec spec;
  DeviceProfile device;
  NetworkScenario scenario;
  WorkloadConfig workload;
  CostWeights weights;
  LyapunovConfig lyapunov;
  QuantConfig quant;
  CostOptions cost_opt;
  BackoffConfig backoff;
  int t_max = 1000;
  int window = 20;        // tau, slots, for moving statistics and Q_target
  int n_ref = 256;        // seq len used for costing when the queue is idle
  double lambda_max = 20.0;  // feature normalization
  double background_load = 1.0;  // scales CC_e available in the observation
  std::optional<double> fixed_v;  // pin V(t) instead of the adaptive schedule
};

struct MetricsReport {
  double p50 = 0.0, p95 = 0.0, p99 = 0.0;  // seconds, completed requests
  double mean_energy_per_request = 0.0;
  double mean_acc_penalty = 0.0;
  double mean_queue = 0.0;
  double max_queue = 0.0;
  double mean_cost = 0.0;    // time-average g
  double mean_reward = 0.0;
  bool stable = false;       // mean backlog over the final third below Q_critical
  std::uint64_t arrivals = 0;
  std::uint64_t completions = 0;
  std::uint64_t failed_final = 0;
  std::uint64_t residual = 0;
  std::string verdict = "ok";  // "ok" or "infeasible: ..."
};

struct Percentiles {
  double p50 = 0.0, p95 = 0.0, p99 = 0.0;
};

// Nearest-rank percentiles.
inline Percentiles percentiles(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("percentiles: empty sample");
  std::sort(xs.begin(), xs.end());
  auto rank = [&](double p) {
    std::size_t i = static_cast<std::size_t>(std::ceil(p / 100.0 * xs.size()));
    return xs[std::min(xs.size() - 1, i == 0 ? 0 : i - 1)];
  };
  return {rank(50.0), rank(95.0), rank(99.0)};
}

struct ExecOutcome {
  CostBreakdown costs;
  int failures = 0;      // failed transfer attempts across all boundaries
  bool exhausted = false;  // some boundary ran out of retries
};

// Evaluates the plan's costs under the instantaneous network state, then
// samples per-boundary transfer failures. Each failed attempt adds an
// exponential-backoff delay plus a re-transfer; running out of retries marks
// the whole execution failed for this slot.
inline ExecOutcome execute_partition(const PartitionPlan& plan, const ModelSpec& spec,
                                     int n, const DeviceProfile& device,
                                     const NetworkState& net, const BackoffConfig& backoff,
                                     const CostOptions& cost_opt, Rng& rng,
                                     AccuracyPenaltyCache* quant_cache = nullptr) {
  ExecOutcome out;
  out.costs = total_latency(plan, spec, n, device, net, cost_opt);
  out.costs.energy = energy(plan, spec, n, device, net, cost_opt);
  if (quant_cache) out.costs.acc_penalty = quant_cache->penalty(plan, n);

  double delay = 0.0;
  for (const auto& b : boundaries(plan, spec, n, cost_opt.boundary_precision_bytes)) {
    int attempts = 0;
    while (sample_transfer_failure(rng, net.loss, b.volume_bytes)) {
      if (attempts >= backoff.max_retries) {
        out.exhausted = true;
        break;
      }
      delay += backoff.base_s * std::pow(backoff.multiplier, attempts) +
               transfer_seconds(b, net);
      ++attempts;
      ++out.failures;
    }
    if (out.exhausted) break;
  }
  out.costs.t_comm += delay;
  out.costs.t_total += delay;
  return out;
}

namespace detail {

struct Window {
  std::deque<double> xs;
  std::size_t cap;

  explicit Window(std::size_t cap) : cap(cap) {}
  void push(double v) {
    xs.push_back(v);
    if (xs.size() > cap) xs.pop_front();
  }
  double mean(double if_empty = 0.0) const {
    if (xs.empty()) return if_empty;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  }
  double stdev() const {
    if (xs.size() < 2) return 0.0;
    double m = mean();
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / xs.size());
  }
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace detail

struct PendingRequest {
  Request req;
  bool retried = false;  // already re-enqueued once after a failed slot
};

struct EpisodeResult {
  TrajectoryBatch trajectory;
  MetricsReport metrics;
  std::string slots_csv;
  std::vector<double> queue_trace;  // fluid backlog per slot, after update
  PartitionPlan last_plan;
};

// Hook for controllers that expose RL bookkeeping (sampled action, log-prob,
// critic values) to the episode loop.
struct LearnedStepInfo {
  std::vector<double> features;
  std::vector<int> action;
  double log_prob = 0.0;
  double value_perf = 0.0;
  double value_stab = 0.0;
};

class RecordingController : public Controller {
 public:
  virtual const LearnedStepInfo* last_step_info() const = 0;
};

struct FeatureNorms {
  double q_critical = 50.0;
  double bandwidth_max = 100e6;
  double lambda_max = 20.0;
};

inline std::vector<double> state_features(const SystemState& s, const FeatureNorms& n) {
  std::vector<double> f = {
      s.queue / n.q_critical,        s.queue_avg / n.q_critical,
      s.bandwidth_bps / n.bandwidth_max, s.bandwidth_avg / n.bandwidth_max,
      s.bandwidth_std / n.bandwidth_max, s.arrival_rate / n.lambda_max,
      s.arrival_rate_avg / n.lambda_max, s.compute_avail,
      s.memory_avail};
  f.insert(f.end(), s.history.begin(), s.history.end());
  return f;
}

inline constexpr int kFeatureDim = 17;

class LearnedController : public RecordingController {
 public:
  LearnedController(HierarchicalPolicy policy, DualCritics critics, FeatureNorms norms,
                    Rng& rng, bool stochastic = true, double temperature = 1.0)
      : policy_(std::move(policy)), critics_(std::move(critics)), norms_(norms),
        rng_(&rng), stochastic_(stochastic), temperature_(temperature) {}

  std::string name() const override { return stochastic_ ? "learned" : "learned-greedy"; }

  void set_temperature(double t) { temperature_ = t; }
  void set_stochastic(bool s) { stochastic_ = s; }
  HierarchicalPolicy& policy() { return policy_; }
  DualCritics& critics() { return critics_; }

  PartitionPlan decide(const SystemState& state, const ModelSpec& spec,
                       const DeviceProfile& device, const NetworkState&) override {
    info_.features = state_features(state, norms_);
    auto logits = policy_.forward(info_.features);
    if (stochastic_) {
      auto s = policy_.sample(logits, temperature_, *rng_);
      info_.action = std::move(s.action);
      info_.log_prob = s.log_prob;
    } else {
      info_.action = policy_.greedy_action(logits);
      info_.log_prob = policy_.log_prob(logits, info_.action).log_prob;
    }
    info_.value_perf = critics_.perf.forward(info_.features)[0];
    info_.value_stab = critics_.stab.forward(info_.features)[0];
    auto plan = decode(info_.action, spec);
    auto v = validate(plan, spec, device);
    if (!v.ok())
      throw InfeasibleError("learned: sampled plan exceeds edge memory (required " +
                            std::to_string(v.required) + " B)");
    return plan;
  }

  const LearnedStepInfo* last_step_info() const override { return &info_; }

 private:
  HierarchicalPolicy policy_;
  DualCritics critics_;
  FeatureNorms norms_;
  Rng* rng_;
  bool stochastic_;
  double temperature_;
  LearnedStepInfo info_;
};

// Uniform random feasible plan each slot; resamples on memory rejection.
class RandomController : public Controller {
 public:
  explicit RandomController(Rng& rng, int max_tries = 64) : rng_(&rng), max_tries_(max_tries) {}

  std::string name() const override { return "random"; }

  PartitionPlan decide(const SystemState&, const ModelSpec& spec,
                       const DeviceProfile& device, const NetworkState&) override {
    std::uniform_int_distribution<int> bin(0, 1), tern(0, 2);
    for (int t = 0; t < max_tries_; ++t) {
      PartitionPlan plan;
      plan.layers.resize(spec.layers);
      for (auto& lp : plan.layers) {
        lp.head_placement.resize(spec.heads);
        for (auto& h : lp.head_placement) h = static_cast<Placement>(bin(*rng_));
        lp.ffn = static_cast<FfnMode>(tern(*rng_));
      }
      if (validate(plan, spec, device).ok()) return plan;
    }
    throw InfeasibleError("random: no feasible plan found");
  }

 private:
  Rng* rng_;
  int max_tries_;
};

// One simulated episode: per slot observe -> decide -> execute (with failure
// recovery) -> service/drift/reward -> Lindley queue update -> advance
// network. Emits the full trajectory, metrics, and the per-slot CSV log.
inline EpisodeResult run_episode(const EpisodeConfig& cfg, Controller& controller,
                                 Rng& rng) {
  cfg.device.check();
  cfg.lyapunov.check();
  EpisodeResult res;
  std::ostringstream csv;
  csv << "slot,Q,V,B_mbps,latency_s,energy_J,acc_penalty,drift,reward,plan_id,failures\n";

  AccuracyPenaltyCache quant_cache(cfg.spec, cfg.quant);
  RequestSampler req_sampler(cfg.workload);
  ScenarioCursor cursor;
  NetworkState net = step(cfg.scenario, cursor, rng, cfg.workload.dt);

  const std::size_t tau = static_cast<std::size_t>(cfg.window);
  detail::Window q_win(tau), b_win(tau), lam_win(tau), reward_win(tau), latency_win(tau),
      drift_sign_win(tau), churn_win(tau);
  FeatureNorms norms{cfg.lyapunov.q_critical, 100e6, cfg.lambda_max};

  double q = 0.0;          // fluid backlog
  double credit = 0.0;     // fractional service carryover
  double mem_avail = 1.0;  // free edge memory fraction under the previous plan
  double last_done = 0.0;  // completion-time recursion clock
  std::deque<PendingRequest> fifo;
  std::vector<double> sojourns;
  std::vector<int> prev_action;
  double energy_total = 0.0, acc_total = 0.0, cost_total = 0.0, reward_total = 0.0;
  double q_sum = 0.0, q_max = 0.0;
  std::uint64_t arrivals = 0, completions = 0, failed_final = 0;
  auto* recording = dynamic_cast<RecordingController*>(&controller);

  for (int t = 0; t < cfg.t_max; ++t) {
    SystemState state;
    state.queue = q;
    state.queue_avg = q_win.mean(q);
    state.bandwidth_bps = net.bandwidth_bps;
    state.bandwidth_avg = b_win.mean(net.bandwidth_bps);
    state.bandwidth_std = b_win.stdev();
    state.arrival_rate = cfg.workload.lambda;
    state.arrival_rate_avg = lam_win.mean(cfg.workload.lambda);
    state.seq_len = fifo.empty() ? cfg.n_ref : fifo.front().req.seq_len;
    state.history = {reward_win.mean(),    reward_win.stdev(),  latency_win.mean(),
                     latency_win.stdev(),  drift_sign_win.mean(), drift_sign_win.stdev(),
                     churn_win.mean(),     churn_win.stdev()};

    PartitionPlan plan;
    try {
      // compute/memory availability reflect the previous slot's plan
      state.compute_avail = cfg.background_load;
      state.memory_avail = mem_avail;
      plan = controller.decide(state, cfg.spec, cfg.device, net);
    } catch (const InfeasibleError& e) {
      res.metrics.verdict = std::string("infeasible: ") + e.what();
      break;
    }
    mem_avail = 1.0 - active_edge_memory(plan, cfg.spec) / cfg.device.mem_edge;

    ExecOutcome exec = execute_partition(plan, cfg.spec, state.seq_len, cfg.device, net,
                                         cfg.backoff, cfg.cost_opt, rng, &quant_cache);

    bool serving = !fifo.empty();
    double mu = 0.0;
    if (!exec.exhausted && exec.costs.t_total > 0.0) mu = 1.0 / exec.costs.t_total;

    // Completions: fractional service credit, drained FIFO resets the credit.
    if (serving && !exec.exhausted) {
      credit += mu * cfg.workload.dt;
      while (credit >= 1.0 && !fifo.empty()) {
        credit -= 1.0;
        const auto& pr = fifo.front();
        double start = std::max({last_done, static_cast<double>(t) * cfg.workload.dt,
                                 static_cast<double>(pr.req.arrival_slot) * cfg.workload.dt});
        last_done = start + exec.costs.t_total;
        sojourns.push_back(last_done -
                           static_cast<double>(pr.req.arrival_slot) * cfg.workload.dt);
        fifo.pop_front();
        ++completions;
      }
      if (fifo.empty()) credit = 0.0;
    } else if (serving && exec.exhausted) {
      // failed slot: re-enqueue once, then drop for good
      PendingRequest pr = fifo.front();
      fifo.pop_front();
      if (!pr.retried) {
        pr.retried = true;
        fifo.push_back(pr);
      } else {
        ++failed_final;
      }
    }

    double v_t = cfg.fixed_v ? *cfg.fixed_v : adaptive_v(q, cfg.lyapunov);
    double drift = drift_estimate(q, cfg.workload.lambda, mu);
    double g = immediate_cost(exec.costs, cfg.weights);
    double reward = dpp_reward(drift, g, v_t);

    int a_t = sample_arrivals(rng, cfg.workload.lambda, cfg.workload.dt);
    for (int i = 0; i < a_t; ++i)
      fifo.push_back({req_sampler.sample(rng, static_cast<std::uint64_t>(t)), false});
    arrivals += a_t;
    q = queue_update(q, serving ? mu : 0.0, a_t, cfg.workload.dt);

    // trajectory
    Transition tr;
    if (recording) {
      const auto* info = recording->last_step_info();
      tr.features = info->features;
      tr.action = info->action;
      tr.log_prob = info->log_prob;
      tr.value_perf = info->value_perf;
      tr.value_stab = info->value_stab;
    } else {
      tr.features = state_features(state, norms);
      tr.action = encode(plan);
    }
    tr.reward = reward;
    tr.perf_reward = -g;
    tr.drift = drift;
    tr.v_weight = v_t;
    tr.done = t + 1 == cfg.t_max;
    res.trajectory.push_back(std::move(tr));

    // windows and logs
    auto action_now = encode(plan);
    double churn = 0.0;
    if (!prev_action.empty()) {
      int diff = 0;
      for (std::size_t i = 0; i < action_now.size(); ++i)
        diff += action_now[i] != prev_action[i];
      churn = static_cast<double>(diff) / action_now.size();
    }
    prev_action = std::move(action_now);

    q_win.push(q);
    b_win.push(net.bandwidth_bps);
    lam_win.push(cfg.workload.lambda);
    reward_win.push(reward);
    latency_win.push(exec.costs.t_total);
    drift_sign_win.push(drift > 0 ? 1.0 : (drift < 0 ? -1.0 : 0.0));
    churn_win.push(churn);

    q_sum += q;
    q_max = std::max(q_max, q);
    energy_total += exec.costs.energy;
    acc_total += exec.costs.acc_penalty;
    cost_total += g;
    reward_total += reward;
    res.queue_trace.push_back(q);

    csv << t << "," << detail::format_double(q) << "," << detail::format_double(v_t) << ","
        << detail::format_double(net.bandwidth_bps / 1e6) << ","
        << detail::format_double(exec.costs.t_total) << ","
        << detail::format_double(exec.costs.energy) << ","
        << detail::format_double(exec.costs.acc_penalty) << ","
        << detail::format_double(drift) << "," << detail::format_double(reward) << ","
        << std::hex << plan_hash(plan) << std::dec << "," << exec.failures << "\n";

    res.last_plan = plan;
    net = step(cfg.scenario, cursor, rng, cfg.workload.dt);
  }

  // Q_target: mean backlog over the following window.
  const auto& qt = res.queue_trace;
  for (std::size_t i = 0; i < res.trajectory.size(); ++i) {
    std::size_t end = std::min(qt.size(), i + 1 + tau);
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t j = i + 1; j < end; ++j, ++cnt) s += qt[j];
    res.trajectory[i].q_target = cnt ? s / cnt : q;
  }

  const std::size_t n_slots = res.queue_trace.size();
  auto& m = res.metrics;
  if (!sojourns.empty()) {
    auto p = percentiles(sojourns);
    m.p50 = p.p50;
    m.p95 = p.p95;
    m.p99 = p.p99;
  }
  m.mean_energy_per_request = completions ? energy_total / completions : 0.0;
  m.mean_acc_penalty = n_slots ? acc_total / n_slots : 0.0;
  m.mean_queue = n_slots ? q_sum / n_slots : 0.0;
  m.max_queue = q_max;
  m.mean_cost = n_slots ? cost_total / n_slots : 0.0;
  m.mean_reward = n_slots ? reward_total / n_slots : 0.0;
  m.arrivals = arrivals;
  m.completions = completions;
  m.failed_final = failed_final;
  m.residual = fifo.size();
  if (n_slots) {
    std::size_t from = n_slots - n_slots / 3;
    double s = 0.0;
    for (std::size_t i = from; i < n_slots; ++i) s += qt[i];
    m.stable = (s / (n_slots - from)) < cfg.lyapunov.q_critical;
  }
  res.slots_csv = csv.str();
  return res;
}

struct StabilityProbeResult {
  std::optional<double> max_stable_lambda;
  std::vector<std::pair<double, bool>> verdicts;
};

// Largest arrival rate in the (ascending) grid whose mean backlog over the
// final third of a run stays below Q_critical.
inline StabilityProbeResult stability_probe(const EpisodeConfig& base, Controller& controller,
                                            const std::vector<double>& lambda_grid,
                                            std::uint64_t seed) {
  StabilityProbeResult out;
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    EpisodeConfig cfg = base;
    cfg.workload.lambda = lambda_grid[i];
    Rng rng(derive_seed(seed, i));
    auto res = run_episode(cfg, controller, rng);
    bool stable = res.metrics.verdict == "ok" && res.metrics.stable;
    out.verdicts.emplace_back(lambda_grid[i], stable);
    if (stable) out.max_stable_lambda = lambda_grid[i];
  }
  return out;
}

struct TrainResult {
  HierarchicalPolicy policy;   // best checkpoint by evaluation reward
  DualCritics critics;
  std::string curves_csv;
  std::string status = "ok";   // "ok" or "diverged"
  double best_eval_reward = 0.0;
  int episodes_run = 0;
};

struct TrainSetup {
  EpisodeConfig env;
  std::vector<NetworkScenario> scenarios;  // cycled per episode; empty: env.scenario
  int policy_enc_hidden = 32;
  int policy_enc_out = 16;
  int policy_embed = 8;
  int critic_hidden = 32;
  int eval_episodes = 3;
  // resume support: when non-empty, overwrite the fresh initialization
  std::vector<double> init_policy_params;
  std::vector<double> init_perf_params;
  std::vector<double> init_stab_params;
};

inline double evaluate_policy(const TrainSetup& setup, const HierarchicalPolicy& policy,
                              const DualCritics& critics, std::uint64_t seed) {
  double total = 0.0;
  int n = std::max(1, setup.eval_episodes);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 1000000 + i));
    EpisodeConfig cfg = setup.env;
    if (!setup.scenarios.empty()) cfg.scenario = setup.scenarios[i % setup.scenarios.size()];
    FeatureNorms norms{cfg.lyapunov.q_critical, 100e6, cfg.lambda_max};
    LearnedController ctl(policy, critics, norms, rng, /*stochastic=*/false);
    auto res = run_episode(cfg, ctl, rng);
    total += res.metrics.mean_reward;
  }
  return total / n;
}

// Lyapunov-assisted PPO training loop: rollouts with Gumbel-softmax sampling,
// periodic dual-critic PPO updates over the most recent transitions,
// temperature annealing, best-checkpoint selection by deterministic
// evaluation reward.
inline TrainResult train(const TrainSetup& setup, const TrainConfig& tcfg,
                         std::uint64_t master_seed) {
  tcfg.check();
  Rng init_rng(derive_seed(master_seed, 0));
  HierarchicalPolicy policy(kFeatureDim, setup.env.spec.layers, setup.env.spec.heads,
                            init_rng, setup.policy_enc_hidden, setup.policy_enc_out,
                            setup.policy_embed);
  DualCritics critics{Mlp({kFeatureDim, setup.critic_hidden, 1}, init_rng),
                      Mlp({kFeatureDim, setup.critic_hidden, 1}, init_rng)};
  if (!setup.init_policy_params.empty()) policy.set_params(setup.init_policy_params);
  if (!setup.init_perf_params.empty()) critics.perf.set_params(setup.init_perf_params);
  if (!setup.init_stab_params.empty()) critics.stab.set_params(setup.init_stab_params);
  Adam actor_opt(policy.get_params().size(), tcfg.lr_actor);
  Adam perf_opt(critics.perf.get_params().size(), tcfg.lr_critic);
  Adam stab_opt(critics.stab.get_params().size(), tcfg.lr_critic);

  TrainResult out;
  out.policy = policy;
  out.critics = critics;
  std::ostringstream curves;
  curves << "episode,mean_reward,mean_Q,clip_fraction,policy_loss,perf_loss,stab_loss,"
            "temperature\n";

  std::deque<Transition> buffer;
  double temp = tcfg.temp_init;
  int steps_since_update = 0;
  PpoStats last_stats;
  bool have_eval = false;

  for (int ep = 1; ep <= tcfg.episodes; ++ep) {
    Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(ep)));
    EpisodeConfig cfg = setup.env;
    if (!setup.scenarios.empty())
      cfg.scenario = setup.scenarios[(ep - 1) % setup.scenarios.size()];
    FeatureNorms norms{cfg.lyapunov.q_critical, 100e6, cfg.lambda_max};
    LearnedController ctl(policy, critics, norms, rng, /*stochastic=*/true, temp);
    auto res = run_episode(cfg, ctl, rng);
    out.episodes_run = ep;

    for (auto& tr : res.trajectory) {
      buffer.push_back(std::move(tr));
      if (buffer.size() > static_cast<std::size_t>(tcfg.buffer_size)) buffer.pop_front();
    }
    steps_since_update += static_cast<int>(res.trajectory.size());

    if (ep > tcfg.warmup_episodes && steps_since_update >= tcfg.update_every_steps &&
        buffer.size() >= static_cast<std::size_t>(tcfg.batch_size)) {
      TrajectoryBatch batch(buffer.end() - tcfg.batch_size, buffer.end());
      last_stats = ppo_update(policy, critics, batch, tcfg, actor_opt, perf_opt, stab_opt);
      if (last_stats.aborted) {
        out.status = "diverged";
        break;
      }
      steps_since_update = 0;
      temp = anneal_temperature(temp, tcfg.anneal_beta, tcfg.temp_min);
    }

    curves << ep << "," << detail::format_double(res.metrics.mean_reward) << ","
           << detail::format_double(res.metrics.mean_queue) << ","
           << detail::format_double(last_stats.clip_fraction) << ","
           << detail::format_double(last_stats.policy_loss) << ","
           << detail::format_double(last_stats.perf_critic_loss) << ","
           << detail::format_double(last_stats.stab_critic_loss) << ","
           << detail::format_double(temp) << "\n";

    if (ep % tcfg.eval_every == 0 || ep == tcfg.episodes) {
      double r = evaluate_policy(setup, policy, critics, derive_seed(master_seed, 7));
      if (!have_eval || r > out.best_eval_reward) {
        have_eval = true;
        out.best_eval_reward = r;
        out.policy = policy;
        out.critics = critics;
      }
    }
  }
  if (!have_eval) {
    out.policy = policy;
    out.critics = critics;
  }
  out.curves_csv = curves.str();
  return out;
}

}  // namespace edgepart
