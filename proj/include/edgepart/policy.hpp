#pragma once

#include <array>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "edgepart/cost.hpp"
#include "edgepart/lyapunov.hpp"

namespace edgepart {

// The RL observation. History carries mean/std pairs of recent rewards,
// latencies, drift signs, and action churn over the run window.
struct SystemState {
  double queue = 0.0;
  double queue_avg = 0.0;
  double bandwidth_bps = 100e6;
  double bandwidth_avg = 100e6;
  double bandwidth_std = 0.0;
  double arrival_rate = 0.0;
  double arrival_rate_avg = 0.0;
  double compute_avail = 1.0;  // fraction of CC_e not consumed by background load
  double memory_avail = 1.0;   // fraction of M_e free under the current plan
  std::array<double, 8> history{};
  int seq_len = 128;  // n used when costing candidate plans this slot
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  // Must return a plan passing validate() for the device, or throw
  // InfeasibleError.
  virtual PartitionPlan decide(const SystemState& state, const ModelSpec& spec,
                               const DeviceProfile& device, const NetworkState& net) = 0;
};

class ConstantController : public Controller {
 public:
  ConstantController(PartitionPlan plan, std::string name)
      : plan_(std::move(plan)), name_(std::move(name)) {}

  std::string name() const override { return name_; }

  PartitionPlan decide(const SystemState&, const ModelSpec& spec,
                       const DeviceProfile& device, const NetworkState&) override {
    auto v = validate(plan_, spec, device);
    if (!v.ok())
      throw InfeasibleError(name_ + ": plan infeasible (required " +
                            std::to_string(v.required) + " B, available " +
                            std::to_string(v.available) + " B)");
    return plan_;
  }

 private:
  PartitionPlan plan_;
  std::string name_;
};

// name: "edge-only", "cloud-only", or "layer-split" (split point defaults to
// L/2, override via split_layer).
inline std::unique_ptr<Controller> make_baseline(const std::string& name,
                                                 const ModelSpec& spec,
                                                 std::optional<int> split_layer = {}) {
  if (name == "edge-only")
    return std::make_unique<ConstantController>(edge_only(spec), name);
  if (name == "cloud-only")
    return std::make_unique<ConstantController>(cloud_only(spec), name);
  if (name == "layer-split") {
    int l = split_layer.value_or(spec.layers / 2);
    return std::make_unique<ConstantController>(layer_split(spec, l),
                                                "layer-split(" + std::to_string(l) + ")");
  }
  throw std::invalid_argument("unknown baseline controller: " + name);
}

struct CandidateSet {
  std::vector<PartitionPlan> plans;
};

// Coarse: pure plans plus every layer split. Fine(k) additionally moves head
// fractions of the first cloud layer back to the edge for each split base.
// All candidates are memory-feasible for the device; duplicates are dropped.
inline CandidateSet build_candidates(const ModelSpec& spec, const DeviceProfile& device,
                                     int fine_k = 0) {
  std::vector<PartitionPlan> raw;
  raw.push_back(edge_only(spec));
  raw.push_back(cloud_only(spec));
  for (int l = 0; l <= spec.layers; ++l) raw.push_back(layer_split(spec, l));
  if (fine_k > 1) {
    for (int l = 0; l < spec.layers; ++l) {
      for (int j = 1; j < fine_k; ++j) {
        PartitionPlan p = layer_split(spec, l);
        int moved = (spec.heads * j + fine_k - 1) / fine_k;  // ceil(H*j/k)
        for (int h = 0; h < std::min(moved, spec.heads); ++h)
          p.layers[l].head_placement[h] = Placement::Edge;
        raw.push_back(std::move(p));
      }
    }
  }
  CandidateSet out;
  for (auto& p : raw) {
    if (!validate(p, spec, device).ok()) continue;
    bool dup = false;
    for (const auto& q : out.plans)
      if (q == p) { dup = true; break; }
    if (!dup) out.plans.push_back(std::move(p));
  }
  if (out.plans.empty())
    throw InfeasibleError("build_candidates: no memory-feasible candidate");
  return out;
}

struct CandidateScore {
  double score = 0.0;
  double latency = 0.0;
  double cost = 0.0;
  double drift = 0.0;
};

// Per-slot drift-plus-penalty score of one candidate: drift + V * g, where
// drift = Q * (lambda - 1/T). Larger V weights the cost term; V -> 0 recovers
// the pure queue-draining policy and dropping the drift term entirely gives
// the pure cost minimizer.
inline CandidateScore score_candidate(const PartitionPlan& plan, const SystemState& state,
                                      const ModelSpec& spec, const DeviceProfile& device,
                                      const NetworkState& net, double v,
                                      const CostWeights& weights, const CostOptions& opt,
                                      AccuracyPenaltyCache* quant_cache,
                                      bool use_drift = true) {
  CostBreakdown cb = total_latency(plan, spec, state.seq_len, device, net, opt);
  cb.energy = energy(plan, spec, state.seq_len, device, net, opt);
  if (quant_cache) cb.acc_penalty = quant_cache->penalty(plan, state.seq_len);
  CandidateScore s;
  s.latency = cb.t_total;
  s.cost = immediate_cost(cb, weights);
  double mu = cb.t_total > 0.0 ? 1.0 / cb.t_total : std::numeric_limits<double>::infinity();
  s.drift = drift_estimate(state.queue, state.arrival_rate, mu);
  s.score = (use_drift ? s.drift : 0.0) + v * s.cost;
  return s;
}

// Argmin of score_candidate over the set; ties break toward the earliest
// candidate.
inline std::size_t greedy_dpp_decide(const SystemState& state, const CandidateSet& cands,
                                     const ModelSpec& spec, const DeviceProfile& device,
                                     const NetworkState& net, double v,
                                     const CostWeights& weights, const CostOptions& opt,
                                     AccuracyPenaltyCache* quant_cache,
                                     bool use_drift = true) {
  if (cands.plans.empty()) throw std::invalid_argument("greedy_dpp_decide: no candidates");
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cands.plans.size(); ++i) {
    double s = score_candidate(cands.plans[i], state, spec, device, net, v, weights, opt,
                               quant_cache, use_drift)
                   .score;
    if (s < best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

struct GreedyDppOptions {
  std::optional<double> fixed_v;  // unset: adaptive_v(Q) each slot
  bool use_drift = true;          // false: pure cost minimizer (ablation)
  int fine_k = 0;
};

class GreedyDppController : public Controller {
 public:
  GreedyDppController(const ModelSpec& spec, const DeviceProfile& device,
                      CostWeights weights, LyapunovConfig lyap, QuantConfig quant,
                      CostOptions cost_opt = {}, GreedyDppOptions opt = {})
      : candidates_(build_candidates(spec, device, opt.fine_k)),
        weights_(weights),
        lyap_(lyap),
        cost_opt_(cost_opt),
        opt_(opt),
        quant_cache_(spec, quant) {}

  std::string name() const override {
    if (!opt_.use_drift) return "greedy-cost";
    return opt_.fixed_v ? "greedy-dpp(V=" + std::to_string(*opt_.fixed_v) + ")"
                        : "greedy-dpp";
  }

  PartitionPlan decide(const SystemState& state, const ModelSpec& spec,
                       const DeviceProfile& device, const NetworkState& net) override {
    double v = opt_.fixed_v ? *opt_.fixed_v : adaptive_v(state.queue, lyap_);
    std::size_t i = greedy_dpp_decide(state, candidates_, spec, device, net, v, weights_,
                                      cost_opt_, &quant_cache_, opt_.use_drift);
    return candidates_.plans[i];
  }

  const CandidateSet& candidates() const { return candidates_; }

 private:
  CandidateSet candidates_;
  CostWeights weights_;
  LyapunovConfig lyap_;
  CostOptions cost_opt_;
  GreedyDppOptions opt_;
  AccuracyPenaltyCache quant_cache_;
};

}  // namespace edgepart
