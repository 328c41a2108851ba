#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "edgepart/cost.hpp"

namespace edgepart {

struct LyapunovConfig {
  double v_min = 0.1;
  double v_max = 10.0;
  double q_ref = 10.0;       // reference backlog for the adaptive schedule
  double q_critical = 50.0;  // alarm threshold / stability verdict bound
  double b_bound = 100.0;    // drift constant, used only for bound reporting

  void check() const {
    if (v_min <= 0.0 || v_min > v_max)
      throw std::invalid_argument("lyapunov config: need 0 < v_min <= v_max");
    if (q_ref <= 0.0) throw std::invalid_argument("lyapunov config: q_ref must be > 0");
  }
};

struct CostWeights {
  double latency = 1.0;   // w_T
  double energy = 0.5;    // w_E
  double accuracy = 0.1;  // w_A
};

// Lindley recursion with fractional service.
inline double queue_update(double q, double service_rate, double arrivals, double dt) {
  if (q < 0.0 || service_rate < 0.0 || arrivals < 0.0)
    throw std::invalid_argument("queue_update: negative input");
  return std::max(q - service_rate * dt, 0.0) + arrivals;
}

inline double lyapunov_value(double q) { return 0.5 * q * q; }

// Computable per-slot drift surrogate Q * (lambda - mu).
inline double drift_estimate(double q, double lambda, double mu) {
  if (q < 0.0) throw std::invalid_argument("drift_estimate: negative backlog");
  return q * (lambda - mu);
}

inline double adaptive_v(double q, const LyapunovConfig& cfg) {
  cfg.check();
  return cfg.v_min + (cfg.v_max - cfg.v_min) * std::exp(-q / cfg.q_ref);
}

inline double immediate_cost(const CostBreakdown& costs, const CostWeights& w) {
  return w.latency * costs.t_total + w.energy * costs.energy + w.accuracy * costs.acc_penalty;
}

inline double dpp_reward(double drift, double immediate, double v) {
  return -(v * drift + immediate);
}

// Theoretical bound curves (Theorem-style reporting only; the reward path
// uses the surrogate above).
inline double backlog_bound(double b_bound, double v, double optimal_cost,
                            double capacity_margin) {
  return (b_bound + v * optimal_cost) / capacity_margin;
}

inline double cost_bound(double optimal_cost, double b_bound, double v) {
  return optimal_cost + b_bound / v;
}

}  // namespace edgepart
