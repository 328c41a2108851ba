#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "edgepart/common.hpp"

namespace edgepart {

struct NetworkState {
  double bandwidth_bps = 100e6;  // B(t)
  double latency_s = 0.010;      // l_n(t), propagation
  double jitter_s = 0.002;       // uniform bound on latency perturbation
  double loss = 1e-4;            // per-packet loss probability
};

struct StaticScenario {
  NetworkState base;
};

struct MarkovScenario {
  std::vector<NetworkState> states;
  std::vector<std::vector<double>> transition;  // row-stochastic
  int dwell_slots = 5;
};

struct TraceScenario {
  std::vector<NetworkState> records;  // one per slot
  bool loop = false;
};

struct NetworkScenario {
  std::string name = "wifi";
  std::variant<StaticScenario, MarkovScenario, TraceScenario> kind = StaticScenario{};
};

inline NetworkState wifi_state() { return {100e6, 0.010, 0.002, 1e-4}; }
inline NetworkState fiveg_good_state() { return {50e6, 0.020, 0.005, 1e-3}; }
inline NetworkState fiveg_avg_state() { return {25e6, 0.040, 0.010, 5e-3}; }
inline NetworkState fourg_state() { return {10e6, 0.080, 0.020, 1e-2}; }

inline NetworkScenario make_scenario(const std::string& name) {
  if (name == "wifi") return {name, StaticScenario{wifi_state()}};
  if (name == "5g-good") return {name, StaticScenario{fiveg_good_state()}};
  if (name == "5g-avg") return {name, StaticScenario{fiveg_avg_state()}};
  if (name == "4g") return {name, StaticScenario{fourg_state()}};
  if (name == "var") {
    MarkovScenario m;
    m.states = {wifi_state(), fiveg_good_state(), fiveg_avg_state(), fourg_state()};
    m.transition.assign(4, std::vector<double>(4, 0.1 / 3.0));
    for (int i = 0; i < 4; ++i) m.transition[i][i] = 0.9;
    m.dwell_slots = 5;
    return {name, m};
  }
  throw std::invalid_argument("unknown network scenario: " + name);
}

// Per-episode mutable position within a scenario.
struct ScenarioCursor {
  std::size_t state_index = 0;
  int slots_in_state = 0;
  std::size_t trace_pos = 0;
};

namespace detail {
inline NetworkState jittered(const NetworkState& s, Rng& rng) {
  NetworkState out = s;
  if (s.jitter_s > 0.0) {
    std::uniform_real_distribution<double> d(-s.jitter_s, s.jitter_s);
    out.latency_s = std::max(0.0, s.latency_s + d(rng));
  }
  return out;
}
}  // namespace detail

inline NetworkState step(const NetworkScenario& scenario, ScenarioCursor& cursor, Rng& rng,
                         double /*dt*/ = 1.0) {
  if (const auto* st = std::get_if<StaticScenario>(&scenario.kind)) {
    return detail::jittered(st->base, rng);
  }
  if (const auto* mk = std::get_if<MarkovScenario>(&scenario.kind)) {
    if (++cursor.slots_in_state >= mk->dwell_slots) {
      cursor.slots_in_state = 0;
      const auto& row = mk->transition[cursor.state_index];
      std::uniform_real_distribution<double> d(0.0, 1.0);
      double u = d(rng), acc = 0.0;
      std::size_t next = row.size() - 1;
      for (std::size_t j = 0; j < row.size(); ++j) {
        acc += row[j];
        if (u < acc) { next = j; break; }
      }
      cursor.state_index = next;
    }
    return detail::jittered(mk->states[cursor.state_index], rng);
  }
  const auto& tr = std::get<TraceScenario>(scenario.kind);
  if (cursor.trace_pos >= tr.records.size()) {
    if (!tr.loop || tr.records.empty())
      throw std::runtime_error("network trace exhausted");
    cursor.trace_pos = 0;
  }
  return tr.records[cursor.trace_pos++];
}

// Transfer fails if any MTU-sized packet is lost.
inline bool sample_transfer_failure(Rng& rng, double loss, double volume_bytes) {
  if (loss < 0.0 || loss >= 1.0)
    throw std::invalid_argument("sample_transfer_failure: loss must be in [0, 1)");
  if (loss == 0.0) return false;
  double packets = std::ceil(std::max(volume_bytes, 1.0) / 1500.0);
  double p_fail = 1.0 - std::pow(1.0 - loss, packets);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  return d(rng) < p_fail;
}

inline std::string trace_to_csv(const TraceScenario& tr) {
  std::ostringstream os;
  os << "slot,B_mbps,latency_ms,loss\n";
  for (std::size_t i = 0; i < tr.records.size(); ++i) {
    const auto& r = tr.records[i];
    os << i << "," << r.bandwidth_bps / 1e6 << "," << r.latency_s * 1e3 << "," << r.loss
       << "\n";
  }
  return os.str();
}

inline TraceScenario trace_from_csv_stream(std::istream& in, bool loop = false) {
  TraceScenario tr;
  tr.loop = loop;
  std::string line;
  if (!std::getline(in, line) || line.rfind("slot,", 0) != 0)
    throw std::runtime_error("network trace: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    NetworkState s;
    std::getline(ls, cell, ',');  // slot index, positional
    std::getline(ls, cell, ',');
    s.bandwidth_bps = std::stod(cell) * 1e6;
    std::getline(ls, cell, ',');
    s.latency_s = std::stod(cell) / 1e3;
    std::getline(ls, cell, ',');
    s.loss = std::stod(cell);
    s.jitter_s = 0.0;
    tr.records.push_back(s);
  }
  return tr;
}

inline TraceScenario load_network_trace(const std::string& path, bool loop = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network trace: " + path);
  return trace_from_csv_stream(in, loop);
}

}  // namespace edgepart
