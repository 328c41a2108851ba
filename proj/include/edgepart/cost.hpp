#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "edgepart/common.hpp"
#include "edgepart/device.hpp"
#include "edgepart/network.hpp"
#include "edgepart/partition.hpp"
#include "edgepart/workload.hpp"

namespace edgepart {

enum class Side { Edge, Cloud };
enum class LatencyMode { Sequential, Pipelined };

struct CostBreakdown {
  double t_comp_edge = 0.0;
  double t_comm = 0.0;
  double t_comp_cloud = 0.0;
  double t_total = 0.0;
  double energy = 0.0;
  double acc_penalty = 0.0;
  int transitions = 0;
};

struct CostOptions {
  LatencyMode mode = LatencyMode::Pipelined;
  int boundary_precision_bytes = 2;  // fp16 activations at boundaries
  bool latency_per_transition = true;  // false: single l_n regardless of K
};

namespace detail {

inline double side_flops(const LayerPartition& lp, const ModelSpec& spec, int layer1, int n,
                         Side side) {
  const Placement want = side == Side::Edge ? Placement::Edge : Placement::Cloud;
  double f = 0.0;
  for (int h = 0; h < spec.heads; ++h)
    if (lp.head_placement[h] == want)
      f += component_flops(spec, {layer1, ComponentKind::Head, h + 1}, n);
  bool ffn1_here = (lp.ffn == FfnMode::Edge || lp.ffn == FfnMode::Split)
                       ? side == Side::Edge
                       : side == Side::Cloud;
  bool ffn2_here = (lp.ffn == FfnMode::Edge) ? side == Side::Edge : side == Side::Cloud;
  if (ffn1_here) f += component_flops(spec, {layer1, ComponentKind::Ffn1}, n);
  if (ffn2_here) f += component_flops(spec, {layer1, ComponentKind::Ffn2}, n);
  return f;
}

inline double effective_rate(const DeviceProfile& d, Side side) {
  return side == Side::Edge ? d.cc_edge * d.eta_edge : d.cc_cloud * d.eta_cloud;
}

}  // namespace detail

inline double compute_time(const PartitionPlan& plan, const ModelSpec& spec, int n,
                           const DeviceProfile& device, Side side) {
  if (!plan_shape_ok(plan, spec))
    throw std::invalid_argument("compute_time: plan shape does not match spec");
  double f = 0.0;
  for (int l = 0; l < spec.layers; ++l)
    f += detail::side_flops(plan.layers[l], spec, l + 1, n, side);
  return f / detail::effective_rate(device, side);
}

inline double transfer_seconds(const Boundary& b, const NetworkState& net) {
  return b.volume_bytes * 8.0 / net.bandwidth_bps;
}

inline double comm_time(const std::vector<Boundary>& bs, const NetworkState& net,
                        bool latency_per_transition = true) {
  if (net.bandwidth_bps <= 0.0)
    throw std::invalid_argument("comm_time: bandwidth must be positive");
  double t = 0.0;
  for (const auto& b : bs) t += transfer_seconds(b, net);
  if (!bs.empty())
    t += latency_per_transition ? net.latency_s * static_cast<double>(bs.size())
                                : net.latency_s;
  return t;
}

namespace detail {

// Three-stage pipeline at layer granularity: edge compute | transfer | cloud
// compute. Input upload and output download cannot overlap with anything for
// a single request and are added outside the schedule.
inline double pipelined_latency(const PartitionPlan& plan, const ModelSpec& spec, int n,
                                const DeviceProfile& device, const NetworkState& net,
                                const std::vector<Boundary>& bs, const CostOptions& opt) {
  const int L = spec.layers;
  std::vector<double> e(L, 0.0), x(L, 0.0), c(L, 0.0);
  for (int l = 0; l < L; ++l) {
    e[l] = side_flops(plan.layers[l], spec, l + 1, n, Side::Edge) /
           effective_rate(device, Side::Edge);
    c[l] = side_flops(plan.layers[l], spec, l + 1, n, Side::Cloud) /
           effective_rate(device, Side::Cloud);
  }
  double endpoint = 0.0;
  double lat = opt.latency_per_transition ? net.latency_s : 0.0;
  for (const auto& b : bs) {
    double t = transfer_seconds(b, net) + lat;
    if (b.kind == BoundaryKind::InputUpload || b.kind == BoundaryKind::OutputDownload)
      endpoint += t;
    else
      x[b.layer - 1] += t;
  }
  if (!opt.latency_per_transition && !bs.empty()) endpoint += net.latency_s;

  double f1 = 0.0, f2 = 0.0, f3 = 0.0;  // stage finish times
  for (int l = 0; l < L; ++l) {
    f1 += e[l];
    f2 = std::max(f1, f2) + x[l];
    f3 = std::max(f2, f3) + c[l];
  }
  return endpoint + f3;
}

}  // namespace detail

inline CostBreakdown total_latency(const PartitionPlan& plan, const ModelSpec& spec, int n,
                                   const DeviceProfile& device, const NetworkState& net,
                                   const CostOptions& opt = {}) {
  auto bs = boundaries(plan, spec, n, opt.boundary_precision_bytes);
  CostBreakdown cb;
  cb.t_comp_edge = compute_time(plan, spec, n, device, Side::Edge);
  cb.t_comp_cloud = compute_time(plan, spec, n, device, Side::Cloud);
  cb.t_comm = comm_time(bs, net, opt.latency_per_transition);
  cb.transitions = static_cast<int>(bs.size());
  if (opt.mode == LatencyMode::Sequential) {
    cb.t_total = cb.t_comp_edge + cb.t_comm + cb.t_comp_cloud;
  } else {
    cb.t_total = detail::pipelined_latency(plan, spec, n, device, net, bs, opt);
  }
  return cb;
}

inline double energy(const PartitionPlan& plan, const ModelSpec& spec, int n,
                     const DeviceProfile& device, const NetworkState& net,
                     const CostOptions& opt = {}) {
  double t_comp_e = compute_time(plan, spec, n, device, Side::Edge);
  double transfer = 0.0;
  for (const auto& b : boundaries(plan, spec, n, opt.boundary_precision_bytes))
    transfer += transfer_seconds(b, net);
  return device.p_comp * t_comp_e + device.p_comm * transfer;
}

struct QuantConfig {
  int bits = 8;          // <= 0 means lossless (identity quantizer)
  double alpha = 1.0;    // uniform boundary weight
  std::uint64_t probe_seed = 0x9e3779b9ULL;

  bool lossless() const { return bits <= 0; }
};

// Uniform symmetric quantization over [min, max] with 2^bits levels; ties
// round toward the lower level.
inline double quantize_value(double x, double lo, double step) {
  if (step <= 0.0) return lo;
  double idx = std::ceil((x - lo) / step - 0.5);
  return lo + idx * step;
}

inline double quantization_sq_error(const std::vector<double>& probe, int bits) {
  if (probe.empty()) return 0.0;
  auto [mn, mx] = std::minmax_element(probe.begin(), probe.end());
  double lo = *mn, hi = *mx;
  double levels = std::pow(2.0, bits);
  double step = (hi - lo) / (levels - 1.0);
  double err = 0.0;
  for (double v : probe) {
    double d = v - quantize_value(v, lo, step);
    err += d * d;
  }
  return err;
}

namespace detail {
inline std::vector<double> probe_tensor(int elements, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(elements);
  for (auto& x : v) x = d(rng);
  return v;
}
}  // namespace detail

inline double accuracy_penalty(const PartitionPlan& plan, const ModelSpec& spec, int n,
                               const QuantConfig& quant) {
  if (quant.lossless()) return 0.0;
  auto bs = boundaries(plan, spec, n);
  if (bs.empty()) return 0.0;
  auto probe = detail::probe_tensor(n * spec.d_model, quant.probe_seed);
  double per_boundary = quantization_sq_error(probe, quant.bits);
  return quant.alpha * per_boundary * static_cast<double>(bs.size());
}

// Memoizes the per-boundary probe error, which depends only on (n, bits, seed).
class AccuracyPenaltyCache {
 public:
  AccuracyPenaltyCache(const ModelSpec& spec, QuantConfig quant)
      : spec_(spec), quant_(quant) {}

  double penalty(const PartitionPlan& plan, int n) {
    if (quant_.lossless()) return 0.0;
    auto bs = boundaries(plan, spec_, n);
    if (bs.empty()) return 0.0;
    return quant_.alpha * per_boundary(n) * static_cast<double>(bs.size());
  }

  double penalty_for_boundary_count(int n, int k) {
    if (quant_.lossless() || k == 0) return 0.0;
    return quant_.alpha * per_boundary(n) * k;
  }

 private:
  double per_boundary(int n) {
    auto it = cache_.find(n);
    if (it != cache_.end()) return it->second;
    auto probe = detail::probe_tensor(n * spec_.d_model, quant_.probe_seed);
    double err = quantization_sq_error(probe, quant_.bits);
    cache_.emplace(n, err);
    return err;
  }

  ModelSpec spec_;
  QuantConfig quant_;
  std::map<int, double> cache_;
};

}  // namespace edgepart
