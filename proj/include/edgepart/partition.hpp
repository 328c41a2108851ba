#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "edgepart/common.hpp"
#include "edgepart/device.hpp"
#include "edgepart/workload.hpp"

namespace edgepart {

enum class Placement : std::uint8_t { Edge = 0, Cloud = 1 };
enum class FfnMode : std::uint8_t { Edge = 0, Cloud = 1, Split = 2 };

struct LayerPartition {
  std::vector<Placement> head_placement;
  FfnMode ffn = FfnMode::Edge;

  bool operator==(const LayerPartition&) const = default;
};

struct PartitionPlan {
  std::vector<LayerPartition> layers;

  bool operator==(const PartitionPlan&) const = default;
};

enum class BoundaryKind : std::uint8_t {
  InputUpload,
  HeadAggregation,
  FfnSplit,
  InterLayerHandoff,
  OutputDownload
};

enum class Direction : std::uint8_t { EdgeToCloud, CloudToEdge };

struct Boundary {
  int layer = 0;  // layer the transfer is attributed to (0 for input upload)
  BoundaryKind kind = BoundaryKind::InterLayerHandoff;
  double volume_bytes = 0.0;
  Direction direction = Direction::EdgeToCloud;
};

inline const char* to_string(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::InputUpload: return "input_upload";
    case BoundaryKind::HeadAggregation: return "head_aggregation";
    case BoundaryKind::FfnSplit: return "ffn_split";
    case BoundaryKind::InterLayerHandoff: return "inter_layer_handoff";
    case BoundaryKind::OutputDownload: return "output_download";
  }
  return "?";
}

inline PartitionPlan uniform_plan(const ModelSpec& spec, Placement p, FfnMode m) {
  PartitionPlan plan;
  plan.layers.resize(spec.layers);
  for (auto& lp : plan.layers) {
    lp.head_placement.assign(spec.heads, p);
    lp.ffn = m;
  }
  return plan;
}

inline PartitionPlan edge_only(const ModelSpec& spec) {
  return uniform_plan(spec, Placement::Edge, FfnMode::Edge);
}

inline PartitionPlan cloud_only(const ModelSpec& spec) {
  return uniform_plan(spec, Placement::Cloud, FfnMode::Cloud);
}

// Layers 1..split_layer on edge, the rest on cloud. split_layer in 0..L.
inline PartitionPlan layer_split(const ModelSpec& spec, int split_layer) {
  if (split_layer < 0 || split_layer > spec.layers)
    throw std::invalid_argument("layer_split: split point out of range");
  PartitionPlan plan;
  plan.layers.resize(spec.layers);
  for (int l = 0; l < spec.layers; ++l) {
    bool on_edge = l < split_layer;
    plan.layers[l].head_placement.assign(spec.heads,
                                         on_edge ? Placement::Edge : Placement::Cloud);
    plan.layers[l].ffn = on_edge ? FfnMode::Edge : FfnMode::Cloud;
  }
  return plan;
}

inline bool plan_shape_ok(const PartitionPlan& plan, const ModelSpec& spec) {
  if (static_cast<int>(plan.layers.size()) != spec.layers) return false;
  for (const auto& lp : plan.layers)
    if (static_cast<int>(lp.head_placement.size()) != spec.heads) return false;
  return true;
}

// Bytes the edge must keep resident: edge-placed heads, plus the FFN for
// modes Edge and Split (Split keeps only the first GEMM on edge).
inline double active_edge_memory(const PartitionPlan& plan, const ModelSpec& spec) {
  double total = 0.0;
  for (int l = 0; l < spec.layers; ++l) {
    const auto& lp = plan.layers[l];
    for (int h = 0; h < spec.heads; ++h)
      if (lp.head_placement[h] == Placement::Edge)
        total += component_memory(spec, {l + 1, ComponentKind::Head, h + 1});
    if (lp.ffn == FfnMode::Edge) {
      total += component_memory(spec, {l + 1, ComponentKind::Ffn1});
      total += component_memory(spec, {l + 1, ComponentKind::Ffn2});
    } else if (lp.ffn == FfnMode::Split) {
      total += component_memory(spec, {l + 1, ComponentKind::Ffn1});
    }
  }
  return total;
}

struct ValidationResult {
  enum class Status { Ok, ShapeMismatch, MemoryExceeded };
  Status status = Status::Ok;
  double required = 0.0;
  double available = 0.0;

  bool ok() const { return status == Status::Ok; }
};

inline ValidationResult validate(const PartitionPlan& plan, const ModelSpec& spec,
                                 const DeviceProfile& device) {
  if (!plan_shape_ok(plan, spec))
    return {ValidationResult::Status::ShapeMismatch, 0.0, device.mem_edge};
  double required = active_edge_memory(plan, spec);
  if (required > device.mem_edge)
    return {ValidationResult::Status::MemoryExceeded, required, device.mem_edge};
  return {ValidationResult::Status::Ok, required, device.mem_edge};
}

namespace detail {

// Residence rule: the aggregated MHA output lives where the FFN input is
// consumed (edge for modes Edge/Split, cloud for Cloud). The layer output
// lives where the last FFN GEMM runs.
inline Placement ffn_input_residence(const LayerPartition& lp) {
  return lp.ffn == FfnMode::Cloud ? Placement::Cloud : Placement::Edge;
}

inline Placement output_residence(const LayerPartition& lp) {
  return lp.ffn == FfnMode::Edge ? Placement::Edge : Placement::Cloud;
}

inline bool has_head_on(const LayerPartition& lp, Placement p) {
  return std::find(lp.head_placement.begin(), lp.head_placement.end(), p) !=
         lp.head_placement.end();
}

}  // namespace detail

// Enumerates edge-cloud transfers in dataflow order. Head partial sums move
// toward the FFN-input residence whenever any head computed on the other
// side; mixed-head layers accept their input on either side, so inter-layer
// handoffs fire only when a uniformly-placed layer sits opposite the previous
// layer's output. Requests originate at the edge: the raw prompt (4 B/token)
// is uploaded when layer 1 runs entirely on cloud, and the final activations
// are downloaded when the last layer's output lives there.
inline std::vector<Boundary> boundaries(const PartitionPlan& plan, const ModelSpec& spec,
                                        int n, int precision_bytes = 2) {
  if (!plan_shape_ok(plan, spec))
    throw std::invalid_argument("boundaries: plan shape does not match spec");
  if (n < 1) throw std::invalid_argument("boundaries: n must be >= 1");
  using detail::ffn_input_residence;
  using detail::has_head_on;
  using detail::output_residence;

  const double act = activation_bytes(spec, n, precision_bytes);
  std::vector<Boundary> out;

  if (!has_head_on(plan.layers.front(), Placement::Edge)) {
    out.push_back({0, BoundaryKind::InputUpload, act + 4.0 * n, Direction::EdgeToCloud});
  }

  for (int l = 0; l < spec.layers; ++l) {
    const auto& lp = plan.layers[l];
    Placement res = ffn_input_residence(lp);
    Placement other = res == Placement::Edge ? Placement::Cloud : Placement::Edge;
    if (has_head_on(lp, other)) {
      out.push_back({l + 1, BoundaryKind::HeadAggregation, act,
                     res == Placement::Edge ? Direction::CloudToEdge
                                            : Direction::EdgeToCloud});
    }
    if (lp.ffn == FfnMode::Split) {
      out.push_back({l + 1, BoundaryKind::FfnSplit,
                     static_cast<double>(n) * spec.d_ff * precision_bytes,
                     Direction::EdgeToCloud});
    }
    if (l + 1 < spec.layers) {
      Placement from = output_residence(lp);
      if (!has_head_on(plan.layers[l + 1], from)) {
        out.push_back({l + 1, BoundaryKind::InterLayerHandoff, act,
                       from == Placement::Edge ? Direction::EdgeToCloud
                                               : Direction::CloudToEdge});
      }
    }
  }

  if (output_residence(plan.layers.back()) == Placement::Cloud) {
    out.push_back({spec.layers, BoundaryKind::OutputDownload, act, Direction::CloudToEdge});
  }
  return out;
}

inline std::uint64_t action_space_size_per_layer(int heads) {
  if (heads < 1 || heads > 61)
    throw std::invalid_argument("action_space_size_per_layer: H must be in 1..61");
  return (std::uint64_t{1} << heads) * 3u;
}

// Flat action layout: per layer, H binary head slots followed by one ternary
// FFN slot.
inline std::vector<int> encode(const PartitionPlan& plan) {
  std::vector<int> v;
  for (const auto& lp : plan.layers) {
    for (auto p : lp.head_placement) v.push_back(static_cast<int>(p));
    v.push_back(static_cast<int>(lp.ffn));
  }
  return v;
}

inline PartitionPlan decode(const std::vector<int>& v, const ModelSpec& spec) {
  const std::size_t per_layer = spec.heads + 1;
  if (v.size() != per_layer * spec.layers)
    throw std::invalid_argument("decode: action vector length mismatch");
  PartitionPlan plan;
  plan.layers.resize(spec.layers);
  std::size_t i = 0;
  for (auto& lp : plan.layers) {
    lp.head_placement.resize(spec.heads);
    for (int h = 0; h < spec.heads; ++h, ++i) {
      if (v[i] != 0 && v[i] != 1)
        throw std::invalid_argument("decode: head placement symbol out of range");
      lp.head_placement[h] = static_cast<Placement>(v[i]);
    }
    if (v[i] < 0 || v[i] > 2)
      throw std::invalid_argument("decode: ffn mode symbol out of range");
    lp.ffn = static_cast<FfnMode>(v[i]);
    ++i;
  }
  return plan;
}

inline std::uint64_t plan_hash(const PartitionPlan& plan) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& lp : plan.layers) {
    for (auto p : lp.head_placement) {
      h ^= static_cast<std::uint64_t>(p) + 1;
      h *= 0x100000001b3ULL;
    }
    h ^= static_cast<std::uint64_t>(lp.ffn) + 7;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string plan_to_json(const PartitionPlan& plan) {
  std::ostringstream os;
  os << "{\"layers\":[";
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    if (l) os << ",";
    os << "{\"heads\":[";
    const auto& lp = plan.layers[l];
    for (std::size_t h = 0; h < lp.head_placement.size(); ++h) {
      if (h) os << ",";
      os << static_cast<int>(lp.head_placement[h]);
    }
    os << "],\"ffn\":" << static_cast<int>(lp.ffn) << "}";
  }
  os << "]}";
  return os.str();
}

// Layer x head 0/1 matrix, one row per layer, for heatmap rendering.
inline std::string plan_to_matrix_csv(const PartitionPlan& plan) {
  std::ostringstream os;
  for (const auto& lp : plan.layers) {
    for (std::size_t h = 0; h < lp.head_placement.size(); ++h) {
      if (h) os << ",";
      os << static_cast<int>(lp.head_placement[h]);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace edgepart
