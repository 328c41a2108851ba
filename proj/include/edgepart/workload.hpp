#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "edgepart/common.hpp"

namespace edgepart {

// Transformer architecture descriptor. Per-component FLOPs/memory/activation
// sizes derive from the dims; total edge memory checks use nominal_params
// (catalog dims do not reproduce catalog parameter counts, so both are kept).
struct ModelSpec {
  std::string name;
  int layers = 0;       // L
  int heads = 0;        // H per layer
  int d_model = 0;
  int d_head = 0;       // d_model / H
  int d_ff = 0;         // defaults to 4 * d_model
  double nominal_params = 0.0;
  int bytes_per_param = 4;

  double nominal_memory_bytes() const { return nominal_params * bytes_per_param; }
};

inline ModelSpec make_model_spec(std::string name, int layers, int heads, int d_model,
                                 double nominal_params, int d_ff = 0,
                                 int bytes_per_param = 4) {
  if (layers < 1 || heads < 1 || d_model < 1)
    throw std::invalid_argument("model spec: dims must be positive");
  if (d_model % heads != 0)
    throw std::invalid_argument("model spec: d_model must be divisible by heads");
  if (nominal_params <= 0.0)
    throw std::invalid_argument("model spec: nominal_params must be positive");
  ModelSpec s;
  s.name = std::move(name);
  s.layers = layers;
  s.heads = heads;
  s.d_model = d_model;
  s.d_head = d_model / heads;
  s.d_ff = d_ff > 0 ? d_ff : 4 * d_model;
  s.nominal_params = nominal_params;
  s.bytes_per_param = bytes_per_param;
  return s;
}

inline ModelSpec build_model_spec(const std::string& preset) {
  if (preset == "gpt2-1.5b") return make_model_spec("gpt2-1.5b", 24, 16, 1600, 1.5e9);
  if (preset == "llama-7b") return make_model_spec("llama-7b", 32, 32, 4096, 7e9);
  if (preset == "llama-13b") return make_model_spec("llama-13b", 40, 40, 5120, 1.3e10);
  throw std::invalid_argument("unknown model preset: " + preset);
}

enum class ComponentKind { Head, Ffn1, Ffn2 };

struct Component {
  int layer = 1;  // 1..L
  ComponentKind kind = ComponentKind::Head;
  int head = 1;   // 1..H, meaningful for Head only
};

inline void check_component(const ModelSpec& spec, const Component& c) {
  if (c.layer < 1 || c.layer > spec.layers)
    throw std::invalid_argument("component layer out of range");
  if (c.kind == ComponentKind::Head && (c.head < 1 || c.head > spec.heads))
    throw std::invalid_argument("component head out of range");
}

// Multiply-add counted as 2 FLOPs. Head covers Q/K/V projections, the n x n
// attention matrix, and the W_O slice; FFN halves are plain GEMMs.
inline double component_flops(const ModelSpec& spec, const Component& c, int n) {
  check_component(spec, c);
  if (n < 1) throw std::invalid_argument("component_flops: n must be >= 1");
  const double dn = n, dm = spec.d_model, dh = spec.d_head, dff = spec.d_ff;
  switch (c.kind) {
    case ComponentKind::Head:
      return 6.0 * dn * dm * dh + 4.0 * dn * dn * dh + 2.0 * dn * dh * dm;
    case ComponentKind::Ffn1:
      return 2.0 * dn * dm * dff;
    case ComponentKind::Ffn2:
      return 2.0 * dn * dff * dm;
  }
  return 0.0;
}

inline double component_memory(const ModelSpec& spec, const Component& c) {
  check_component(spec, c);
  const double bpp = spec.bytes_per_param;
  const double dm = spec.d_model, dh = spec.d_head, dff = spec.d_ff;
  switch (c.kind) {
    case ComponentKind::Head:
      return 4.0 * dm * dh * bpp;  // Q, K, V, O slices
    case ComponentKind::Ffn1:
      return (dm * dff + dff) * bpp;
    case ComponentKind::Ffn2:
      return (dff * dm + dm) * bpp;
  }
  return 0.0;
}

inline double activation_bytes(const ModelSpec& spec, int n, int precision_bytes) {
  if (n < 1) throw std::invalid_argument("activation_bytes: n must be >= 1");
  return static_cast<double>(n) * spec.d_model * precision_bytes;
}

inline int sample_arrivals(Rng& rng, double lambda, double dt) {
  if (lambda < 0.0 || dt <= 0.0)
    throw std::invalid_argument("sample_arrivals: lambda >= 0 and dt > 0 required");
  if (lambda == 0.0) return 0;
  std::poisson_distribution<int> dist(lambda * dt);
  return dist(rng);
}

struct LognormalLen {
  double mu = 5.5;
  double sigma = 0.8;
  int n_min = 50;
  int n_max = 2048;
};
struct FixedLen {
  int n = 128;
};
struct TraceLen {
  std::vector<int> lengths;
};

using SeqLenDist = std::variant<LognormalLen, FixedLen, TraceLen>;

struct WorkloadConfig {
  double lambda = 3.0;     // requests per second
  double dt = 1.0;         // slot duration, seconds
  SeqLenDist seq_len = LognormalLen{};
};

struct Request {
  std::uint64_t id = 0;
  int seq_len = 0;
  std::uint64_t arrival_slot = 0;
};

inline TraceLen load_seq_len_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  TraceLen t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // JSON-lines, one {"n": int} per record
    auto pos = line.find("\"n\"");
    if (pos == std::string::npos) throw std::runtime_error("bad trace record: " + line);
    pos = line.find(':', pos);
    t.lengths.push_back(std::stoi(line.substr(pos + 1)));
  }
  return t;
}

// Draws seq_len per the configured distribution; ids are assigned by the
// caller-maintained counter, trace replay indexes by that same counter.
class RequestSampler {
 public:
  explicit RequestSampler(WorkloadConfig cfg) : cfg_(std::move(cfg)) {}

  Request sample(Rng& rng, std::uint64_t slot) {
    Request r;
    r.id = next_id_++;
    r.arrival_slot = slot;
    if (const auto* ln = std::get_if<LognormalLen>(&cfg_.seq_len)) {
      std::lognormal_distribution<double> d(ln->mu, ln->sigma);
      double v = d(rng);
      r.seq_len = static_cast<int>(std::clamp(v, double(ln->n_min), double(ln->n_max)));
    } else if (const auto* fx = std::get_if<FixedLen>(&cfg_.seq_len)) {
      r.seq_len = fx->n;
    } else {
      const auto& tr = std::get<TraceLen>(cfg_.seq_len);
      if (trace_pos_ >= tr.lengths.size())
        throw std::runtime_error("request trace exhausted");
      r.seq_len = tr.lengths[trace_pos_++];
    }
    return r;
  }

  const WorkloadConfig& config() const { return cfg_; }

 private:
  WorkloadConfig cfg_;
  std::uint64_t next_id_ = 0;
  std::size_t trace_pos_ = 0;
};

}  // namespace edgepart
