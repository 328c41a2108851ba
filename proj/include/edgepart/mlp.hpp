#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "edgepart/common.hpp"

namespace edgepart {

// Dense feed-forward net with tanh hidden activations and a linear output
// layer. Forward caches activations; backward produces exact reverse-mode
// gradients and optionally the gradient w.r.t. the input and w.r.t. the last
// hidden activation (used to chain per-layer sub-networks).
class Mlp {
 public:
  struct Grads {
    std::vector<std::vector<double>> w;  // per layer, out*in row-major
    std::vector<std::vector<double>> b;

    void add_scaled(const Grads& o, double s) {
      for (std::size_t l = 0; l < w.size(); ++l) {
        for (std::size_t i = 0; i < w[l].size(); ++i) w[l][i] += s * o.w[l][i];
        for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += s * o.b[l][i];
      }
    }
    void scale(double s) {
      for (auto& lw : w)
        for (auto& v : lw) v *= s;
      for (auto& lb : b)
        for (auto& v : lb) v *= s;
    }
  };

  struct Trace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
  };

  Mlp() = default;

  Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("mlp: need at least two sizes");
    w_.resize(n_layers());
    b_.resize(n_layers());
    for (std::size_t l = 0; l < n_layers(); ++l) {
      int in = sizes_[l], out = sizes_[l + 1];
      double scale = std::sqrt(1.0 / in);
      std::uniform_real_distribution<double> d(-scale, scale);
      w_[l].resize(static_cast<std::size_t>(out) * in);
      b_[l].assign(out, 0.0);
      for (auto& v : w_[l]) v = d(rng);
    }
  }

  std::size_t n_layers() const { return sizes_.size() - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int last_hidden_dim() const {
    return sizes_.size() > 2 ? sizes_[sizes_.size() - 2] : sizes_.front();
  }

  std::vector<double> forward(const std::vector<double>& x, Trace* trace = nullptr) const {
    if (static_cast<int>(x.size()) != input_dim())
      throw std::invalid_argument("mlp forward: input dimension mismatch");
    std::vector<double> a = x;
    if (trace) trace->acts.assign(1, a);
    for (std::size_t l = 0; l < n_layers(); ++l) {
      int in = sizes_[l], out = sizes_[l + 1];
      std::vector<double> z(out);
      for (int o = 0; o < out; ++o) {
        double s = b_[l][o];
        const double* row = &w_[l][static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) s += row[i] * a[i];
        z[o] = s;
      }
      if (l + 1 < n_layers())
        for (auto& v : z) v = std::tanh(v);
      a = std::move(z);
      if (trace) trace->acts.push_back(a);
    }
    return a;
  }

  // d_out: dL/d(output). d_last_hidden, when given, is added to dL/d(last
  // hidden activation). Gradients accumulate into g; returns dL/d(input) via
  // d_input when non-null.
  void backward(const Trace& trace, const std::vector<double>& d_out, Grads& g,
                std::vector<double>* d_input = nullptr,
                const std::vector<double>* d_last_hidden = nullptr) const {
    std::vector<double> delta = d_out;  // dL/dz at current layer (output is linear)
    for (std::size_t li = n_layers(); li-- > 0;) {
      const auto& a_in = trace.acts[li];
      int in = sizes_[li], out = sizes_[li + 1];
      for (int o = 0; o < out; ++o) {
        double d = delta[o];
        g.b[li][o] += d;
        double* grow = &g.w[li][static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) grow[i] += d * a_in[i];
      }
      if (li == 0 && !d_input) break;
      std::vector<double> d_act(in, 0.0);
      for (int o = 0; o < out; ++o) {
        double d = delta[o];
        const double* row = &w_[li][static_cast<std::size_t>(o) * in];
        for (int i = 0; i < in; ++i) d_act[i] += d * row[i];
      }
      if (li == 0) {
        *d_input = std::move(d_act);
        break;
      }
      if (d_last_hidden && li == n_layers() - 1)
        for (int i = 0; i < in; ++i) d_act[i] += (*d_last_hidden)[i];
      // a = tanh(z) at hidden layers
      const auto& a = trace.acts[li];
      delta.assign(in, 0.0);
      for (int i = 0; i < in; ++i) delta[i] = d_act[i] * (1.0 - a[i] * a[i]);
    }
  }

  Grads zero_grads() const {
    Grads g;
    g.w.resize(n_layers());
    g.b.resize(n_layers());
    for (std::size_t l = 0; l < n_layers(); ++l) {
      g.w[l].assign(w_[l].size(), 0.0);
      g.b[l].assign(b_[l].size(), 0.0);
    }
    return g;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) n += w_[l].size() + b_[l].size();
    return n;
  }

  std::vector<double> get_params() const {
    std::vector<double> p;
    p.reserve(param_count());
    for (std::size_t l = 0; l < n_layers(); ++l) {
      p.insert(p.end(), w_[l].begin(), w_[l].end());
      p.insert(p.end(), b_[l].begin(), b_[l].end());
    }
    return p;
  }

  void set_params(const std::vector<double>& p) {
    if (p.size() != param_count()) throw std::invalid_argument("mlp: param size mismatch");
    std::size_t k = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      for (auto& v : w_[l]) v = p[k++];
      for (auto& v : b_[l]) v = p[k++];
    }
  }

  static std::vector<double> flatten_grads(const Grads& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
      out.insert(out.end(), g.w[l].begin(), g.w[l].end());
      out.insert(out.end(), g.b[l].begin(), g.b[l].end());
    }
    return out;
  }

  // In-place SGD-style step: params += scale * grads.
  void apply_step(const Grads& g, double scale) {
    for (std::size_t l = 0; l < n_layers(); ++l) {
      for (std::size_t i = 0; i < w_[l].size(); ++i) w_[l][i] += scale * g.w[l][i];
      for (std::size_t i = 0; i < b_[l].size(); ++i) b_[l][i] += scale * g.b[l][i];
    }
  }

 private:
  std::vector<int> sizes_;
  std::vector<std::vector<double>> w_;
  std::vector<std::vector<double>> b_;
};

// Adam state over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  // grad is the ASCENT direction; params move along +lr * normalized grad.
  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (grad.size() != m_.size()) throw std::invalid_argument("adam: size mismatch");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] += lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace edgepart
