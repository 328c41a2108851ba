#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "edgepart/mlp.hpp"
#include "edgepart/partition.hpp"

namespace edgepart {

inline std::vector<double> softmax(const std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

struct GumbelSample {
  std::vector<double> relaxed;  // tempered softmax of perturbed logits
  int symbol = 0;               // argmax of perturbed logits
  double log_prob = 0.0;        // log softmax(logits)[symbol]
};

inline GumbelSample gumbel_softmax_sample(const std::vector<double>& logits, double temp,
                                          Rng& rng, bool hard = true) {
  if (temp <= 0.0) throw std::invalid_argument("gumbel_softmax_sample: temp must be > 0");
  std::uniform_real_distribution<double> unif(1e-12, 1.0);
  std::vector<double> pert(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    pert[i] = (logits[i] - std::log(-std::log(unif(rng)))) / temp;
  GumbelSample out;
  out.relaxed = softmax(pert);
  out.symbol = static_cast<int>(
      std::max_element(out.relaxed.begin(), out.relaxed.end()) - out.relaxed.begin());
  auto p = softmax(logits);
  out.log_prob = std::log(std::max(p[out.symbol], 1e-300));
  (void)hard;
  return out;
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
                     double next_value, double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("gae: rewards/values length mismatch");
  GaeResult out;
  out.advantages.assign(rewards.size(), 0.0);
  out.returns.assign(rewards.size(), 0.0);
  double adv = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    double v_next = (i + 1 < values.size()) ? values[i + 1] : next_value;
    double delta = rewards[i] + gamma * v_next - values[i];
    adv = delta + gamma * lambda * adv;
    out.advantages[i] = adv;
    out.returns[i] = adv + values[i];
  }
  return out;
}

inline std::vector<double> combined_advantage(const std::vector<double>& a_perf,
                                              const std::vector<double>& a_stab, double v) {
  if (a_perf.size() != a_stab.size())
    throw std::invalid_argument("combined_advantage: length mismatch");
  std::vector<double> out(a_perf.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a_perf[i] + v * a_stab[i];
  return out;
}

inline double anneal_temperature(double temp, double beta, double temp_min = 0.1) {
  return std::max(beta * temp, temp_min);
}

// Shared encoder over state features, then one sub-network per transformer
// layer consuming (encoding, previous layer embedding). Each sub-network
// emits H binary logit pairs plus one ternary FFN triple; its last hidden
// activation is the embedding passed down the chain.
class HierarchicalPolicy {
 public:
  HierarchicalPolicy() = default;

  HierarchicalPolicy(int feature_dim, int layers, int heads, Rng& rng, int enc_hidden = 32,
                     int enc_out = 16, int embed_dim = 8)
      : layers_(layers), heads_(heads), embed_dim_(embed_dim),
        encoder_({feature_dim, enc_hidden, enc_out}, rng) {
    subnets_.reserve(layers);
    for (int l = 0; l < layers; ++l)
      subnets_.emplace_back(std::vector<int>{enc_out + embed_dim, embed_dim, group_logits()},
                            rng);
  }

  int layers() const { return layers_; }
  int heads() const { return heads_; }
  int groups_per_layer() const { return heads_ + 1; }
  int group_logits() const { return 2 * heads_ + 3; }
  int feature_dim() const { return encoder_.input_dim(); }

  struct Trace {
    Mlp::Trace enc;
    std::vector<Mlp::Trace> sub;
    std::vector<std::vector<double>> logits;  // per layer, 2H+3
  };

  std::vector<std::vector<double>> forward(const std::vector<double>& features,
                                           Trace* trace = nullptr) const {
    Mlp::Trace enc_tr;
    auto enc = encoder_.forward(features, &enc_tr);
    if (trace) {
      trace->enc = std::move(enc_tr);
      trace->sub.resize(layers_);
      trace->logits.resize(layers_);
    }
    std::vector<std::vector<double>> logits(layers_);
    std::vector<double> embed(embed_dim_, 0.0);  // e^(0) = 0
    for (int l = 0; l < layers_; ++l) {
      std::vector<double> in = enc;
      in.insert(in.end(), embed.begin(), embed.end());
      Mlp::Trace sub_tr;
      logits[l] = subnets_[l].forward(in, &sub_tr);
      // e^(l) = last hidden activation of sub-network l
      embed = sub_tr.acts[sub_tr.acts.size() - 2];
      if (trace) {
        trace->sub[l] = std::move(sub_tr);
        trace->logits[l] = logits[l];
      }
    }
    return logits;
  }

  // Slices group g of a per-layer logit vector: g < H -> binary pair,
  // g == H -> ternary triple.
  std::vector<double> group(const std::vector<double>& layer_logits, int g) const {
    if (g < heads_) return {layer_logits[2 * g], layer_logits[2 * g + 1]};
    return {layer_logits[2 * heads_], layer_logits[2 * heads_ + 1],
            layer_logits[2 * heads_ + 2]};
  }

  struct ActionSample {
    std::vector<int> action;  // flat, layer-major: H head symbols then FFN symbol
    double log_prob = 0.0;
  };

  ActionSample sample(const std::vector<std::vector<double>>& logits, double temp,
                      Rng& rng) const {
    ActionSample out;
    for (int l = 0; l < layers_; ++l) {
      for (int g = 0; g <= heads_; ++g) {
        auto gs = gumbel_softmax_sample(group(logits[l], g), temp, rng, true);
        out.action.push_back(gs.symbol);
        out.log_prob += gs.log_prob;
      }
    }
    return out;
  }

  std::vector<int> greedy_action(const std::vector<std::vector<double>>& logits) const {
    std::vector<int> action;
    for (int l = 0; l < layers_; ++l) {
      for (int g = 0; g <= heads_; ++g) {
        auto gl = group(logits[l], g);
        action.push_back(static_cast<int>(std::max_element(gl.begin(), gl.end()) -
                                          gl.begin()));
      }
    }
    return action;
  }

  struct LogProbInfo {
    double log_prob = 0.0;
    double entropy = 0.0;
  };

  LogProbInfo log_prob(const std::vector<std::vector<double>>& logits,
                       const std::vector<int>& action) const {
    LogProbInfo info;
    std::size_t k = 0;
    for (int l = 0; l < layers_; ++l) {
      for (int g = 0; g <= heads_; ++g, ++k) {
        auto p = softmax(group(logits[l], g));
        info.log_prob += std::log(std::max(p[action[k]], 1e-300));
        for (double q : p)
          if (q > 0.0) info.entropy -= q * std::log(q);
      }
    }
    return info;
  }

  struct Grads {
    Mlp::Grads enc;
    std::vector<Mlp::Grads> sub;
  };

  Grads zero_grads() const {
    Grads g;
    g.enc = encoder_.zero_grads();
    g.sub.reserve(layers_);
    for (const auto& s : subnets_) g.sub.push_back(s.zero_grads());
    return g;
  }

  // Backpropagates dL/dlogits (per layer) through the sub-network chain and
  // the shared encoder, accumulating into g.
  void backward(const Trace& trace, const std::vector<std::vector<double>>& d_logits,
                Grads& g) const {
    std::vector<double> d_enc(encoder_.output_dim(), 0.0);
    std::vector<double> d_embed(embed_dim_, 0.0);  // dL/de^(l) flowing upstream
    for (int l = layers_ - 1; l >= 0; --l) {
      std::vector<double> d_in;
      subnets_[l].backward(trace.sub[l], d_logits[l], g.sub[l], &d_in, &d_embed);
      for (int i = 0; i < encoder_.output_dim(); ++i) d_enc[i] += d_in[i];
      d_embed.assign(d_in.begin() + encoder_.output_dim(), d_in.end());
    }
    encoder_.backward(trace.enc, d_enc, g.enc);
  }

  std::vector<double> get_params() const {
    auto p = encoder_.get_params();
    for (const auto& s : subnets_) {
      auto q = s.get_params();
      p.insert(p.end(), q.begin(), q.end());
    }
    return p;
  }

  void set_params(const std::vector<double>& p) {
    std::size_t n = encoder_.param_count();
    encoder_.set_params({p.begin(), p.begin() + n});
    std::size_t off = n;
    for (auto& s : subnets_) {
      std::size_t m = s.param_count();
      s.set_params({p.begin() + off, p.begin() + off + m});
      off += m;
    }
    if (off != p.size()) throw std::invalid_argument("policy: param size mismatch");
  }

  std::vector<double> flatten_grads(const Grads& g) const {
    auto out = Mlp::flatten_grads(g.enc);
    for (const auto& s : g.sub) {
      auto q = Mlp::flatten_grads(s);
      out.insert(out.end(), q.begin(), q.end());
    }
    return out;
  }

 private:
  int layers_ = 0;
  int heads_ = 0;
  int embed_dim_ = 0;
  Mlp encoder_;
  std::vector<Mlp> subnets_;
};

struct TrainConfig {
  double lr_actor = 3e-4;
  double lr_critic = 1e-3;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  int ppo_epochs = 4;
  int batch_size = 256;
  int buffer_size = 1000;
  int update_every_steps = 100;
  int episodes = 2500;
  int warmup_episodes = 100;
  int eval_every = 50;
  double anneal_beta = 0.995;
  double temp_min = 0.1;
  double temp_init = 1.0;
  double alpha_adapt = 1e-4;

  void check() const {
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("train: gamma in (0,1]");
    if (gae_lambda <= 0.0 || gae_lambda > 1.0)
      throw std::invalid_argument("train: gae lambda in (0,1]");
    if (clip_eps <= 0.0) throw std::invalid_argument("train: clip eps > 0");
    if (batch_size < 1 || buffer_size < batch_size)
      throw std::invalid_argument("train: buffer must hold at least one batch");
  }
};

struct Transition {
  std::vector<double> features;
  std::vector<int> action;
  double log_prob = 0.0;
  double reward = 0.0;       // shaped reward -(V*drift + g)
  double perf_reward = 0.0;  // -g
  double drift = 0.0;
  double v_weight = 0.0;     // V(t) at this slot
  double value_perf = 0.0;
  double value_stab = 0.0;
  double q_target = 0.0;  // mean backlog over the following window
  bool done = false;
};

using TrajectoryBatch = std::vector<Transition>;

struct PpoStats {
  double policy_loss = 0.0;
  double perf_critic_loss = 0.0;
  double stab_critic_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  bool aborted = false;  // non-finite loss encountered
};

namespace detail {

// Per-group dL/dlogits for objective coef*logp + ent_coef*H.
inline void add_group_logit_grad(const std::vector<double>& logits_group, int action,
                                 double coef, double ent_coef, std::vector<double>& d) {
  auto p = softmax(logits_group);
  double ent = 0.0;
  for (double q : p)
    if (q > 0.0) ent -= q * std::log(q);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double dlogp = (static_cast<int>(i) == action ? 1.0 : 0.0) - p[i];
    double dent = -p[i] * (std::log(std::max(p[i], 1e-300)) + ent);
    d[i] += coef * dlogp + ent_coef * dent;
  }
}

inline bool finite(double x) { return std::isfinite(x); }

}  // namespace detail

struct DualCritics {
  Mlp perf;
  Mlp stab;
};

// One PPO update over the given batch: E_ppo epochs of clipped-surrogate
// ascent on the policy plus squared-error regression for both critics.
// Advantages: GAE on the performance reward stream using the perf critic's
// stored values, plus V(t) times the stability advantage (critic's backlog
// prediction error, sign-flipped so lower-than-predicted backlog is good).
inline PpoStats ppo_update(HierarchicalPolicy& policy, DualCritics& critics,
                           const TrajectoryBatch& batch, const TrainConfig& cfg,
                           Adam& actor_opt, Adam& perf_opt, Adam& stab_opt) {
  if (batch.empty()) throw std::invalid_argument("ppo_update: empty batch");
  cfg.check();
  const std::size_t n = batch.size();

  std::vector<double> perf_rewards(n), perf_values(n);
  for (std::size_t i = 0; i < n; ++i) {
    perf_rewards[i] = batch[i].perf_reward;
    perf_values[i] = batch[i].value_perf;
  }
  auto g_perf = gae(perf_rewards, perf_values, batch.back().value_perf, cfg.gamma,
                    cfg.gae_lambda);

  std::vector<double> a_total(n);
  for (std::size_t i = 0; i < n; ++i) {
    double a_stab = -(batch[i].q_target - batch[i].value_stab);
    a_total[i] = g_perf.advantages[i] + batch[i].v_weight * a_stab;
  }
  // Normalize unless the batch is degenerate (all-equal advantages).
  double mean = std::accumulate(a_total.begin(), a_total.end(), 0.0) / n;
  double var = 0.0;
  for (double a : a_total) var += (a - mean) * (a - mean);
  double sd = std::sqrt(var / n);
  if (sd > 1e-8)
    for (auto& a : a_total) a = (a - mean) / sd;

  PpoStats stats;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    auto grads = policy.zero_grads();
    double loss = 0.0, ent_sum = 0.0;
    int clipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
      HierarchicalPolicy::Trace tr;
      auto logits = policy.forward(batch[i].features, &tr);
      auto info = policy.log_prob(logits, batch[i].action);
      double ratio = std::exp(info.log_prob - batch[i].log_prob);
      double a = a_total[i];
      double unclipped = ratio * a;
      double clip_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
      double clipped_obj = clip_ratio * a;
      double surr = std::min(unclipped, clipped_obj);
      loss += -surr - cfg.entropy_coef * info.entropy;
      ent_sum += info.entropy;
      if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;

      // d surr / d logp: gradient flows only through the unclipped branch
      // when it attains the min (standard PPO subgradient).
      double coef = (unclipped <= clipped_obj) ? ratio * a : 0.0;
      if (coef != 0.0 || cfg.entropy_coef != 0.0) {
        std::vector<std::vector<double>> d_logits(policy.layers());
        std::size_t k = 0;
        for (int l = 0; l < policy.layers(); ++l) {
          d_logits[l].assign(policy.group_logits(), 0.0);
          int off = 0;
          for (int g = 0; g <= policy.heads(); ++g, ++k) {
            int gsz = g < policy.heads() ? 2 : 3;
            std::vector<double> dg(gsz, 0.0);
            detail::add_group_logit_grad(policy.group(logits[l], g), batch[i].action[k],
                                         coef, cfg.entropy_coef, dg);
            for (int j = 0; j < gsz; ++j) d_logits[l][off + j] += dg[j];
            off += gsz;
          }
        }
        policy.backward(tr, d_logits, grads);
      }
    }
    if (!detail::finite(loss)) {
      stats.aborted = true;
      return stats;
    }
    stats.policy_loss = loss / n;
    stats.entropy = ent_sum / n;
    stats.clip_fraction = static_cast<double>(clipped) / n;

    auto flat = policy.flatten_grads(grads);
    for (auto& v : flat) v /= static_cast<double>(n);
    // ascent on the surrogate = descent on loss; flat currently holds
    // d(surrogate+entropy)/dtheta accumulated with ascent sign
    auto params = policy.get_params();
    actor_opt.step(params, flat);
    policy.set_params(params);

    // Critic regressions.
    auto fit = [&](Mlp& critic, Adam& opt, auto target_of, double& loss_out) {
      auto cg = critic.zero_grads();
      double closs = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        Mlp::Trace tr;
        double pred = critic.forward(batch[i].features, &tr)[0];
        double err = pred - target_of(i);
        closs += err * err;
        critic.backward(tr, {-2.0 * err / static_cast<double>(n)}, cg);
      }
      loss_out = closs / n;
      if (!detail::finite(loss_out)) return false;
      auto cf = Mlp::flatten_grads(cg);
      auto cp = critic.get_params();
      opt.step(cp, cf);
      critic.set_params(cp);
      return true;
    };
    bool ok1 = fit(critics.perf, perf_opt, [&](std::size_t i) { return g_perf.returns[i]; },
                   stats.perf_critic_loss);
    bool ok2 = fit(critics.stab, stab_opt, [&](std::size_t i) { return batch[i].q_target; },
                   stats.stab_critic_loss);
    if (!ok1 || !ok2) {
      stats.aborted = true;
      return stats;
    }
  }
  return stats;
}

// One fast-adaptation step: theta += alpha * grad of the PPO surrogate with
// the stability advantage weight elevated by stability_weight. Returns false
// (no-op) on an empty buffer.
inline bool online_adapt(HierarchicalPolicy& policy, const TrajectoryBatch& recent,
                         double alpha_adapt, double stability_weight, double gamma,
                         double gae_lambda) {
  if (recent.empty()) return false;
  if (alpha_adapt == 0.0) return true;
  const std::size_t n = recent.size();
  std::vector<double> pr(n), pv(n);
  for (std::size_t i = 0; i < n; ++i) {
    pr[i] = recent[i].perf_reward;
    pv[i] = recent[i].value_perf;
  }
  auto g_perf = gae(pr, pv, recent.back().value_perf, gamma, gae_lambda);

  auto grads = policy.zero_grads();
  for (std::size_t i = 0; i < n; ++i) {
    double a_stab = -(recent[i].q_target - recent[i].value_stab);
    double a = g_perf.advantages[i] + stability_weight * recent[i].v_weight * a_stab;
    HierarchicalPolicy::Trace tr;
    auto logits = policy.forward(recent[i].features, &tr);
    auto info = policy.log_prob(logits, recent[i].action);
    double ratio = std::exp(info.log_prob - recent[i].log_prob);
    double coef = ratio * a / static_cast<double>(n);
    std::vector<std::vector<double>> d_logits(policy.layers());
    std::size_t k = 0;
    for (int l = 0; l < policy.layers(); ++l) {
      d_logits[l].assign(policy.group_logits(), 0.0);
      int off = 0;
      for (int g = 0; g <= policy.heads(); ++g, ++k) {
        int gsz = g < policy.heads() ? 2 : 3;
        std::vector<double> dg(gsz, 0.0);
        detail::add_group_logit_grad(policy.group(logits[l], g), recent[i].action[k], coef,
                                     0.0, dg);
        for (int j = 0; j < gsz; ++j) d_logits[l][off + j] += dg[j];
        off += gsz;
      }
    }
    policy.backward(tr, d_logits, grads);
  }
  auto flat = policy.flatten_grads(grads);
  auto params = policy.get_params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += alpha_adapt * flat[i];
  policy.set_params(params);
  return true;
}

}  // namespace edgepart
