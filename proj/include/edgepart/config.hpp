#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgepart/sim.hpp"

namespace edgepart {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The full experiment schema with its defaults. User configs may omit keys
// (defaults apply) but may not introduce unknown ones.
inline Json default_config() {
  return Json{
      {"model",
       {{"preset", "gpt2-1.5b"},
        {"layers", 0},  // nonzero: custom spec overriding the preset dims
        {"heads", 0},
        {"d_model", 0},
        {"d_ff", 0},
        {"nominal_params", 0.0}}},
      {"device",
       {{"name", "edge-gateway"},
        {"cc_edge", 1e13},
        {"cc_cloud", 2.5e15},
        {"mem_edge", 8e9},
        {"p_comp", 25.0},
        {"p_comm", 2.0},
        {"eta_edge", 0.2},
        {"eta_cloud", 0.35}}},
      {"network", {{"scenario", "wifi"}, {"trace_path", ""}, {"trace_loop", false}}},
      {"workload",
       {{"lambda", 3.0},
        {"dt", 1.0},
        {"seq_len",
         {{"kind", "lognormal"},
          {"mu", 5.5},
          {"sigma", 0.8},
          {"n_min", 50},
          {"n_max", 2048},
          {"n_fixed", 128},
          {"trace_path", ""}}}}},
      {"weights", {{"latency", 1.0}, {"energy", 0.5}, {"accuracy", 0.1}}},
      {"lyapunov",
       {{"v_min", 0.1},
        {"v_max", 10.0},
        {"q_ref", 10.0},
        {"q_critical", 50.0},
        {"b_bound", 100.0}}},
      {"quant", {{"bits", 8}, {"alpha", 1.0}, {"probe_seed", 0x9e3779b9u}}},
      {"cost",
       {{"mode", "pipelined"},
        {"boundary_precision_bytes", 2},
        {"latency_per_transition", true}}},
      {"backoff", {{"base_s", 0.05}, {"multiplier", 2.0}, {"max_retries", 5}}},
      {"episode",
       {{"t_max", 1000},
        {"window", 20},
        {"n_ref", 256},
        {"lambda_max", 20.0},
        {"background_load", 1.0},
        {"fixed_v", nullptr}}},
      {"controller",
       {{"name", "greedy-dpp"},
        {"fine_k", 4},
        {"use_drift", true},
        {"split_layer", -1},
        {"checkpoint", ""},
        {"plan_path", ""}}},
      {"train",
       {{"lr_actor", 3e-4},
        {"lr_critic", 1e-3},
        {"gamma", 0.99},
        {"gae_lambda", 0.95},
        {"clip_eps", 0.2},
        {"entropy_coef", 0.01},
        {"ppo_epochs", 4},
        {"batch_size", 256},
        {"buffer_size", 1000},
        {"update_every_steps", 100},
        {"episodes", 2500},
        {"warmup_episodes", 100},
        {"eval_every", 50},
        {"anneal_beta", 0.995},
        {"temp_min", 0.1},
        {"temp_init", 1.0},
        {"alpha_adapt", 1e-4},
        {"scenarios", Json::array()},
        {"enc_hidden", 32},
        {"enc_out", 16},
        {"embed_dim", 8},
        {"critic_hidden", 32},
        {"eval_episodes", 3}}},
      {"seed", 42},
      {"out_dir", "out"}};
}

namespace detail {

inline void check_schema(const Json& user, const Json& defaults, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string here = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key: " + here);
    const Json& d = defaults.at(it.key());
    const Json& u = it.value();
    if (d.is_object()) {
      if (!u.is_object()) throw ConfigError("config key must be an object: " + here);
      check_schema(u, d, here);
    } else if (d.is_null() || u.is_null()) {
      if (!u.is_null() && !u.is_number())
        throw ConfigError("config key must be a number or null: " + here);
    } else if (d.is_string() != u.is_string() || d.is_boolean() != u.is_boolean() ||
               (d.is_number() && !u.is_number()) || (d.is_array() && !u.is_array())) {
      throw ConfigError("config key has wrong type: " + here);
    }
  }
}

inline void merge_into(Json& base, const Json& user) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (base.at(it.key()).is_object() && it.value().is_object())
      merge_into(base.at(it.key()), it.value());
    else
      base[it.key()] = it.value();
  }
}

}  // namespace detail

inline Json resolve_config(const Json& user) {
  Json cfg = default_config();
  detail::check_schema(user, cfg, "");
  detail::merge_into(cfg, user);
  return cfg;
}

inline Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Json user;
  try {
    user = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return resolve_config(user);
}

// Dotted-path overrides of the form "a.b.c=value"; the value is parsed as
// JSON, falling back to a string literal.
inline void apply_override(Json& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
  std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
  Json parsed;
  try {
    parsed = Json::parse(val);
  } catch (...) {
    parsed = val;
  }
  Json* node = &cfg;
  std::istringstream ks(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ks, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty override key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      throw ConfigError("unknown config key: " + key);
    node = &(*node)[parts[i]];
  }
  if (!node->contains(parts.back())) throw ConfigError("unknown config key: " + key);
  Json probe = Json::object();
  probe[parts.back()] = parsed;
  Json scope = Json::object();
  scope[parts.back()] = (*node)[parts.back()];
  detail::check_schema(probe, scope, key.substr(0, key.size() - parts.back().size() -
                                                       (parts.size() > 1 ? 1 : 0)));
  (*node)[parts.back()] = parsed;
}

// Hash of the canonical (sorted-key) serialization.
inline std::uint64_t config_hash(const Json& cfg) {
  std::string s = cfg.dump();
  return fnv1a(s.data(), s.size());
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

inline ModelSpec model_from_config(const Json& cfg) {
  const auto& m = cfg.at("model");
  if (m.at("layers").get<int>() > 0) {
    return make_model_spec("custom", m.at("layers"), m.at("heads"), m.at("d_model"),
                           m.at("nominal_params").get<double>() > 0.0
                               ? m.at("nominal_params").get<double>()
                               : 1.0,
                           m.at("d_ff"));
  }
  return build_model_spec(m.at("preset"));
}

inline NetworkScenario scenario_from_config(const Json& net) {
  std::string name = net.at("scenario");
  if (name == "trace") {
    NetworkScenario s;
    s.name = "trace";
    s.kind = load_network_trace(net.at("trace_path"), net.at("trace_loop"));
    return s;
  }
  return make_scenario(name);
}

inline EpisodeConfig episode_from_config(const Json& cfg) {
  EpisodeConfig e;
  e.spec = model_from_config(cfg);

  const auto& d = cfg.at("device");
  e.device = {d.at("name"),   d.at("cc_edge"),  d.at("cc_cloud"), d.at("mem_edge"),
              d.at("p_comp"), d.at("p_comm"),   d.at("eta_edge"), d.at("eta_cloud")};
  e.device.check();

  e.scenario = scenario_from_config(cfg.at("network"));

  const auto& w = cfg.at("workload");
  e.workload.lambda = w.at("lambda");
  e.workload.dt = w.at("dt");
  const auto& sl = w.at("seq_len");
  std::string kind = sl.at("kind");
  if (kind == "lognormal")
    e.workload.seq_len =
        LognormalLen{sl.at("mu"), sl.at("sigma"), sl.at("n_min"), sl.at("n_max")};
  else if (kind == "fixed")
    e.workload.seq_len = FixedLen{sl.at("n_fixed")};
  else if (kind == "trace")
    e.workload.seq_len = load_seq_len_trace(sl.at("trace_path"));
  else
    throw ConfigError("workload.seq_len.kind must be lognormal, fixed, or trace");

  const auto& cw = cfg.at("weights");
  e.weights = {cw.at("latency"), cw.at("energy"), cw.at("accuracy")};

  const auto& ly = cfg.at("lyapunov");
  e.lyapunov = {ly.at("v_min"), ly.at("v_max"), ly.at("q_ref"), ly.at("q_critical"),
                ly.at("b_bound")};
  e.lyapunov.check();

  const auto& q = cfg.at("quant");
  e.quant = {q.at("bits"), q.at("alpha"), q.at("probe_seed")};

  const auto& co = cfg.at("cost");
  std::string mode = co.at("mode");
  if (mode == "pipelined")
    e.cost_opt.mode = LatencyMode::Pipelined;
  else if (mode == "sequential")
    e.cost_opt.mode = LatencyMode::Sequential;
  else
    throw ConfigError("cost.mode must be pipelined or sequential");
  e.cost_opt.boundary_precision_bytes = co.at("boundary_precision_bytes");
  e.cost_opt.latency_per_transition = co.at("latency_per_transition");

  const auto& b = cfg.at("backoff");
  e.backoff = {b.at("base_s"), b.at("multiplier"), b.at("max_retries")};

  const auto& ep = cfg.at("episode");
  e.t_max = ep.at("t_max");
  e.window = ep.at("window");
  e.n_ref = ep.at("n_ref");
  e.lambda_max = ep.at("lambda_max");
  e.background_load = ep.at("background_load");
  if (!ep.at("fixed_v").is_null()) e.fixed_v = ep.at("fixed_v").get<double>();
  if (e.t_max < 1 || e.window < 1 || e.n_ref < 1)
    throw ConfigError("episode: t_max, window, n_ref must be >= 1");
  return e;
}

inline TrainConfig train_from_config(const Json& cfg) {
  const auto& t = cfg.at("train");
  TrainConfig tc;
  tc.lr_actor = t.at("lr_actor");
  tc.lr_critic = t.at("lr_critic");
  tc.gamma = t.at("gamma");
  tc.gae_lambda = t.at("gae_lambda");
  tc.clip_eps = t.at("clip_eps");
  tc.entropy_coef = t.at("entropy_coef");
  tc.ppo_epochs = t.at("ppo_epochs");
  tc.batch_size = t.at("batch_size");
  tc.buffer_size = t.at("buffer_size");
  tc.update_every_steps = t.at("update_every_steps");
  tc.episodes = t.at("episodes");
  tc.warmup_episodes = t.at("warmup_episodes");
  tc.eval_every = t.at("eval_every");
  tc.anneal_beta = t.at("anneal_beta");
  tc.temp_min = t.at("temp_min");
  tc.temp_init = t.at("temp_init");
  tc.alpha_adapt = t.at("alpha_adapt");
  try {
    tc.check();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return tc;
}

inline TrainSetup setup_from_config(const Json& cfg) {
  TrainSetup s;
  s.env = episode_from_config(cfg);
  const auto& t = cfg.at("train");
  for (const auto& name : t.at("scenarios"))
    s.scenarios.push_back(make_scenario(name.get<std::string>()));
  s.policy_enc_hidden = t.at("enc_hidden");
  s.policy_enc_out = t.at("enc_out");
  s.policy_embed = t.at("embed_dim");
  s.critic_hidden = t.at("critic_hidden");
  s.eval_episodes = t.at("eval_episodes");
  return s;
}

inline PartitionPlan plan_from_json(const Json& j, const ModelSpec& spec) {
  PartitionPlan plan;
  for (const auto& layer : j.at("layers")) {
    LayerPartition lp;
    for (const auto& h : layer.at("heads")) {
      int v = h.get<int>();
      if (v != 0 && v != 1) throw ConfigError("plan: head placement must be 0 or 1");
      lp.head_placement.push_back(static_cast<Placement>(v));
    }
    int f = layer.at("ffn").get<int>();
    if (f < 0 || f > 2) throw ConfigError("plan: ffn mode must be 0, 1, or 2");
    lp.ffn = static_cast<FfnMode>(f);
    plan.layers.push_back(std::move(lp));
  }
  if (!plan_shape_ok(plan, spec)) throw ConfigError("plan: shape does not match model");
  return plan;
}

inline PartitionPlan load_plan(const std::string& path, const ModelSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan file: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("plan parse error: ") + e.what());
  }
  return plan_from_json(j, spec);
}

inline Json metrics_to_json(const MetricsReport& m) {
  return Json{{"p50", m.p50},
              {"p95", m.p95},
              {"p99", m.p99},
              {"mean_energy_per_request", m.mean_energy_per_request},
              {"mean_acc_penalty", m.mean_acc_penalty},
              {"mean_queue", m.mean_queue},
              {"max_queue", m.max_queue},
              {"mean_cost", m.mean_cost},
              {"mean_reward", m.mean_reward},
              {"stable", m.stable},
              {"arrivals", m.arrivals},
              {"completions", m.completions},
              {"failed_final", m.failed_final},
              {"residual", m.residual},
              {"verdict", m.verdict}};
}

struct Checkpoint {
  int feature_dim = kFeatureDim;
  int layers = 0;
  int heads = 0;
  int enc_hidden = 32;
  int enc_out = 16;
  int embed_dim = 8;
  int critic_hidden = 32;
  std::vector<double> policy_params;
  std::vector<double> perf_params;
  std::vector<double> stab_params;
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline Json checkpoint_to_json(const Checkpoint& c) {
  return Json{{"kind", "edgepart-checkpoint"},
              {"feature_dim", c.feature_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"enc_hidden", c.enc_hidden},
              {"enc_out", c.enc_out},
              {"embed_dim", c.embed_dim},
              {"critic_hidden", c.critic_hidden},
              {"policy_params", c.policy_params},
              {"perf_params", c.perf_params},
              {"stab_params", c.stab_params},
              {"config_hash", c.config_hash},
              {"seed", c.seed}};
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (!j.contains("kind") || j.at("kind") != "edgepart-checkpoint")
    throw ConfigError("not a checkpoint file");
  Checkpoint c;
  c.feature_dim = j.at("feature_dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.enc_hidden = j.at("enc_hidden");
  c.enc_out = j.at("enc_out");
  c.embed_dim = j.at("embed_dim");
  c.critic_hidden = j.at("critic_hidden");
  c.policy_params = j.at("policy_params").get<std::vector<double>>();
  c.perf_params = j.at("perf_params").get<std::vector<double>>();
  c.stab_params = j.at("stab_params").get<std::vector<double>>();
  c.config_hash = j.at("config_hash");
  c.seed = j.at("seed");
  return c;
}

inline Checkpoint make_checkpoint(const HierarchicalPolicy& policy, const DualCritics& critics,
                                  const TrainSetup& setup, std::uint64_t cfg_hash,
                                  std::uint64_t seed) {
  Checkpoint c;
  c.layers = policy.layers();
  c.heads = policy.heads();
  c.enc_hidden = setup.policy_enc_hidden;
  c.enc_out = setup.policy_enc_out;
  c.embed_dim = setup.policy_embed;
  c.critic_hidden = setup.critic_hidden;
  c.policy_params = policy.get_params();
  c.perf_params = critics.perf.get_params();
  c.stab_params = critics.stab.get_params();
  c.config_hash = hash_hex(cfg_hash);
  c.seed = seed;
  return c;
}

inline std::pair<HierarchicalPolicy, DualCritics> restore_checkpoint(const Checkpoint& c) {
  Rng rng(0);
  HierarchicalPolicy policy(c.feature_dim, c.layers, c.heads, rng, c.enc_hidden, c.enc_out,
                            c.embed_dim);
  DualCritics critics{Mlp({c.feature_dim, c.critic_hidden, 1}, rng),
                      Mlp({c.feature_dim, c.critic_hidden, 1}, rng)};
  policy.set_params(c.policy_params);
  critics.perf.set_params(c.perf_params);
  critics.stab.set_params(c.stab_params);
  return {std::move(policy), std::move(critics)};
}

// Controller registry. "learned" requires controller.checkpoint; "plan"
// requires controller.plan_path.
inline std::unique_ptr<Controller> make_controller(const Json& cfg, const ModelSpec& spec,
                                                   const DeviceProfile& device, Rng& rng) {
  const auto& c = cfg.at("controller");
  std::string name = c.at("name");
  if (name == "edge-only" || name == "cloud-only") return make_baseline(name, spec);
  if (name == "layer-split") {
    int sl = c.at("split_layer");
    return make_baseline(name, spec, sl >= 0 ? std::optional<int>(sl) : std::nullopt);
  }
  if (name == "random") return std::make_unique<RandomController>(rng);
  if (name == "plan") {
    std::string path = c.at("plan_path");
    if (path.empty()) throw ConfigError("controller 'plan' needs controller.plan_path");
    return std::make_unique<ConstantController>(load_plan(path, spec), "plan");
  }
  if (name == "greedy-dpp" || name == "greedy-cost") {
    EpisodeConfig e = episode_from_config(cfg);
    GreedyDppOptions opt;
    opt.fine_k = c.at("fine_k");
    opt.use_drift = name == "greedy-dpp" && c.at("use_drift").get<bool>();
    opt.fixed_v = e.fixed_v;
    return std::make_unique<GreedyDppController>(spec, device, e.weights, e.lyapunov,
                                                 e.quant, e.cost_opt, opt);
  }
  if (name == "learned") {
    std::string path = c.at("checkpoint");
    if (path.empty()) throw ConfigError("controller 'learned' needs controller.checkpoint");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    auto ck = checkpoint_from_json(Json::parse(in));
    if (ck.layers != spec.layers || ck.heads != spec.heads)
      throw ConfigError("checkpoint does not match model dims");
    auto [policy, critics] = restore_checkpoint(ck);
    EpisodeConfig e = episode_from_config(cfg);
    FeatureNorms norms{e.lyapunov.q_critical, 100e6, e.lambda_max};
    return std::make_unique<LearnedController>(std::move(policy), std::move(critics), norms,
                                               rng, /*stochastic=*/false);
  }
  throw ConfigError("unknown controller: " + name);
}

}  // namespace edgepart
