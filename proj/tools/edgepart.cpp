// Experiment harness: simulate / train / sweep / report over a single JSON
// config with dotted-path overrides. Exit codes: 0 ok, 2 config error,
// 3 infeasible run, 4 training divergence.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "edgepart/config.hpp"

namespace fs = std::filesystem;
using edgepart::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitDiverged = 4;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

Json resolve(const CommonArgs& args) {
  Json cfg = args.config_path.empty() ? edgepart::default_config()
                                      : edgepart::load_config(args.config_path);
  for (const auto& kv : args.overrides) edgepart::apply_override(cfg, kv);
  if (!args.out_dir.empty()) cfg["out_dir"] = args.out_dir;
  if (args.seed_set) cfg["seed"] = args.seed;
  return cfg;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

std::string stamp(std::uint64_t hash, std::uint64_t seed) {
  return "# config_hash=" + edgepart::hash_hex(hash) + " seed=" + std::to_string(seed) +
         "\n";
}

void write_schema(const fs::path& dir) {
  write_file(dir / "schema.md",
             "# Artifact columns\n\n"
             "slots.csv: slot,Q,V,B_mbps,latency_s,energy_J,acc_penalty,drift,reward,"
             "plan_id,failures\n"
             "curves.csv: episode,mean_reward,mean_Q,clip_fraction,policy_loss,"
             "perf_loss,stab_loss,temperature\n"
             "sweep.csv: param,value,seed,p50,p95,p99,mean_cost,mean_queue,stable\n"
             "report.csv: run,controller,scenario,p50,p95,p99,p95_reduction_vs_cloud_only\n"
             "All CSVs start with a '# config_hash=... seed=...' provenance line.\n");
}

Json run_record(const Json& cfg, std::uint64_t hash, const edgepart::MetricsReport& m) {
  Json j = edgepart::metrics_to_json(m);
  j["config_hash"] = edgepart::hash_hex(hash);
  j["seed"] = cfg.at("seed").get<std::uint64_t>();
  j["controller"] = cfg.at("controller").at("name");
  j["scenario"] = cfg.at("network").at("scenario");
  return j;
}

int cmd_simulate(const CommonArgs& args) {
  Json cfg = resolve(args);
  std::uint64_t hash = edgepart::config_hash(cfg);
  std::uint64_t seed = cfg.at("seed");
  auto ep = edgepart::episode_from_config(cfg);
  edgepart::Rng rng(edgepart::derive_seed(seed, 0));
  auto controller = edgepart::make_controller(cfg, ep.spec, ep.device, rng);
  auto res = edgepart::run_episode(ep, *controller, rng);

  fs::path dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(dir);
  write_file(dir / "slots.csv", stamp(hash, seed) + res.slots_csv);
  write_file(dir / "metrics.json", run_record(cfg, hash, res.metrics).dump(2) + "\n");
  write_file(dir / "plan.json", edgepart::plan_to_json(res.last_plan) + "\n");
  write_file(dir / "plan_matrix.csv",
             stamp(hash, seed) + edgepart::plan_to_matrix_csv(res.last_plan));
  write_file(dir / "config.json", cfg.dump(2) + "\n");
  write_schema(dir);

  if (res.metrics.verdict != "ok") {
    std::cerr << "run verdict: " << res.metrics.verdict << "\n";
    return kExitInfeasible;
  }
  std::cout << "simulate: " << controller->name() << " on "
            << cfg.at("network").at("scenario").get<std::string>() << ", P95 "
            << res.metrics.p95 << " s, mean Q " << res.metrics.mean_queue << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& resume_path) {
  Json cfg = resolve(args);
  std::uint64_t hash = edgepart::config_hash(cfg);
  std::uint64_t seed = cfg.at("seed");
  auto setup = edgepart::setup_from_config(cfg);
  auto tcfg = edgepart::train_from_config(cfg);
  if (!resume_path.empty()) {
    std::ifstream in(resume_path);
    if (!in) throw edgepart::ConfigError("cannot open checkpoint: " + resume_path);
    auto ck = edgepart::checkpoint_from_json(Json::parse(in));
    setup.policy_enc_hidden = ck.enc_hidden;
    setup.policy_enc_out = ck.enc_out;
    setup.policy_embed = ck.embed_dim;
    setup.critic_hidden = ck.critic_hidden;
    setup.init_policy_params = ck.policy_params;
    setup.init_perf_params = ck.perf_params;
    setup.init_stab_params = ck.stab_params;
  }
  auto result = edgepart::train(setup, tcfg, seed);

  fs::path dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(dir);
  write_file(dir / "curves.csv", stamp(hash, seed) + result.curves_csv);
  auto ck = edgepart::make_checkpoint(result.policy, result.critics, setup, hash, seed);
  write_file(dir / "checkpoint.json", edgepart::checkpoint_to_json(ck).dump() + "\n");
  write_file(dir / "config.json", cfg.dump(2) + "\n");
  write_schema(dir);

  // final deterministic evaluation with the best checkpoint
  edgepart::Rng eval_rng(edgepart::derive_seed(seed, 999));
  edgepart::FeatureNorms norms{setup.env.lyapunov.q_critical, 100e6, setup.env.lambda_max};
  edgepart::LearnedController eval_ctl(result.policy, result.critics, norms, eval_rng,
                                       /*stochastic=*/false);
  auto eval = edgepart::run_episode(setup.env, eval_ctl, eval_rng);
  write_file(dir / "metrics.json", run_record(cfg, hash, eval.metrics).dump(2) + "\n");

  std::cout << "train: " << result.episodes_run << " episodes, best eval reward "
            << result.best_eval_reward << ", status " << result.status << "\n";
  return result.status == "ok" ? kExitOk : kExitDiverged;
}

int cmd_sweep(const CommonArgs& args, const std::string& param,
              const std::vector<double>& values, int n_seeds) {
  if (values.empty()) throw edgepart::ConfigError("sweep: empty value list");
  if (param != "V" && param != "lambda" && param != "bandwidth")
    throw edgepart::ConfigError("sweep: param must be V, lambda, or bandwidth");
  Json cfg = resolve(args);
  std::uint64_t hash = edgepart::config_hash(cfg);
  std::uint64_t seed = cfg.at("seed");

  std::ostringstream csv;
  csv << stamp(hash, seed) << "param,value,seed,p50,p95,p99,mean_cost,mean_queue,stable\n";
  bool infeasible = false;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    for (int s = 0; s < n_seeds; ++s) {
      auto ep = edgepart::episode_from_config(cfg);
      if (param == "V")
        ep.fixed_v = values[vi];
      else if (param == "lambda")
        ep.workload.lambda = values[vi];
      else
        ep.scenario = {"fixed-bw",
                       edgepart::StaticScenario{{values[vi] * 1e6, 0.010, 0.0, 0.0}}};
      edgepart::Rng rng(edgepart::derive_seed(seed, vi * 1000 + s));
      // fixed_v must be visible to greedy controllers built from config
      Json cell_cfg = cfg;
      if (param == "V") cell_cfg["episode"]["fixed_v"] = values[vi];
      auto controller = edgepart::make_controller(cell_cfg, ep.spec, ep.device, rng);
      auto res = edgepart::run_episode(ep, *controller, rng);
      const auto& m = res.metrics;
      if (m.verdict != "ok") infeasible = true;
      csv << param << "," << values[vi] << "," << s << "," << m.p50 << "," << m.p95 << ","
          << m.p99 << "," << m.mean_cost << "," << m.mean_queue << "," << m.stable << "\n";
    }
  }
  fs::path dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(dir);
  write_file(dir / "sweep.csv", csv.str());
  write_file(dir / "config.json", cfg.dump(2) + "\n");
  write_schema(dir);
  std::cout << "sweep: " << values.size() << " values x " << n_seeds << " seeds -> "
            << (dir / "sweep.csv") << "\n";
  return infeasible ? kExitInfeasible : kExitOk;
}

int cmd_report(const std::string& in_dir, const std::string& out_path, bool force) {
  std::vector<Json> runs;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.json") {
      std::ifstream in(entry.path());
      Json j = Json::parse(in);
      j["__run"] = entry.path().parent_path().filename().string();
      runs.push_back(std::move(j));
    }
  }
  if (runs.empty()) throw edgepart::ConfigError("report: no metrics.json under " + in_dir);
  std::sort(runs.begin(), runs.end(), [](const Json& a, const Json& b) {
    return a.at("__run").get<std::string>() < b.at("__run").get<std::string>();
  });
  std::string hash0 = runs.front().at("config_hash");
  for (const auto& r : runs)
    if (r.at("config_hash") != hash0 && !force)
      throw edgepart::ConfigError(
          "report: mixed config hashes; pass --force to aggregate anyway");

  // cloud-only P95 per scenario, for the reduction column
  std::map<std::string, double> cloud_p95;
  for (const auto& r : runs)
    if (r.at("controller") == "cloud-only")
      cloud_p95[r.at("scenario")] = r.at("p95").get<double>();

  std::ostringstream csv;
  csv << "# config_hash=" << hash0 << (force ? " (mixed, forced)" : "") << "\n";
  csv << "run,controller,scenario,p50,p95,p99,p95_reduction_vs_cloud_only\n";
  for (const auto& r : runs) {
    std::string scen = r.at("scenario");
    double p95 = r.at("p95");
    std::string red = "";
    auto it = cloud_p95.find(scen);
    if (it != cloud_p95.end() && it->second > 0.0) {
      std::ostringstream os;
      os << 1.0 - p95 / it->second;
      red = os.str();
    }
    csv << r.at("__run").get<std::string>() << "," << r.at("controller").get<std::string>()
        << "," << scen << "," << r.at("p50").get<double>() << "," << p95 << ","
        << r.at("p99").get<double>() << "," << red << "\n";
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    write_file(out_path, csv.str());
    std::cout << "report: " << runs.size() << " runs -> " << out_path << "\n";
  }
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (defaults if omitted)");
  cmd->add_option("--set", args.overrides, "dotted-path override, key.path=value");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge-cloud transformer partitioning simulator"};
  app.require_subcommand(1);

  CommonArgs sim_args, train_args, sweep_args;
  std::string controller_name, resume_path, sweep_param, report_in, report_out;
  std::vector<double> sweep_values;
  int sweep_seeds = 1;
  bool report_force = false;

  auto* sim = app.add_subcommand("simulate", "run one episode and write artifacts");
  add_common(sim, sim_args);
  sim->add_option("--controller", controller_name,
                  "controller name (shorthand for --set controller.name=...)");

  auto* tr = app.add_subcommand("train", "train the learned controller");
  add_common(tr, train_args);
  tr->add_option("--resume", resume_path, "initialize from a checkpoint file");

  auto* sw = app.add_subcommand("sweep", "grid of runs over one parameter");
  add_common(sw, sweep_args);
  sw->add_option("--param", sweep_param, "V | lambda | bandwidth")->required();
  sw->add_option("--values", sweep_values, "parameter values")->required()->delimiter(',');
  sw->add_option("--seeds", sweep_seeds, "seeds per cell");

  auto* rp = app.add_subcommand("report", "aggregate metrics.json files into a table");
  rp->add_option("--in", report_in, "directory to scan")->required();
  rp->add_option("--out", report_out, "output CSV (stdout if omitted)");
  rp->add_flag("--force", report_force, "allow mixed config hashes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      if (!controller_name.empty())
        sim_args.overrides.push_back("controller.name=\"" + controller_name + "\"");
      return cmd_simulate(sim_args);
    }
    if (tr->parsed()) return cmd_train(train_args, resume_path);
    if (sw->parsed()) return cmd_sweep(sweep_args, sweep_param, sweep_values, sweep_seeds);
    if (rp->parsed()) return cmd_report(report_in, report_out, report_force);
  } catch (const edgepart::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const edgepart::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
