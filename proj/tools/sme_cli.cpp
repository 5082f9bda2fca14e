#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sme/sme.hpp"
#include "svg.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_runtime = 2;
constexpr int exit_verification = 3;

const char* const tool_version = "0.1.0";

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

unsigned thread_cap() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SME_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw sme::ValidationError("SME_THREADS must be a positive integer");
    n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

// Reference policies: optimal, center, noise:<nu>.
struct PolicySpec {
  std::string text;
  enum class Kind { optimal, center, noise } kind = Kind::optimal;
  double nu = 0.0;
};

PolicySpec parse_policy(const std::string& text) {
  PolicySpec p{text};
  if (text == "optimal") return p;
  if (text == "center") {
    p.kind = PolicySpec::Kind::center;
    return p;
  }
  if (text.rfind("noise:", 0) == 0) {
    p.kind = PolicySpec::Kind::noise;
    const std::string arg = text.substr(6);
    char* end = nullptr;
    p.nu = std::strtod(arg.c_str(), &end);
    if (arg.empty() || *end != '\0' || !(p.nu >= 0.0 && p.nu <= 1.0)) {
      throw sme::ValidationError("--policy noise:<nu> needs nu in [0,1]");
    }
    return p;
  }
  throw sme::ValidationError("--policy must be optimal, center or noise:<nu>");
}

sme::PolicyFn make_policy(const PolicySpec& spec, const sme::Environment& env) {
  switch (spec.kind) {
    case PolicySpec::Kind::optimal:
      return sme::optimal_agent(env);
    case PolicySpec::Kind::center:
      return sme::constant_agent(env.action_dim(), 0.5);
    case PolicySpec::Kind::noise: {
      auto bp = std::make_shared<sme::BehaviorPolicy>(env, spec.nu);
      const auto ns = static_cast<std::size_t>(env.config().n_state);
      return [bp, ns](std::span<const double> obs) { return sme::behavior_action(*bp, obs.first(ns)); };
    }
  }
  return {};
}

sme::Environment load_env(const std::string& path) { return sme::load_manifest_text(sme::read_text_file(path)); }

std::vector<double> parse_shells(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || !std::isfinite(v)) throw sme::ValidationError("--shells: bad number '" + item + "'");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

void write_runlog(const std::string& path, const std::string& command, const std::vector<std::string>& argv,
                  ordered_json resolved) {
  ordered_json j;
  j["tool"] = "sme";
  j["version"] = tool_version;
  j["command"] = command;
  j["argv"] = argv;
  j["resolved"] = std::move(resolved);
  sme::write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (!args.empty()) args.erase(args.begin());

  CLI::App app{"Synthetic monitoring environments: generate, roll out, evaluate, log datasets, verify."};
  app.set_version_flag("--version", tool_version);
  app.require_subcommand(1);
  std::string runlog_override;
  app.add_option("--runlog", runlog_override, "Run-log path (default <out>.runlog.json)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate an environment manifest");
  sme::RawConfig raw;
  std::string gen_out = "env.json";
  bool embed_weights = false;
  bool no_payout_on_termination = false;
  gen->add_option("--seed", raw.master_seed, "Master seed");
  gen->add_option("--n-state", raw.n_state, "State dimension N_s");
  gen->add_option("--n-action", raw.n_action, "Action dimension N_a");
  gen->add_option("--k", raw.reward_interval, "Reward interval");
  gen->add_option("--r-min", raw.min_reward, "Minimum step reward");
  gen->add_option("--difficulty", raw.survival_difficulty, "Survival difficulty D");
  gen->add_option("--complexity", raw.policy_complexity, "Optimal policy depth");
  gen->add_option("--horizon", raw.horizon, "Episode horizon T");
  gen->add_option("--out", gen_out, "Manifest path")->capture_default_str();
  gen->add_flag("--embed-weights", embed_weights, "Store kernel and policy weights in the manifest");
  gen->add_flag("--no-payout-on-termination", no_payout_on_termination, "Forfeit accrued reward on termination");

  // rollout
  auto* ro = app.add_subcommand("rollout", "Roll out a reference policy");
  std::string ro_env, ro_policy = "optimal", ro_out = "rollout.csv";
  int ro_episodes = 10;
  std::uint64_t ro_first_seed = 0;
  bool ro_svg = false;
  ro->add_option("--env", ro_env, "Manifest path")->required();
  ro->add_option("--policy", ro_policy, "optimal | center | noise:<nu>")->capture_default_str();
  ro->add_option("--episodes", ro_episodes, "Episode count")->capture_default_str();
  ro->add_option("--first-seed", ro_first_seed, "Episode i is reset with seed first-seed + i")->capture_default_str();
  ro->add_option("--out", ro_out, "Per-episode CSV path")->capture_default_str();
  ro->add_flag("--svg", ro_svg, "Also write <out>.svg");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a reference policy on WD/OOD shells");
  std::string ev_env, ev_policy = "optimal", ev_shells = "0,0.2,0.4,0.6,0.8,1.0", ev_out = "eval.csv";
  std::size_t ev_n = 50000;
  std::optional<std::uint64_t> ev_seed;
  bool ev_svg = false;
  ev->add_option("--env", ev_env, "Manifest path")->required();
  ev->add_option("--policy", ev_policy, "optimal | center | noise:<nu>")->capture_default_str();
  ev->add_option("--shells", ev_shells, "Comma-separated expansion levels, first must be 0")->capture_default_str();
  ev->add_option("--n-per-shell", ev_n, "States per category")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Evaluation seed (default: the manifest's master seed)");
  ev->add_option("--out", ev_out, "CSV path; JSON is written beside it")->capture_default_str();
  ev->add_flag("--svg", ev_svg, "Also write <out>.svg");

  // dataset
  auto* ds = app.add_subcommand("dataset", "Log an offline dataset from the behavior policy");
  std::string ds_env, ds_out = "dataset";
  double ds_nu = 0.0;
  std::uint64_t ds_n = 50000;
  ds->add_option("--env", ds_env, "Manifest path")->required();
  ds->add_option("--nu", ds_nu, "Maximum noise level in [0,1]")->capture_default_str();
  ds->add_option("--n", ds_n, "Transition count")->capture_default_str();
  ds->add_option("--out", ds_out, "Output prefix (<prefix>.bin, <prefix>.json)")->capture_default_str();

  // verify
  auto* vf = app.add_subcommand("verify", "Run the statistical verification suite");
  std::string vf_env, vf_budget = "full", vf_out = "verify.json", vf_corrupt = "none";
  std::uint64_t vf_seed = 0;
  vf->add_option("--env", vf_env, "Manifest path")->required();
  vf->add_option("--budget", vf_budget, "full | quick")
      ->check(CLI::IsMember({"full", "quick"}))
      ->capture_default_str();
  vf->add_option("--suite-seed", vf_seed, "Seed of the test samples")->capture_default_str();
  vf->add_option("--out", vf_out, "JSON report path")->capture_default_str();
  vf->add_option("--corrupt", vf_corrupt, "Test only: break the environment on purpose")
      ->check(CLI::IsMember({"none", "kernel-row", "sigmoid", "collapse"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_validation;
  }

  auto runlog_path = [&](const std::string& out) { return runlog_override.empty() ? out + ".runlog.json" : runlog_override; };

  try {
    if (*gen) {
      const sme::EnvConfig cfg = sme::validate_config(raw);
      const sme::Environment env(cfg, !no_payout_on_termination);
      sme::write_file_atomic(gen_out, sme::manifest_text(env, embed_weights));
      write_runlog(runlog_path(gen_out), "gen", args,
                   {{"config", sme::config_to_json(cfg)},
                    {"payout_on_termination", !no_payout_on_termination},
                    {"embed_weights", embed_weights},
                    {"out", gen_out}});
      std::cout << "wrote " << gen_out << "\n";
      return exit_ok;
    }

    if (*ro) {
      const auto spec = parse_policy(ro_policy);
      auto env = load_env(ro_env);
      const auto policy = make_policy(spec, env);
      const auto summary = sme::rollout(env, policy, ro_episodes, ro_first_seed);
      std::string csv = "episode,return,length,mean_tilde_r\n";
      std::vector<double> returns;
      for (std::size_t e = 0; e < summary.episodes.size(); ++e) {
        const auto& ep = summary.episodes[e];
        csv += std::to_string(e) + "," + fmt_real(ep.total_return) + "," + std::to_string(ep.length) + "," +
               fmt_real(ep.mean_tilde_r) + "\n";
        returns.push_back(ep.total_return);
      }
      sme::write_file_atomic(ro_out, csv);
      if (ro_svg) sme::write_file_atomic(ro_out + ".svg", sme::svg::line_chart(returns, "episode return", "episode"));
      write_runlog(runlog_path(ro_out), "rollout", args,
                   {{"env", ro_env},
                    {"config", sme::config_to_json(env.config())},
                    {"policy", ro_policy},
                    {"episodes", ro_episodes},
                    {"first_seed", ro_first_seed},
                    {"out", ro_out}});
      std::printf("episodes %d  mean return %.6f  mean length %.3f  mean tilde_r %.6f  mean step reward %.6f\n",
                  ro_episodes, summary.mean_return, summary.mean_length, summary.mean_tilde_r,
                  summary.mean_step_reward);
      return exit_ok;
    }

    if (*ev) {
      const auto spec = parse_policy(ev_policy);
      const sme::ShellPartition partition(parse_shells(ev_shells));
      const auto env = load_env(ev_env);
      const auto policy = make_policy(spec, env);
      const std::uint64_t seed = ev_seed.value_or(env.config().master_seed);
      auto stream = sme::derive_stream(seed, sme::StreamId::evaluation);
      auto report = sme::evaluate_policy(policy, env, partition, ev_n, stream);
      report.eval_seed = seed;
      sme::write_file_atomic(ev_out, sme::eval_report_csv(report));
      auto json = sme::eval_report_json(report);
      json["policy"] = ev_policy;
      const std::string json_path = ev_out + ".json";
      sme::write_file_atomic(json_path, json.dump(2) + "\n");
      if (ev_svg) {
        std::vector<std::string> labels;
        std::vector<double> values;
        for (const auto& c : report.categories) {
          labels.push_back(c.label);
          values.push_back(c.tilde_r.mean);
        }
        sme::write_file_atomic(ev_out + ".svg", sme::svg::bar_strip(labels, values, "mean tilde_r by category"));
      }
      write_runlog(runlog_path(ev_out), "eval", args,
                   {{"env", ev_env},
                    {"config", sme::config_to_json(env.config())},
                    {"policy", ev_policy},
                    {"shells", ev_shells},
                    {"n_per_shell", ev_n},
                    {"seed", seed},
                    {"out", ev_out}});
      std::cout << sme::eval_report_csv(report);
      return exit_ok;
    }

    if (*ds) {
      const auto env = load_env(ds_env);
      sme::BehaviorPolicy bp(env, ds_nu);
      const auto m = sme::collect_dataset_to_files(env, bp, ds_n, ds_out);
      write_runlog(runlog_path(ds_out), "dataset", args,
                   {{"env", ds_env},
                    {"config", sme::config_to_json(env.config())},
                    {"nu", ds_nu},
                    {"n", ds_n},
                    {"out", ds_out}});
      std::printf("records %llu  episodes %llu  mean tilde_r %.6f  checksum %s\n",
                  static_cast<unsigned long long>(m.n_records), static_cast<unsigned long long>(m.episodes),
                  m.mean_tilde_r, m.checksum.c_str());
      return exit_ok;
    }

    if (*vf) {
      auto env = load_env(vf_env);
      sme::VerifyBudget budget;
      if (vf_budget == "quick") {
        budget.uniformity_states /= 10;
        budget.action_mass_samples /= 10;
        budget.lipschitz_pairs /= 10;
        budget.policy_states /= 10;
        budget.collapse_states /= 10;
      }
      budget.seed = vf_seed;
      budget.threads = thread_cap();
      sme::VerifyHooks hooks;
      if (vf_corrupt == "kernel-row") {
        auto kernel = env.kernel();
        for (auto& w : kernel.weights.row(0)) w *= 1.5;
        env = sme::Environment(env.config(), std::move(kernel), env.policy(), env.payout_on_termination());
      } else if (vf_corrupt == "sigmoid") {
        hooks.activation = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
      } else if (vf_corrupt == "collapse") {
        hooks.policy_factory = [](const sme::EnvConfig& cfg) {
          auto stream = sme::derive_stream(cfg.master_seed, sme::StreamId::policy_weights);
          auto policy = sme::build_policy(cfg, stream);
          for (auto& layer : policy.layers) {
            for (auto& w : layer.weights.data()) w *= 0.01;
            for (auto& b : layer.bias) b *= 0.01;
          }
          return policy;
        };
      }
      const auto results = sme::verify_environment(env, budget, hooks);
      auto json = sme::check_report_json(results);
      sme::write_file_atomic(vf_out, json.dump(2) + "\n");
      write_runlog(runlog_path(vf_out), "verify", args,
                   {{"env", vf_env},
                    {"config", sme::config_to_json(env.config())},
                    {"budget", vf_budget},
                    {"suite_seed", vf_seed},
                    {"corrupt", vf_corrupt},
                    {"out", vf_out}});
      std::cout << sme::check_report_table(results);
      return sme::all_passed(results) ? exit_ok : exit_verification;
    }
  } catch (const sme::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
  return exit_ok;
}
