#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sme/codec.hpp"
#include "sme/config.hpp"
#include "sme/kernel.hpp"
#include "sme/policy.hpp"
#include "sme/random.hpp"
#include "sme/reward.hpp"

namespace sme {

/// Misuse of the episode protocol (step before reset, step after the end).
class EpisodeError : public Error {
 public:
  using Error::Error;
};

inline constexpr int manifest_format_version = 1;

struct EpisodeState {
  std::vector<double> s;
  RewardLedger ledger;
  bool terminated = false;
  bool truncated = false;

  [[nodiscard]] bool finished() const noexcept { return terminated || truncated; }
};

struct StepInfo {
  std::vector<double> a_star;
  std::vector<double> action;  // after clipping
  double tilde_r = 0.0;
  double hat_r = 0.0;
  double r = 0.0;
  Regret regret;
  double clip_fraction = 0.0;
  int t = 0;  // 1-based index of the step just taken
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

/// Maps an augmented observation to an action.
using PolicyFn = std::function<std::vector<double>(std::span<const double>)>;

class Environment {
 public:
  explicit Environment(const EnvConfig& cfg, bool payout_on_termination = true)
      : cfg_(validate_config(cfg)), payout_on_termination_(payout_on_termination) {
    kernel_ = init_kernel(cfg_);
    auto policy_stream = derive_stream(cfg_.master_seed, StreamId::policy_weights);
    policy_ = build_policy(cfg_, policy_stream);
    init_stream_ = derive_stream(cfg_.master_seed, StreamId::initial_states);
  }

  /// Wraps explicit parts, e.g. decoded from a manifest or hand-built in tests.
  Environment(const EnvConfig& cfg, TransitionKernel kernel, DunPolicy policy, bool payout_on_termination = true)
      : cfg_(validate_config(cfg)),
        kernel_(std::move(kernel)),
        policy_(std::move(policy)),
        payout_on_termination_(payout_on_termination) {
    const auto ns = static_cast<std::size_t>(cfg_.n_state);
    const auto na = static_cast<std::size_t>(cfg_.n_action);
    if (kernel_.n_state() != ns || kernel_.n_action() != na || kernel_.bias.size() != ns) {
      throw ValidationError("kernel shape does not match the config");
    }
    if (policy_.input_dim() != ns || policy_.output_dim() != na ||
        policy_.depth() != static_cast<std::size_t>(cfg_.policy_complexity)) {
      throw ValidationError("policy shape does not match the config");
    }
    for (std::size_t l = 0; l + 1 < policy_.layers.size(); ++l) {
      if (policy_.layers[l].n_out() != policy_.layers[l + 1].n_in()) throw ValidationError("policy layers do not chain");
    }
    init_stream_ = derive_stream(cfg_.master_seed, StreamId::initial_states);
  }

  [[nodiscard]] const EnvConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const TransitionKernel& kernel() const noexcept { return kernel_; }
  [[nodiscard]] const DunPolicy& policy() const noexcept { return policy_; }
  [[nodiscard]] bool payout_on_termination() const noexcept { return payout_on_termination_; }
  [[nodiscard]] std::size_t observation_dim() const noexcept { return static_cast<std::size_t>(cfg_.n_state) + 2; }
  [[nodiscard]] std::size_t action_dim() const noexcept { return static_cast<std::size_t>(cfg_.n_action); }
  [[nodiscard]] const std::optional<EpisodeState>& episode() const noexcept { return episode_; }

  /// Starts an episode at s0 ~ U(0,1)^N_s. Without a seed the environment's
  /// own initial-state stream advances; with one, s0 depends only on
  /// (master_seed, episode_seed).
  std::vector<double> reset(std::optional<std::uint64_t> episode_seed = std::nullopt) {
    RandomStream seeded;
    RandomStream* stream = &init_stream_;
    if (episode_seed) {
      std::uint64_t mix = cfg_.master_seed;
      seeded = derive_stream(splitmix64(mix) ^ *episode_seed, StreamId::initial_states);
      stream = &seeded;
    }
    EpisodeState ep;
    ep.s.resize(static_cast<std::size_t>(cfg_.n_state));
    for (auto& v : ep.s) v = stream->uniform();
    ep.ledger.payout_on_termination = payout_on_termination_;
    episode_ = std::move(ep);
    return observation();
  }

  StepResult step(std::span<const double> action) {
    if (!episode_) throw EpisodeError("step called before reset");
    if (episode_->finished()) throw EpisodeError("step called on a finished episode");
    if (action.size() != action_dim()) throw ValidationError("step: action dimension mismatch");

    StepResult out;
    auto& info = out.info;
    info.action.assign(action.begin(), action.end());
    std::size_t clipped = 0;
    for (auto& v : info.action) {
      if (std::isnan(v)) throw ValidationError("step: NaN action component");
      const double c = std::clamp(v, 0.0, 1.0);
      if (c != v) ++clipped;
      v = c;
    }
    info.clip_fraction = static_cast<double>(clipped) / static_cast<double>(info.action.size());

    auto& ep = *episode_;
    info.a_star = optimal_action(policy_, ep.s);
    const auto sr = step_reward(info.action, info.a_star, cfg_.min_reward);
    info.tilde_r = sr.tilde_r;
    info.hat_r = sr.hat_r;
    info.r = sr.r;
    info.regret = {1.0 - sr.tilde_r, 1.0 - sr.hat_r};
    info.t = ep.ledger.step_index + 1;

    out.terminated = check_termination(sr.r, cfg_.survival_difficulty);
    out.truncated = info.t == cfg_.horizon;
    const bool ending = out.truncated || (out.terminated && ep.ledger.payout_on_termination);
    out.reward = accumulate_and_payout(ep.ledger, sr.r, cfg_.reward_interval, ending);

    std::vector<double> next(ep.s.size());
    step_transition(kernel_, ep.s, info.action, std::span<double>(next));
    ep.s = std::move(next);
    ep.terminated = out.terminated;
    ep.truncated = out.truncated;
    out.observation = observation();
    return out;
  }

  /// Current augmented observation [s, t/T, r_cum/k].
  [[nodiscard]] std::vector<double> observation() const {
    if (!episode_) throw EpisodeError("no live episode");
    return augment_observation(episode_->s, episode_->ledger.step_index, cfg_.horizon, episode_->ledger.cumulative,
                               cfg_.reward_interval);
  }

 private:
  EnvConfig cfg_;
  TransitionKernel kernel_;
  DunPolicy policy_;
  bool payout_on_termination_ = true;
  RandomStream init_stream_;
  std::optional<EpisodeState> episode_;
};

inline Environment create_environment(const EnvConfig& cfg) { return Environment(cfg); }

// Reference agents -----------------------------------------------------------

/// pi* read off the leading N_s observation components.
inline PolicyFn optimal_agent(const Environment& env) {
  const DunPolicy* policy = &env.policy();
  const std::size_t ns = static_cast<std::size_t>(env.config().n_state);
  return [policy, ns](std::span<const double> obs) { return optimal_action(*policy, obs.first(ns)); };
}

inline PolicyFn constant_agent(std::size_t n_action, double value) {
  return [n_action, value](std::span<const double>) { return std::vector<double>(n_action, value); };
}

// Rollouts --------------------------------------------------------------------

struct EpisodeSummary {
  double total_return = 0.0;
  int length = 0;
  double mean_tilde_r = 0.0;
  double mean_step_reward = 0.0;
  bool terminated = false;
};

struct RolloutSummary {
  std::vector<EpisodeSummary> episodes;
  double mean_return = 0.0;
  double mean_length = 0.0;
  double mean_tilde_r = 0.0;       // per step, pooled over all episodes
  double mean_step_reward = 0.0;   // per step, pooled over all episodes
};

/// Runs n episodes, episode i reset with seed first_seed + i.
inline RolloutSummary rollout(Environment& env, const PolicyFn& policy_fn, int n_episodes, std::uint64_t first_seed = 0) {
  if (n_episodes < 1) throw ValidationError("rollout: n_episodes must be ≥ 1");
  RolloutSummary summary;
  double tilde_total = 0.0;
  double step_reward_total = 0.0;
  long long steps_total = 0;
  for (int e = 0; e < n_episodes; ++e) {
    auto obs = env.reset(first_seed + static_cast<std::uint64_t>(e));
    EpisodeSummary ep;
    double tilde_sum = 0.0;
    double r_sum = 0.0;
    while (true) {
      const auto action = policy_fn(obs);
      auto result = env.step(action);
      ep.total_return += result.reward;
      ep.length += 1;
      tilde_sum += result.info.tilde_r;
      r_sum += result.info.r;
      obs = std::move(result.observation);
      if (result.terminated || result.truncated) {
        ep.terminated = result.terminated;
        break;
      }
    }
    ep.mean_tilde_r = tilde_sum / ep.length;
    ep.mean_step_reward = r_sum / ep.length;
    tilde_total += tilde_sum;
    step_reward_total += r_sum;
    steps_total += ep.length;
    summary.mean_return += ep.total_return;
    summary.mean_length += ep.length;
    summary.episodes.push_back(ep);
  }
  summary.mean_return /= n_episodes;
  summary.mean_length /= n_episodes;
  summary.mean_tilde_r = tilde_total / static_cast<double>(steps_total);
  summary.mean_step_reward = step_reward_total / static_cast<double>(steps_total);
  return summary;
}

// Manifest ----------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint8_t> policy_bytes(const DunPolicy& policy) {
  std::vector<std::uint8_t> bytes;
  for (const auto& layer : policy.layers) {
    for (double w : layer.weights.data()) codec::append_f64_le(bytes, w);
    for (double b : layer.bias) codec::append_f64_le(bytes, b);
  }
  return bytes;
}

struct Checksums {
  std::string kernel_weights;
  std::string kernel_bias;
  std::string policy;
  friend bool operator==(const Checksums&, const Checksums&) = default;
};

inline Checksums checksums_of(const TransitionKernel& kernel, const DunPolicy& policy) {
  return {codec::hex64(codec::fnv1a(codec::f64_bytes(kernel.weights.data()))),
          codec::hex64(codec::fnv1a(codec::f64_bytes(kernel.bias))), codec::hex64(codec::fnv1a(policy_bytes(policy)))};
}

template <typename Json>
std::vector<double> decode_block(const Json& j, const char* key, std::size_t expected) {
  if (!j.contains(key) || !j.at(key).is_string()) throw FormatError(std::string("manifest weights lack ") + key);
  auto values = codec::f64_from_bytes(codec::base64_decode(j.at(key).template get<std::string>()));
  if (values.size() != expected) throw FormatError(std::string("manifest block ") + key + " has the wrong length");
  return values;
}

}  // namespace detail

inline nlohmann::ordered_json save_manifest(const Environment& env, bool embed_weights = false) {
  auto j = config_to_json(env.config());
  j["format_version"] = manifest_format_version;
  j["payout_on_termination"] = env.payout_on_termination();
  const auto sums = detail::checksums_of(env.kernel(), env.policy());
  j["checksums"] = {{"kernel_weights", sums.kernel_weights},
                    {"kernel_bias", sums.kernel_bias},
                    {"policy", sums.policy}};
  if (embed_weights) {
    nlohmann::ordered_json w;
    w["kernel_weights"] = codec::base64_encode(codec::f64_bytes(env.kernel().weights.data()));
    w["kernel_bias"] = codec::base64_encode(codec::f64_bytes(env.kernel().bias));
    auto layers = nlohmann::ordered_json::array();
    for (const auto& layer : env.policy().layers) {
      nlohmann::ordered_json l;
      l["rows"] = layer.n_out();
      l["cols"] = layer.n_in();
      l["weights"] = codec::base64_encode(codec::f64_bytes(layer.weights.data()));
      l["bias"] = codec::base64_encode(codec::f64_bytes(layer.bias));
      layers.push_back(std::move(l));
    }
    w["policy"] = std::move(layers);
    j["weights"] = std::move(w);
  }
  return j;
}

inline std::string manifest_text(const Environment& env, bool embed_weights = false) {
  return save_manifest(env, embed_weights).dump(2) + "\n";
}

template <typename Json>
Environment load_manifest(const Json& j) {
  if (!j.is_object() || !j.contains("format_version")) throw FormatError("manifest lacks format_version");
  if (j.at("format_version") != manifest_format_version) {
    throw FormatError("unsupported manifest format_version " + j.at("format_version").dump());
  }
  const EnvConfig cfg = config_from_json(j);
  const bool payout = j.value("payout_on_termination", true);
  if (!j.contains("checksums")) throw FormatError("manifest lacks checksums");
  const auto& cj = j.at("checksums");
  detail::Checksums stored;
  try {
    stored = {cj.at("kernel_weights").template get<std::string>(), cj.at("kernel_bias").template get<std::string>(),
              cj.at("policy").template get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest checksums: ") + e.what());
  }

  const auto ns = static_cast<std::size_t>(cfg.n_state);
  const auto na = static_cast<std::size_t>(cfg.n_action);
  std::optional<Environment> env;
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    TransitionKernel kernel{Matrix(na, ns, detail::decode_block(w, "kernel_weights", na * ns)),
                            detail::decode_block(w, "kernel_bias", ns)};
    if (!w.contains("policy") || !w.at("policy").is_array()) throw FormatError("manifest weights lack policy");
    const auto widths = policy_widths(ns, na, static_cast<std::size_t>(cfg.policy_complexity));
    const auto& layers = w.at("policy");
    if (layers.size() + 1 != widths.size()) throw FormatError("manifest policy depth does not match the config");
    DunPolicy policy;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lj = layers[l];
      const std::size_t rows = widths[l + 1];
      const std::size_t cols = widths[l];
      if (lj.value("rows", std::size_t{0}) != rows || lj.value("cols", std::size_t{0}) != cols) {
        throw FormatError("manifest policy layer " + std::to_string(l) + " has the wrong shape");
      }
      policy.layers.push_back(
          {Matrix(rows, cols, detail::decode_block(lj, "weights", rows * cols)), detail::decode_block(lj, "bias", rows)});
    }
    env.emplace(cfg, std::move(kernel), std::move(policy), payout);
  } else {
    env.emplace(cfg, payout);
  }
  const auto actual = detail::checksums_of(env->kernel(), env->policy());
  if (actual.kernel_weights != stored.kernel_weights) throw FormatError("kernel_weights checksum mismatch");
  if (actual.kernel_bias != stored.kernel_bias) throw FormatError("kernel_bias checksum mismatch");
  if (actual.policy != stored.policy) throw FormatError("policy checksum mismatch");
  return std::move(*env);
}

inline Environment load_manifest_text(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  return load_manifest(j);
}

}  // namespace sme
