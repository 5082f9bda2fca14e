#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace sme {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or invalid arguments supplied by a caller.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or inconsistent serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr int config_format_version = 1;

/// The difficulty axes of one environment instance plus horizon and seed.
struct EnvConfig {
  int n_state = 8;
  int n_action = 4;
  int reward_interval = 1;
  double min_reward = 0.0;
  double survival_difficulty = 0.0;
  int policy_complexity = 1;
  int horizon = 100;
  std::uint64_t master_seed = 0;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

/// Candidate configuration; unset fields take the defaults above.
struct RawConfig {
  std::optional<long long> n_state;
  std::optional<long long> n_action;
  std::optional<long long> reward_interval;
  std::optional<double> min_reward;
  std::optional<double> survival_difficulty;
  std::optional<long long> policy_complexity;
  std::optional<long long> horizon;
  std::optional<std::uint64_t> master_seed;
};

namespace detail {

inline int positive_field(const std::optional<long long>& value, int fallback, const char* name) {
  if (!value) return fallback;
  if (*value < 1) throw ValidationError(std::string(name) + " must be ≥ 1");
  if (*value > (1LL << 30)) throw ValidationError(std::string(name) + " is too large");
  return static_cast<int>(*value);
}

inline double fraction_field(const std::optional<double>& value, double fallback, const char* name) {
  if (!value) return fallback;
  if (!(*value >= 0.0 && *value < 1.0)) throw ValidationError(std::string(name) + " must lie in [0,1)");
  return *value;
}

}  // namespace detail

inline EnvConfig validate_config(const RawConfig& raw) {
  const EnvConfig defaults;
  EnvConfig cfg;
  cfg.n_state = detail::positive_field(raw.n_state, defaults.n_state, "n_state");
  cfg.n_action = detail::positive_field(raw.n_action, defaults.n_action, "n_action");
  cfg.reward_interval = detail::positive_field(raw.reward_interval, defaults.reward_interval, "reward_interval");
  cfg.min_reward = detail::fraction_field(raw.min_reward, defaults.min_reward, "min_reward");
  cfg.survival_difficulty =
      detail::fraction_field(raw.survival_difficulty, defaults.survival_difficulty, "survival_difficulty");
  cfg.policy_complexity =
      detail::positive_field(raw.policy_complexity, defaults.policy_complexity, "policy_complexity");
  cfg.horizon = detail::positive_field(raw.horizon, defaults.horizon, "horizon");
  cfg.master_seed = raw.master_seed.value_or(defaults.master_seed);
  return cfg;
}

/// Re-checks an already-built config (e.g. one assembled field by field).
inline const EnvConfig& validate_config(const EnvConfig& cfg) {
  RawConfig raw{cfg.n_state,         cfg.n_action,          cfg.reward_interval, cfg.min_reward,
                cfg.survival_difficulty, cfg.policy_complexity, cfg.horizon,         cfg.master_seed};
  validate_config(raw);
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const EnvConfig& cfg) {
  nlohmann::ordered_json j;
  j["format_version"] = config_format_version;
  j["n_state"] = cfg.n_state;
  j["n_action"] = cfg.n_action;
  j["reward_interval"] = cfg.reward_interval;
  j["min_reward"] = cfg.min_reward;
  j["survival_difficulty"] = cfg.survival_difficulty;
  j["policy_complexity"] = cfg.policy_complexity;
  j["horizon"] = cfg.horizon;
  j["master_seed"] = cfg.master_seed;
  return j;
}

template <typename Json>
EnvConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("config document must be a JSON object");
  if (!j.contains("format_version")) throw FormatError("config document lacks format_version");
  if (j.at("format_version") != config_format_version) {
    throw FormatError("unsupported config format_version " + j.at("format_version").dump());
  }
  RawConfig raw;
  auto integer = [&](const char* key, std::optional<long long>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ValidationError(std::string(key) + " must be an integer");
    out = v.template get<long long>();
  };
  auto real = [&](const char* key, std::optional<double>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ValidationError(std::string(key) + " must be a number");
    out = v.template get<double>();
  };
  integer("n_state", raw.n_state);
  integer("n_action", raw.n_action);
  integer("reward_interval", raw.reward_interval);
  real("min_reward", raw.min_reward);
  real("survival_difficulty", raw.survival_difficulty);
  integer("policy_complexity", raw.policy_complexity);
  integer("horizon", raw.horizon);
  if (j.contains("master_seed")) {
    const auto& v = j.at("master_seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.template get<long long>() >= 0)) {
      throw ValidationError("master_seed must be an unsigned 64-bit integer");
    }
    raw.master_seed = v.template get<std::uint64_t>();
  }
  return validate_config(raw);
}

}  // namespace sme
