#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sme/config.hpp"
#include "sme/environment.hpp"
#include "sme/policy.hpp"
#include "sme/random.hpp"
#include "sme/reward.hpp"
#include "sme/stats.hpp"

namespace sme {

/// A policy callback threw while being evaluated.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// E(s) = 2 ||s - c||_inf - 1 with c = 0.5 * 1. Non-positive inside the
/// unit cube, equal to eps on the boundary of the cube expanded by eps.
inline double expansion_level(std::span<const double> s) {
  double dist = 0.0;
  for (double v : s) {
    if (std::isnan(v)) throw ValidationError("expansion_level: NaN state component");
    dist = std::max(dist, std::abs(v - 0.5));
  }
  return 2.0 * dist - 1.0;
}

/// Nested cubes X_eps. Category 0 is within-distribution (E <= 0), category
/// m >= 1 is the shell E in (eps_{m-1}, eps_m].
class ShellPartition {
 public:
  ShellPartition() : ShellPartition(default_expansions()) {}

  explicit ShellPartition(std::vector<double> expansions) : expansions_(std::move(expansions)) {
    if (expansions_.empty() || expansions_.front() != 0.0) {
      throw ValidationError("shell expansions must start at 0");
    }
    for (std::size_t i = 1; i < expansions_.size(); ++i) {
      if (!(expansions_[i] > expansions_[i - 1]) || !std::isfinite(expansions_[i])) {
        throw ValidationError("shell expansions must be finite and strictly ascending");
      }
    }
  }

  /// {0.2 m : m = 0..5}
  static std::vector<double> default_expansions() { return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}; }

  [[nodiscard]] const std::vector<double>& expansions() const noexcept { return expansions_; }
  [[nodiscard]] std::size_t category_count() const noexcept { return expansions_.size(); }

  [[nodiscard]] double eps_low(std::size_t category) const { return category == 0 ? 0.0 : expansions_.at(category - 1); }
  [[nodiscard]] double eps_high(std::size_t category) const { return expansions_.at(category); }

  /// Category of a state with expansion level e, or nullopt beyond X_{eps_N}.
  [[nodiscard]] std::optional<std::size_t> category_of_level(double e) const noexcept {
    if (e <= 0.0) return 0;
    for (std::size_t m = 1; m < expansions_.size(); ++m) {
      if (e > expansions_[m - 1] && e <= expansions_[m]) return m;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<std::size_t> category_of(std::span<const double> s) const {
    return category_of_level(expansion_level(s));
  }

  [[nodiscard]] std::string label(std::size_t category) const {
    if (category == 0) return "WD";
    char buf[64];
    std::snprintf(buf, sizeof buf, "OOD(%g,%g]", eps_low(category), eps_high(category));
    return buf;
  }

 private:
  std::vector<double> expansions_;
};

struct ShellSample {
  std::vector<std::vector<double>> states;
  std::uint64_t attempts = 0;

  [[nodiscard]] double acceptance_rate() const noexcept {
    return attempts == 0 ? 0.0 : static_cast<double>(states.size()) / static_cast<double>(attempts);
  }
};

inline constexpr std::uint64_t shell_retry_cap = 10000;

/// n i.i.d. states uniform on {s : E(s) in (eps_low, eps_high]} by rejection
/// from the cube X_{eps_high}; eps_low = eps_high = 0 samples the unit cube.
inline ShellSample sample_shell(RandomStream& stream, double eps_low, double eps_high, std::size_t n_state,
                                std::size_t n) {
  if (n_state == 0) throw ValidationError("sample_shell: n_state must be positive");
  const bool within = eps_low == 0.0 && eps_high == 0.0;
  if (!within && !(eps_low >= 0.0 && eps_low < eps_high)) {
    throw ValidationError("sample_shell: need 0 <= eps_low < eps_high");
  }
  ShellSample out;
  out.states.reserve(n);
  const double width = 1.0 + eps_high;
  std::vector<double> s(n_state);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t tries = 0;
    while (true) {
      if (tries++ == shell_retry_cap) throw Error("sample_shell: retry cap exceeded");
      ++out.attempts;
      for (auto& v : s) v = 0.5 + width * (stream.uniform() - 0.5);
      if (within) break;
      const double e = expansion_level(s);
      if (e > eps_low && e <= eps_high) break;
    }
    out.states.push_back(s);
  }
  return out;
}

struct CategoryReport {
  std::string label;
  double eps_low = 0.0;
  double eps_high = 0.0;
  RunningStats tilde_r;
  RunningStats regret;  // 1 - hat_r
  double clip_fraction = 0.0;
};

struct EvalReport {
  EnvConfig config;
  std::size_t n_per_category = 0;
  std::optional<std::uint64_t> eval_seed;
  std::vector<CategoryReport> categories;

  [[nodiscard]] std::size_t total_states() const noexcept {
    std::size_t total = 0;
    for (const auto& c : categories) total += static_cast<std::size_t>(c.tilde_r.n);
    return total;
  }
};

/// Scores policy_fn against pi* on n_per_category states from every category.
/// The agent sees the fresh-step observation [s, 0, 0]; pi* sees the raw,
/// unclipped s. Agent actions are clipped to [0,1] before scoring.
inline EvalReport evaluate_policy(const PolicyFn& policy_fn, const Environment& env, const ShellPartition& partition,
                                  std::size_t n_per_category, RandomStream& stream) {
  if (n_per_category == 0) throw ValidationError("evaluate_policy: n_per_category must be positive");
  EvalReport report;
  report.config = env.config();
  report.n_per_category = n_per_category;
  const auto ns = static_cast<std::size_t>(env.config().n_state);
  const std::size_t na = env.action_dim();

  for (std::size_t c = 0; c < partition.category_count(); ++c) {
    auto category_stream = stream.fork();
    const auto sample = sample_shell(category_stream, partition.eps_low(c), partition.eps_high(c), ns, n_per_category);
    CategoryReport row{partition.label(c), partition.eps_low(c), partition.eps_high(c), {}, {}, 0.0};
    std::size_t clipped = 0;
    std::vector<double> obs(ns + 2, 0.0);
    for (const auto& s : sample.states) {
      std::copy(s.begin(), s.end(), obs.begin());
      std::vector<double> action;
      try {
        action = policy_fn(obs);
      } catch (const std::exception& e) {
        std::string where = "[";
        for (std::size_t i = 0; i < s.size(); ++i) where += (i ? "," : "") + std::to_string(s[i]);
        throw EvaluationError("policy callback failed at state " + where + "]: " + e.what());
      }
      if (action.size() != na) throw EvaluationError("policy callback returned the wrong action dimension");
      for (auto& v : action) {
        if (std::isnan(v)) throw EvaluationError("policy callback returned NaN");
        const double cv = std::clamp(v, 0.0, 1.0);
        if (cv != v) ++clipped;
        v = cv;
      }
      const auto a_star = optimal_action(env.policy(), s);
      const double tilde = baseline_similarity(action, a_star);
      row.tilde_r.push(tilde);
      row.regret.push(1.0 - rescaled_similarity(tilde));
    }
    row.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n_per_category * na);
    report.categories.push_back(std::move(row));
  }
  return report;
}

namespace detail {
inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline std::string eval_report_csv(const EvalReport& report) {
  std::string out = "category_label,eps_low,eps_high,n,mean_tilde_r,std_tilde_r,mean_regret,clip_fraction\n";
  for (const auto& c : report.categories) {
    out += c.label + "," + detail::fmt_real(c.eps_low) + "," + detail::fmt_real(c.eps_high) + "," +
           std::to_string(c.tilde_r.n) + "," + detail::fmt_real(c.tilde_r.mean) + "," +
           detail::fmt_real(c.tilde_r.stddev()) + "," + detail::fmt_real(c.regret.mean) + "," +
           detail::fmt_real(c.clip_fraction) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(report.config);
  j["n_per_category"] = report.n_per_category;
  j["n_states"] = report.total_states();
  if (report.eval_seed) j["eval_seed"] = *report.eval_seed;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& c : report.categories) {
    rows.push_back({{"category_label", c.label},
                    {"eps_low", c.eps_low},
                    {"eps_high", c.eps_high},
                    {"n", c.tilde_r.n},
                    {"mean_tilde_r", c.tilde_r.mean},
                    {"std_tilde_r", c.tilde_r.stddev()},
                    {"mean_regret", c.regret.mean},
                    {"clip_fraction", c.clip_fraction}});
  }
  j["categories"] = std::move(rows);
  return j;
}

}  // namespace sme
