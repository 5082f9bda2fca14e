#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sme/config.hpp"
#include "sme/environment.hpp"
#include "sme/kernel.hpp"
#include "sme/linalg.hpp"
#include "sme/policy.hpp"
#include "sme/random.hpp"
#include "sme/stats.hpp"

namespace sme {

struct CheckResult {
  std::string name;
  double statistic = 0.0;
  double lower_bound = -std::numeric_limits<double>::infinity();
  double threshold = 0.0;  // upper bound
  bool passed = false;
  std::uint64_t sample_size = 0;
  std::uint64_t seed = 0;
  std::string detail;
};

struct VerifyBudget {
  std::size_t uniformity_states = 100000;
  std::size_t action_mass_samples = 10000;
  std::size_t lipschitz_pairs = 100000;
  std::size_t policy_states = 100000;
  std::size_t collapse_states = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Substitutions used to run the suite against deliberately broken
/// environments. Empty members mean "use the real thing".
struct VerifyHooks {
  std::function<double(double)> activation;
  std::function<DunPolicy(const EnvConfig&)> policy_factory;
};

inline constexpr double ks_alpha = 0.01;
inline constexpr double action_mass_tolerance = 1e-10;
inline constexpr double lipschitz_slack = 1e-9;
inline constexpr double policy_ks_threshold = 0.02;
inline constexpr double collapse_std_threshold = 0.2;
inline const std::vector<int> collapse_grid_states{1, 2, 4, 8, 16};
inline const std::vector<int> collapse_grid_depths{1, 5, 10, 50};

namespace detail {

inline double apply_activation(const VerifyHooks& hooks, double x) {
  return hooks.activation ? hooks.activation(x) : triangle_wave(x);
}

inline void hooked_transition(const TransitionKernel& kernel, std::span<const double> s, std::span<const double> a,
                              std::span<double> out, const VerifyHooks& hooks) {
  pre_activation(kernel, s, a, out);
  for (auto& x : out) x = apply_activation(hooks, x);
}

/// Population standard deviation of column j of row-major samples.
inline double column_std(const std::vector<std::vector<double>>& rows, std::size_t j) {
  RunningStats st;
  for (const auto& r : rows) st.push(r[j]);
  return st.n > 0 ? std::sqrt(st.m2 / static_cast<double>(st.n)) : 0.0;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

inline RandomStream check_stream(const VerifyBudget& budget, std::uint32_t check) {
  return RandomStream(budget.seed, 100 + check);
}

}  // namespace detail

/// (1) Marginals of T(S, a) for S ~ U(0,1)^N_s and one fixed random a,
/// per-dimension KS against U(0,1), Bonferroni over N_s.
inline CheckResult check_transition_uniformity(const Environment& env, const VerifyBudget& budget,
                                               const VerifyHooks& hooks = {}) {
  auto stream = detail::check_stream(budget, 1);
  const auto& kernel = env.kernel();
  const std::size_t ns = kernel.n_state();
  const std::size_t n = budget.uniformity_states;
  std::vector<double> a(kernel.n_action());
  for (auto& v : a) v = stream.uniform();
  std::vector<std::vector<double>> columns(ns, std::vector<double>(n));
  std::vector<double> s(ns), out(ns);
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& v : s) v = stream.uniform();
    detail::hooked_transition(kernel, s, a, out, hooks);
    for (std::size_t j = 0; j < ns; ++j) columns[j][k] = out[j];
  }
  double worst = 0.0;
  for (auto& col : columns) worst = std::max(worst, ks_statistic(std::move(col)));
  const double crit = ks_critical_value(n, ks_alpha / static_cast<double>(ns));
  return {"transition_uniformity", worst, -std::numeric_limits<double>::infinity(), crit, worst < crit, n,
          budget.seed, "max per-dimension KS vs U(0,1), alpha=0.01 Bonferroni over " + std::to_string(ns)};
}

/// (2) ||a W||_1 = ||a||_1 for random actions.
inline CheckResult check_action_mass(const Environment& env, const VerifyBudget& budget) {
  auto stream = detail::check_stream(budget, 2);
  const auto& w = env.kernel().weights;
  std::vector<double> a(w.rows());
  double worst = 0.0;
  for (std::size_t k = 0; k < budget.action_mass_samples; ++k) {
    double mass = 0.0;
    for (auto& v : a) {
      v = stream.uniform();
      mass += v;
    }
    double projected = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double p = 0.0;
      for (std::size_t i = 0; i < w.rows(); ++i) p += a[i] * w(i, j);
      projected += std::abs(p);
    }
    worst = std::max(worst, std::abs(projected - mass));
  }
  return {"action_mass",
          worst,
          -std::numeric_limits<double>::infinity(),
          action_mass_tolerance,
          worst <= action_mass_tolerance,
          budget.action_mass_samples,
          budget.seed,
          "max | ||aW||_1 - ||a||_1 |"};
}

/// (3) (1/12) ||W||_F^2 within [N_a / (12 N_s), N_a / 12].
inline CheckResult check_variance_bounds(const Environment& env) {
  const auto& w = env.kernel().weights;
  const double trace = frobenius_norm_squared(w) / 12.0;
  const double na = static_cast<double>(w.rows());
  const double ns = static_cast<double>(w.cols());
  const double lo = na / (12.0 * ns);
  const double hi = na / 12.0;
  // Relative slack of 1e-12 absorbs rounding in the row normalization.
  const bool ok = trace >= lo * (1.0 - 1e-12) && trace <= hi * (1.0 + 1e-12);
  return {"variance_bounds", trace, lo, hi, ok, 1, 0, "analytic trace of Cov(aW) for a ~ U(0,1)^N_a"};
}

/// Lipschitz constant of (s, a) -> s + aW + b: the norm of [I  W^T], which
/// is sqrt(1 + ||W||_2^2). Note max(1, ||W||_2) is not enough: moving s and a
/// together along the top singular direction exceeds it.
inline double affine_lipschitz_constant(const Matrix& w) {
  const double sigma = spectral_norm(w);
  return std::sqrt(1.0 + sigma * sigma);
}

/// (4) ||T(s,a) - T(s',a')|| <= 2 sqrt(1 + ||W||_2^2) ||(s,a) - (s',a')|| + 1e-9.
/// Half the pairs are independent draws, half are small perturbations.
inline CheckResult check_lipschitz(const Environment& env, const VerifyBudget& budget, const VerifyHooks& hooks = {}) {
  auto stream = detail::check_stream(budget, 4);
  const auto& kernel = env.kernel();
  const std::size_t ns = kernel.n_state();
  const std::size_t na = kernel.n_action();
  const double bound = 2.0 * affine_lipschitz_constant(kernel.weights);
  std::vector<double> s0(ns), s1(ns), a0(na), a1(na), t0(ns), t1(ns);
  double worst_ratio = 0.0;
  bool ok = true;
  for (std::size_t k = 0; k < budget.lipschitz_pairs; ++k) {
    const bool local = (k % 2) == 1;
    const double scale = local ? 1e-3 * stream.uniform() : 1.0;
    for (std::size_t j = 0; j < ns; ++j) {
      s0[j] = stream.uniform();
      s1[j] = local ? std::clamp(s0[j] + scale * (stream.uniform() - 0.5), 0.0, 1.0) : stream.uniform();
    }
    for (std::size_t i = 0; i < na; ++i) {
      a0[i] = stream.uniform();
      a1[i] = local ? std::clamp(a0[i] + scale * (stream.uniform() - 0.5), 0.0, 1.0) : stream.uniform();
    }
    detail::hooked_transition(kernel, s0, a0, t0, hooks);
    detail::hooked_transition(kernel, s1, a1, t1, hooks);
    double din = 0.0, dout = 0.0;
    for (std::size_t j = 0; j < ns; ++j) {
      din += (s0[j] - s1[j]) * (s0[j] - s1[j]);
      dout += (t0[j] - t1[j]) * (t0[j] - t1[j]);
    }
    for (std::size_t i = 0; i < na; ++i) din += (a0[i] - a1[i]) * (a0[i] - a1[i]);
    din = std::sqrt(din);
    dout = std::sqrt(dout);
    if (dout > bound * din + lipschitz_slack) ok = false;
    if (din > 0.0) worst_ratio = std::max(worst_ratio, dout / din);
  }
  return {"lipschitz", worst_ratio, -std::numeric_limits<double>::infinity(), bound, ok, budget.lipschitz_pairs,
          budget.seed, "max ||dT|| / ||d(s,a)|| vs 2 sqrt(1 + ||W||_2^2)"};
}

/// (5) Marginals of pi*(S), S ~ U(0,1)^N_s, KS < 0.02. Applies for N_s >= 8,
/// where the CLT regime makes near-uniformity a fair expectation.
inline CheckResult check_policy_uniformity(const Environment& env, const VerifyBudget& budget) {
  const std::size_t ns = static_cast<std::size_t>(env.config().n_state);
  if (ns < 8) {
    return {"policy_uniformity", 0.0, -std::numeric_limits<double>::infinity(), policy_ks_threshold, true, 0,
            budget.seed, "not applicable for N_s < 8"};
  }
  auto stream = detail::check_stream(budget, 5);
  const std::size_t n = budget.policy_states;
  const std::size_t na = env.action_dim();
  std::vector<std::vector<double>> columns(na, std::vector<double>(n));
  std::vector<double> s(ns);
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& v : s) v = stream.uniform();
    const auto a = optimal_action(env.policy(), s);
    for (std::size_t i = 0; i < na; ++i) columns[i][k] = a[i];
  }
  double worst = 0.0;
  for (auto& col : columns) worst = std::max(worst, ks_statistic(std::move(col)));
  return {"policy_uniformity", worst, -std::numeric_limits<double>::infinity(), policy_ks_threshold,
          worst < policy_ks_threshold, n, budget.seed, "max per-dimension KS of pi*(S) vs U(0,1)"};
}

/// Per-dimension std of pi*(S) for one (N_s, depth) point of the grid.
inline std::vector<double> policy_action_std(const DunPolicy& policy, std::size_t n_states, RandomStream& stream) {
  const std::size_t ns = policy.input_dim();
  std::vector<std::vector<double>> actions;
  actions.reserve(n_states);
  std::vector<double> s(ns);
  for (std::size_t k = 0; k < n_states; ++k) {
    for (auto& v : s) v = stream.uniform();
    actions.push_back(optimal_action(policy, s));
  }
  std::vector<double> out(policy.output_dim());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = detail::column_std(actions, j);
  return out;
}

/// (6) Action std > 0.2 per dimension over {1,2,4,8,16} x {1,5,10,50}
/// (N_s x depth), N_a and master seed taken from the environment.
inline CheckResult check_non_collapse(const Environment& env, const VerifyBudget& budget, const VerifyHooks& hooks = {}) {
  struct Point {
    int n_state;
    int depth;
    double min_std = 0.0;
  };
  std::vector<Point> grid;
  for (int ns : collapse_grid_states)
    for (int depth : collapse_grid_depths) grid.push_back({ns, depth});

  detail::parallel_for(grid.size(), budget.threads, [&](std::size_t g) {
    EnvConfig cfg = env.config();
    cfg.n_state = grid[g].n_state;
    cfg.policy_complexity = grid[g].depth;
    DunPolicy policy;
    if (hooks.policy_factory) {
      policy = hooks.policy_factory(cfg);
    } else {
      auto ps = derive_stream(cfg.master_seed, StreamId::policy_weights);
      policy = build_policy(cfg, ps);
    }
    RandomStream states(budget.seed, 600 + static_cast<std::uint32_t>(g));
    const auto stds = policy_action_std(policy, budget.collapse_states, states);
    grid[g].min_std = *std::min_element(stds.begin(), stds.end());
  });

  const auto worst = std::min_element(grid.begin(), grid.end(),
                                      [](const Point& a, const Point& b) { return a.min_std < b.min_std; });
  char detail_buf[128];
  std::snprintf(detail_buf, sizeof detail_buf, "min per-dimension action std over the grid, at N_s=%d depth=%d",
                worst->n_state, worst->depth);
  return {"non_collapse",
          worst->min_std,
          collapse_std_threshold,
          std::numeric_limits<double>::infinity(),
          worst->min_std > collapse_std_threshold,
          budget.collapse_states * grid.size(),
          budget.seed,
          detail_buf};
}

inline std::vector<CheckResult> verify_environment(const Environment& env, const VerifyBudget& budget = {},
                                                   const VerifyHooks& hooks = {}) {
  return {check_transition_uniformity(env, budget, hooks), check_action_mass(env, budget),
          check_variance_bounds(env),                      check_lipschitz(env, budget, hooks),
          check_policy_uniformity(env, budget),            check_non_collapse(env, budget, hooks)};
}

inline std::vector<CheckResult> verify_environment(const EnvConfig& cfg, const VerifyBudget& budget = {}) {
  return verify_environment(Environment(cfg), budget);
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

inline nlohmann::ordered_json check_report_json(const std::vector<CheckResult>& results) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["statistic"] = r.statistic;
    if (std::isfinite(r.lower_bound)) j["lower_bound"] = r.lower_bound;
    if (std::isfinite(r.threshold)) j["threshold"] = r.threshold;
    j["passed"] = r.passed;
    j["sample_size"] = r.sample_size;
    j["seed"] = r.seed;
    j["detail"] = r.detail;
    arr.push_back(std::move(j));
  }
  return {{"all_passed", all_passed(results)}, {"checks", std::move(arr)}};
}

inline std::string check_report_table(const std::vector<CheckResult>& results) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %-6s %14s %14s %14s\n", "check", "result", "statistic", "lower", "upper");
  out += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-22s %-6s %14.6g %14.6g %14.6g\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                  r.statistic, r.lower_bound, r.threshold);
    out += line;
  }
  return out;
}

}  // namespace sme
