#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sme/config.hpp"

namespace sme {

struct StepReward {
  double tilde_r = 0.0;  // 1 - MAE(a, a*)
  double hat_r = 0.0;    // max(0, 4 (tilde_r - 0.75))
  double r = 0.0;        // hat_r gated by min_reward
};

struct Regret {
  double tilde = 0.0;  // 1 - tilde_r
  double hat = 0.0;    // 1 - hat_r
};

inline double baseline_similarity(std::span<const double> a, std::span<const double> a_star) {
  if (a.size() != a_star.size() || a.empty()) throw ValidationError("step_reward: action dimension mismatch");
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - a_star[i]);
  return 1.0 - l1 / static_cast<double>(a.size());
}

inline double rescaled_similarity(double tilde_r) noexcept { return std::max(0.0, 4.0 * (tilde_r - 0.75)); }

inline StepReward step_reward(std::span<const double> a, std::span<const double> a_star, double min_reward) {
  StepReward out;
  out.tilde_r = baseline_similarity(a, a_star);
  out.hat_r = rescaled_similarity(out.tilde_r);
  out.r = out.hat_r > min_reward ? out.hat_r : 0.0;
  return out;
}

inline Regret compute_regret(std::span<const double> a, std::span<const double> a_star) {
  const double tilde = baseline_similarity(a, a_star);
  return {1.0 - tilde, 1.0 - rescaled_similarity(tilde)};
}

/// Running sum of undistributed step rewards.
struct RewardLedger {
  double cumulative = 0.0;
  int step_index = 0;  // 1-based index of the last accounted step
  bool payout_on_termination = true;
};

/// Adds r for step t = step_index + 1 and pays the running sum out when
/// t is a multiple of k or the episode ends here. Returns the payout.
inline double accumulate_and_payout(RewardLedger& ledger, double r, int k, bool episode_ending) {
  if (k < 1) throw ValidationError("reward_interval must be ≥ 1");
  ledger.step_index += 1;
  ledger.cumulative += r;
  if (ledger.step_index % k == 0 || episode_ending) {
    const double payout = ledger.cumulative;
    ledger.cumulative = 0.0;
    return payout;
  }
  return 0.0;
}

/// Strict: D = 0 never terminates.
inline bool check_termination(double r, double survival_difficulty) noexcept { return r < survival_difficulty; }

/// [s, t/T, r_cum/k]
inline std::vector<double> augment_observation(std::span<const double> s, int t, int horizon, double r_cum, int k) {
  if (horizon < 1 || k < 1) throw ValidationError("augment_observation: horizon and k must be ≥ 1");
  if (t < 0 || t > horizon) throw ValidationError("augment_observation: step index outside [0, T]");
  std::vector<double> obs(s.begin(), s.end());
  obs.push_back(static_cast<double>(t) / static_cast<double>(horizon));
  obs.push_back(r_cum / static_cast<double>(k));
  return obs;
}

}  // namespace sme
