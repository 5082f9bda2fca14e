#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace sme {

/// Fixed stream-id map. Every consumer of randomness draws from its own
/// stream so that adding draws in one place never shifts another.
enum class StreamId : std::uint32_t {
  kernel_weights = 0,
  kernel_bias = 1,
  policy_weights = 2,
  initial_states = 3,
  evaluation = 4,
  noise_policy = 5,
  behavior_alpha = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** seeded by a splitmix64 expansion of
/// (master_seed XOR stream_id * 0xd1342543de82ef95).
///
/// Uniform doubles use the top 53 bits of each output, so every platform
/// and every language port that follows the same recipe sees the same
/// sequence.
class RandomStream {
 public:
  static constexpr std::uint64_t stream_multiplier = 0xd1342543de82ef95ULL;

  constexpr RandomStream() noexcept : RandomStream(0, 0) {}

  constexpr RandomStream(std::uint64_t master_seed, std::uint32_t stream_id) noexcept
      : stream_id_(stream_id) {
    std::uint64_t sm = master_seed ^ (static_cast<std::uint64_t>(stream_id) * stream_multiplier);
    for (auto& word : state_) word = splitmix64(sm);
  }

  [[nodiscard]] constexpr std::uint32_t stream_id() const noexcept { return stream_id_; }
  [[nodiscard]] constexpr const std::array<std::uint64_t, 4>& state() const noexcept { return state_; }

  constexpr std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Box-Muller on two fresh uniforms; u1 is taken from (0, 1] so the log is finite.
  std::pair<double, double> gaussian_pair() noexcept {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return box_muller(u1, u2);
  }

  static std::pair<double, double> box_muller(double u1, double u2) noexcept {
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  /// Child stream seeded from this stream's next output. Used to hand
  /// independent sub-streams to parallel workers in a fixed order.
  constexpr RandomStream fork() noexcept { return RandomStream(next_u64(), stream_id_); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  std::uint32_t stream_id_ = 0;
};

inline constexpr RandomStream derive_stream(std::uint64_t master_seed, std::uint32_t stream_id) noexcept {
  return RandomStream(master_seed, stream_id);
}

inline constexpr RandomStream derive_stream(std::uint64_t master_seed, StreamId id) noexcept {
  return RandomStream(master_seed, static_cast<std::uint32_t>(id));
}

}  // namespace sme
