#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "sme/config.hpp"
#include "sme/linalg.hpp"
#include "sme/random.hpp"

namespace sme {

/// Floored modulo: always in [0, 1), also for negative x.
inline double unit_mod(double x) noexcept {
  double y = x - std::floor(x);
  // x - floor(x) rounds up to exactly 1.0 for tiny negative x.
  if (y >= 1.0) y = 0.0;
  return y;
}

/// 1-periodic reflect-fold onto [0, 1]: 2y on [0, 0.5], 2(1 - y) above,
/// with y = x mod 1. Same function as arccos(cos(2 pi x)) / pi.
inline double triangle_wave(double x) {
  if (std::isnan(x)) throw ValidationError("triangle_wave: NaN input");
  const double y = unit_mod(x);
  return y <= 0.5 ? 2.0 * y : 2.0 * (1.0 - y);
}

struct TriangleWave {
  double operator()(double x) const { return triangle_wave(x); }
};

/// s' = psi(s + a W + b), W row-stochastic (N_a x N_s), b in [0, 1)^N_s.
struct TransitionKernel {
  Matrix weights;
  std::vector<double> bias;

  [[nodiscard]] std::size_t n_state() const noexcept { return weights.cols(); }
  [[nodiscard]] std::size_t n_action() const noexcept { return weights.rows(); }

  friend bool operator==(const TransitionKernel&, const TransitionKernel&) = default;
};

inline TransitionKernel init_kernel(const EnvConfig& cfg, RandomStream& w_stream, RandomStream& b_stream) {
  const auto ns = static_cast<std::size_t>(cfg.n_state);
  const auto na = static_cast<std::size_t>(cfg.n_action);
  TransitionKernel kernel{Matrix(na, ns), std::vector<double>(ns)};
  for (std::size_t i = 0; i < na; ++i) {
    auto row = kernel.weights.row(i);
    double sum = 0.0;
    do {  // an all-zero row has probability ~0 but would divide by zero
      sum = 0.0;
      for (auto& w : row) {
        w = w_stream.uniform();
        sum += w;
      }
    } while (sum == 0.0);
    for (auto& w : row) w /= sum;
  }
  for (auto& b : kernel.bias) b = b_stream.uniform();
  return kernel;
}

inline TransitionKernel init_kernel(const EnvConfig& cfg) {
  auto w = derive_stream(cfg.master_seed, StreamId::kernel_weights);
  auto b = derive_stream(cfg.master_seed, StreamId::kernel_bias);
  return init_kernel(cfg, w, b);
}

/// Pre-activation s + a W + b, written into `out`.
inline void pre_activation(const TransitionKernel& kernel, std::span<const double> s, std::span<const double> a,
                           std::span<double> out) {
  const std::size_t ns = kernel.n_state();
  const std::size_t na = kernel.n_action();
  if (s.size() != ns || a.size() != na || out.size() != ns) {
    throw ValidationError("step_transition: dimension mismatch");
  }
  for (std::size_t j = 0; j < ns; ++j) {
    if (std::isnan(s[j])) throw ValidationError("step_transition: NaN state component");
    out[j] = s[j] + kernel.bias[j];
  }
  for (std::size_t i = 0; i < na; ++i) {
    if (std::isnan(a[i])) throw ValidationError("step_transition: NaN action component");
    const auto w = kernel.weights.row(i);
    for (std::size_t j = 0; j < ns; ++j) out[j] += a[i] * w[j];
  }
}

/// The activation is a template parameter so that the verification suite
/// can substitute saturating maps as negative controls.
template <typename Activation = TriangleWave>
void step_transition(const TransitionKernel& kernel, std::span<const double> s, std::span<const double> a,
                     std::span<double> out, Activation&& activation = {}) {
  pre_activation(kernel, s, a, out);
  for (auto& x : out) x = activation(x);
}

template <typename Activation = TriangleWave>
std::vector<double> step_transition(const TransitionKernel& kernel, std::span<const double> s,
                                    std::span<const double> a, Activation&& activation = {}) {
  std::vector<double> out(kernel.n_state());
  step_transition(kernel, s, a, std::span<double>(out), std::forward<Activation>(activation));
  return out;
}

}  // namespace sme
