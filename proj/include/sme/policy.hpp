#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "sme/config.hpp"
#include "sme/linalg.hpp"
#include "sme/random.hpp"

namespace sme {

/// Standard normal CDF through erfc, which keeps full relative precision in
/// the lower tail. The result is held inside the open interval (0, 1): far
/// tails saturate at the nearest representable doubles instead of 0 or 1.
inline double std_normal_cdf(double z) {
  if (std::isnan(z)) throw ValidationError("std_normal_cdf: NaN input");
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  const double p = 0.5 * std::erfc(-z * (std::numbers::sqrt2 / 2.0));
  return std::clamp(p, lo, hi);
}

/// y = Phi(W x + b) with W scaled to unit pre-activation variance under
/// uniform inputs and b = -0.5 W 1 centering the pre-activations.
struct UniformLayer {
  Matrix weights;  // n_out x n_in
  std::vector<double> bias;

  [[nodiscard]] std::size_t n_in() const noexcept { return weights.cols(); }
  [[nodiscard]] std::size_t n_out() const noexcept { return weights.rows(); }

  friend bool operator==(const UniformLayer&, const UniformLayer&) = default;
};

struct DunPolicy {
  std::vector<UniformLayer> layers;

  [[nodiscard]] std::size_t input_dim() const noexcept { return layers.empty() ? 0 : layers.front().n_in(); }
  [[nodiscard]] std::size_t output_dim() const noexcept { return layers.empty() ? 0 : layers.back().n_out(); }
  [[nodiscard]] std::size_t depth() const noexcept { return layers.size(); }

  friend bool operator==(const DunPolicy&, const DunPolicy&) = default;
};

inline constexpr double uniform_variance_scale = 3.4641016151377545870548926830117;  // sqrt(12)

/// Rotates pairs of rows until every row of `q` has squared norm
/// cols/rows. Left multiplication by Givens rotations keeps the columns
/// orthonormal; each rotation pins one row exactly, so at most rows - 1
/// rotations are needed (constructive Schur-Horn).
inline void equalize_row_norms(Matrix& q) {
  const std::size_t m = q.rows();
  const std::size_t n = q.cols();
  if (m <= 1) return;
  const double target = static_cast<double>(n) / static_cast<double>(m);
  std::vector<double> norm2(m);
  for (std::size_t r = 0; r < m; ++r) norm2[r] = dot(q.row(r), q.row(r));
  std::vector<bool> done(m, false);

  for (std::size_t step = 0; step + 1 < m; ++step) {
    std::size_t hi = m, lo = m;
    for (std::size_t r = 0; r < m; ++r) {
      if (done[r]) continue;
      if (hi == m || norm2[r] > norm2[hi]) hi = r;
      if (lo == m || norm2[r] < norm2[lo]) lo = r;
    }
    if (hi == lo || norm2[hi] - norm2[lo] <= 1e-15) break;

    const double a = norm2[hi];
    const double b = norm2[lo];
    const double p = dot(q.row(hi), q.row(lo));
    const double half_gap = 0.5 * (a - b);
    const double radius = std::hypot(half_gap, p);
    const double phase = std::atan2(p, half_gap);
    const double c = std::clamp((target - 0.5 * (a + b)) / radius, -1.0, 1.0);
    const double theta = 0.5 * (phase + std::acos(c));
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);

    auto ri = q.row(hi);
    auto rj = q.row(lo);
    for (std::size_t k = 0; k < n; ++k) {
      const double x = ri[k];
      const double y = rj[k];
      ri[k] = cs * x + sn * y;
      rj[k] = -sn * x + cs * y;
    }
    norm2[hi] = dot(q.row(hi), q.row(hi));
    norm2[lo] = dot(q.row(lo), q.row(lo));
    done[hi] = true;
  }
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RandomStream& stream) {
  Matrix g(rows, cols);
  auto data = g.data();
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const auto [z0, z1] = stream.gaussian_pair();
    data[i] = z0;
    if (i + 1 < data.size()) data[i + 1] = z1;
  }
  return g;
}

/// Semi-orthogonal, sqrt(12)-scaled weights with centering bias.
///
/// Contracting or square (n_out <= n_in): W = sqrt(12) Q^T where Q is the
/// sign-fixed thin Q of an n_in x n_out Gaussian draw, so W W^T = 12 I.
/// Expanding (n_out > n_in): Q from an n_out x n_in draw, row norms
/// equalized, then rows scaled to norm sqrt(12). Columns stay orthogonal.
inline UniformLayer build_uniform_layer(std::size_t n_in, std::size_t n_out, RandomStream& stream) {
  UniformLayer layer;
  if (n_out <= n_in) {
    const Matrix q = householder_q(gaussian_matrix(n_in, n_out, stream));
    layer.weights = q.transposed();
  } else {
    Matrix q = householder_q(gaussian_matrix(n_out, n_in, stream));
    equalize_row_norms(q);
    layer.weights = std::move(q);
  }
  for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
    auto row = layer.weights.row(r);
    const double scale = uniform_variance_scale / std::sqrt(dot(row, row));
    if (n_out > n_in) {
      for (auto& w : row) w *= scale;
    } else {
      for (auto& w : row) w *= uniform_variance_scale;
    }
  }
  layer.bias.resize(n_out);
  for (std::size_t r = 0; r < n_out; ++r) {
    double sum = 0.0;
    for (double w : layer.weights.row(r)) sum += w;
    layer.bias[r] = -0.5 * sum;
  }
  return layer;
}

/// Layer widths: N_s -> N_a for depth 1, otherwise (depth - 1) square
/// N_s -> N_s layers followed by N_s -> N_a. Hidden layers never widen: a
/// widened hidden layer carries only N_s degrees of freedom, its units are
/// dependent, and the unit-variance scaling of the next layer no longer holds.
inline std::vector<std::size_t> policy_widths(std::size_t n_state, std::size_t n_action, std::size_t depth) {
  std::vector<std::size_t> widths{n_state};
  const std::size_t hidden = n_state;
  for (std::size_t l = 1; l < depth; ++l) widths.push_back(hidden);
  widths.push_back(n_action);
  return widths;
}

inline DunPolicy build_policy(std::size_t n_state, std::size_t n_action, std::size_t depth, RandomStream& stream) {
  if (n_state == 0 || n_action == 0 || depth == 0) throw ValidationError("build_policy: dimensions must be positive");
  const auto widths = policy_widths(n_state, n_action, depth);
  DunPolicy policy;
  policy.layers.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) policy.layers.push_back(build_uniform_layer(widths[l], widths[l + 1], stream));
  return policy;
}

inline DunPolicy build_policy(const EnvConfig& cfg, RandomStream& stream) {
  return build_policy(static_cast<std::size_t>(cfg.n_state), static_cast<std::size_t>(cfg.n_action),
                      static_cast<std::size_t>(cfg.policy_complexity), stream);
}

inline void layer_forward(const UniformLayer& layer, std::span<const double> x, std::span<double> y) {
  if (x.size() != layer.n_in() || y.size() != layer.n_out()) throw ValidationError("layer_forward: dimension mismatch");
  for (std::size_t r = 0; r < layer.n_out(); ++r) y[r] = std_normal_cdf(dot(layer.weights.row(r), x) + layer.bias[r]);
}

inline std::vector<double> layer_forward(const UniformLayer& layer, std::span<const double> x) {
  std::vector<double> y(layer.n_out());
  layer_forward(layer, x, y);
  return y;
}

/// pi*(s). States outside the unit cube are valid input (OOD evaluation);
/// with clip_input they are clamped onto the cube first.
inline std::vector<double> optimal_action(const DunPolicy& policy, std::span<const double> s, bool clip_input = false) {
  if (s.size() != policy.input_dim()) throw ValidationError("optimal_action: state dimension mismatch");
  std::vector<double> x(s.begin(), s.end());
  for (auto& v : x) {
    if (std::isnan(v)) throw ValidationError("optimal_action: NaN state component");
    if (clip_input) v = std::clamp(v, 0.0, 1.0);
  }
  std::vector<double> y;
  for (const auto& layer : policy.layers) {
    y.resize(layer.n_out());
    layer_forward(layer, x, y);
    x.swap(y);
  }
  return x;
}

}  // namespace sme
