#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sme/config.hpp"

namespace sme {

/// Dense row-major matrix of doubles. Small by construction (dimensions are
/// environment channel counts), so no expression templates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ValidationError("matrix data size does not match its shape");
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> data() noexcept { return data_; }

  [[nodiscard]] Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> x, std::span<const double> y) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ValidationError("matrix product dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

inline double frobenius_norm_squared(const Matrix& m) noexcept {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return acc;
}

/// Thin Q factor of a tall matrix (rows >= cols) by Householder reflections,
/// with column signs chosen so that diag(R) is positive. That sign rule makes
/// the factorization unique for full-rank input.
inline Matrix householder_q(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m < n) throw ValidationError("householder_q expects a tall matrix");

  Matrix r = a;
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(n);
  std::vector<double> r_diag(n);

  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> v(m - k);
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) {
      v[i - k] = r(i, k);
      norm += v[i - k] * v[i - k];
    }
    norm = std::sqrt(norm);
    // alpha takes the opposite sign of the pivot to avoid cancellation.
    const double alpha = v[0] >= 0.0 ? -norm : norm;
    v[0] -= alpha;
    const double vnorm2 = dot(v, v);
    if (vnorm2 > 0.0) {
      for (std::size_t j = k; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = k; i < m; ++i) s += v[i - k] * r(i, j);
        s = 2.0 * s / vnorm2;
        for (std::size_t i = k; i < m; ++i) r(i, j) -= s * v[i - k];
      }
    }
    r_diag[k] = r(k, k);
    reflectors.push_back(std::move(v));
  }

  // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity.
  Matrix q(m, n);
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t kk = n; kk-- > 0;) {
    const auto& v = reflectors[kk];
    const double vnorm2 = dot(v, v);
    if (vnorm2 == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = kk; i < m; ++i) s += v[i - kk] * q(i, j);
      s = 2.0 * s / vnorm2;
      for (std::size_t i = kk; i < m; ++i) q(i, j) -= s * v[i - kk];
    }
  }

  for (std::size_t j = 0; j < n; ++j) {
    if (r_diag[j] < 0.0)
      for (std::size_t i = 0; i < m; ++i) q(i, j) = -q(i, j);
  }
  return q;
}

/// Largest singular value by power iteration on M^T M.
inline double spectral_norm(const Matrix& m, double rel_tol = 1e-10, int max_iter = 10000) {
  if (m.size() == 0) return 0.0;
  std::vector<double> v(m.cols(), 1.0 / std::sqrt(static_cast<double>(m.cols())));
  // A slightly uneven start keeps v from being orthogonal to the top singular vector.
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 1.0 + 1e-3 * static_cast<double>(i);
  std::vector<double> mv(m.rows());
  double sigma2 = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t r = 0; r < m.rows(); ++r) mv[r] = dot(m.row(r), v);
    std::vector<double> next(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) next[c] += m(r, c) * mv[r];
    const double vn = std::sqrt(dot(v, v));
    const double nn = std::sqrt(dot(next, next));
    if (nn == 0.0) return 0.0;
    const double estimate = nn / vn;
    for (std::size_t c = 0; c < next.size(); ++c) v[c] = next[c] / nn;
    if (it > 0 && std::abs(estimate - sigma2) <= rel_tol * estimate) {
      sigma2 = estimate;
      break;
    }
    sigma2 = estimate;
  }
  return std::sqrt(sigma2);
}

}  // namespace sme
