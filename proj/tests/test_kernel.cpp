#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sme/kernel.hpp"
#include "sme/linalg.hpp"
#include "sme/stats.hpp"
#include "sme/verification.hpp"

using namespace sme;

namespace {

TransitionKernel single(double w, double b) { return {Matrix(1, 1, std::vector<double>{w}), {b}}; }

}  // namespace

TEST(TriangleWave, Examples) {
  EXPECT_NEAR(triangle_wave(0.25), 0.5, 1e-15);
  EXPECT_NEAR(triangle_wave(1.3), 0.6, 1e-12);
  EXPECT_NEAR(triangle_wave(-0.2), 0.4, 1e-12);
  EXPECT_EQ(triangle_wave(0.0), 0.0);
  EXPECT_EQ(triangle_wave(0.5), 1.0);
  EXPECT_THROW(triangle_wave(std::nan("")), ValidationError);
}

TEST(TriangleWave, MatchesArccosIdentity) {
  RandomStream s(2, 0);
  for (int i = 0; i < 100000; ++i) {
    const double y = s.uniform(-5.0, 5.0);
    ASSERT_NEAR(triangle_wave(y), oracle::triangle(y), 1e-12) << y;
  }
}

TEST(TriangleWave, RangeAndSymmetry) {
  RandomStream s(2, 1);
  for (int i = 0; i < 10000; ++i) {
    const double y = s.uniform(-100.0, 100.0);
    const double v = triangle_wave(y);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_NEAR(v, triangle_wave(-y), 1e-9);
    ASSERT_NEAR(v, triangle_wave(y + 1.0), 1e-9);
  }
}

TEST(Kernel, RowStochasticNonNegative) {
  for (int ns : {1, 4, 8, 16}) {
    for (int na : {1, 4, 8, 16}) {
      EnvConfig cfg;
      cfg.n_state = ns;
      cfg.n_action = na;
      cfg.master_seed = static_cast<std::uint64_t>(ns * 100 + na);
      const auto k = init_kernel(cfg);
      ASSERT_EQ(k.weights.rows(), static_cast<std::size_t>(na));
      ASSERT_EQ(k.weights.cols(), static_cast<std::size_t>(ns));
      for (std::size_t i = 0; i < k.weights.rows(); ++i) {
        double sum = 0.0;
        for (double w : k.weights.row(i)) {
          EXPECT_GE(w, 0.0);
          sum += w;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
      for (double b : k.bias) {
        EXPECT_GE(b, 0.0);
        EXPECT_LT(b, 1.0);
      }
    }
  }
}

TEST(Kernel, Deterministic) {
  EnvConfig cfg;
  cfg.master_seed = 99;
  EXPECT_EQ(init_kernel(cfg), init_kernel(cfg));
  cfg.master_seed = 100;
  EnvConfig other;
  other.master_seed = 99;
  EXPECT_NE(init_kernel(cfg).weights, init_kernel(other).weights);
}

TEST(Kernel, StepExamples) {
  const auto k = single(1.0, 0.9);
  const std::vector<double> s{0.4}, a{0.3};
  EXPECT_NEAR(step_transition(k, s, a)[0], 0.8, 1e-12);

  const auto z = single(1.0, 0.0);
  const std::vector<double> s2{0.3}, a0{0.0};
  EXPECT_NEAR(step_transition(z, s2, a0)[0], 0.6, 1e-12);
}

TEST(Kernel, StepErrors) {
  const auto k = single(1.0, 0.0);
  const std::vector<double> two{0.1, 0.2}, one{0.1}, bad{std::nan("")};
  EXPECT_THROW(step_transition(k, two, one), ValidationError);
  EXPECT_THROW(step_transition(k, one, two), ValidationError);
  EXPECT_THROW(step_transition(k, bad, one), ValidationError);
  EXPECT_THROW(step_transition(k, one, bad), ValidationError);
}

TEST(Kernel, OutputsStayInUnitInterval) {
  EnvConfig cfg;
  cfg.master_seed = 4;
  const auto k = init_kernel(cfg);
  RandomStream rs(4, 50);
  std::vector<double> s(8), a(4), out(8);
  for (int i = 0; i < 100000; ++i) {
    for (auto& v : s) v = rs.uniform();
    for (auto& v : a) v = rs.uniform();
    step_transition(k, s, a, std::span<double>(out));
    for (double v : out) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Kernel, PreservesUniformMarginals) {
  EnvConfig cfg;
  cfg.master_seed = 1;
  const auto k = init_kernel(cfg);
  RandomStream rs(1, 51);
  std::vector<double> a(4);
  for (auto& v : a) v = rs.uniform();
  const std::size_t n = 100000;
  std::vector<std::vector<double>> cols(8, std::vector<double>(n));
  std::vector<double> s(8), out(8);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : s) v = rs.uniform();
    step_transition(k, s, a, std::span<double>(out));
    for (std::size_t j = 0; j < 8; ++j) cols[j][i] = out[j];
  }
  const double crit = ks_critical_value(n, 0.01 / 8.0);
  for (const auto& c : cols) EXPECT_LT(oracle::ks_distance(c), crit);
}

TEST(Kernel, ActionMassConserved) {
  EnvConfig cfg;
  cfg.n_state = 5;
  cfg.n_action = 7;
  cfg.master_seed = 3;
  const auto k = init_kernel(cfg);
  RandomStream rs(3, 52);
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> a(7);
    double l1 = 0.0;
    for (auto& v : a) l1 += (v = rs.uniform());
    double projected = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      double x = 0.0;
      for (std::size_t i = 0; i < 7; ++i) x += a[i] * k.weights(i, j);
      projected += x;
    }
    ASSERT_NEAR(projected, l1, 1e-10);
  }
}

TEST(Kernel, InjectedVarianceMatchesFrobenius) {
  EnvConfig cfg;
  cfg.master_seed = 8;
  const auto k = init_kernel(cfg);
  const double analytic = frobenius_norm_squared(k.weights) / 12.0;
  EXPECT_GE(analytic, 4.0 / (12.0 * 8.0));
  EXPECT_LE(analytic, 4.0 / 12.0);

  RandomStream rs(8, 53);
  const int n = 200000;
  std::vector<RunningStats> per_dim(8);
  std::vector<double> a(4);
  for (int t = 0; t < n; ++t) {
    for (auto& v : a) v = rs.uniform();
    for (std::size_t j = 0; j < 8; ++j) {
      double x = 0.0;
      for (std::size_t i = 0; i < 4; ++i) x += a[i] * k.weights(i, j);
      per_dim[j].push(x);
    }
  }
  double trace = 0.0;
  for (const auto& st : per_dim) trace += st.variance();
  EXPECT_NEAR(trace, analytic, 3.0 * analytic * std::sqrt(2.0 / n));
}

// The one-dimensional case breaks the bound 2 max(1, ||W||): moving s and a
// together by d moves the pre-activation by 2d, the joint input by sqrt(2) d.
TEST(Kernel, LipschitzConstantOfAffinePart) {
  const auto k = single(1.0, 0.0);
  const double d = 1e-3;
  const std::vector<double> s1{0.1}, a1{0.1}, s2{0.1 + d}, a2{0.1 + d};
  const double ratio = std::abs(step_transition(k, s2, a2)[0] - step_transition(k, s1, a1)[0]) / (std::sqrt(2.0) * d);
  EXPECT_NEAR(ratio, 2.0 * std::sqrt(2.0), 1e-9);
  EXPECT_GT(ratio, 2.0 * std::max(1.0, spectral_norm(k.weights)));
  EXPECT_LE(ratio, 2.0 * affine_lipschitz_constant(k.weights) + 1e-9);
}

TEST(Linalg, SpectralNormOfKnownMatrix) {
  const Matrix m(2, 2, {3.0, 0.0, 4.0, 5.0});
  EXPECT_NEAR(spectral_norm(m), std::sqrt(45.0), 1e-9);
}
