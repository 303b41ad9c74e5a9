#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles/frozen_values.hpp"
#include "rkhs_rl/environment.hpp"
#include "rkhs_rl/errors.hpp"
#include "rkhs_rl/verify/oracles.hpp"
#include "test_util.hpp"

using namespace rkhs_rl;
using namespace rkhs_rl::env;

namespace {

double empirical_cdf(const std::vector<double>& sorted, double x) {
  return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) /
         static_cast<double>(sorted.size());
}

void expect_cdf(double alpha, double beta, std::span<const double> expected, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> draws(200000);
  for (auto& v : draws) v = gen_alpha_stable(rng, alpha, beta, 1.0);
  std::sort(draws.begin(), draws.end());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    // 0.006 is about five standard errors at this sample size.
    EXPECT_NEAR(empirical_cdf(draws, frozen::kStableCdfX[i]), expected[i], 0.006)
        << "alpha " << alpha << " beta " << beta << " x " << frozen::kStableCdfX[i];
  }
}

}  // namespace

TEST(AlphaStable, GaussianLimitVariance) {
  Rng rng(1);
  double s = 0.0;
  double s2 = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double v = gen_alpha_stable(rng, 2.0, 0.0, 0.8);
    s += v;
    s2 += v * v;
  }
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / (2.0 * 0.64), 1.0, 0.03);
}

TEST(AlphaStable, CauchyMedianIsZero) {
  Rng rng(2);
  std::vector<double> d(400000);
  for (auto& v : d) v = gen_alpha_stable(rng, 1.0, 0.0, 2.0);
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  EXPECT_NEAR(d[d.size() / 2], 0.0, 0.01 * 2.0);
}

TEST(AlphaStable, MatchesReferenceCdf) {
  expect_cdf(1.5, 0.5, frozen::kStableCdfA15B05, 3);
  expect_cdf(1.0, 0.5, frozen::kStableCdfA10B05, 4);
  expect_cdf(0.8, -0.3, frozen::kStableCdfA08Bm03, 5);
}

TEST(AlphaStable, ScaleFamilyOnPairedSeeds) {
  for (double alpha : {0.7, 1.0, 1.5, 2.0}) {
    Rng a(6);
    Rng b(6);
    for (int i = 0; i < 1000; ++i) {
      const double two = gen_alpha_stable(a, alpha, 0.0, 2.0);
      const double one = gen_alpha_stable(b, alpha, 0.0, 1.0);
      EXPECT_NEAR(two, 2.0 * one, 1e-12 * std::max(1.0, std::abs(two)));
    }
  }
}

TEST(AlphaStable, UnitAlphaSkewedScaleShift) {
  // S1 at alpha = 1: X(scale) = scale X(1) + (2 / pi) beta scale log(scale).
  Rng a(7);
  Rng b(7);
  const double scale = 3.0;
  const double beta = 0.6;
  for (int i = 0; i < 1000; ++i) {
    const double x = gen_alpha_stable(a, 1.0, beta, scale);
    const double ref = scale * gen_alpha_stable(b, 1.0, beta, 1.0) +
                       (2.0 / std::numbers::pi) * beta * scale * std::log(scale);
    EXPECT_NEAR(x, ref, 1e-9 * std::max(1.0, std::abs(x)));
  }
}

TEST(AlphaStable, ScaleFamilyKs) {
  Rng a(8);
  Rng b(9);
  std::vector<double> s2(100000);
  std::vector<double> s1(100000);
  for (auto& v : s2) v = gen_alpha_stable(a, 1.2, 0.0, 2.0);
  for (auto& v : s1) v = 2.0 * gen_alpha_stable(b, 1.2, 0.0, 1.0);
  EXPECT_GT(verify::ks_two_sample(s2, s1).p_value, 0.01);
}

TEST(NoiseModel, Validation) {
  EXPECT_THROW(validate(NoiseModel{AlphaStable{2.5, 0.0, 1.0}}), InvalidInput);
  EXPECT_THROW(validate(NoiseModel{AlphaStable{1.0, 1.5, 1.0}}), InvalidInput);
  EXPECT_THROW(validate(NoiseModel{AlphaStable{1.0, 0.0, 0.0}}), InvalidInput);
  EXPECT_THROW(validate(NoiseModel{SparseOutliers{1.5, -1, 1, 30}}), InvalidInput);
  EXPECT_THROW(validate(NoiseModel{SparseOutliers{0.1, 1, -1, 30}}), InvalidInput);
  EXPECT_NO_THROW(validate(NoiseModel{SparseOutliers{}}));
}

TEST(SparseNoise, GaussianOnly) {
  Rng rng(10);
  double s2 = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double v = gen_sparse_noise(rng, 0.0, -100, 100, 20.0, 4.0);
    s2 += v * v;
  }
  EXPECT_NEAR(s2 / n / (4.0 / 100.0), 1.0, 0.03);
}

TEST(SparseNoise, OutliersOnlyAreUniform) {
  Rng rng(11);
  double s = 0.0;
  double s2 = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double v = gen_sparse_noise(rng, 1.0, -100, 100, 30.0, 1.0);
    ASSERT_GE(v, -100.0);
    ASSERT_LE(v, 100.0);
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.5);
  EXPECT_NEAR((s2 / n - (s / n) * (s / n)) / (1e4 / 3.0), 1.0, 0.03);
}

TEST(SparseNoise, OutlierRate) {
  Rng rng(12);
  const double six_sigma = 6.0 * std::sqrt(1.0 / 1000.0);
  long big = 0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    if (std::abs(gen_sparse_noise(rng, 0.1, -100, 100, 30.0, 1.0)) > six_sigma) ++big;
  }
  EXPECT_NEAR(static_cast<double>(big) / n, 0.1, 0.01);
  EXPECT_THROW(gen_sparse_noise(rng, 0.1, 1, 1, 30, 1), InvalidInput);
}

TEST(LmpStep, LmsAndSignLms) {
  const Eigen::Vector3d theta(0.1, -0.2, 0.3);
  const Eigen::Vector3d x(1.0, 0.5, -2.0);
  const double y = 1.7;
  const double rho = 0.01;
  const double e = y - theta.dot(x);
  const LmpStep lms = lmp_step(theta, x, y, 2.0, rho);
  EXPECT_DOUBLE_EQ(lms.error, e);
  EXPECT_TRUE(vectors_near(lms.theta, theta + 2.0 * rho * e * x, 1e-15));
  const LmpStep sign = lmp_step(theta, x, y, 1.0, rho);
  EXPECT_TRUE(vectors_near(sign.theta, theta + rho * (e > 0 ? 1.0 : -1.0) * x, 1e-15));
  const LmpStep mid = lmp_step(theta, x, y, 1.5, rho);
  EXPECT_TRUE(vectors_near(mid.theta, theta + rho * 1.5 * std::sqrt(std::abs(e)) * (e > 0 ? 1.0 : -1.0) * x, 1e-15));
}

TEST(LmpStep, ZeroErrorLeavesTheta) {
  const Eigen::Vector2d theta(1.0, 2.0);
  const Eigen::Vector2d x(1.0, 1.0);
  for (double p : {1.0, 1.5, 2.0}) {
    EXPECT_EQ(lmp_step(theta, x, 3.0, p, 0.1).theta, theta);
  }
}

TEST(LmpStep, Errors) {
  const Eigen::Vector2d theta(1.0, 2.0);
  const Eigen::Vector2d x(1.0, 1.0);
  EXPECT_THROW(lmp_step(theta, x, INFINITY, 2.0, 0.1), RunAborted);
  EXPECT_THROW(lmp_step(theta, x, NAN, 2.0, 0.1), RunAborted);
  EXPECT_THROW(lmp_step(theta, x, 1.0, 2.5, 0.1), InvalidInput);
  EXPECT_THROW(lmp_step(theta, x, 1.0, 0.5, 0.1), InvalidInput);
}

TEST(LmpUpdate, Bookkeeping) {
  FilterState fs = FilterState::initial(2);
  const FilterParams params{0.1, 3, 0.3};
  for (int i = 0; i < 5; ++i) {
    const Eigen::Vector2d x(1.0 + i, -1.0);
    const Eigen::VectorXd before = fs.theta;
    const double e = lmp_update(fs, params, x, 0.5, 1.5);
    EXPECT_DOUBLE_EQ(e, 0.5 - before.dot(x));
    EXPECT_EQ(fs.theta_prev, before);
    EXPECT_EQ(fs.p_prev, 1.5);
    EXPECT_DOUBLE_EQ(fs.x_prev_norm, x.norm());
    EXPECT_LE(static_cast<int>(fs.history.size()), params.m_av);
  }
  EXPECT_EQ(fs.history.size(), 3u);
  EXPECT_EQ(fs.history.back().x(0), 5.0);
}

TEST(SuccessorState, MatchesReferenceComputation) {
  std::deque<Sample> hist;
  const Eigen::MatrixXd hx = as_matrix(frozen::kStateHistX, 2, 3);
  for (int i = 0; i < 2; ++i) hist.push_back({hx.row(i).transpose(), frozen::kStateHistY[i]});
  const FilterParams params{0.01, 300, 0.3};
  const State s = successor_state(as_vector(frozen::kStateCand), as_vector(frozen::kStatePrev), hist,
                                  as_vector(frozen::kStateXn), frozen::kStateYn, -0.7, params);
  EXPECT_TRUE(vectors_near(s, as_vector(frozen::kStateExpected), 1e-12));
}

TEST(SuccessorState, SimpleComponents) {
  std::deque<Sample> hist{{Eigen::Vector2d(1.0, 0.0), 0.0}};
  const FilterParams params{0.1, 10, 0.5};
  const Eigen::Vector2d theta(0.0, 0.0);
  // e_n = y - 0 = 1, unit input.
  const State s = successor_state(theta, theta, hist, Eigen::Vector2d(0.0, 1.0), 1.0, 0.0, params);
  EXPECT_DOUBLE_EQ(s(0), 0.0);
  EXPECT_DOUBLE_EQ(s(2), 0.0);
  // Zero displacement and zero residual hit the floor.
  EXPECT_DOUBLE_EQ(s(3), 0.5 * std::log10(kLogFloor));
  EXPECT_DOUBLE_EQ(s(1), std::log10(kLogFloor));
  EXPECT_TRUE(s.allFinite());
}

TEST(SuccessorState, EmptyHistoryThrows) {
  const Eigen::Vector2d theta(0.0, 0.0);
  EXPECT_THROW(successor_state(theta, theta, {}, theta, 0.0, 0.0, FilterParams{}), InvalidState);
}

TEST(SuccessorState, WarmupAveragesAvailableHistory) {
  const FilterParams params{0.1, 300, 0.3};
  std::deque<Sample> hist{{Eigen::Vector2d(1.0, 0.0), 2.0}, {Eigen::Vector2d(0.0, 2.0), 1.0}};
  const Eigen::Vector2d theta(0.5, 0.25);
  const State s = successor_state(theta, theta, hist, Eigen::Vector2d(1, 1), 0.0, 0.0, params);
  const double r1 = 2.0 - 0.5;
  const double r2 = 1.0 - 0.5;
  EXPECT_NEAR(s(1), 0.5 * (std::log10(r1 * r1 / 1.0) + std::log10(r2 * r2 / 4.0)), 1e-14);
}

TEST(SuccessorState, WindowUsesMostRecentPairs) {
  const FilterParams params{0.1, 2, 0.3};
  std::deque<Sample> hist{{Eigen::Vector2d(1, 0), 100.0}, {Eigen::Vector2d(1, 0), 2.0}, {Eigen::Vector2d(0, 1), 3.0}};
  const Eigen::Vector2d theta(0.0, 0.0);
  const State s = successor_state(theta, theta, hist, Eigen::Vector2d(1, 1), 0.0, 0.0, params);
  EXPECT_NEAR(s(1), 0.5 * (std::log10(4.0) + std::log10(9.0)), 1e-14);
}

TEST(SuccessorState, DisplacementFormsAgree) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  for (double varpi : {0.0, 0.3}) {
    for (double p : {1.0, 1.25, 1.5, 2.0}) {
      FilterState fs = FilterState::initial(4);
      const FilterParams params{0.01, 50, varpi};
      for (int i = 0; i < 20; ++i) {
        Eigen::Vector4d x;
        for (int j = 0; j < 4; ++j) x(j) = nd(rng);
        const double y = nd(rng);
        const double s4_prev = fs.s4_prev;
        lmp_update(fs, params, x, y, p);
        const State s = compute_successor_state(fs, params, x, y);
        EXPECT_NEAR(s(3), displacement_feature_expanded(s4_prev, varpi, fs.p_prev, fs.e_prev, fs.x_prev_norm), 1e-10);
        fs.s4_prev = s(3);
      }
    }
  }
}

TEST(SuccessorState, CompositionIsDeterministic) {
  FilterState fs = FilterState::initial(2);
  const FilterParams params{0.01, 5, 0.3};
  lmp_update(fs, params, Eigen::Vector2d(1, 2), 0.2, 1.5);
  const State a = compute_successor_state(fs, params, Eigen::Vector2d(0.1, 0.2), 0.3);
  const State b = compute_successor_state(fs, params, Eigen::Vector2d(0.1, 0.2), 0.3);
  EXPECT_EQ(a, b);
}

TEST(OneStepLoss, IsSecondComponent) {
  EXPECT_EQ(one_step_loss_from_state(State(0, -3, 0, 0)), -3.0);
  EXPECT_EQ(one_step_loss_from_state(State(9, -3, 7, -5)), -3.0);
}

TEST(OneStepLoss, MatchesWindowRecomputation) {
  FilterState fs = FilterState::initial(3);
  const FilterParams params{0.01, 4, 0.3};
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd;
  Eigen::Vector3d x;
  double y = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 3; ++j) x(j) = nd(rng);
    y = nd(rng);
    lmp_update(fs, params, x, y, 1.25);
  }
  for (int j = 0; j < 3; ++j) x(j) = nd(rng);
  const State s = compute_successor_state(fs, params, x, nd(rng));
  double acc = 0.0;
  for (const auto& h : fs.history) {
    const double r = h.y - fs.theta.dot(h.x);
    acc += std::log10(r * r / h.x.squaredNorm());
  }
  EXPECT_NEAR(one_step_loss_from_state(s), acc / 4.0, 1e-12);
}

TEST(Nmsd, Values) {
  const Eigen::Vector3d t(1.0, -2.0, 0.5);
  EXPECT_EQ(nmsd_db(t, t), -300.0);
  EXPECT_NEAR(nmsd_db(Eigen::Vector3d::Zero(), t), 0.0, 1e-15);
  EXPECT_NEAR(nmsd_db(2.0 * t, t), 0.0, 1e-14);
  EXPECT_NEAR(nmsd_db(1.1 * t, t), -20.0, 1e-12);
  EXPECT_THROW(nmsd_db(t, Eigen::Vector3d::Zero()), InvalidInput);
  EXPECT_THROW(nmsd_db(Eigen::Vector2d::Zero(), t), InvalidInput);
}

TEST(Stream, DeterministicAndPaired) {
  StreamSpec spec;
  spec.filter_len = 5;
  spec.n_iters = 300;
  spec.noise = {{0, AlphaStable{}}, {150, SparseOutliers{}}};
  spec.system_change = 100;
  const DataStream a = generate_stream(spec, 77);
  const DataStream b = generate_stream(spec, 77);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_EQ(a.x, b.x);
  EXPECT_NE(generate_stream(spec, 78).checksum(), a.checksum());
  ASSERT_EQ(a.systems.size(), 2u);
  EXPECT_EQ(&a.theta_star(99), &a.systems[0]);
  EXPECT_EQ(&a.theta_star(100), &a.systems[1]);
  for (long n = 0; n < a.size(); ++n) {
    EXPECT_NEAR(a.y(n), a.theta_star(n).dot(a.x.col(n)) + a.noise(n), 1e-12);
  }
  // The sparse segment has bounded outliers; the stable one is heavy-tailed.
  EXPECT_LE(a.noise.tail(150).cwiseAbs().maxCoeff(), 100.0);
}

TEST(Stream, Validation) {
  StreamSpec spec;
  spec.noise = {};
  EXPECT_THROW(generate_stream(spec, 1), InvalidInput);
  spec.noise = {{0, AlphaStable{}}, {0, SparseOutliers{}}};
  EXPECT_THROW(generate_stream(spec, 1), InvalidInput);
  spec.noise = {{0, AlphaStable{}}};
  spec.system_change = spec.n_iters;
  EXPECT_THROW(generate_stream(spec, 1), InvalidInput);
}

TEST(LmsSanity, ConvergesWithoutNoise) {
  StreamSpec spec;
  spec.filter_len = 10;
  spec.n_iters = 5000;
  spec.noise = {{0, SparseOutliers{0.0, -1.0, 1.0, 600.0}}};
  const DataStream ds = generate_stream(spec, 15);
  FilterState fs = FilterState::initial(10);
  const FilterParams params{0.01, 10, 0.3};
  double checkpoint = (fs.theta - ds.theta_star(0)).norm();
  for (long n = 0; n < ds.size(); ++n) {
    lmp_update(fs, params, ds.x.col(n), ds.y(n), 2.0);
    if ((n + 1) % 500 == 0) {
      const double d = (fs.theta - ds.theta_star(n)).norm();
      EXPECT_LE(d, checkpoint + 1e-12);  // flat once at rounding level
      checkpoint = d;
    }
  }
  EXPECT_LT((fs.theta - ds.theta_star(0)).norm(), 1e-3);
}
