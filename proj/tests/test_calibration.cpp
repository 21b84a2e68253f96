#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "tulip/calibration.hpp"
#include "tulip/errors.hpp"

using namespace tulip;
using tulip::testing::random_matrix;
using tulip::testing::random_params;
using tulip::testing::random_vector;

namespace {

std::vector<CalibrationPoint> synthetic_points(int n, std::uint64_t seed) {
  std::vector<CalibrationPoint> pts;
  rng::Engine engine(seed);
  std::uniform_int_distribution<int> label(0, 2);
  for (int i = 0; i < n; ++i) {
    CalibrationPoint p;
    p.base = random_vector(3, seed + 1000 + i, 2.0);
    p.raw = random_matrix(8, 3, seed + 2000 + i, 3.0).rowwise() + p.base.transpose();
    p.gamma1 = 1.0;
    p.label = label(engine);
    pts.push_back(std::move(p));
  }
  return pts;
}

}  // namespace

TEST(Calibration, SinglePointThetaXxIsItsTrace) {
  const auto spec = NetworkSpec::mlp({2, 6, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 1);
  TulipConfig c;
  const Eigen::MatrixXd x = random_matrix(1, 2, 2);
  EXPECT_DOUBLE_EQ(fit_theta_xx(spec, theta, x, c), sample_raw(spec, theta, x.row(0).transpose(), c, 0).theta_tr);
}

TEST(Calibration, ThetaXxOnLinearModel) {
  const auto spec = tulip::testing::linear_spec(2, 3);
  const ParamVector theta = random_params(spec, 3);
  TulipConfig c;
  c.epsilon = 1e-3;
  c.M = 4000;
  const Eigen::MatrixXd x = random_matrix(10, 2, 4);
  const double expected = c.epsilon * c.epsilon * 3.0 * x.rowwise().squaredNorm().mean();
  EXPECT_NEAR(fit_theta_xx(spec, theta, x, c) / expected, 1.0, 0.03);
}

TEST(Calibration, DuplicatedSetInCommonModeIsExact) {
  const auto spec = NetworkSpec::mlp({2, 6, 2}, Activation::erf);
  const ParamVector theta = random_params(spec, 5);
  TulipConfig c;
  c.draws = DrawMode::common;
  const Eigen::MatrixXd x = Eigen::RowVector2d(0.3, -0.8).replicate(7, 1);
  EXPECT_DOUBLE_EQ(fit_theta_xx(spec, theta, x, c), sample_raw(spec, theta, x.row(0).transpose(), c).theta_tr);
}

TEST(Calibration, SearchMatchesDenseGrid) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pts = synthetic_points(30, seed * 17);
    const JSearch s = search_J(pts);
    double best = -INFINITY;
    double best_J = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const double J = std::exp(std::log(kJBracketLo) + (std::log(kJBracketHi) - std::log(kJBracketLo)) * k / 9999.0);
      const double ll = log_likelihood(pts, J);
      if (ll > best) best = ll, best_J = J;
    }
    EXPECT_FALSE(s.degenerate);
    EXPECT_GE(s.log_likelihood, best - 1e-6) << "seed " << seed;
    // near the top of the bracket the likelihood is flat and the argmax is not identifiable
    if (best_J < 0.5 * kJBracketHi) EXPECT_NEAR(std::log(s.J_star), std::log(best_J), 2e-3) << "seed " << seed;
  }
}

TEST(Calibration, FlatLikelihoodIsDegenerate) {
  auto pts = synthetic_points(10, 4);
  for (auto& p : pts) p.gamma1 = 0.0;
  const JSearch s = search_J(pts);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.J_star, kJBracketLo);
}

TEST(Calibration, SpreadOnlyHurtsWhenBaseIsRight) {
  auto pts = synthetic_points(20, 5);
  for (auto& p : pts) {
    p.base.maxCoeff(&p.label);
    p.base *= 5.0;
  }
  const JSearch s = search_J(pts);
  EXPECT_LT(s.J_star, 1.01 * kJBracketLo);
}

TEST(Calibration, LikelihoodIgnoresPointOrder) {
  auto pts = synthetic_points(15, 6);
  const double a = log_likelihood(pts, 0.7);
  std::reverse(pts.begin(), pts.end());
  EXPECT_NEAR(log_likelihood(pts, 0.7), a, 1e-12 * std::abs(a));
}

TEST(Calibration, ApplyScaling) {
  EXPECT_DOUBLE_EQ(apply_scaling(0.5, 1.5), 0.75);
  EXPECT_THROW(apply_scaling(0.5, 0.9), ConfigError);
  EXPECT_DOUBLE_EQ(apply_scaling(0.5, 0.5, false), 0.25);
  EXPECT_THROW(apply_scaling(0.5, -1.0, false), ConfigError);
}

TEST(Calibration, PseudoLabelsWhenUnlabelled) {
  const auto spec = NetworkSpec::mlp({2, 8, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 7);
  Dataset val = gen_two_moons(20, 0.1, 1, Split::val);
  val.labels.clear();
  val.num_classes = 2;
  TulipConfig c;
  const CalibrationResult r = calibrate(spec, theta, val, c);
  EXPECT_TRUE(r.pseudo_labels);
  EXPECT_GE(r.J_star, kJBracketLo);
  EXPECT_LE(r.J_star, kJBracketHi);
}

TEST(Calibration, TextRoundTrip) {
  CalibrationResult c;
  c.theta_xx = 1.234e-5;
  c.J_star = 0.1 + 0.2;
  c.epsilon_used = 0.005;
  c.M_used = 17;
  c.seed = 18446744073709551615ull;
  c.degenerate = true;
  c.log_likelihood = -12.5;
  const CalibrationResult back = calibration_from_text(calibration_to_text(c));
  EXPECT_EQ(back.theta_xx, c.theta_xx);
  EXPECT_EQ(back.J_star, c.J_star);
  EXPECT_EQ(back.M_used, 17);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_TRUE(back.degenerate);
  EXPECT_FALSE(back.pseudo_labels);
  EXPECT_THROW(calibration_from_text("version = tulip-calib/9\n"), IoError);
  EXPECT_THROW(calibration_from_text("version = tulip-calib/1\ntheta_xx = 1\n"), IoError);
}
