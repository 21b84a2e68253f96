#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "tulip/calibration.hpp"
#include "tulip/detector.hpp"
#include "tulip/errors.hpp"

using namespace tulip;
using tulip::testing::linear_spec;
using tulip::testing::random_params;
using tulip::testing::random_vector;

namespace {

CalibrationResult calib_for(const TulipConfig& c, double theta_xx, double J_star) {
  CalibrationResult r;
  r.theta_xx = theta_xx;
  r.J_star = J_star;
  r.epsilon_used = c.epsilon;
  r.M_used = c.M;
  r.seed = c.seed;
  return r;
}

}  // namespace

TEST(Detector, TraceEstimateOnLinearModel) {
  const auto spec = linear_spec(3, 2);
  const ParamVector theta = random_params(spec, 1);
  const Eigen::Vector3d z(1.0, -0.5, 2.0);
  for (NoiseKind noise : {NoiseKind::gaussian, NoiseKind::rademacher}) {
    TulipConfig c;
    c.epsilon = 1e-3;
    c.M = 20000;
    c.noise = noise;
    const RawSamples r = sample_raw(spec, theta, z, c);
    const double exact = c.epsilon * c.epsilon * 2.0 * z.squaredNorm();
    EXPECT_NEAR(r.theta_tr / exact, 1.0, 0.03) << to_string(noise);
  }
}

TEST(Detector, ProbeOnLinearModelIsExact) {
  const auto spec = linear_spec(3, 2);
  const ParamVector theta = random_params(spec, 2);
  const Eigen::Vector3d z(0.3, 1.0, -1.2);
  TulipConfig c;
  c.epsilon = 0.005;
  c.delta = 8.0;
  // f is linear in theta, so the finite difference is exactly eps delta f(z)
  const double expected = std::sqrt(2.0) * c.epsilon * c.delta * forward(spec, theta, z).norm();
  EXPECT_NEAR(probe_D(spec, theta, z, c), expected, 1e-12 * expected);
  EXPECT_EQ(probe_D(spec, theta, z, c, &theta), 0.0);
}

TEST(Detector, ProbeMatchesJvpForSmallSteps) {
  const auto spec = NetworkSpec::mlp({2, 16, 3}, Activation::tanh);
  const ParamVector theta = random_params(spec, 3);
  const ParamVector ts = axpy(-0.01, theta, theta);  // theta_T - theta_ts = 0.01 theta
  const Eigen::Vector2d z(0.5, -0.2);
  TulipConfig c;
  c.epsilon = 1e-4;
  c.delta = 1.0;
  const ParamVector dir = axpy(-1.0, ts, theta);
  const double expected = std::sqrt(3.0) * c.epsilon * c.delta * jvp(spec, theta, z, dir).norm();
  EXPECT_NEAR(probe_D(spec, theta, z, c, &ts), expected, 1e-5 * expected);
}

TEST(Detector, ScoreAndGamma) {
  EXPECT_DOUBLE_EQ(score_S(2.0, 1.0, 0.5, 1.0, 0.25), 4.0 * 1.25);
  EXPECT_EQ(gamma_from(-1.0, 1.0).gamma, 0.0);
  EXPECT_EQ(gamma_from(0.0, 1.0).gamma, 0.0);
  EXPECT_DOUBLE_EQ(gamma_from(4.0, 1.0).gamma, 2.0);
  const GammaValue capped = gamma_from(1.0, 1e-15);
  EXPECT_TRUE(capped.capped);
  EXPECT_EQ(capped.gamma, kGammaCap);
  EXPECT_TRUE(gamma_from(1e12, 1.0).capped);
}

TEST(Detector, EntropyCases) {
  EXPECT_EQ(entropy(Eigen::Vector3d(0.0, 1.0, 0.0)), 0.0);
  EXPECT_NEAR(entropy(Eigen::VectorXd::Constant(5, 0.2)), std::log(5.0), 1e-14);
  EXPECT_THROW(entropy(Eigen::Vector2d(0.7, 0.7)), DomainError);
  EXPECT_THROW(entropy(Eigen::Vector2d(-0.1, 1.1)), DomainError);
}

TEST(Detector, BaselinesOnKnownLogits) {
  const BaselineScores s = baseline_scores(Eigen::Vector2d(0.0, 0.0));
  EXPECT_DOUBLE_EQ(s.msp, 0.5);
  EXPECT_DOUBLE_EQ(s.mls, 0.0);
  EXPECT_NEAR(s.ebo, -std::log(2.0), 1e-15);
  EXPECT_NEAR(s.ent, std::log(2.0), 1e-15);
  // huge logits stay finite
  const BaselineScores big = baseline_scores(Eigen::Vector3d(1000.0, 0.0, -1000.0));
  EXPECT_NEAR(big.ebo, -1000.0, 1e-9);
  EXPECT_NEAR(big.msp, 1.0, 1e-12);
  EXPECT_THROW(baseline_scores(Eigen::VectorXd()), DomainError);
}

TEST(Detector, UniformLogitsGiveLogClasses) {
  EXPECT_NEAR(envelope_entropy(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(6, 4), 0.7), std::log(4.0), 1e-14);
}

TEST(Detector, NonPositiveScoreFallsBackToEntropy) {
  const auto spec = NetworkSpec::mlp({2, 8, 3}, Activation::relu);
  const ParamVector theta = random_params(spec, 4);
  TulipConfig c;
  c.lambda = 1e9;
  const Eigen::Vector2d z(1.0, 2.0);
  const SpeBatch b = envelope(spec, theta, z, c, calib_for(c, 0.0, 1.0));
  EXPECT_EQ(b.gamma, 0.0);
  EXPECT_NEAR(b.U, baseline_scores(forward(spec, theta, z)).ent, 1e-12);
}

TEST(Detector, EnvelopeSamplesMixBaseAndRaw) {
  const auto spec = NetworkSpec::mlp({2, 8, 3}, Activation::erf);
  const ParamVector theta = random_params(spec, 5);
  TulipConfig c;
  c.M = 50;
  const SpeBatch b = envelope(spec, theta, Eigen::Vector2d(0.2, 0.1), c, calib_for(c, 1.0, 3.0));
  ASSERT_GT(b.gamma, 0.0);
  for (Eigen::Index i = 0; i < b.samples.rows(); ++i) {
    const Eigen::VectorXd expected = (1.0 - b.gamma) * b.base + b.gamma * b.raw_samples.row(i).transpose();
    EXPECT_LT((b.samples.row(i).transpose() - expected).norm(), 1e-12);
  }
  EXPECT_NEAR(trace_variance(b.samples), b.gamma * b.gamma * trace_variance(b.raw_samples),
              1e-10 * trace_variance(b.samples));
}

TEST(Detector, GammaIsLinearInJ) {
  const auto spec = NetworkSpec::mlp({2, 8, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 6);
  TulipConfig c;
  const Eigen::Vector2d z(-0.4, 0.9);
  const CalibrationResult cal = calib_for(c, 1.0, 2.0);
  const SpeBatch one = envelope(spec, theta, z, c, cal);
  c.J_scaling = 2.0;
  const SpeBatch two = envelope(spec, theta, z, c, cal);
  ASSERT_GT(one.gamma, 0.0);
  EXPECT_NEAR(two.gamma, 2.0 * one.gamma, 1e-12 * two.gamma);
  EXPECT_NEAR(two.S, 4.0 * one.S, 1e-12 * two.S);
}

TEST(Detector, DrawsAreKeyedByIndex) {
  const auto spec = NetworkSpec::mlp({2, 4, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 7);
  const Eigen::Vector2d z(0.1, 0.2);
  TulipConfig c;
  EXPECT_EQ(sample_raw(spec, theta, z, c, 3).raw, sample_raw(spec, theta, z, c, 3).raw);
  EXPECT_NE(sample_raw(spec, theta, z, c, 3).raw, sample_raw(spec, theta, z, c, 4).raw);
  c.draws = DrawMode::common;
  EXPECT_EQ(sample_raw(spec, theta, z, c, 3).raw, sample_raw(spec, theta, z, c, 4).raw);
  TulipConfig other = c;
  other.seed = 1;
  EXPECT_NE(sample_raw(spec, theta, z, c).raw, sample_raw(spec, theta, z, other).raw);
}

TEST(Detector, VarianceMatchesScoreOnLargeM) {
  const auto spec = NetworkSpec::mlp({2, 8, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 8);
  TulipConfig c;
  c.epsilon = 1e-3;
  c.M = 20000;
  const VarianceMatch v = variance_match_check(spec, theta, Eigen::Vector2d(0.3, -0.6), c, calib_for(c, 0.05, 1.0));
  ASSERT_GT(v.S, 0.0);
  EXPECT_NEAR(v.trace_var / v.S, 1.0, 0.05);
}

TEST(Detector, CalibrationEpsilonMismatch) {
  const auto spec = NetworkSpec::mlp({2, 4, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 9);
  TulipConfig c;
  CalibrationResult cal = calib_for(c, 0.0, 1.0);
  cal.epsilon_used = 0.01;
  EXPECT_THROW(envelope(spec, theta, Eigen::Vector2d::Zero(), c, cal), ConfigError);
}

TEST(Detector, ConfigValidation) {
  TulipConfig c;
  c.M = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.J_scaling = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(c.validate(false));
  c = {};
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_noise("uniform"), ConfigError);
  EXPECT_THROW(parse_draw_mode("shared"), ConfigError);

  const auto spec = NetworkSpec::mlp({2, 4, 2}, Activation::tanh);
  TulipConfig g;
  g.gamma_scale = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(sample_raw(spec, random_params(spec, 1), Eigen::Vector2d::Zero(), g), ConfigError);
}

TEST(Detector, GammaScaleActsPerParameter) {
  const auto spec = linear_spec(2, 1);
  ParamVector theta = random_params(spec, 10);
  TulipConfig c;
  c.epsilon = 1e-3;
  c.M = 20000;
  c.gamma_scale = Eigen::Vector2d(2.0, 1.0);
  // only the first weight sees the input, so the trace is (2 eps)^2
  const RawSamples r = sample_raw(spec, theta, Eigen::Vector2d(1.0, 0.0), c);
  EXPECT_NEAR(r.theta_tr / (4.0 * c.epsilon * c.epsilon), 1.0, 0.03);
}
