#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "tulip/errors.hpp"
#include "tulip/linearized.hpp"

using namespace tulip;

namespace {

struct Toy {
  NetworkSpec spec;
  ParamVector theta;
  LinearizedSystem system;
};

Toy make_toy(std::size_t n = 8, int width = 32, std::uint64_t seed = 1) {
  Toy t{NetworkSpec::mlp({1, width, 1}, Activation::erf), {}, {}};
  t.theta = tulip::testing::random_params(t.spec, seed, 0.5);
  const Dataset data = gen_spline_regression(n, 0.0, seed);
  Eigen::MatrixXd probes(9, 1);
  for (int k = 0; k < 9; ++k) probes(k, 0) = -3.0 + 0.75 * k;
  t.system = build_system(t.spec, t.theta, data.inputs, data.targets, probes);
  return t;
}

double sup_diff(const FlowState& a, const FlowState& b) {
  return std::max((a.f_train - b.f_train).cwiseAbs().maxCoeff(), (a.f_probe - b.f_probe).cwiseAbs().maxCoeff());
}

}  // namespace

TEST(Linearized, FixedPointWhenTargetsEqualOutputs) {
  Toy t = make_toy();
  FlowState s0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  t.system.targets = s0.f_train;
  const FlowState s1 = integrate_flow(t.system, s0, 1.0);
  EXPECT_LT(sup_diff(s0, s1), 1e-12);
}

TEST(Linearized, Rk4MatchesClosedForm) {
  const Toy t = make_toy();
  const FlowState s0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  const double T = 5.0 / t.system.train.lambda_max;
  EXPECT_LT(sup_diff(integrate_flow(t.system, s0, T), mse_closed_form(t.system, s0, T)), 1e-8);
}

TEST(Linearized, LearningRateRescalesTime) {
  const Toy t = make_toy();
  const FlowState a0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 2.0);
  const FlowState b0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  const double T = 1.0 / t.system.train.lambda_max;
  EXPECT_LT(sup_diff(mse_closed_form(t.system, a0, T), mse_closed_form(t.system, b0, 2.0 * T)), 1e-10);
  EXPECT_LT(sup_diff(integrate_flow(t.system, a0, T), integrate_flow(t.system, b0, 2.0 * T)), 1e-8);
}

TEST(Linearized, TrainingLossDecreasesMonotonically) {
  const Toy t = make_toy();
  FlowState s = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  const double step = 0.5 / t.system.train.lambda_max;
  double prev = training_loss(t.system, s);
  for (int k = 0; k < 20; ++k) {
    s = integrate_flow(t.system, s, step);
    const double now = training_loss(t.system, s);
    EXPECT_LE(now, prev + 1e-15);
    prev = now;
  }
}

TEST(Linearized, ZeroPerturbationReproducesPlainTraining) {
  const Toy t = make_toy();
  const FlowState s0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  const double T = 4.0 / t.system.train.lambda_max;
  const FlowState plain = integrate_flow(t.system, s0, T);
  const FlowState pt = perturb_then_train(t.system, s0, zero_perturbation(t.system), T / 2, T);
  EXPECT_LT(sup_diff(plain, pt), 1e-10);
}

TEST(Linearized, PerturbationAtTerminalTimeIsUntrained) {
  const Toy t = make_toy();
  const FlowState s0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  const double T = 2.0 / t.system.train.lambda_max;
  rng::Engine engine(5);
  const ClippedFourierFunction fn(1, 1, 0.05, 8, 1.0, 1.5, engine);
  const PerturbationSample d = fn.sample_on(t.system);
  const FlowState plain = integrate_flow(t.system, s0, T);
  const FlowState pt = perturb_then_train(t.system, s0, d, T, T);
  EXPECT_LT((pt.f_probe - plain.f_probe - d.probe).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Linearized, MseDeviationIsLinearInPerturbation) {
  const Toy t = make_toy();
  const FlowState s0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  const double T = 6.0 / t.system.train.lambda_max;
  rng::Engine engine(6);
  const ClippedFourierFunction fn(1, 1, 0.05, 8, 1.0, 1.5, engine);
  PerturbationSample plus = fn.sample_on(t.system);
  PerturbationSample minus = plus;
  minus.train *= -1.0;
  minus.probe *= -1.0;
  const FlowState plain = integrate_flow(t.system, s0, T);
  const FlowState a = perturb_then_train(t.system, s0, plus, T / 2, T);
  const FlowState b = perturb_then_train(t.system, s0, minus, T / 2, T);
  EXPECT_LT(((a.f_probe - plain.f_probe) + (b.f_probe - plain.f_probe)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Linearized, ClippedPerturbationRespectsAlpha) {
  rng::Engine engine(7);
  const ClippedFourierFunction fn(2, 3, 0.05, 16, 1.0, 3.0, engine);
  for (int k = 0; k < 500; ++k) {
    const Eigen::VectorXd x = tulip::testing::random_vector(2, 1000 + k, 3.0);
    EXPECT_LE(fn(x).norm(), 0.05 * (1.0 + 1e-12));
  }
}

TEST(Linearized, DivergenceIsReported) {
  const Toy t = make_toy();
  const FlowState s0 = initial_state(t.spec, t.theta, t.system, LossKind::mse, 1.0);
  FlowOptions bad;
  bad.dt = 50.0 / t.system.train.lambda_max;
  EXPECT_THROW(integrate_flow(t.system, s0, 1e4 * bad.dt, bad), IntegrationError);
}

TEST(Linearized, ZeroAlphaEnsembleHasNoSpread) {
  EnsembleConfig c;
  c.train_points = 6;
  c.hidden = {16};
  c.probe_points = 11;
  c.ensemble = 3;
  c.alpha = 0.0;
  c.horizon = 5.0;
  const EnsembleReport r = ensemble_experiment(c);
  for (const auto& row : r.rows) {
    // sqrt of a round-off variance, hence the loose bound
    EXPECT_LT(row.ensemble_std, 1e-7);
    EXPECT_LT(row.max_deviation, 1e-10);
  }
  EXPECT_EQ(r.deviation_coverage(), 1.0);
}

TEST(Linearized, EnsembleCsvHasOneRowPerProbe) {
  EnsembleConfig c;
  c.train_points = 5;
  c.hidden = {8};
  c.probe_points = 7;
  c.ensemble = 2;
  const std::string csv = ensemble_csv(ensemble_experiment(c));
  EXPECT_EQ(csv.rfind("z,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
}

TEST(Linearized, InvalidEnsembleConfig) {
  EnsembleConfig c;
  c.switch_fraction = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}
