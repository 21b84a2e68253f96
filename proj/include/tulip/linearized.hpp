#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tulip/data.hpp"
#include "tulip/network.hpp"
#include "tulip/ntk.hpp"

namespace tulip {

/// Constant-kernel (lazy) training problem: kernel blocks over the training
/// inputs X, cross blocks Theta(z, x) for a probe grid Z, and the targets y(X).
struct LinearizedSystem {
  KernelBundle train;                          ///< over X, Jacobians cached
  Eigen::MatrixXd probe_inputs;                ///< P x d
  Eigen::MatrixXd cross;                       ///< (P o) x (N o)
  std::vector<JacobianMatrix> probe_jacobians;
  Eigen::MatrixXd targets;                     ///< N x o

  [[nodiscard]] int output_dim() const { return train.output_dim; }
  [[nodiscard]] std::size_t train_size() const { return train.size(); }
  [[nodiscard]] std::size_t probe_size() const { return static_cast<std::size_t>(probe_inputs.rows()); }
};

LinearizedSystem build_system(const NetworkSpec& spec, const ParamVector& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& train_inputs,
                              const Eigen::Ref<const Eigen::MatrixXd>& targets,
                              const Eigen::Ref<const Eigen::MatrixXd>& probe_inputs);

/// Network outputs on X and Z at time t of the flow.
struct FlowState {
  double t = 0.0;
  Eigen::MatrixXd f_train;  ///< N x o
  Eigen::MatrixXd f_probe;  ///< P x o
  LossKind loss = LossKind::mse;
  double eta = 1.0;
};

/// Outputs of the network the system was linearised at (f_0 = f_Init).
FlowState initial_state(const NetworkSpec& spec, const ParamVector& theta, const LinearizedSystem& system,
                        LossKind loss, double eta);

struct FlowOptions {
  /// Lipschitz constant of the loss gradient used in the step-size rule.
  double lipschitz = kLipschitzMse;
  /// Overrides the default step min(1e-2, 0.1 / (eta lambda_max L)) when positive.
  double dt = 0.0;
  double divergence_threshold = 1e8;
};

/// Default fixed RK4 step for a system.
double default_step(const LinearizedSystem& system, double eta, double lipschitz);

/// Mean training loss E_x l(f(x); y(x)).
double training_loss(const LinearizedSystem& system, const FlowState& state);

/// Integrates d/dt f(x) = -eta E_x' [Theta(x, x') l'(f(x'))] with classical RK4 from
/// state0.t for a duration `duration`. Throws IntegrationError on divergence.
FlowState integrate_flow(const LinearizedSystem& system, const FlowState& state0, double duration,
                         const FlowOptions& options = {});

/// Closed-form MSE solution through an eigendecomposition of the training kernel.
FlowState mse_closed_form(const LinearizedSystem& system, const FlowState& state0, double duration);

/// Function perturbation evaluated on X and Z.
struct PerturbationSample {
  Eigen::MatrixXd train;  ///< N x o
  Eigen::MatrixXd probe;  ///< P x o
  double alpha_realized = 0.0;
};

PerturbationSample zero_perturbation(const LinearizedSystem& system);

/// Smooth random function x -> sum_k a_k cos(w_k . x + b_k) with Gaussian
/// frequencies, hard-clipped pointwise so that ||df(x)|| <= alpha everywhere.
class ClippedFourierFunction {
 public:
  ClippedFourierFunction(int input_dim, int output_dim, double alpha, int features, double bandwidth,
                         double headroom, rng::Engine& engine);

  [[nodiscard]] Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] PerturbationSample sample_on(const LinearizedSystem& system) const;

 private:
  double alpha_;
  Eigen::MatrixXd freqs_;   // K x d
  Eigen::VectorXd phases_;  // K
  Eigen::MatrixXd amps_;    // o x K
};

/// Integrates to t_s, adds the perturbation, then integrates to T.
FlowState perturb_then_train(const LinearizedSystem& system, const FlowState& state0,
                             const PerturbationSample& delta, double t_s, double T,
                             const FlowOptions& options = {});

struct EnsembleConfig {
  std::size_t train_points = 20;
  double noise = 0.0;
  std::vector<int> hidden{256, 256};
  Activation activation = Activation::erf;
  std::size_t probe_points = 200;
  double probe_lo = -3.5;
  double probe_hi = 3.5;
  std::size_t ensemble = 100;
  double alpha = 0.05;
  double eta = 1.0;
  /// Training horizon in units of 1 / (eta lambda_max): T = horizon / (eta lambda_max).
  double horizon = 20.0;
  /// t_s = switch_fraction * T.
  double switch_fraction = 0.5;
  int fourier_features = 8;
  double bandwidth = 1.0;
  double headroom = 1.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EnsembleRow {
  Eigen::VectorXd z;
  Eigen::VectorXd f_T;
  double ensemble_std = 0.0;  ///< sqrt(Tr Var) over members
  double max_deviation = 0.0; ///< max over members of ||f_T(z) - f_hat_T(z)||
  double bound = 0.0;
};

struct EnsembleReport {
  std::vector<EnsembleRow> rows;
  double beta = 0.0;  ///< measured max_x ||f_T(x) - f_hat_T(x)|| over members
  double alpha_realized = 0.0;
  double C = 0.0;
  double lambda_max = 0.0;
  double T = 0.0;
  double t_s = 0.0;
  double final_train_loss = 0.0;
  Eigen::MatrixXd train_inputs;
  Eigen::MatrixXd train_targets;

  /// Fraction of probe points with max_deviation <= bound + tol.
  [[nodiscard]] double deviation_coverage(double tol = 1e-6) const;
  /// Fraction of probe points with bound >= k * ensemble_std.
  [[nodiscard]] double band_coverage(double k = 3.0) const;
};

/// Spline toy: linearised MSE flow of a freshly initialised network, E clipped
/// perturbations at t_s, bound evaluated on a uniform probe grid.
EnsembleReport ensemble_experiment(const EnsembleConfig& config);

/// CSV with columns z, f_T per output, ensemble_std, bound, beta, max_deviation.
std::string ensemble_csv(const EnsembleReport& report);

}  // namespace tulip
