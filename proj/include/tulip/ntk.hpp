#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tulip/network.hpp"

namespace tulip {

/// Empirical NTK over a finite dataset X = {x_1..x_N}.
///
/// `kernel` stores all blocks at once: block (i, j) of size o x o is
/// Theta(x_i, x_j) = J(x_i) J(x_j)^T. `gram(i, j)` is the spectral norm of that
/// block, `lambda_max` = ||G|| / sqrt(N), and `theta_bar_sqrt` is the
/// root-mean-square Frobenius norm of the Jacobians over X.
struct KernelBundle {
  Eigen::MatrixXd inputs;                 ///< N x d
  int output_dim = 0;
  std::vector<JacobianMatrix> jacobians;  ///< may be empty if not cached
  Eigen::MatrixXd kernel;                 ///< (N o) x (N o)
  Eigen::MatrixXd gram;                   ///< N x N
  double lambda_max = 0.0;
  double theta_bar_sqrt = 0.0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  [[nodiscard]] Eigen::MatrixXd block(std::size_t i, std::size_t j) const;
  [[nodiscard]] bool has_jacobians() const { return !jacobians.empty(); }
};

/// Theta(z, x) = J(z) J(x)^T, o x o.
Eigen::MatrixXd ntk_block(const NetworkSpec& spec, const ParamVector& theta,
                          const Eigen::Ref<const Eigen::VectorXd>& z,
                          const Eigen::Ref<const Eigen::VectorXd>& x);

/// Bundle built from per-point Jacobians (each o x P). Throws DomainError on an empty set.
KernelBundle bundle_from_jacobians(Eigen::MatrixXd inputs, std::vector<JacobianMatrix> jacobians,
                                   bool keep_jacobians = true);

KernelBundle build_bundle(const NetworkSpec& spec, const ParamVector& theta,
                          const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                          bool keep_jacobians = true);

struct GramResult {
  Eigen::MatrixXd gram;
  double lambda_max = 0.0;
};

/// Recomputes G and lambda_max from the kernel blocks of `bundle`.
GramResult gram_and_lambda(const KernelBundle& bundle);

/// Spectral norm through a full SVD.
double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Unique symmetric PSD |A| with |A|^2 = A^T A.
Eigen::MatrixXd matrix_abs(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Loss-gradient Lipschitz constants used when the caller does not override L.
inline constexpr double kLipschitzMse = 1.0;
inline constexpr double kLipschitzSoftmaxCe = 0.5;

/// Constants of the fluctuation bound. `beta` is the measured convergence residual.
struct BoundConstants {
  double alpha = 0.0;
  double beta = 0.0;
  double lipschitz = kLipschitzMse;
  double eta = 1.0;
  double T = 1.0;
  double t_s = 0.0;

  /// C = alpha * eta * theta_bar / lambda_max * (exp((T - t_s) L lambda_max) - 1).
  /// Throws DegenerateKernelError when lambda_max is zero. May be +inf on overflow.
  [[nodiscard]] double C(const KernelBundle& bundle) const;
};

struct NearestGradient {
  double distance = 0.0;  ///< min_x ||J(z) - J(x)||_F
  std::size_t argmin = 0;
};

/// Nearest training point in gradient space. Requires cached Jacobians.
NearestGradient nearest_gradient(const KernelBundle& bundle, const JacobianMatrix& jac_z);

/// inf_x C ||J(z) - J(x)||_F + 2 alpha + beta over the training set of `bundle`.
double bound_eq5(const BoundConstants& constants, const KernelBundle& bundle,
                 const JacobianMatrix& jac_z);
double bound_eq5(const BoundConstants& constants, const KernelBundle& bundle,
                 const NetworkSpec& spec, const ParamVector& theta,
                 const Eigen::Ref<const Eigen::VectorXd>& z);

/// [Tr Theta(z,z) + theta_xx - 2 K ||J_T(z)(theta_T - theta_ts)||]_+^(1/2) with an exact jvp.
double bound_eq6_raw(const NetworkSpec& spec, const ParamVector& theta_T,
                     const ParamVector& theta_ts, double theta_xx, double K,
                     const Eigen::Ref<const Eigen::VectorXd>& z);

/// Both sides of the closeness assumption at z:
///   lhs = inf_x ||J(z) - J(x)||_F^2
///   rhs = Tr(Theta(z,z) + E_x Theta(x,x) - 2 E_x |Theta(z,x)|)
/// The assumption holds when lhs <= rhs.
struct ClosenessSides {
  double lhs = 0.0;
  double rhs = 0.0;
  [[nodiscard]] bool holds() const { return lhs <= rhs; }
};
ClosenessSides closeness_check(const KernelBundle& bundle, const JacobianMatrix& jac_z);

/// CSV with the Gram matrix rows followed by per-point Tr Theta(x,x).
void write_gram_csv(const KernelBundle& bundle, const std::string& path);

}  // namespace tulip
