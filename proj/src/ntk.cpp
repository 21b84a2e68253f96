#include "tulip/ntk.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "tulip/errors.hpp"

namespace tulip {

Eigen::MatrixXd KernelBundle::block(std::size_t i, std::size_t j) const {
  const auto o = static_cast<Eigen::Index>(output_dim);
  return kernel.block(static_cast<Eigen::Index>(i) * o, static_cast<Eigen::Index>(j) * o, o, o);
}

Eigen::MatrixXd ntk_block(const NetworkSpec& spec, const ParamVector& theta,
                          const Eigen::Ref<const Eigen::VectorXd>& z,
                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  const JacobianMatrix jz = param_jacobian(spec, theta, z);
  const JacobianMatrix jx = param_jacobian(spec, theta, x);
  return jz * jx.transpose();
}

double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

Eigen::MatrixXd matrix_abs(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  if (a.rows() != a.cols()) throw ShapeError("matrix_abs needs a square matrix");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd& v = svd.matrixV();
  Eigen::MatrixXd out = v * svd.singularValues().asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

GramResult gram_and_lambda(const KernelBundle& bundle) {
  const std::size_t n = bundle.size();
  if (n == 0) throw DomainError("kernel bundle over an empty dataset");
  GramResult result;
  result.gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double g = spectral_norm(bundle.block(i, j));
      result.gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g;
      result.gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = g;
    }
  }
  // G is symmetric, so its spectral norm is the largest absolute eigenvalue.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(result.gram, Eigen::EigenvaluesOnly);
  const double norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  result.lambda_max = norm / std::sqrt(static_cast<double>(n));
  return result;
}

KernelBundle bundle_from_jacobians(Eigen::MatrixXd inputs, std::vector<JacobianMatrix> jacobians,
                                   bool keep_jacobians) {
  if (jacobians.empty()) throw DomainError("kernel bundle over an empty dataset");
  if (static_cast<std::size_t>(inputs.rows()) != jacobians.size()) {
    throw ShapeError("one Jacobian per input row expected");
  }
  const Eigen::Index o = jacobians.front().rows();
  const Eigen::Index p = jacobians.front().cols();
  const auto n = static_cast<Eigen::Index>(jacobians.size());
  Eigen::MatrixXd stacked(n * o, p);
  double sq_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& jac = jacobians[static_cast<std::size_t>(i)];
    if (jac.rows() != o || jac.cols() != p) throw ShapeError("Jacobians have inconsistent shapes");
    stacked.middleRows(i * o, o) = jac;
    sq_sum += jac.squaredNorm();
  }

  KernelBundle bundle;
  bundle.inputs = std::move(inputs);
  bundle.output_dim = static_cast<int>(o);
  bundle.kernel = Eigen::MatrixXd::Zero(n * o, n * o);
  bundle.kernel.selfadjointView<Eigen::Lower>().rankUpdate(stacked);
  bundle.kernel.triangularView<Eigen::StrictlyUpper>() =
      bundle.kernel.triangularView<Eigen::StrictlyLower>().transpose();
  bundle.theta_bar_sqrt = std::sqrt(sq_sum / static_cast<double>(n));
  if (keep_jacobians) bundle.jacobians = std::move(jacobians);

  GramResult g = gram_and_lambda(bundle);
  bundle.gram = std::move(g.gram);
  bundle.lambda_max = g.lambda_max;
  return bundle;
}

KernelBundle build_bundle(const NetworkSpec& spec, const ParamVector& theta,
                          const Eigen::Ref<const Eigen::MatrixXd>& inputs, bool keep_jacobians) {
  if (inputs.rows() == 0) throw DomainError("kernel bundle over an empty dataset");
  std::vector<JacobianMatrix> jacs;
  jacs.reserve(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    jacs.push_back(param_jacobian(spec, theta, inputs.row(i).transpose()));
  }
  return bundle_from_jacobians(inputs, std::move(jacs), keep_jacobians);
}

double BoundConstants::C(const KernelBundle& bundle) const {
  if (!(bundle.lambda_max > 0.0)) {
    throw DegenerateKernelError("lambda_max is zero; the bound constant is undefined");
  }
  const double growth = std::expm1((T - t_s) * lipschitz * bundle.lambda_max);
  return alpha * eta * bundle.theta_bar_sqrt / bundle.lambda_max * growth;
}

NearestGradient nearest_gradient(const KernelBundle& bundle, const JacobianMatrix& jac_z) {
  if (!bundle.has_jacobians()) throw DomainError("kernel bundle has no cached Jacobians");
  NearestGradient best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < bundle.jacobians.size(); ++i) {
    const double d = (jac_z - bundle.jacobians[i]).norm();
    if (d < best.distance) best = {d, i};
  }
  return best;
}

double bound_eq5(const BoundConstants& constants, const KernelBundle& bundle,
                 const JacobianMatrix& jac_z) {
  const double c = constants.C(bundle);
  const NearestGradient nearest = nearest_gradient(bundle, jac_z);
  // 0 * inf is treated as 0: a training point is at distance exactly zero.
  const double term = nearest.distance == 0.0 || c == 0.0 ? 0.0 : c * nearest.distance;
  return term + 2.0 * constants.alpha + constants.beta;
}

double bound_eq5(const BoundConstants& constants, const KernelBundle& bundle,
                 const NetworkSpec& spec, const ParamVector& theta,
                 const Eigen::Ref<const Eigen::VectorXd>& z) {
  return bound_eq5(constants, bundle, param_jacobian(spec, theta, z));
}

double bound_eq6_raw(const NetworkSpec& spec, const ParamVector& theta_T,
                     const ParamVector& theta_ts, double theta_xx, double K,
                     const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double trace_zz = param_jacobian(spec, theta_T, z).squaredNorm();
  const ParamVector delta = axpy(-1.0, theta_ts, theta_T);
  const double probe = jvp(spec, theta_T, z, delta).norm();
  const double inner = trace_zz + theta_xx - 2.0 * K * probe;
  return std::sqrt(std::max(inner, 0.0));
}

ClosenessSides closeness_check(const KernelBundle& bundle, const JacobianMatrix& jac_z) {
  if (!bundle.has_jacobians()) throw DomainError("kernel bundle has no cached Jacobians");
  const double n = static_cast<double>(bundle.size());
  const double trace_zz = jac_z.squaredNorm();
  double mean_trace_xx = 0.0;
  double mean_abs_trace = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& jx : bundle.jacobians) {
    mean_trace_xx += jx.squaredNorm() / n;
    mean_abs_trace += matrix_abs(jac_z * jx.transpose()).trace() / n;
    best = std::min(best, (jac_z - jx).squaredNorm());
  }
  return {best, trace_zz + mean_trace_xx - 2.0 * mean_abs_trace};
}

void write_gram_csv(const KernelBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  const auto n = static_cast<Eigen::Index>(bundle.size());
  out << "row";
  for (Eigen::Index j = 0; j < n; ++j) out << ",g" << j;
  out << ",trace_theta_xx\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    out << i;
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << bundle.gram(i, j);
    out << ',' << bundle.block(static_cast<std::size_t>(i), static_cast<std::size_t>(i)).trace() << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace tulip
