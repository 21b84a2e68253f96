#include "tulip/linearized.hpp"

#include <cmath>
#include <numbers>

#include "tulip/errors.hpp"
#include "tulip/format.hpp"

namespace tulip {

namespace {

// Point-major flattening: entry i * o + a holds output a of point i, matching
// the block layout of the kernel matrices.
Eigen::VectorXd to_flat(const Eigen::MatrixXd& f) {
  const Eigen::MatrixXd ft = f.transpose();
  return Eigen::Map<const Eigen::VectorXd>(ft.data(), ft.size());
}

Eigen::MatrixXd from_flat(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), cols, rows).transpose();
}

Eigen::VectorXd loss_gradient_flat(LossKind loss, const Eigen::VectorXd& u, const Eigen::VectorXd& y, int o) {
  if (loss == LossKind::mse) return u - y;
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); i += o) {
    g.segment(i, o) = sample_loss_gradient(loss, u.segment(i, o), y.segment(i, o));
  }
  return g;
}

}  // namespace

LinearizedSystem build_system(const NetworkSpec& spec, const ParamVector& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& train_inputs,
                              const Eigen::Ref<const Eigen::MatrixXd>& targets,
                              const Eigen::Ref<const Eigen::MatrixXd>& probe_inputs) {
  if (targets.rows() != train_inputs.rows() || targets.cols() != spec.output_dim()) {
    throw ShapeError("targets must be N x o");
  }
  LinearizedSystem system;
  system.train = build_bundle(spec, theta, train_inputs, true);
  system.targets = targets;
  system.probe_inputs = probe_inputs;
  const Eigen::Index o = spec.output_dim();
  const auto n = static_cast<Eigen::Index>(system.train.size());
  const Eigen::Index p = probe_inputs.rows();
  system.cross.resize(p * o, n * o);
  system.probe_jacobians.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) {
    JacobianMatrix jz = param_jacobian(spec, theta, probe_inputs.row(k).transpose());
    for (Eigen::Index j = 0; j < n; ++j) {
      system.cross.block(k * o, j * o, o, o).noalias() =
          jz * system.train.jacobians[static_cast<std::size_t>(j)].transpose();
    }
    system.probe_jacobians.push_back(std::move(jz));
  }
  return system;
}

FlowState initial_state(const NetworkSpec& spec, const ParamVector& theta, const LinearizedSystem& system,
                        LossKind loss, double eta) {
  FlowState state;
  state.f_train = forward_batch(spec, theta, system.train.inputs);
  state.f_probe = system.probe_inputs.rows() > 0
                      ? forward_batch(spec, theta, system.probe_inputs)
                      : Eigen::MatrixXd(0, spec.output_dim());
  state.loss = loss;
  state.eta = eta;
  return state;
}

double default_step(const LinearizedSystem& system, double eta, double lipschitz) {
  const double rate = eta * system.train.lambda_max * lipschitz;
  return rate > 0.0 ? std::min(1e-2, 0.1 / rate) : 1e-2;
}

double training_loss(const LinearizedSystem& system, const FlowState& state) {
  const auto n = state.f_train.rows();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    total += sample_loss(state.loss, state.f_train.row(i).transpose(), system.targets.row(i).transpose());
  }
  return total / static_cast<double>(n);
}

FlowState integrate_flow(const LinearizedSystem& system, const FlowState& state0, double duration,
                         const FlowOptions& options) {
  if (duration < 0.0) throw IntegrationError("integration duration must be nonnegative");
  FlowState state = state0;
  if (duration == 0.0) return state;

  const int o = system.output_dim();
  const double n = static_cast<double>(system.train_size());
  const double rate = state.eta / n;
  const double dt_max = options.dt > 0.0 ? options.dt : default_step(system, state.eta, options.lipschitz);
  const auto steps = static_cast<long long>(std::ceil(duration / dt_max - 1e-12));
  const double dt = duration / static_cast<double>(steps);

  Eigen::VectorXd u = to_flat(state.f_train);
  Eigen::VectorXd v = to_flat(state.f_probe);
  const Eigen::VectorXd y = to_flat(system.targets);
  const bool has_probe = v.size() > 0;

  auto grad = [&](const Eigen::VectorXd& at) { return loss_gradient_flat(state.loss, at, y, o); };

  for (long long s = 0; s < steps; ++s) {
    const Eigen::VectorXd g1 = grad(u);
    const Eigen::VectorXd k1 = -rate * (system.train.kernel * g1);
    const Eigen::VectorXd g2 = grad(u + 0.5 * dt * k1);
    const Eigen::VectorXd k2 = -rate * (system.train.kernel * g2);
    const Eigen::VectorXd g3 = grad(u + 0.5 * dt * k2);
    const Eigen::VectorXd k3 = -rate * (system.train.kernel * g3);
    const Eigen::VectorXd g4 = grad(u + dt * k3);
    const Eigen::VectorXd k4 = -rate * (system.train.kernel * g4);
    u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (has_probe) {
      // The probe outputs do not feed back into the flow; their RK4 stages reuse g1..g4.
      v -= rate * dt / 6.0 * (system.cross * (g1 + 2.0 * g2 + 2.0 * g3 + g4));
    }
    const double mag = u.size() > 0 ? u.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(mag) || mag > options.divergence_threshold) {
      throw IntegrationError("gradient flow diverged at t = " +
                             format_double(state.t + static_cast<double>(s + 1) * dt));
    }
  }
  state.t += duration;
  state.f_train = from_flat(u, state.f_train.rows(), o);
  state.f_probe = from_flat(v, state.f_probe.rows(), o);
  return state;
}

FlowState mse_closed_form(const LinearizedSystem& system, const FlowState& state0, double duration) {
  const int o = system.output_dim();
  const double rate = state0.eta / static_cast<double>(system.train_size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rate * system.train.kernel);
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const Eigen::MatrixXd& q = eig.eigenvectors();

  const Eigen::VectorXd y = to_flat(system.targets);
  const Eigen::VectorXd r0 = to_flat(state0.f_train) - y;
  const Eigen::VectorXd coeffs = q.transpose() * r0;

  Eigen::VectorXd decay(lam.size());
  Eigen::VectorXd integral(lam.size());  // (1 - exp(-lam t)) / lam, continuous at lam = 0
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    const double l = std::max(lam[k], 0.0);
    decay[k] = std::exp(-l * duration);
    integral[k] = l * duration < 1e-12 ? duration : -std::expm1(-l * duration) / l;
  }
  FlowState state = state0;
  state.t += duration;
  state.f_train = from_flat(y + q * decay.cwiseProduct(coeffs), state0.f_train.rows(), o);
  if (state0.f_probe.rows() > 0) {
    const Eigen::VectorXd v =
        to_flat(state0.f_probe) - rate * (system.cross * (q * integral.cwiseProduct(coeffs)));
    state.f_probe = from_flat(v, state0.f_probe.rows(), o);
  }
  return state;
}

PerturbationSample zero_perturbation(const LinearizedSystem& system) {
  const int o = system.output_dim();
  return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(system.train_size()), o),
          Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(system.probe_size()), o), 0.0};
}

ClippedFourierFunction::ClippedFourierFunction(int input_dim, int output_dim, double alpha, int features,
                                               double bandwidth, double headroom, rng::Engine& engine)
    : alpha_(alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
  if (features < 1) throw ConfigError("at least one Fourier feature is needed");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  freqs_.resize(features, input_dim);
  phases_.resize(features);
  amps_.resize(output_dim, features);
  for (int k = 0; k < features; ++k) {
    for (int j = 0; j < input_dim; ++j) freqs_(k, j) = bandwidth * normal(engine);
    phases_[k] = phase(engine);
  }
  const double amp = headroom * alpha * std::sqrt(2.0 / features);
  for (int a = 0; a < output_dim; ++a) {
    for (int k = 0; k < features; ++k) amps_(a, k) = amp * normal(engine);
  }
}

Eigen::VectorXd ClippedFourierFunction::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd feats = ((freqs_ * x) + phases_).array().cos().matrix();
  Eigen::VectorXd g = amps_ * feats;
  const double norm = g.norm();
  if (norm > alpha_) g *= alpha_ / norm;
  return g;
}

PerturbationSample ClippedFourierFunction::sample_on(const LinearizedSystem& system) const {
  PerturbationSample sample = zero_perturbation(system);
  auto fill = [&](const Eigen::MatrixXd& inputs, Eigen::MatrixXd& out) {
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
      out.row(i) = (*this)(inputs.row(i).transpose()).transpose();
      sample.alpha_realized = std::max(sample.alpha_realized, out.row(i).norm());
    }
  };
  fill(system.train.inputs, sample.train);
  fill(system.probe_inputs, sample.probe);
  return sample;
}

FlowState perturb_then_train(const LinearizedSystem& system, const FlowState& state0,
                             const PerturbationSample& delta, double t_s, double T,
                             const FlowOptions& options) {
  if (!(t_s >= 0.0 && t_s <= T)) throw IntegrationError("need 0 <= t_s <= T");
  FlowState state = integrate_flow(system, state0, t_s, options);
  state.f_train += delta.train;
  state.f_probe += delta.probe;
  return integrate_flow(system, state, T - t_s, options);
}

void EnsembleConfig::validate() const {
  if (train_points < 1) throw ConfigError("need at least one training point");
  if (probe_points < 1) throw ConfigError("need at least one probe point");
  if (ensemble < 1) throw ConfigError("ensemble size must be positive");
  if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(switch_fraction >= 0.0 && switch_fraction <= 1.0)) throw ConfigError("switch fraction outside [0, 1]");
  if (!(probe_hi > probe_lo)) throw ConfigError("empty probe interval");
}

double EnsembleReport::deviation_coverage(double tol) const {
  if (rows.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.max_deviation <= r.bound + tol ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

double EnsembleReport::band_coverage(double k) const {
  if (rows.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.bound >= k * r.ensemble_std ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(rows.size());
}

EnsembleReport ensemble_experiment(const EnsembleConfig& config) {
  config.validate();
  std::vector<int> dims{1};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(1);
  const NetworkSpec spec = NetworkSpec::mlp(dims, config.activation, true);
  auto init_engine = rng::make_engine(config.seed, "lab.init");
  const ParamVector theta = init_params(spec, init_engine);

  const Dataset data = gen_spline_regression(config.train_points, config.noise, config.seed);
  Eigen::MatrixXd probes(static_cast<Eigen::Index>(config.probe_points), 1);
  for (std::size_t k = 0; k < config.probe_points; ++k) {
    const double frac = config.probe_points == 1
                            ? 0.5
                            : static_cast<double>(k) / static_cast<double>(config.probe_points - 1);
    probes(static_cast<Eigen::Index>(k), 0) = config.probe_lo + frac * (config.probe_hi - config.probe_lo);
  }

  const LinearizedSystem system = build_system(spec, theta, data.inputs, data.targets, probes);
  if (!(system.train.lambda_max > 0.0)) throw DegenerateKernelError("training kernel is zero");

  EnsembleReport report;
  report.lambda_max = system.train.lambda_max;
  report.T = config.horizon / (config.eta * system.train.lambda_max);
  report.t_s = config.switch_fraction * report.T;
  report.train_inputs = data.inputs;
  report.train_targets = data.targets;

  const FlowState state0 = initial_state(spec, theta, system, LossKind::mse, config.eta);
  const FlowState at_switch = integrate_flow(system, state0, report.t_s);
  const FlowState reference = integrate_flow(system, at_switch, report.T - report.t_s);
  report.final_train_loss = training_loss(system, reference);

  const auto p = static_cast<Eigen::Index>(system.probe_size());
  const int o = system.output_dim();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, o);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(p, o);
  Eigen::VectorXd max_dev = Eigen::VectorXd::Zero(p);
  for (std::size_t e = 0; e < config.ensemble; ++e) {
    auto engine = rng::make_engine(config.seed, "lab.member", e);
    const ClippedFourierFunction df(1, o, config.alpha, config.fourier_features, config.bandwidth,
                                    config.headroom, engine);
    const PerturbationSample sample = df.sample_on(system);
    report.alpha_realized = std::max(report.alpha_realized, sample.alpha_realized);
    FlowState perturbed = at_switch;
    perturbed.f_train += sample.train;
    perturbed.f_probe += sample.probe;
    perturbed = integrate_flow(system, perturbed, report.T - report.t_s);

    const Eigen::MatrixXd diff_train = perturbed.f_train - reference.f_train;
    report.beta = std::max(report.beta, diff_train.rowwise().norm().maxCoeff());
    const Eigen::MatrixXd diff_probe = perturbed.f_probe - reference.f_probe;
    max_dev = max_dev.cwiseMax(diff_probe.rowwise().norm());
    sum += perturbed.f_probe;
    sum_sq += perturbed.f_probe.cwiseProduct(perturbed.f_probe);
  }

  BoundConstants constants;
  constants.alpha = config.alpha;
  constants.beta = report.beta;
  constants.lipschitz = kLipschitzMse;
  constants.eta = config.eta;
  constants.T = report.T;
  constants.t_s = report.t_s;
  report.C = constants.C(system.train);

  const double e = static_cast<double>(config.ensemble);
  for (Eigen::Index k = 0; k < p; ++k) {
    EnsembleRow row;
    row.z = probes.row(k).transpose();
    row.f_T = reference.f_probe.row(k).transpose();
    const Eigen::VectorXd mean = sum.row(k).transpose() / e;
    const Eigen::VectorXd var = (sum_sq.row(k).transpose() / e - mean.cwiseProduct(mean)).cwiseMax(0.0);
    row.ensemble_std = std::sqrt(var.sum());
    row.max_deviation = max_dev[k];
    row.bound = bound_eq5(constants, system.train, system.probe_jacobians[static_cast<std::size_t>(k)]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string ensemble_csv(const EnsembleReport& report) {
  std::string out;
  if (report.rows.empty()) return out;
  const auto d = report.rows.front().z.size();
  const auto o = report.rows.front().f_T.size();
  for (Eigen::Index j = 0; j < d; ++j) out += (d == 1 ? std::string("z") : "z" + std::to_string(j)) + ",";
  for (Eigen::Index a = 0; a < o; ++a) out += "f_T_" + std::to_string(a) + ",";
  out += "ensemble_std,bound,beta,max_deviation\n";
  for (const auto& r : report.rows) {
    for (Eigen::Index j = 0; j < d; ++j) {
      append_double(out, r.z[j]);
      out += ',';
    }
    for (Eigen::Index a = 0; a < o; ++a) {
      append_double(out, r.f_T[a]);
      out += ',';
    }
    append_double(out, r.ensemble_std);
    out += ',';
    append_double(out, r.bound);
    out += ',';
    append_double(out, report.beta);
    out += ',';
    append_double(out, r.max_deviation);
    out += '\n';
  }
  return out;
}

}  // namespace tulip
