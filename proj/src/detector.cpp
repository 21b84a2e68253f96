#include "tulip/detector.hpp"

#include <cmath>
#include <string>

#include "tulip/calibration.hpp"
#include "tulip/errors.hpp"
#include "tulip/format.hpp"

namespace tulip {

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::gaussian ? "gaussian" : "rademacher";
}

NoiseKind parse_noise(std::string_view name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "rademacher") return NoiseKind::rademacher;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

std::string_view to_string(DrawMode mode) { return mode == DrawMode::fresh ? "fresh" : "common"; }

DrawMode parse_draw_mode(std::string_view name) {
  if (name == "fresh") return DrawMode::fresh;
  if (name == "common") return DrawMode::common;
  throw ConfigError("unknown draw mode '" + std::string(name) + "'");
}

void TulipConfig::validate(bool strict_scaling) const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (M < 1) throw ConfigError("M must be at least 1");
  if (strict_scaling ? !(J_scaling >= 1.0) : !(J_scaling >= 0.0)) {
    throw ConfigError("J_scaling must be >= " + std::string(strict_scaling ? "1" : "0"));
  }
  for (Eigen::Index k = 0; k < gamma_scale.size(); ++k) {
    if (!(gamma_scale[k] > 0.0)) throw ConfigError("Gamma entries must be positive");
  }
}

namespace {

void check_gamma(const TulipConfig& config, const ParamVector& theta) {
  if (config.gamma_scale.size() != 0 && static_cast<std::size_t>(config.gamma_scale.size()) != theta.size()) {
    throw ConfigError("Gamma has " + std::to_string(config.gamma_scale.size()) + " entries, the model has " +
                      std::to_string(theta.size()) + " parameters");
  }
}

rng::Engine draw_engine(const TulipConfig& config, std::uint64_t index) {
  return config.draws == DrawMode::common ? rng::make_engine(config.seed, "tulip.common")
                                          : rng::make_engine(config.seed, "tulip.fresh", index);
}

}  // namespace

RawSamples sample_raw(const NetworkSpec& spec, const ParamVector& theta_T,
                      const Eigen::Ref<const Eigen::VectorXd>& z, const TulipConfig& config,
                      std::uint64_t index) {
  config.validate(false);
  theta_T.check_matches(spec);
  check_gamma(config, theta_T);
  RawSamples out;
  out.base = forward(spec, theta_T, z);
  out.raw.resize(config.M, spec.output_dim());

  rng::Engine engine = draw_engine(config, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(theta_T.size());
  const bool scaled = config.gamma_scale.size() != 0;
  ParamVector perturbed = theta_T;
  double sum = 0.0;
  for (int i = 0; i < config.M; ++i) {
    Eigen::VectorXd& v = perturbed.values();
    for (Eigen::Index k = 0; k < p; ++k) {
      const double xi = config.noise == NoiseKind::gaussian ? normal(engine) : ((engine() >> 63) ? 1.0 : -1.0);
      v[k] = theta_T.values()[k] + config.epsilon * (scaled ? config.gamma_scale[k] : 1.0) * xi;
    }
    out.raw.row(i) = forward(spec, perturbed, z).transpose();
    sum += (out.raw.row(i).transpose() - out.base).squaredNorm();
  }
  out.theta_tr = sum / config.M;
  return out;
}

double probe_D(const NetworkSpec& spec, const ParamVector& theta_T,
               const Eigen::Ref<const Eigen::VectorXd>& z, const TulipConfig& config,
               const ParamVector* theta_ts) {
  theta_T.check_matches(spec);
  check_gamma(config, theta_T);
  Eigen::VectorXd dir = theta_ts ? Eigen::VectorXd(theta_T.values() - theta_ts->values()) : theta_T.values();
  if (config.gamma_scale.size() != 0) dir = dir.cwiseProduct(config.gamma_scale);
  const ParamVector probe(theta_T.layout_ptr(), theta_T.values() + config.epsilon * config.delta * dir);
  const Eigen::VectorXd diff = forward(spec, probe, z) - forward(spec, theta_T, z);
  return std::sqrt(static_cast<double>(spec.output_dim())) * diff.norm();
}

double score_S(double J, double theta_tr, double theta_xx, double lambda, double D) {
  return J * J * (theta_tr + theta_xx - lambda * D);
}

GammaValue gamma_from(double S, double theta_tr) {
  if (!(S > 0.0)) return {0.0, false};
  if (theta_tr < kTraceFloor) return {kGammaCap, true};
  const double g = std::sqrt(S / theta_tr);
  return g > kGammaCap ? GammaValue{kGammaCap, true} : GammaValue{g, false};
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

double entropy(const Eigen::Ref<const Eigen::VectorXd>& p) {
  if (p.size() == 0) throw DomainError("entropy of an empty vector");
  if (p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > 1e-9) {
    throw DomainError("entropy expects a probability vector");
  }
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) h -= p[k] * std::log(std::max(p[k], 1e-300));
  }
  return h;
}

double envelope_entropy(const Eigen::VectorXd& base, const Eigen::MatrixXd& raw, double gamma) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(base.size());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    mean += softmax((1.0 - gamma) * base + gamma * raw.row(i).transpose());
  }
  mean /= static_cast<double>(raw.rows());
  mean /= mean.sum();
  return entropy(mean);
}

namespace {

void check_epsilon(const TulipConfig& config, const CalibrationResult& calib) {
  if (std::abs(calib.epsilon_used - config.epsilon) > 1e-12 * std::abs(config.epsilon)) {
    throw ConfigError("calibration used epsilon = " + format_double(calib.epsilon_used) +
                      " but the configuration has epsilon = " + format_double(config.epsilon));
  }
}

}  // namespace

SpeBatch envelope(const NetworkSpec& spec, const ParamVector& theta_T,
                  const Eigen::Ref<const Eigen::VectorXd>& z, const TulipConfig& config,
                  const CalibrationResult& calib, std::uint64_t index, const ParamVector* theta_ts) {
  check_epsilon(config, calib);
  RawSamples raw = sample_raw(spec, theta_T, z, config, index);
  SpeBatch batch;
  batch.base = std::move(raw.base);
  batch.raw_samples = std::move(raw.raw);
  batch.theta_tr = raw.theta_tr;
  batch.D = probe_D(spec, theta_T, z, config, theta_ts);
  const double J = config.J_scaling * calib.J_star;
  batch.S = score_S(J, batch.theta_tr, calib.theta_xx, config.lambda, batch.D);
  const GammaValue g = gamma_from(batch.S, batch.theta_tr);
  batch.gamma = g.gamma;
  batch.gamma_capped = g.capped;
  batch.samples = ((1.0 - batch.gamma) * batch.base.transpose()).replicate(batch.raw_samples.rows(), 1) +
                  batch.gamma * batch.raw_samples;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(batch.base.size());
  for (Eigen::Index i = 0; i < batch.samples.rows(); ++i) mean += softmax(batch.samples.row(i).transpose());
  mean /= static_cast<double>(batch.samples.rows());
  mean /= mean.sum();
  batch.U = entropy(mean);
  return batch;
}

double trace_variance(const Eigen::MatrixXd& samples) {
  if (samples.rows() == 0) return 0.0;
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  return (samples.rowwise() - mean).squaredNorm() / static_cast<double>(samples.rows());
}

VarianceMatch variance_match_check(const NetworkSpec& spec, const ParamVector& theta_T,
                                   const Eigen::Ref<const Eigen::VectorXd>& z,
                                   const TulipConfig& config, const CalibrationResult& calib,
                                   std::uint64_t index) {
  const SpeBatch batch = envelope(spec, theta_T, z, config, calib, index);
  return {trace_variance(batch.samples), batch.S, batch.gamma};
}

BaselineScores baseline_scores(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  if (logits.size() == 0) throw DomainError("empty logits");
  const Eigen::VectorXd p = softmax(logits);
  BaselineScores s;
  s.msp = p.maxCoeff();
  s.mls = logits.maxCoeff();
  s.ebo = -logsumexp(logits);
  s.ent = entropy(p);
  return s;
}

}  // namespace tulip
