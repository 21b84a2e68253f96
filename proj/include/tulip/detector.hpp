#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tulip/network.hpp"

namespace tulip {

enum class NoiseKind { gaussian, rademacher };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise(std::string_view name);

/// How the weight perturbations are drawn across inputs.
///   fresh:  an independent draw set per input (keyed by the input index)
///   common: one draw set shared by every input of a run
enum class DrawMode { fresh, common };

std::string_view to_string(DrawMode mode);
DrawMode parse_draw_mode(std::string_view name);

struct TulipConfig {
  double epsilon = 0.005;
  double delta = 8.0;
  double lambda = 1.25;
  int M = 10;
  double J_scaling = 1.0;
  std::uint64_t seed = 0;
  NoiseKind noise = NoiseKind::gaussian;
  DrawMode draws = DrawMode::fresh;
  /// Per-parameter positive scaling; empty means all ones.
  Eigen::VectorXd gamma_scale;

  /// Throws ConfigError. With `strict_scaling` false, J_scaling only needs to be >= 0.
  void validate(bool strict_scaling = true) const;
};

inline constexpr double kTraceFloor = 1e-12;
inline constexpr double kGammaCap = 1e3;

struct CalibrationResult;

/// Raw weight-perturbed outputs around the base prediction at one input.
struct RawSamples {
  Eigen::VectorXd base;     ///< f(z; theta_T)
  Eigen::MatrixXd raw;      ///< M x o, f(z; theta_T + v_i)
  double theta_tr = 0.0;    ///< (1/M) sum ||raw_i - base||^2, eps^2-scaled
};

/// One evaluation of the surrogate posterior envelope.
struct SpeBatch {
  Eigen::VectorXd base;
  Eigen::MatrixXd raw_samples;  ///< M x o
  Eigen::MatrixXd samples;      ///< M x o, (1 - gamma) base + gamma raw_i
  double theta_tr = 0.0;
  double D = 0.0;
  double S = 0.0;
  double gamma = 0.0;
  double U = 0.0;
  bool gamma_capped = false;
};

/// Draws the M perturbations v_i ~ eps * Gamma * xi (xi Gaussian or Rademacher)
/// for input `index` and evaluates the network at theta_T + v_i.
RawSamples sample_raw(const NetworkSpec& spec, const ParamVector& theta_T,
                      const Eigen::Ref<const Eigen::VectorXd>& z, const TulipConfig& config,
                      std::uint64_t index = 0);

/// sqrt(o) ||f(z; theta_T + eps delta Gamma (theta_T - theta_ts)) - f(z; theta_T)||.
/// `theta_ts` defaults to the zero vector.
double probe_D(const NetworkSpec& spec, const ParamVector& theta_T,
               const Eigen::Ref<const Eigen::VectorXd>& z, const TulipConfig& config,
               const ParamVector* theta_ts = nullptr);

/// S = J^2 (theta_tr + theta_xx - lambda D) with J = J_scaling * J*.
double score_S(double J, double theta_tr, double theta_xx, double lambda, double D);

struct GammaValue {
  double gamma = 0.0;
  bool capped = false;
};

/// gamma = sqrt(max(S, 0) / max(theta_tr, floor)), capped when theta_tr is below the floor.
GammaValue gamma_from(double S, double theta_tr);

/// Mixes base and raw samples with weight gamma and returns the entropy of the mean softmax.
double envelope_entropy(const Eigen::VectorXd& base, const Eigen::MatrixXd& raw, double gamma);

SpeBatch envelope(const NetworkSpec& spec, const ParamVector& theta_T,
                  const Eigen::Ref<const Eigen::VectorXd>& z, const TulipConfig& config,
                  const CalibrationResult& calib, std::uint64_t index = 0,
                  const ParamVector* theta_ts = nullptr);

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);
double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Shannon entropy in nats; throws DomainError off the simplex.
double entropy(const Eigen::Ref<const Eigen::VectorXd>& p);

struct VarianceMatch {
  double trace_var = 0.0;  ///< Tr Var_i[f_i(z)] over the envelope samples
  double S = 0.0;
  double gamma = 0.0;
};

VarianceMatch variance_match_check(const NetworkSpec& spec, const ParamVector& theta_T,
                                   const Eigen::Ref<const Eigen::VectorXd>& z,
                                   const TulipConfig& config, const CalibrationResult& calib,
                                   std::uint64_t index = 0);

/// Trace of the sample covariance (population normalisation 1/M) of the rows of `samples`.
double trace_variance(const Eigen::MatrixXd& samples);

struct BaselineScores {
  double msp = 0.0;
  double mls = 0.0;
  double ebo = 0.0;
  double ent = 0.0;
};

BaselineScores baseline_scores(const Eigen::Ref<const Eigen::VectorXd>& logits);

}  // namespace tulip
