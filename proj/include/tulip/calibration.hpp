#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tulip/data.hpp"
#include "tulip/detector.hpp"
#include "tulip/network.hpp"

namespace tulip {

struct CalibrationResult {
  double theta_xx = 0.0;
  double J_star = 1.0;
  double epsilon_used = 0.005;
  int M_used = 10;
  std::uint64_t seed = 0;
  bool degenerate = false;     ///< likelihood flat in J; J_star is the bracket minimum
  bool pseudo_labels = false;  ///< validation labels were absent, base argmax used instead
  double log_likelihood = 0.0; ///< at J_star
};

/// Mean of the raw trace estimate over the validation inputs.
double fit_theta_xx(const NetworkSpec& spec, const ParamVector& theta_T,
                    const Eigen::Ref<const Eigen::MatrixXd>& val_inputs, const TulipConfig& config);

/// Per-point quantities at J = 1, reused for every candidate J.
struct CalibrationPoint {
  Eigen::VectorXd base;
  Eigen::MatrixXd raw;
  double gamma1 = 0.0;
  int label = 0;
};

std::vector<CalibrationPoint> calibration_points(const NetworkSpec& spec, const ParamVector& theta_T,
                                                 const Dataset& val, const TulipConfig& config,
                                                 double theta_xx, bool* pseudo_labels = nullptr);

/// sum_z log p_J(y_z | z) where p_J is the mean softmax of the envelope with gamma = J gamma_1(z).
double log_likelihood(const std::vector<CalibrationPoint>& points, double J);

inline constexpr double kJBracketLo = 1e-3;
inline constexpr double kJBracketHi = 1e3;

struct JSearch {
  double J_star = kJBracketLo;
  double log_likelihood = 0.0;
  bool degenerate = false;
};

/// Coarse log-spaced grid over the bracket followed by golden-section refinement
/// in log J down to relative width 1e-3.
JSearch search_J(const std::vector<CalibrationPoint>& points);

/// Full calibration: theta_xx first, then J*.
CalibrationResult calibrate(const NetworkSpec& spec, const ParamVector& theta_T, const Dataset& val,
                            const TulipConfig& config);

/// J = J_scaling * J*. In strict mode J_scaling < 1 is a ConfigError.
double apply_scaling(double J_star, double J_scaling, bool strict = true);

/// Flat text document, version "tulip-calib/1".
std::string calibration_to_text(const CalibrationResult& calib);
CalibrationResult calibration_from_text(std::string_view text);
void save_calibration(const CalibrationResult& calib, const std::string& path);
CalibrationResult load_calibration(const std::string& path);

}  // namespace tulip
