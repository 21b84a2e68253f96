#include "tulip/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "tulip/errors.hpp"
#include "tulip/format.hpp"

namespace tulip {

double fit_theta_xx(const NetworkSpec& spec, const ParamVector& theta_T,
                    const Eigen::Ref<const Eigen::MatrixXd>& val_inputs, const TulipConfig& config) {
  if (val_inputs.rows() == 0) throw DomainError("empty validation set");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < val_inputs.rows(); ++i) {
    sum += sample_raw(spec, theta_T, val_inputs.row(i).transpose(), config, static_cast<std::uint64_t>(i)).theta_tr;
  }
  return sum / static_cast<double>(val_inputs.rows());
}

std::vector<CalibrationPoint> calibration_points(const NetworkSpec& spec, const ParamVector& theta_T,
                                                 const Dataset& val, const TulipConfig& config,
                                                 double theta_xx, bool* pseudo_labels) {
  if (val.size() == 0) throw DomainError("empty validation set");
  const bool use_labels = val.has_labels();
  if (pseudo_labels) *pseudo_labels = !use_labels;
  std::vector<CalibrationPoint> points;
  points.reserve(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    const Eigen::VectorXd z = val.inputs.row(static_cast<Eigen::Index>(i)).transpose();
    RawSamples raw = sample_raw(spec, theta_T, z, config, i);
    const double D = probe_D(spec, theta_T, z, config);
    CalibrationPoint pt;
    pt.gamma1 = gamma_from(score_S(1.0, raw.theta_tr, theta_xx, config.lambda, D), raw.theta_tr).gamma;
    Eigen::Index arg = 0;
    raw.base.maxCoeff(&arg);
    pt.label = use_labels ? val.labels[i] : static_cast<int>(arg);
    if (pt.label < 0 || pt.label >= raw.base.size()) throw DomainError("validation label out of range");
    pt.base = std::move(raw.base);
    pt.raw = std::move(raw.raw);
    points.push_back(std::move(pt));
  }
  return points;
}

double log_likelihood(const std::vector<CalibrationPoint>& points, double J) {
  double total = 0.0;
  for (const auto& pt : points) {
    const double gamma = J * pt.gamma1;
    double p = 0.0;
    for (Eigen::Index i = 0; i < pt.raw.rows(); ++i) {
      p += softmax((1.0 - gamma) * pt.base + gamma * pt.raw.row(i).transpose())[pt.label];
    }
    total += std::log(std::max(p / static_cast<double>(pt.raw.rows()), 1e-300));
  }
  return total;
}

JSearch search_J(const std::vector<CalibrationPoint>& points) {
  constexpr int kGrid = 25;
  const double lo = std::log(kJBracketLo);
  const double hi = std::log(kJBracketHi);
  const double step = (hi - lo) / (kGrid - 1);
  std::vector<double> ll(kGrid);
  int best = 0;
  for (int k = 0; k < kGrid; ++k) {
    ll[k] = log_likelihood(points, std::exp(lo + step * k));
    if (ll[k] > ll[best]) best = k;
  }
  const auto [mn, mx] = std::minmax_element(ll.begin(), ll.end());
  if (*mx - *mn <= 1e-12) return {kJBracketLo, ll[0], true};

  // Golden section in log J on the two cells around the best grid point.
  double a = lo + step * std::max(best - 1, 0);
  double b = lo + step * std::min(best + 1, kGrid - 1);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = log_likelihood(points, std::exp(c));
  double fd = log_likelihood(points, std::exp(d));
  // Relative width 1e-3 in J is an absolute width of about 1e-3 in log J.
  while (b - a > 1e-3) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = log_likelihood(points, std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = log_likelihood(points, std::exp(d));
    }
  }
  JSearch out{std::exp(lo + step * best), ll[best], false};
  const double mid = 0.5 * (a + b);
  const double fm = log_likelihood(points, std::exp(mid));
  if (fm > out.log_likelihood) out = {std::exp(mid), fm, false};
  return out;
}

CalibrationResult calibrate(const NetworkSpec& spec, const ParamVector& theta_T, const Dataset& val,
                            const TulipConfig& config) {
  config.validate(false);
  CalibrationResult calib;
  calib.epsilon_used = config.epsilon;
  calib.M_used = config.M;
  calib.seed = config.seed;
  calib.theta_xx = fit_theta_xx(spec, theta_T, val.inputs, config);
  const auto points = calibration_points(spec, theta_T, val, config, calib.theta_xx, &calib.pseudo_labels);
  const JSearch search = search_J(points);
  calib.J_star = search.J_star;
  calib.degenerate = search.degenerate;
  calib.log_likelihood = search.log_likelihood;
  return calib;
}

double apply_scaling(double J_star, double J_scaling, bool strict) {
  if (strict && !(J_scaling >= 1.0)) throw ConfigError("J_scaling must be >= 1");
  if (!(J_scaling >= 0.0)) throw ConfigError("J_scaling must be nonnegative");
  return J_star * J_scaling;
}

std::string calibration_to_text(const CalibrationResult& calib) {
  std::string out = "version = tulip-calib/1\n";
  out += "theta_xx = " + format_double(calib.theta_xx) + "\n";
  out += "J_star = " + format_double(calib.J_star) + "\n";
  out += "epsilon_used = " + format_double(calib.epsilon_used) + "\n";
  out += "M_used = " + std::to_string(calib.M_used) + "\n";
  out += "seed = " + std::to_string(calib.seed) + "\n";
  out += "log_likelihood = " + format_double(calib.log_likelihood) + "\n";
  out += "degenerate = " + std::string(calib.degenerate ? "1" : "0") + "\n";
  out += "pseudo_labels = " + std::string(calib.pseudo_labels ? "1" : "0") + "\n";
  return out;
}

CalibrationResult calibration_from_text(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  for (std::string_view line : split_lines(text)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw IoError("calibration line without '=': " + std::string(line));
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(std::string("calibration file lacks '") + key + "'");
    return it->second;
  };
  if (need("version") != "tulip-calib/1") throw IoError("unsupported calibration version " + need("version"));
  CalibrationResult calib;
  calib.theta_xx = parse_double(need("theta_xx"));
  calib.J_star = parse_double(need("J_star"));
  calib.epsilon_used = parse_double(need("epsilon_used"));
  calib.M_used = static_cast<int>(parse_integer(need("M_used")));
  calib.seed = static_cast<std::uint64_t>(std::stoull(need("seed")));
  if (kv.count("log_likelihood")) calib.log_likelihood = parse_double(kv["log_likelihood"]);
  calib.degenerate = kv.count("degenerate") && kv["degenerate"] == "1";
  calib.pseudo_labels = kv.count("pseudo_labels") && kv["pseudo_labels"] == "1";
  if (calib.theta_xx < 0.0 || calib.J_star < 0.0) throw IoError("calibration values must be nonnegative");
  return calib;
}

void save_calibration(const CalibrationResult& calib, const std::string& path) {
  write_text_file(path, calibration_to_text(calib));
}

CalibrationResult load_calibration(const std::string& path) {
  return calibration_from_text(read_text_file(path));
}

}  // namespace tulip
