#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tulip/calibration.hpp"
#include "tulip/data.hpp"
#include "tulip/detector.hpp"
#include "tulip/metrics.hpp"
#include "tulip/network.hpp"

namespace tulip {

/// One line of the score CSV. Values are stored as computed; orientation is
/// applied when the scores are read back for evaluation.
struct ScoreRow {
  std::size_t id = 0;
  double U = 0.0;
  double msp = 0.0;
  double mls = 0.0;
  double ebo = 0.0;
  double ent = 0.0;
  double gamma = 0.0;
  double S = 0.0;
  double theta_tr = 0.0;
  double D = 0.0;
  bool capped = false;
};

/// Scores every row of `inputs`. Row i always uses the randomness of index i
/// (or the shared draw set in common mode), so the output does not depend on `threads`.
std::vector<ScoreRow> score_inputs(const NetworkSpec& spec, const ParamVector& theta_T,
                                   const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                   const TulipConfig& config, const CalibrationResult& calib,
                                   int threads = 1);

/// Single-pass logit baselines only (the ENT path).
std::vector<ScoreRow> baseline_inputs(const NetworkSpec& spec, const ParamVector& theta_T,
                                      const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Header: id,U,msp,mls,ebo,ent,gamma,S,theta_tr,D
std::string scores_to_csv(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> scores_from_csv(std::string_view text);

/// Oriented score of `method` (higher = more OOD): msp and mls are negated.
double oriented_score(const ScoreRow& row, const std::string& method);
std::vector<double> oriented_scores(const std::vector<ScoreRow>& rows, const std::string& method);

ScoreReport evaluate(const std::vector<ScoreRow>& id_rows, const std::vector<ScoreRow>& ood_rows,
                     const std::string& ood_name);

std::string report_csv(const std::vector<ScoreReport>& reports);
std::string report_text(const std::vector<ScoreReport>& reports);

struct CostProfile {
  int M = 0;
  double tulip_seconds = 0.0;
  double ent_seconds = 0.0;
  [[nodiscard]] double ratio() const { return ent_seconds > 0.0 ? tulip_seconds / ent_seconds : 0.0; }
};

/// Wall time of scoring `inputs` end to end (scores plus CSV emission) with
/// TULiP and with the single-pass baseline path. Best of `repeats` runs each.
CostProfile cost_profile(const NetworkSpec& spec, const ParamVector& theta_T,
                         const Eigen::Ref<const Eigen::MatrixXd>& inputs, const TulipConfig& config,
                         const CalibrationResult& calib, int repeats = 5);

/// Two-moons ID/OOD experiment preset.
struct MoonsSetup {
  std::uint64_t seed = 0;
  std::size_t n_train = 400;
  std::size_t n_val = 200;
  std::size_t n_test = 200;
  std::size_t n_ood = 200;
  double spread = 0.2;
  /// Ring radius and inner box radius, as multiples of the ID radius around the centroid.
  double near_factor = 1.25;
  double far_factor = 2.0;
  /// Every generated input is multiplied by this factor. Larger inputs raise
  /// Tr Theta relative to the logit norm, which keeps the trace terms of S
  /// commensurate with the probe term at this network size.
  double input_scale = 3.0;
  std::vector<int> hidden{1024};
  Activation activation = Activation::relu;
  TrainRecipe recipe{0.05 / 9.0, 200, 32, 0, LossKind::softmax_ce};
  TulipConfig tulip;
  std::vector<double> scaling_grid{1.0, 1.25, 1.5, 1.75, 2.0};
  int threads = 1;
};

struct MoonsData {
  Dataset train, val, val_ood, test_id, near_ood, far_ood;
};

MoonsData moons_data(const MoonsSetup& setup);

struct MoonsOutcome {
  Model model;
  TrainResult training;
  CalibrationResult calib;
  double J_scaling = 1.0;
  ScoreReport near;
  ScoreReport far;
};

/// Trains, calibrates theta_xx and J*, picks J_scaling from the grid by validation
/// AUROC against a held-out OOD validation ring, then scores and evaluates the test sets.
MoonsOutcome run_moons(const MoonsSetup& setup);

/// Picks the grid value with the largest AUROC of U between the two validation sets
/// (first one wins ties).
double select_J_scaling(const NetworkSpec& spec, const ParamVector& theta_T, const Dataset& val_id,
                        const Dataset& val_ood, const TulipConfig& config, const CalibrationResult& calib,
                        const std::vector<double>& grid, int threads = 1);

}  // namespace tulip
