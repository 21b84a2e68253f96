#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tulip/network.hpp"

namespace tulip {

enum class Split { train, val, test_id, test_ood };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Inputs plus either class labels (classification) or real target vectors (regression).
struct Dataset {
  Split split = Split::train;
  Eigen::MatrixXd inputs;   ///< N x d
  std::vector<int> labels;  ///< classification targets, empty for regression
  Eigen::MatrixXd targets;  ///< regression targets N x o, empty for classification
  int num_classes = 0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  [[nodiscard]] int input_dim() const { return static_cast<int>(inputs.cols()); }
  [[nodiscard]] bool is_classification() const { return num_classes > 0; }
  [[nodiscard]] bool has_labels() const { return !labels.empty(); }

  /// Throws DomainError on inconsistent shapes or labels outside [0, num_classes).
  void validate() const;
  /// Exact duplicate input rows.
  [[nodiscard]] bool has_duplicate_rows() const;
};

/// Dataset CSV: header `split,x0..x{d-1},<targets>` where targets are `label`
/// for classification (with `classes=K` recorded as `label:K`) or `y0..y{o-1}`.
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path);
std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(std::string_view text);

/// Fixed smooth target for the 1-D regression toy: natural cubic spline through fixed knots.
double spline_target(double x);

/// Training inputs are drawn from a piecewise-uniform density over disjoint
/// clusters, leaving gaps where epistemic uncertainty should grow.
struct ClusteredSupport {
  std::vector<double> lo{-2.6, -0.6, 1.4};
  std::vector<double> hi{-1.8, 0.2, 2.2};
  std::vector<double> weight{0.35, 0.3, 0.35};

  /// Probability mass of [a, b) under this density.
  [[nodiscard]] double mass(double a, double b) const;
};

Dataset gen_spline_regression(std::size_t n, double noise, std::uint64_t seed,
                              const ClusteredSupport& support = {}, Split split = Split::train);

/// Two interleaving half circles; labels split exactly n/2 (class 0 takes the odd one).
Dataset gen_two_moons(std::size_t n, double spread, std::uint64_t seed, Split split = Split::train);

/// Two isotropic Gaussian blobs centred at (-1.5, 0) and (1.5, 0).
Dataset gen_gauss_clusters(std::size_t n, double spread, std::uint64_t seed,
                           Split split = Split::train);

/// Centroid of the two-moons support, used as the centre of the OOD generators.
Eigen::Vector2d two_moons_centroid();
/// Largest distance of a noiseless two-moons point from the centroid.
double two_moons_radius();

/// Points at exact distance `radius` from `center`, uniform angle ("near" OOD).
Dataset gen_ood_ring(std::size_t n, double radius, std::uint64_t seed,
                     const Eigen::Vector2d& center = two_moons_centroid());

/// Uniform in the square of half-width 2 * radius around `center`, rejecting
/// points closer than `radius` ("far" OOD).
Dataset gen_uniform_box(std::size_t n, double radius, std::uint64_t seed,
                        const Eigen::Vector2d& center = two_moons_centroid());

enum class LossKind { mse, softmax_ce };

std::string_view to_string(LossKind loss);
LossKind parse_loss(std::string_view name);

struct TrainRecipe {
  double eta = 0.1;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::softmax_ce;

  void validate() const;
};

struct TrainResult {
  ParamVector theta;
  std::vector<double> epoch_loss;  ///< full-dataset loss after each epoch (index 0: initial)
  double max_sample_loss = 0.0;    ///< convergence proxy, largest per-sample training loss
  double accuracy = 0.0;           ///< classification only
};

/// Per-sample loss and its gradient with respect to the logits.
double sample_loss(LossKind loss, const Eigen::Ref<const Eigen::VectorXd>& logits,
                   const Eigen::Ref<const Eigen::VectorXd>& target);
Eigen::VectorXd sample_loss_gradient(LossKind loss, const Eigen::Ref<const Eigen::VectorXd>& logits,
                                     const Eigen::Ref<const Eigen::VectorXd>& target);

/// Target matrix used by the trainer: one-hot labels or regression targets.
Eigen::MatrixXd target_matrix(const Dataset& data, int output_dim);

/// Plain minibatch SGD from the Gaussian 1/fan_in initialisation.
TrainResult train_empirical(const NetworkSpec& spec, const TrainRecipe& recipe, const Dataset& train);

}  // namespace tulip
