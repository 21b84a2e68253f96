#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tulip/rng.hpp"

namespace tulip {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, tanh, erf, identity };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

/// Scalar activation and its derivative. The relu derivative at 0 is 0.
double activate(Activation act, double x);
double activate_derivative(Activation act, double x);

/// Architecture of a dense feed-forward network. The output layer is linear (logits).
struct NetworkSpec {
  std::vector<int> layer_dims;           ///< d, hidden..., o
  std::vector<Activation> activations;   ///< one per hidden layer
  std::vector<bool> has_bias;            ///< one per layer

  /// Uniform MLP: same activation on every hidden layer, biases everywhere (or nowhere).
  static NetworkSpec mlp(std::vector<int> dims, Activation act, bool bias = true);

  /// Throws ShapeError when the invariants are broken.
  void validate() const;

  [[nodiscard]] int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
  [[nodiscard]] int input_dim() const { return layer_dims.front(); }
  [[nodiscard]] int output_dim() const { return layer_dims.back(); }
  [[nodiscard]] std::size_t parameter_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

enum class SegmentKind { weight, bias };

/// One contiguous block of the flat parameter vector. Weights are stored
/// row-major with shape (fan_out, fan_in); biases have shape (fan_out, 1).
struct Segment {
  int layer = 0;
  SegmentKind kind = SegmentKind::weight;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  bool operator==(const Segment&) const = default;
};

class Layout {
 public:
  static std::shared_ptr<const Layout> for_spec(const NetworkSpec& spec);

  [[nodiscard]] const std::vector<Segment>& segments() const { return segments_; }
  [[nodiscard]] std::size_t total_size() const { return total_; }
  [[nodiscard]] const Segment& weight_segment(int layer) const;
  /// nullptr when the layer has no bias.
  [[nodiscard]] const Segment* bias_segment(int layer) const;

  bool operator==(const Layout& other) const { return segments_ == other.segments_; }

 private:
  std::vector<Segment> segments_;
  std::vector<int> weight_index_;
  std::vector<int> bias_index_;
  std::size_t total_ = 0;
};

/// Dense weight and bias of one layer, used by flatten/unflatten.
struct LayerParams {
  Eigen::MatrixXd weight;  ///< fan_out x fan_in
  Eigen::VectorXd bias;    ///< empty when the layer has no bias
};

/// Flat parameter vector together with the map of its segments.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::shared_ptr<const Layout> layout, Eigen::VectorXd values);

  static ParamVector zeros(const NetworkSpec& spec);
  static ParamVector zeros_like(const ParamVector& other);

  [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
  [[nodiscard]] Eigen::VectorXd& values() { return values_; }
  [[nodiscard]] const Layout& layout() const { return *layout_; }
  [[nodiscard]] const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  [[nodiscard]] Eigen::Map<const RowMatrix> weight(int layer) const;
  /// Zero-length map when the layer has no bias.
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  [[nodiscard]] bool compatible_with(const ParamVector& other) const;
  /// Throws ShapeError unless this vector matches the layout of `spec`.
  void check_matches(const NetworkSpec& spec) const;

 private:
  std::shared_ptr<const Layout> layout_;
  Eigen::VectorXd values_;
};

std::vector<LayerParams> unflatten(const NetworkSpec& spec, const ParamVector& theta);
ParamVector flatten(const NetworkSpec& spec, const std::vector<LayerParams>& layers);

/// theta + v
ParamVector perturb(const ParamVector& theta, const ParamVector& v);
/// y + a * x
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);
ParamVector scale(double a, const ParamVector& x);

/// Zero-mean Gaussian weights with variance 1/fan_in, zero biases.
ParamVector init_params(const NetworkSpec& spec, rng::Engine& engine);

using JacobianMatrix = Eigen::MatrixXd;

Eigen::VectorXd forward(const NetworkSpec& spec, const ParamVector& theta,
                        const Eigen::Ref<const Eigen::VectorXd>& x);

/// Row-wise forward pass; `inputs` is N x d, the result N x o.
Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const ParamVector& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Exact o x |theta| Jacobian of the logits with respect to the parameters.
JacobianMatrix param_jacobian(const NetworkSpec& spec, const ParamVector& theta,
                              const Eigen::Ref<const Eigen::VectorXd>& x);

/// Forward-mode product Jacobian * v without forming the Jacobian.
Eigen::VectorXd jvp(const NetworkSpec& spec, const ParamVector& theta,
                    const Eigen::Ref<const Eigen::VectorXd>& x, const ParamVector& v);

/// Gradient of sum_k w_k . f(x_k) with respect to theta, for a batch
/// (`inputs` N x d, `output_weights` N x o). Used by the trainer.
Eigen::VectorXd vjp_batch(const NetworkSpec& spec, const ParamVector& theta,
                          const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                          const Eigen::Ref<const Eigen::MatrixXd>& output_weights);

/// A network architecture with trained (or initial) parameters.
struct Model {
  NetworkSpec spec;
  ParamVector params;
};

/// JSON model document, version "tulip-model/1".
std::string model_to_json(const Model& model);
Model model_from_json(std::string_view text);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace tulip
