#include "tulip/network.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tulip/errors.hpp"

namespace tulip {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::erf: return "erf";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "erf") return Activation::erf;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::erf: return std::erf(x);
    case Activation::identity: return x;
  }
  return x;
}

double activate_derivative(Activation act, double x) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::erf: return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

NetworkSpec NetworkSpec::mlp(std::vector<int> dims, Activation act, bool bias) {
  NetworkSpec spec;
  spec.layer_dims = std::move(dims);
  const int layers = static_cast<int>(spec.layer_dims.size()) - 1;
  spec.activations.assign(layers > 0 ? layers - 1 : 0, act);
  spec.has_bias.assign(layers > 0 ? layers : 0, bias);
  spec.validate();
  return spec;
}

void NetworkSpec::validate() const {
  if (layer_dims.size() < 2) throw ShapeError("network needs at least one layer");
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    if (layer_dims[i] < 1) {
      throw ShapeError("layer dimension " + std::to_string(i) + " must be positive");
    }
  }
  const auto layers = static_cast<std::size_t>(num_layers());
  if (activations.size() != layers - 1) {
    throw ShapeError("expected " + std::to_string(layers - 1) + " activation tags, got " +
                     std::to_string(activations.size()));
  }
  if (has_bias.size() != layers) {
    throw ShapeError("expected " + std::to_string(layers) + " bias flags, got " +
                     std::to_string(has_bias.size()));
  }
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    const auto fan_in = static_cast<std::size_t>(layer_dims[l]);
    const auto fan_out = static_cast<std::size_t>(layer_dims[l + 1]);
    total += fan_in * fan_out + (has_bias[l] ? fan_out : 0);
  }
  return total;
}

std::shared_ptr<const Layout> Layout::for_spec(const NetworkSpec& spec) {
  spec.validate();
  auto layout = std::make_shared<Layout>();
  std::size_t offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int fan_in = spec.layer_dims[l];
    const int fan_out = spec.layer_dims[l + 1];
    layout->weight_index_.push_back(static_cast<int>(layout->segments_.size()));
    layout->segments_.push_back({l, SegmentKind::weight, fan_out, fan_in, offset});
    offset += static_cast<std::size_t>(fan_out) * fan_in;
    if (spec.has_bias[l]) {
      layout->bias_index_.push_back(static_cast<int>(layout->segments_.size()));
      layout->segments_.push_back({l, SegmentKind::bias, fan_out, 1, offset});
      offset += fan_out;
    } else {
      layout->bias_index_.push_back(-1);
    }
  }
  layout->total_ = offset;
  return layout;
}

const Segment& Layout::weight_segment(int layer) const {
  return segments_.at(static_cast<std::size_t>(weight_index_.at(layer)));
}

const Segment* Layout::bias_segment(int layer) const {
  const int idx = bias_index_.at(layer);
  return idx < 0 ? nullptr : &segments_[static_cast<std::size_t>(idx)];
}

ParamVector::ParamVector(std::shared_ptr<const Layout> layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_) throw ShapeError("parameter vector without layout");
  if (static_cast<std::size_t>(values_.size()) != layout_->total_size()) {
    throw ShapeError("parameter vector has " + std::to_string(values_.size()) +
                     " entries, layout needs " + std::to_string(layout_->total_size()));
  }
}

ParamVector ParamVector::zeros(const NetworkSpec& spec) {
  auto layout = Layout::for_spec(spec);
  const auto n = static_cast<Eigen::Index>(layout->total_size());
  return {std::move(layout), Eigen::VectorXd::Zero(n)};
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
  return {other.layout_, Eigen::VectorXd::Zero(other.values_.size())};
}

Eigen::Map<const RowMatrix> ParamVector::weight(int layer) const {
  const Segment& seg = layout_->weight_segment(layer);
  return {values_.data() + seg.offset, seg.rows, seg.cols};
}

Eigen::Map<const Eigen::VectorXd> ParamVector::bias(int layer) const {
  const Segment* seg = layout_->bias_segment(layer);
  if (seg == nullptr) return {values_.data(), 0};
  return {values_.data() + seg->offset, seg->rows};
}

bool ParamVector::compatible_with(const ParamVector& other) const {
  if (!layout_ || !other.layout_) return false;
  return layout_ == other.layout_ || *layout_ == *other.layout_;
}

void ParamVector::check_matches(const NetworkSpec& spec) const {
  if (!layout_) throw ShapeError("parameter vector without layout");
  const auto expected = Layout::for_spec(spec);
  if (!(*expected == *layout_)) {
    std::ostringstream msg;
    msg << "parameter layout does not match network (" << layout_->total_size() << " vs "
        << expected->total_size() << " parameters)";
    throw ShapeError(msg.str());
  }
}

std::vector<LayerParams> unflatten(const NetworkSpec& spec, const ParamVector& theta) {
  theta.check_matches(spec);
  std::vector<LayerParams> layers;
  layers.reserve(static_cast<std::size_t>(spec.num_layers()));
  for (int l = 0; l < spec.num_layers(); ++l) {
    layers.push_back({theta.weight(l), theta.bias(l)});
  }
  return layers;
}

ParamVector flatten(const NetworkSpec& spec, const std::vector<LayerParams>& layers) {
  ParamVector theta = ParamVector::zeros(spec);
  if (layers.size() != static_cast<std::size_t>(spec.num_layers())) {
    throw ShapeError("expected " + std::to_string(spec.num_layers()) + " layers, got " +
                     std::to_string(layers.size()));
  }
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& lp = layers[static_cast<std::size_t>(l)];
    const Segment& ws = theta.layout().weight_segment(l);
    if (lp.weight.rows() != ws.rows || lp.weight.cols() != ws.cols) {
      throw ShapeError("layer " + std::to_string(l) + ": weight shape mismatch");
    }
    Eigen::Map<RowMatrix>(theta.values().data() + ws.offset, ws.rows, ws.cols) = lp.weight;
    const Segment* bs = theta.layout().bias_segment(l);
    const Eigen::Index want = bs ? bs->rows : 0;
    if (lp.bias.size() != want) {
      throw ShapeError("layer " + std::to_string(l) + ": bias shape mismatch");
    }
    if (bs) theta.values().segment(static_cast<Eigen::Index>(bs->offset), bs->rows) = lp.bias;
  }
  return theta;
}

namespace {

void require_compatible(const ParamVector& a, const ParamVector& b) {
  if (!a.compatible_with(b)) throw ShapeError("parameter vectors have different layouts");
}

void check_input(const NetworkSpec& spec, Eigen::Index n) {
  if (n != spec.input_dim()) {
    throw ShapeError("layer 0 expects input dimension " + std::to_string(spec.input_dim()) +
                     ", got " + std::to_string(n));
  }
}

template <typename Mat>
void apply_activation(Activation act, Mat& m) {
  if (act == Activation::identity) return;
  m = m.unaryExpr([act](double v) { return activate(act, v); });
}

template <typename Mat>
Mat activation_derivative(Activation act, const Mat& m) {
  return m.unaryExpr([act](double v) { return activate_derivative(act, v); });
}

}  // namespace

ParamVector perturb(const ParamVector& theta, const ParamVector& v) {
  require_compatible(theta, v);
  return {theta.layout_ptr(), theta.values() + v.values()};
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_compatible(x, y);
  return {y.layout_ptr(), y.values() + a * x.values()};
}

ParamVector scale(double a, const ParamVector& x) { return {x.layout_ptr(), a * x.values()}; }

ParamVector init_params(const NetworkSpec& spec, rng::Engine& engine) {
  ParamVector theta = ParamVector::zeros(spec);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const Segment& ws = theta.layout().weight_segment(l);
    const double sd = 1.0 / std::sqrt(static_cast<double>(ws.cols));
    for (std::size_t i = 0; i < ws.size(); ++i) {
      theta.values()[static_cast<Eigen::Index>(ws.offset + i)] = sd * normal(engine);
    }
  }
  return theta;
}

Eigen::VectorXd forward(const NetworkSpec& spec, const ParamVector& theta,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_input(spec, x.size());
  theta.check_matches(spec);
  Eigen::VectorXd a = x;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::VectorXd pre = theta.weight(l) * a;
    if (spec.has_bias[l]) pre += theta.bias(l);
    if (l + 1 < spec.num_layers()) apply_activation(spec.activations[l], pre);
    a = std::move(pre);
  }
  return a;
}

Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const ParamVector& theta,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_input(spec, inputs.cols());
  theta.check_matches(spec);
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::MatrixXd pre = a * theta.weight(l).transpose();
    if (spec.has_bias[l]) pre.rowwise() += theta.bias(l).transpose();
    if (l + 1 < spec.num_layers()) apply_activation(spec.activations[l], pre);
    a = std::move(pre);
  }
  return a;
}

namespace {

struct Tape {
  std::vector<Eigen::VectorXd> inputs;  // input of each layer
  std::vector<Eigen::VectorXd> pre;     // pre-activation of each layer
};

Tape record(const NetworkSpec& spec, const ParamVector& theta,
            const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_input(spec, x.size());
  theta.check_matches(spec);
  Tape tape;
  Eigen::VectorXd a = x;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::VectorXd pre = theta.weight(l) * a;
    if (spec.has_bias[l]) pre += theta.bias(l);
    tape.inputs.push_back(a);
    tape.pre.push_back(pre);
    if (l + 1 < spec.num_layers()) apply_activation(spec.activations[l], pre);
    a = std::move(pre);
  }
  return tape;
}

}  // namespace

JacobianMatrix param_jacobian(const NetworkSpec& spec, const ParamVector& theta,
                              const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Tape tape = record(spec, theta, x);
  const int o = spec.output_dim();
  JacobianMatrix jac = JacobianMatrix::Zero(o, static_cast<Eigen::Index>(theta.size()));

  // Row i of `delta` is the backward signal of output i; all o passes run together.
  Eigen::MatrixXd delta = Eigen::MatrixXd::Identity(o, o);
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const Segment& ws = theta.layout().weight_segment(l);
    const Eigen::VectorXd& a = tape.inputs[static_cast<std::size_t>(l)];
    // d f_i / d W[r][c] = delta(i, r) * a[c], stored row-major within the segment.
    for (int r = 0; r < ws.rows; ++r) {
      const auto base =
          static_cast<Eigen::Index>(ws.offset) + static_cast<Eigen::Index>(r) * ws.cols;
      jac.middleCols(base, ws.cols).noalias() = delta.col(r) * a.transpose();
    }
    if (const Segment* bs = theta.layout().bias_segment(l)) {
      jac.middleCols(static_cast<Eigen::Index>(bs->offset), bs->rows) = delta;
    }
    if (l > 0) {
      Eigen::MatrixXd back = delta * theta.weight(l);
      const Eigen::VectorXd deriv =
          activation_derivative(spec.activations[static_cast<std::size_t>(l - 1)],
                                tape.pre[static_cast<std::size_t>(l - 1)]);
      delta = back.array().rowwise() * deriv.transpose().array();
    }
  }
  return jac;
}

Eigen::VectorXd jvp(const NetworkSpec& spec, const ParamVector& theta,
                    const Eigen::Ref<const Eigen::VectorXd>& x, const ParamVector& v) {
  check_input(spec, x.size());
  theta.check_matches(spec);
  require_compatible(theta, v);
  Eigen::VectorXd a = x;
  Eigen::VectorXd tangent = Eigen::VectorXd::Zero(x.size());
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto w = theta.weight(l);
    Eigen::VectorXd pre = w * a;
    Eigen::VectorXd dpre = v.weight(l) * a + w * tangent;
    if (spec.has_bias[l]) {
      pre += theta.bias(l);
      dpre += v.bias(l);
    }
    if (l + 1 < spec.num_layers()) {
      const Activation act = spec.activations[static_cast<std::size_t>(l)];
      tangent = activation_derivative(act, pre).cwiseProduct(dpre);
      apply_activation(act, pre);
      a = std::move(pre);
    } else {
      tangent = std::move(dpre);
    }
  }
  return tangent;
}

Eigen::VectorXd vjp_batch(const NetworkSpec& spec, const ParamVector& theta,
                          const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                          const Eigen::Ref<const Eigen::MatrixXd>& output_weights) {
  check_input(spec, inputs.cols());
  theta.check_matches(spec);
  if (output_weights.rows() != inputs.rows() || output_weights.cols() != spec.output_dim()) {
    throw ShapeError("output weights must be N x o");
  }
  const int layers = spec.num_layers();
  std::vector<Eigen::MatrixXd> acts;
  std::vector<Eigen::MatrixXd> pres;
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd pre = a * theta.weight(l).transpose();
    if (spec.has_bias[l]) pre.rowwise() += theta.bias(l).transpose();
    acts.push_back(a);
    pres.push_back(pre);
    if (l + 1 < layers) apply_activation(spec.activations[static_cast<std::size_t>(l)], pre);
    a = std::move(pre);
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta.size()));
  Eigen::MatrixXd delta = output_weights;  // N x fan_out
  for (int l = layers - 1; l >= 0; --l) {
    const Segment& ws = theta.layout().weight_segment(l);
    RowMatrix gw = delta.transpose() * acts[static_cast<std::size_t>(l)];
    grad.segment(static_cast<Eigen::Index>(ws.offset), static_cast<Eigen::Index>(ws.size())) =
        Eigen::Map<const Eigen::VectorXd>(gw.data(), static_cast<Eigen::Index>(ws.size()));
    if (const Segment* bs = theta.layout().bias_segment(l)) {
      grad.segment(static_cast<Eigen::Index>(bs->offset), bs->rows) = delta.colwise().sum().transpose();
    }
    if (l > 0) {
      Eigen::MatrixXd back = delta * theta.weight(l);
      delta = back.cwiseProduct(activation_derivative(
          spec.activations[static_cast<std::size_t>(l - 1)], pres[static_cast<std::size_t>(l - 1)]));
    }
  }
  return grad;
}

}  // namespace tulip
