#include <algorithm>
#include <cmath>
#include <numeric>

#include "tulip/data.hpp"
#include "tulip/errors.hpp"
#include "tulip/rng.hpp"

namespace tulip {

std::string_view to_string(LossKind loss) {
  return loss == LossKind::mse ? "mse" : "softmax-ce";
}

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "softmax-ce" || name == "ce") return LossKind::softmax_ce;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

void TrainRecipe::validate() const {
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double sample_loss(LossKind loss, const Eigen::Ref<const Eigen::VectorXd>& logits,
                   const Eigen::Ref<const Eigen::VectorXd>& target) {
  if (loss == LossKind::mse) return 0.5 * (logits - target).squaredNorm();
  return log_sum_exp(logits) - logits.dot(target);
}

Eigen::VectorXd sample_loss_gradient(LossKind loss, const Eigen::Ref<const Eigen::VectorXd>& logits,
                                     const Eigen::Ref<const Eigen::VectorXd>& target) {
  if (loss == LossKind::mse) return logits - target;
  const double lse = log_sum_exp(logits);
  Eigen::VectorXd p = (logits.array() - lse).exp().matrix();
  return p - target;
}

Eigen::MatrixXd target_matrix(const Dataset& data, int output_dim) {
  const auto n = static_cast<Eigen::Index>(data.size());
  if (data.is_classification()) {
    if (!data.has_labels()) throw DomainError("training needs labels");
    if (data.num_classes != output_dim) {
      throw ShapeError("dataset has " + std::to_string(data.num_classes) + " classes, network outputs " +
                       std::to_string(output_dim));
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, output_dim);
    for (Eigen::Index i = 0; i < n; ++i) t(i, data.labels[static_cast<std::size_t>(i)]) = 1.0;
    return t;
  }
  if (data.targets.cols() != output_dim) throw ShapeError("regression targets do not match output dim");
  return data.targets;
}

TrainResult train_empirical(const NetworkSpec& spec, const TrainRecipe& recipe, const Dataset& train) {
  recipe.validate();
  spec.validate();
  if (train.input_dim() != spec.input_dim()) {
    throw ShapeError("layer 0 expects input dimension " + std::to_string(spec.input_dim()) +
                     ", dataset has " + std::to_string(train.input_dim()));
  }
  const Eigen::MatrixXd targets = target_matrix(train, spec.output_dim());
  auto init_engine = rng::make_engine(recipe.seed, "train.init");
  auto shuffle_engine = rng::make_engine(recipe.seed, "train.shuffle");

  TrainResult result;
  result.theta = init_params(spec, init_engine);
  const auto n = static_cast<Eigen::Index>(train.size());

  auto evaluate = [&](bool final_pass) {
    const Eigen::MatrixXd logits = forward_batch(spec, result.theta, train.inputs);
    double total = 0.0;
    double worst = 0.0;
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double l = sample_loss(recipe.loss, logits.row(i).transpose(), targets.row(i).transpose());
      total += l;
      worst = std::max(worst, l);
      if (train.is_classification()) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        if (arg == train.labels[static_cast<std::size_t>(i)]) ++correct;
      }
    }
    result.epoch_loss.push_back(n > 0 ? total / static_cast<double>(n) : 0.0);
    if (final_pass) {
      result.max_sample_loss = worst;
      result.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    }
  };

  evaluate(recipe.epochs == 0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_engine);
    for (Eigen::Index start = 0; start < n; start += recipe.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(recipe.batch_size, n - start);
      Eigen::MatrixXd xb(count, train.input_dim());
      Eigen::MatrixXd yb(count, spec.output_dim());
      for (Eigen::Index k = 0; k < count; ++k) {
        xb.row(k) = train.inputs.row(order[static_cast<std::size_t>(start + k)]);
        yb.row(k) = targets.row(order[static_cast<std::size_t>(start + k)]);
      }
      const Eigen::MatrixXd logits = forward_batch(spec, result.theta, xb);
      Eigen::MatrixXd grad_out(count, spec.output_dim());
      for (Eigen::Index k = 0; k < count; ++k) {
        grad_out.row(k) =
            sample_loss_gradient(recipe.loss, logits.row(k).transpose(), yb.row(k).transpose()).transpose();
      }
      grad_out /= static_cast<double>(count);
      result.theta.values() -= recipe.eta * vjp_batch(spec, result.theta, xb, grad_out);
    }
    evaluate(epoch + 1 == recipe.epochs);
  }
  return result;
}

}  // namespace tulip
