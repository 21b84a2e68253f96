#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_support.hpp"
#include "tulip/errors.hpp"
#include "tulip/network.hpp"

using namespace tulip;
using tulip::testing::fd_jacobian;
using tulip::testing::random_params;
using tulip::testing::random_vector;

namespace {

// Plain loops, nothing shared with the library's forward pass.
Eigen::VectorXd naive_forward(const NetworkSpec& spec, const std::vector<LayerParams>& layers, Eigen::VectorXd x) {
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& w = layers[l].weight;
    Eigen::VectorXd next(w.rows());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double acc = layers[l].bias.size() ? layers[l].bias[r] : 0.0;
      for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * x[c];
      if (l + 1 < spec.num_layers()) {
        switch (spec.activations[l]) {
          case Activation::relu: acc = acc > 0 ? acc : 0.0; break;
          case Activation::tanh: acc = std::tanh(acc); break;
          case Activation::erf: acc = std::erf(acc); break;
          case Activation::identity: break;
        }
      }
      next[r] = acc;
    }
    x = next;
  }
  return x;
}

double max_rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(Network, ParameterCountOfSmallNet) {
  const auto spec = NetworkSpec::mlp({2, 3, 2}, Activation::relu);
  EXPECT_EQ(spec.parameter_count(), 17u);
  EXPECT_EQ(Layout::for_spec(spec)->total_size(), 17u);
}

TEST(Network, IdentityNetworkReturnsInput) {
  const auto spec = tulip::testing::linear_spec(3, 3);
  std::vector<LayerParams> layers{{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd()}};
  const ParamVector theta = flatten(spec, layers);
  const Eigen::Vector3d x(0.5, -1.0, 2.0);
  EXPECT_TRUE(forward(spec, theta, x).isApprox(x));
}

TEST(Network, ForwardMatchesNaiveImplementation) {
  for (Activation act : {Activation::relu, Activation::tanh, Activation::erf, Activation::identity}) {
    const auto spec = NetworkSpec::mlp({3, 7, 5, 4}, act);
    const ParamVector theta = random_params(spec, 11);
    const auto layers = unflatten(spec, theta);
    for (int i = 0; i < 10; ++i) {
      const Eigen::VectorXd x = random_vector(3, 100 + i);
      EXPECT_LT((forward(spec, theta, x) - naive_forward(spec, layers, x)).norm(), 1e-12) << to_string(act);
    }
  }
}

TEST(Network, BatchForwardMatchesRowwise) {
  const auto spec = NetworkSpec::mlp({2, 9, 3}, Activation::tanh);
  const ParamVector theta = random_params(spec, 3);
  const Eigen::MatrixXd inputs = tulip::testing::random_matrix(13, 2, 4);
  const Eigen::MatrixXd out = forward_batch(spec, theta, inputs);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    EXPECT_LT((out.row(i).transpose() - forward(spec, theta, inputs.row(i).transpose())).norm(), 1e-12);
  }
}

TEST(Network, ZeroPerturbationIsBitwiseIdentical) {
  const auto spec = NetworkSpec::mlp({2, 8, 3}, Activation::erf);
  const ParamVector theta = random_params(spec, 5);
  const Eigen::Vector2d x(0.3, -0.7);
  const Eigen::VectorXd a = forward(spec, theta, x);
  const Eigen::VectorXd b = forward(spec, perturb(theta, ParamVector::zeros_like(theta)), x);
  for (Eigen::Index k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Network, FlattenRoundTrip) {
  const auto spec = NetworkSpec::mlp({4, 6, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 8);
  const ParamVector again = flatten(spec, unflatten(spec, theta));
  EXPECT_EQ(theta.values(), again.values());
}

TEST(Network, JacobianOfLinearModelIsKronecker) {
  const auto spec = tulip::testing::linear_spec(3, 2);
  const ParamVector theta = random_params(spec, 1);
  const Eigen::Vector3d x(1.0, -2.0, 0.5);
  const Eigen::MatrixXd jac = param_jacobian(spec, theta, x);
  // row-major weights: parameter (r, c) sits at r * d + c
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(2, 6);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) expected(r, r * 3 + c) = x[c];
  EXPECT_LT((jac - expected).norm(), 1e-14);
}

TEST(Network, JacobianMatchesCentralDifferences) {
  for (Activation act : {Activation::relu, Activation::tanh, Activation::erf}) {
    const auto spec = NetworkSpec::mlp({2, 8, 2}, act);
    for (int trial = 0; trial < 5; ++trial) {
      const ParamVector theta = random_params(spec, 40 + trial);
      const Eigen::VectorXd x = random_vector(2, 60 + trial);
      EXPECT_LT(max_rel_err(param_jacobian(spec, theta, x), fd_jacobian(spec, theta, x)), 1e-6) << to_string(act);
    }
  }
}

TEST(Network, ReluWithoutBiasesHasZeroJacobianAtZeroInput) {
  const auto spec = NetworkSpec::mlp({3, 5, 2}, Activation::relu, false);
  const ParamVector theta = random_params(spec, 9);
  EXPECT_EQ(param_jacobian(spec, theta, Eigen::Vector3d::Zero()).norm(), 0.0);
}

TEST(Network, JvpMatchesJacobianProduct) {
  const auto spec = NetworkSpec::mlp({3, 10, 6, 2}, Activation::tanh);
  const ParamVector theta = random_params(spec, 21);
  const Eigen::VectorXd x = random_vector(3, 22);
  const ParamVector v(theta.layout_ptr(), random_vector(static_cast<Eigen::Index>(theta.size()), 23));
  const Eigen::VectorXd expected = param_jacobian(spec, theta, x) * v.values();
  EXPECT_LT((jvp(spec, theta, x, v) - expected).norm(), 1e-12 * std::max(1.0, expected.norm()));
}

TEST(Network, VjpBatchMatchesJacobianTranspose) {
  const auto spec = NetworkSpec::mlp({2, 7, 3}, Activation::erf);
  const ParamVector theta = random_params(spec, 31);
  const Eigen::MatrixXd inputs = tulip::testing::random_matrix(5, 2, 32);
  const Eigen::MatrixXd w = tulip::testing::random_matrix(5, 3, 33);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(theta.size()));
  for (Eigen::Index i = 0; i < 5; ++i) {
    expected += param_jacobian(spec, theta, inputs.row(i).transpose()).transpose() * w.row(i).transpose();
  }
  EXPECT_LT((vjp_batch(spec, theta, inputs, w) - expected).norm(), 1e-12 * expected.norm());
}

TEST(Network, ShapeMismatchNamesExpectedDimension) {
  const auto spec = NetworkSpec::mlp({3, 4, 2}, Activation::relu);
  const ParamVector theta = random_params(spec, 1);
  try {
    (void)forward(spec, theta, Eigen::Vector2d::Zero());
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos);
  }
  const auto other = NetworkSpec::mlp({3, 5, 2}, Activation::relu);
  EXPECT_THROW((void)forward(other, theta, Eigen::Vector3d::Zero()), ShapeError);
}

TEST(Network, InvalidSpecRejected) {
  NetworkSpec spec = NetworkSpec::mlp({2, 3, 2}, Activation::relu);
  spec.activations.clear();
  EXPECT_THROW(spec.validate(), ShapeError);
  EXPECT_THROW(parse_activation("softplus"), ConfigError);
}

TEST(Network, ModelJsonRoundTrip) {
  Model model{NetworkSpec::mlp({2, 5, 3}, Activation::erf), {}};
  model.params = random_params(model.spec, 77);
  const Model back = model_from_json(model_to_json(model));
  EXPECT_EQ(back.spec, model.spec);
  EXPECT_EQ(back.params.values(), model.params.values());

  const auto path = std::filesystem::temp_directory_path() / "tulip_test_model.json";
  save_model(model, path.string());
  EXPECT_EQ(load_model(path.string()).params.values(), model.params.values());
  std::filesystem::remove(path);
  EXPECT_THROW(load_model("/nonexistent/model.json"), IoError);
  EXPECT_THROW(model_from_json("{\"format\": 1}"), IoError);
}
