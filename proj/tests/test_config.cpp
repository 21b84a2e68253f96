#include <gtest/gtest.h>

#include "tulip/config_io.hpp"
#include "tulip/errors.hpp"
#include "tulip/format.hpp"

using namespace tulip;

TEST(Config, ParsesCommentsAndWhitespace) {
  const KeyValues kv = KeyValues::parse("# header\n epsilon = 0.01  # inline\n\nM=20\r\n");
  EXPECT_EQ(kv.get_double("epsilon", 0.0), 0.01);
  EXPECT_EQ(kv.get_int("M", 0), 20);
  EXPECT_EQ(kv.get_double("delta", 8.0), 8.0);
}

TEST(Config, Errors) {
  EXPECT_THROW(KeyValues::parse("epsilon 0.1\n"), ConfigError);
  EXPECT_THROW(KeyValues::parse("M = 1\nM = 2\n"), ConfigError);
  EXPECT_THROW(tulip_config_from(KeyValues::parse("epsilon = abc\n")), ConfigError);
  EXPECT_THROW(tulip_config_from(KeyValues::parse("espilon = 0.1\n")), ConfigError);
  EXPECT_THROW(tulip_config_from(KeyValues::parse("M = 0\n")), ConfigError);
  EXPECT_THROW(tulip_config_from(KeyValues::parse("seed = -3\n")), ConfigError);
  EXPECT_THROW(train_setup_from(KeyValues::parse("hidden = 4,x\n")), ConfigError);
}

TEST(Config, TulipConfigRoundTrip) {
  TulipConfig c;
  c.epsilon = 0.0031;
  c.delta = 4.5;
  c.lambda = 0.1 + 0.2;
  c.M = 33;
  c.J_scaling = 1.75;
  c.seed = 99;
  c.noise = NoiseKind::rademacher;
  c.draws = DrawMode::common;
  c.gamma_scale = Eigen::Vector3d(1.0, 0.5, 2.0);
  const TulipConfig back = tulip_config_from(KeyValues::parse(tulip_config_to_text(c)));
  EXPECT_EQ(back.epsilon, c.epsilon);
  EXPECT_EQ(back.lambda, c.lambda);
  EXPECT_EQ(back.M, 33);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.noise, NoiseKind::rademacher);
  EXPECT_EQ(back.draws, DrawMode::common);
  EXPECT_EQ(back.gamma_scale, c.gamma_scale);
}

TEST(Config, TrainAndEnsembleSetups) {
  const TrainSetup t = train_setup_from(KeyValues::parse("hidden = 64, 16\nactivation = relu\nloss = mse\n"));
  EXPECT_EQ(t.hidden, (std::vector<int>{64, 16}));
  EXPECT_EQ(t.activation, Activation::relu);
  EXPECT_EQ(t.recipe.loss, LossKind::mse);
  const EnsembleConfig e = ensemble_config_from(KeyValues::parse("ensemble = 7\nalpha = 0.1\n"));
  EXPECT_EQ(e.ensemble, 7u);
  EXPECT_EQ(e.alpha, 0.1);
  EXPECT_THROW(ensemble_config_from(KeyValues::parse("alpha = -1\n")), ConfigError);
}

TEST(Format, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_THROW(parse_double("1.5x"), IoError);
  EXPECT_THROW(parse_integer("12.0"), IoError);
}
