#include <gtest/gtest.h>

#include <string>

#include "naslab/config.hpp"
#include "naslab/error.hpp"

namespace naslab {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, DefaultsMatchDeskSetup) {
  const ExperimentConfig c = parse_config("");
  EXPECT_EQ(c.network.scale, 16u);
  EXPECT_EQ(c.optimizer.learning_rate, 0.01);
  EXPECT_EQ(c.optimizer.batch_size, 32u);
  EXPECT_EQ(c.optimizer.epochs, 30u);
  EXPECT_EQ(c.run.repeats, 3u);
  EXPECT_EQ(c.regularizer.kind, RegularizerKind::none);
  EXPECT_EQ(c.regularizer.lambda_rule, LambdaRule::one_over_r);
}

TEST(Config, ParsesAllSections) {
  const ExperimentConfig c = parse_config(R"(
# comment
[network]
scale = 8
widths = 64, 64, 128, 128, 256
[regularizer]
kind = nasreg
lambda_rule = fixed
lambdas = 0.1, 0.2
[optimizer]
epochs = 4
[data]
source = synthetic
contaminated = false
[probe]
heatmaps = off
[run]
seed = 99
out = somewhere
)");
  EXPECT_EQ(c.network.scale, 8u);
  EXPECT_EQ(c.network.widths.back(), 256u);
  EXPECT_EQ(c.regularizer.kind, RegularizerKind::nasreg);
  EXPECT_EQ(c.regularizer.lambdas, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.optimizer.epochs, 4u);
  EXPECT_EQ(c.data.source, DataSource::synthetic);
  EXPECT_FALSE(c.data.contaminated);
  EXPECT_FALSE(c.probe.heatmaps);
  EXPECT_EQ(c.run.seed, 99u);
  EXPECT_EQ(c.run.out, "somewhere");
}

TEST(Config, EffectiveTextRoundTrips) {
  ExperimentConfig c = parse_config("[regularizer]\nkind = l2\ncoefficient = 0.0005\n[optimizer]\nlearning_rate = 0.1\n");
  const std::string text = effective_config_text(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_TRUE(back == c);
  EXPECT_EQ(effective_config_text(back), text);
  EXPECT_EQ(back.regularizer.coefficient, 0.0005);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(error_of("[network]\ndepth = 3\n").find("network.depth"), std::string::npos);
  EXPECT_NE(error_of("[nope]\nx = 1\n").find("nope.x"), std::string::npos);
  EXPECT_NE(error_of("[optimizer]\nepochs = many\n").find("optimizer.epochs"), std::string::npos);
  EXPECT_NE(error_of("[optimizer]\nepochs = 301\n").find("optimizer.epochs"), std::string::npos);
  EXPECT_NE(error_of("[optimizer]\nlearning_rate = -1\n").find("learning_rate"), std::string::npos);
  EXPECT_NE(error_of("[regularizer]\nkind = weird\n").find("regularizer.kind"), std::string::npos);
  EXPECT_NE(error_of("[regularizer]\nlambdas = -0.5\n").find("regularizer.lambdas"), std::string::npos);
  EXPECT_NE(error_of("[regularizer]\ndropout_conv = 1.0\n").find("dropout_conv"), std::string::npos);
  EXPECT_NE(error_of("[probe]\nbatch_size = 4\nheatmap_index = 4\n").find("heatmap_index"), std::string::npos);
  EXPECT_NE(error_of("[network]\nscale = 512\n").find("network.widths"), std::string::npos);
  EXPECT_FALSE(error_of("stray = 1\n").empty());
}

TEST(Config, EmptySectionIsAllowed) {
  EXPECT_NO_THROW(parse_config("[network]\n[run]\nrepeats = 1\n"));
}

TEST(Config, ZeroEpochsIsValid) {
  EXPECT_EQ(parse_config("[optimizer]\nepochs = 0\n").optimizer.epochs, 0u);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/naslab.cfg"), IoError);
}

}  // namespace
}  // namespace naslab
