#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "naslab/nas_regularizer.hpp"

namespace naslab {

enum class RegularizerKind { none, l1, l2, dropout, batch_norm, nasreg };
enum class DataSource { automatic, cifar, synthetic, standin };

std::string_view to_string(RegularizerKind kind);
std::string_view to_string(DataSource source);

struct NetworkConfig {
  std::string architecture = "vanilla";
  std::size_t scale = 16;                                     // divides every width
  std::vector<std::size_t> widths = {256, 256, 512, 512, 1024};  // conv1..conv4, fc1
  bool bias = true;
};

struct RegularizerSettings {
  RegularizerKind kind = RegularizerKind::none;
  double coefficient = 0.0;  // l1 / l2
  double dropout_conv = 0.3;
  double dropout_fc = 0.5;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  LambdaRule lambda_rule = LambdaRule::one_over_r;
  std::vector<double> lambdas;  // fixed rule
};

struct OptimizerConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
};

inline constexpr std::size_t kMaxEpochs = 300;

struct DataConfig {
  DataSource source = DataSource::automatic;
  std::string path = "data";
  std::size_t train_size = 5000;
  std::size_t test_size = 1000;
  bool contaminated = true;
  std::size_t contaminated_per_source = 500;
  std::size_t synthetic_classes = 10;  // synthetic and standin only
};

struct ProbeConfig {
  std::size_t batch_size = 64;
  std::size_t heatmap_index = 0;  // position inside the probe set
  std::size_t heatmap_scale = 4;
  std::size_t stripe_cell = 8;
  bool heatmaps = true;
};

struct RunConfig {
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  std::string out = "runs/experiment";
};

struct ExperimentConfig {
  NetworkConfig network;
  RegularizerSettings regularizer;
  OptimizerConfig optimizer;
  DataConfig data;
  ProbeConfig probe;
  RunConfig run;

  /// ConfigError naming the first offending field.
  void validate() const;
};

/// Parses INI text ("[section]" headers, "key = value" lines, ';' or '#'
/// comments). Unknown sections or keys, malformed values and out-of-range
/// settings raise ConfigError naming the field. Unset fields keep their defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field, defaults resolved, in a fixed order. parse_config of the
/// result yields an equal config, and writing it again is byte-identical.
std::string effective_config_text(const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace naslab
