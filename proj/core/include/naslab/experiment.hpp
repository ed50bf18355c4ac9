#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "naslab/config.hpp"
#include "naslab/dataset.hpp"
#include "naslab/history.hpp"
#include "naslab/network.hpp"

namespace naslab {

/// Widths after dividing by the scale factor.
std::vector<std::size_t> effective_widths(const NetworkConfig& network);

/// VanillaNet: conv1 conv2 pool conv3 conv4 pool fc1 pred, 3x3 same-padded
/// convolutions, ReLU after every hidden layer. The regularizer setting
/// inserts dropout or batch norm. conv1..fc1 and pred are measured; under
/// nasreg all of them except pred are also regularized.
template <typename T>
Network<T> build_network(const ExperimentConfig& config, std::size_t classes, std::uint64_t seed,
                         std::size_t image_side = kCifarSide);

/// Name used in logs for a measured layer (batch-norm layers report the
/// conv/dense layer they normalize).
std::string measured_label(const std::string& layer_name);

/// Train/test/contaminated/probe sets for one experiment, shared by its repeats.
struct ExperimentData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> contaminated;
  Dataset probe;
  std::string description;
  bool standin = false;  // synthetic stand-in used because CIFAR was unavailable
};

/// Resolves the data source. `automatic` uses CIFAR from data.path or
/// $NASLAB_CIFAR_DIR when present and the synthetic stand-in otherwise.
ExperimentData prepare_data(const ExperimentConfig& config);

using ProgressFn = std::function<void(std::size_t run, const EpochRecord& record)>;

/// Trains one repeat with seed config.run.seed + run, writing artifacts
/// under `dir`: history.csv (rewritten every epoch), heatmaps/, heatmaps.csv,
/// stripe.ppm and weights.bin. A non-finite loss writes diagnostic.txt and
/// raises DataError.
RunHistory train_run(const ExperimentConfig& config, const ExperimentData& data, std::size_t run,
                     const std::filesystem::path& dir, const ProgressFn& progress = {});

struct ExperimentResult {
  std::vector<RunHistory> runs;
  std::filesystem::path out;
  std::string data_description;
  bool standin = false;
};

/// All repeats into config.run.out/run<r>, then lineplot.csv/.svg,
/// effective_config and meta (the only file holding a timestamp).
ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Re-emits stripe plots, heatmaps and the line plot of an experiment
/// directory from its logs. Returns the number of files written.
std::size_t render_logdir(const std::filesystem::path& out);

}  // namespace naslab
