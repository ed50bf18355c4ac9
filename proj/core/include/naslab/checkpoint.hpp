#pragma once

#include <filesystem>
#include <string>

#include "naslab/config.hpp"
#include "naslab/network.hpp"

namespace naslab {

/// Final weights of one run plus what is needed to rebuild the network.
struct Checkpoint {
  ExperimentConfig config;
  std::size_t classes = 0;
  std::size_t image_side = 0;
  Network<float> network;
};

/// Binary file: magic, class count, image side, the effective config text,
/// then every parameter and batch-norm running statistic by name.
void save_checkpoint(Network<float>& network, const ExperimentConfig& config, std::size_t classes,
                     std::size_t image_side, const std::filesystem::path& path);

/// Rebuilds the network from the embedded config and restores every tensor.
/// FormatError on a malformed file or a tensor the rebuilt network lacks.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace naslab
