#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "naslab/tensor.hpp"

namespace naslab {

enum class Provenance : std::uint8_t { train_origin, test_origin };

std::string_view to_string(Provenance provenance);

enum class CifarVariant { cifar10, cifar100 };

std::string_view to_string(CifarVariant variant);

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;

/// Record length in bytes: one label byte (cifar10) or coarse + fine (cifar100), then 3072 pixels.
std::size_t cifar_record_size(CifarVariant variant);
std::size_t cifar_class_count(CifarVariant variant);

/// Labelled images, channel-major [count, 3, side, side], pixel bytes scaled by 1/255.
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  std::vector<int> coarse_labels;  // cifar100 only
  std::vector<Provenance> provenance;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  Tensor<float> gather_images(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

/// Parses one CIFAR binary file. FormatError if the size is not a multiple of
/// the record length (naming the offset of the truncated record) or a label
/// byte is out of range. An empty file yields an empty dataset.
Dataset load_cifar_binary(const std::filesystem::path& path, CifarVariant variant,
                          Provenance provenance = Provenance::train_origin);

/// Inverse of load_cifar_binary; writes bit-identical records for loaded data.
void write_cifar_binary(const Dataset& dataset, const std::filesystem::path& path, CifarVariant variant);

struct CifarSplit {
  CifarVariant variant = CifarVariant::cifar10;
  Dataset train;
  Dataset test;
};

/// Finds a CIFAR-100 (train.bin/test.bin) or CIFAR-10 (data_batch_*.bin/test_batch.bin)
/// set in `dir` or its standard extracted subdirectory. Prefers CIFAR-100.
std::optional<std::pair<CifarVariant, std::filesystem::path>> locate_cifar(const std::filesystem::path& dir);

/// Loads a located CIFAR directory. IoError if nothing is found.
CifarSplit load_cifar_directory(const std::filesystem::path& dir);

/// Knobs for the synthetic generator. Defaults give an easy, linearly
/// separable problem; the stand-in preset makes it noisy enough to overfit.
struct SyntheticOptions {
  std::size_t blobs_per_class = 2;
  double pixel_noise = 0.05;       // std of additive Gaussian noise
  double position_jitter = 0.0;    // blob centre jitter, fraction of the side
  double amplitude_jitter = 0.0;   // relative blob amplitude jitter
  std::size_t distractors = 0;     // blobs borrowed from random other classes
  double label_noise = 0.0;        // fraction of labels redrawn uniformly
};

/// Harder preset used when CIFAR is not available locally.
SyntheticOptions cifar_standin_options();

/// Class-conditional Gaussian-blob images. Sample i has class i % classes
/// before label noise. Deterministic in `seed`; `prototype_seed` fixes the
/// class prototypes so train and test sets can share them.
Dataset synthetic_dataset(std::uint64_t seed, std::size_t count, std::size_t classes, std::size_t side,
                          const SyntheticOptions& options = {}, std::uint64_t prototype_seed = 0,
                          Provenance provenance = Provenance::train_origin);

/// Writes the synthetic stand-in in CIFAR-10 binary layout under
/// `dir`/cifar-10-batches-bin (data_batch_1.bin, test_batch.bin) plus a
/// STANDIN marker file, so it loads through the regular CIFAR path.
std::filesystem::path write_standin_cifar(const std::filesystem::path& dir, std::uint64_t seed,
                                          std::size_t train_count = 10000, std::size_t test_count = 2000);

/// True if `dir` (as returned by locate_cifar) holds a stand-in written by write_standin_cifar.
bool is_standin_cifar(const std::filesystem::path& dir);

/// `count` distinct indices from [0, population), in shuffled order.
std::vector<std::size_t> sample_indices(std::uint64_t seed, std::size_t population, std::size_t count);

/// Dataset restricted to `indices`, in that order.
Dataset take(const Dataset& dataset, std::span<const std::size_t> indices);

/// Deterministic random subset of `count` samples. ConfigError if count exceeds the size.
Dataset subset(const Dataset& dataset, std::uint64_t seed, std::size_t count);

/// `per_source` samples from each of `train` and `test`, shuffled together.
/// Provenance of each sample is preserved. ConfigError if either source is too small.
Dataset build_contaminated_test_set(const Dataset& train, const Dataset& test, std::uint64_t seed,
                                    std::size_t per_source);

}  // namespace naslab
