#include "naslab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <optional>

#include "naslab/random.hpp"

namespace naslab {

namespace fs = std::filesystem;

std::string_view to_string(Provenance provenance) {
  return provenance == Provenance::train_origin ? "train" : "test";
}

std::string_view to_string(CifarVariant variant) { return variant == CifarVariant::cifar10 ? "cifar10" : "cifar100"; }

std::size_t cifar_record_size(CifarVariant variant) {
  return (variant == CifarVariant::cifar10 ? 1 : 2) + kCifarPixels;
}

std::size_t cifar_class_count(CifarVariant variant) { return variant == CifarVariant::cifar10 ? 10 : 100; }

Tensor<float> Dataset::gather_images(std::span<const std::size_t> indices) const {
  Shape shape = images.shape();
  const std::size_t per_sample = size() == 0 ? 0 : images.size() / size();
  shape[0] = indices.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ConfigError(fmt::format("sample index {} outside dataset of {}", indices[i], size()));
    std::copy_n(images.raw() + indices[i] * per_sample, per_sample, out.raw() + i * per_sample);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset load_cifar_binary(const fs::path& path, CifarVariant variant, Provenance provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open CIFAR file '{}'", path.string()));
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t record = cifar_record_size(variant);
  if (bytes.size() % record != 0) {
    const std::size_t offset = bytes.size() / record * record;
    throw FormatError(fmt::format("'{}': truncated {} record at byte offset {} ({} bytes, record length {})",
                                  path.string(), to_string(variant), offset, bytes.size(), record));
  }
  const std::size_t count = bytes.size() / record;
  const std::size_t label_bytes = record - kCifarPixels;
  const std::size_t classes = cifar_class_count(variant);

  Dataset ds;
  ds.classes = classes;
  ds.images = Tensor<float>({count, 3, kCifarSide, kCifarSide});
  ds.labels.resize(count);
  ds.provenance.assign(count, provenance);
  if (variant == CifarVariant::cifar100) ds.coarse_labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* rec = bytes.data() + i * record;
    const std::size_t fine_offset = i * record + label_bytes - 1;
    if (variant == CifarVariant::cifar100) {
      if (rec[0] >= 20) {
        throw FormatError(fmt::format("'{}': coarse label {} >= 20 at byte offset {}", path.string(), rec[0], i * record));
      }
      ds.coarse_labels[i] = rec[0];
    }
    const unsigned fine = rec[label_bytes - 1];
    if (fine >= classes) {
      throw FormatError(fmt::format("'{}': label {} >= {} at byte offset {}", path.string(), fine, classes, fine_offset));
    }
    ds.labels[i] = static_cast<int>(fine);
    float* dst = ds.images.raw() + i * kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) dst[p] = static_cast<float>(rec[label_bytes + p]) / 255.0f;
  }
  return ds;
}

void write_cifar_binary(const Dataset& dataset, const fs::path& path, CifarVariant variant) {
  if (dataset.size() > 0 && dataset.images.shape() != Shape{dataset.size(), 3, kCifarSide, kCifarSide}) {
    throw ConfigError(fmt::format("CIFAR layout needs [N, 3, 32, 32] images, got {}",
                                  to_string(dataset.images.shape())));
  }
  const std::size_t record = cifar_record_size(variant);
  std::vector<unsigned char> bytes(dataset.size() * record);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    unsigned char* rec = bytes.data() + i * record;
    const int fine = dataset.labels[i];
    if (fine < 0 || static_cast<std::size_t>(fine) >= cifar_class_count(variant)) {
      throw DataError(fmt::format("label {} does not fit {}", fine, to_string(variant)));
    }
    if (variant == CifarVariant::cifar100) {
      rec[0] = static_cast<unsigned char>(dataset.coarse_labels.empty() ? 0 : dataset.coarse_labels[i]);
      rec[1] = static_cast<unsigned char>(fine);
    } else {
      rec[0] = static_cast<unsigned char>(fine);
    }
    const float* src = dataset.images.raw() + i * kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const long v = std::lround(static_cast<double>(std::clamp(src[p], 0.0f, 1.0f)) * 255.0);
      rec[record - kCifarPixels + p] = static_cast<unsigned char>(v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

namespace {

Dataset concatenate(std::vector<Dataset> parts) {
  Dataset out;
  if (parts.empty()) return out;
  out.classes = parts.front().classes;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  Shape shape = parts.front().images.shape();
  shape[0] = total;
  std::vector<float> pixels;
  pixels.reserve(shape_size(shape));
  for (auto& p : parts) {
    pixels.insert(pixels.end(), p.images.data().begin(), p.images.data().end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.coarse_labels.insert(out.coarse_labels.end(), p.coarse_labels.begin(), p.coarse_labels.end());
    out.provenance.insert(out.provenance.end(), p.provenance.begin(), p.provenance.end());
  }
  out.images = Tensor<float>(shape, std::move(pixels));
  return out;
}

bool all_exist(const fs::path& dir, std::initializer_list<const char*> names) {
  return std::all_of(names.begin(), names.end(), [&](const char* n) { return fs::is_regular_file(dir / n); });
}

}  // namespace

std::optional<std::pair<CifarVariant, fs::path>> locate_cifar(const fs::path& dir) {
  for (const fs::path& candidate : {dir / "cifar-100-binary", dir}) {
    if (all_exist(candidate, {"train.bin", "test.bin"})) return std::pair{CifarVariant::cifar100, candidate};
  }
  for (const fs::path& candidate : {dir / "cifar-10-batches-bin", dir}) {
    if (all_exist(candidate, {"data_batch_1.bin", "test_batch.bin"})) {
      return std::pair{CifarVariant::cifar10, candidate};
    }
  }
  return std::nullopt;
}

CifarSplit load_cifar_directory(const fs::path& dir) {
  const auto found = locate_cifar(dir);
  if (!found) throw IoError(fmt::format("no CIFAR-10/100 binary files found under '{}'", dir.string()));
  const auto& [variant, root] = *found;
  CifarSplit split;
  split.variant = variant;
  if (variant == CifarVariant::cifar100) {
    split.train = load_cifar_binary(root / "train.bin", variant, Provenance::train_origin);
    split.test = load_cifar_binary(root / "test.bin", variant, Provenance::test_origin);
  } else {
    std::vector<Dataset> parts;
    for (int i = 1; i <= 5; ++i) {
      const fs::path batch = root / fmt::format("data_batch_{}.bin", i);
      if (fs::is_regular_file(batch)) parts.push_back(load_cifar_binary(batch, variant, Provenance::train_origin));
    }
    split.train = concatenate(std::move(parts));
    split.test = load_cifar_binary(root / "test_batch.bin", variant, Provenance::test_origin);
  }
  return split;
}

SyntheticOptions cifar_standin_options() {
  SyntheticOptions o;
  o.blobs_per_class = 3;
  o.pixel_noise = 0.12;
  o.position_jitter = 0.12;
  o.amplitude_jitter = 0.5;
  o.distractors = 2;
  o.label_noise = 0.2;
  return o;
}

namespace {

struct Blob {
  double cx, cy, sigma;
  double color[3];
};

Blob random_blob(Rng& rng, std::size_t side) {
  const auto s = static_cast<double>(side);
  Blob b{};
  b.cx = rng.uniform(0.15, 0.85) * s;
  b.cy = rng.uniform(0.15, 0.85) * s;
  b.sigma = rng.uniform(0.06, 0.18) * s;
  for (double& c : b.color) c = rng.uniform(-0.6, 0.6);
  return b;
}

void paint(float* image, std::size_t side, const Blob& blob, double amplitude, double dx, double dy) {
  const std::size_t plane = side * side;
  const double inv = 1.0 / (2.0 * blob.sigma * blob.sigma);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double ex = static_cast<double>(x) - (blob.cx + dx);
      const double ey = static_cast<double>(y) - (blob.cy + dy);
      const double w = amplitude * std::exp(-(ex * ex + ey * ey) * inv);
      for (std::size_t c = 0; c < 3; ++c) image[c * plane + y * side + x] += static_cast<float>(w * blob.color[c]);
    }
  }
}

}  // namespace

Dataset synthetic_dataset(std::uint64_t seed, std::size_t count, std::size_t classes, std::size_t side,
                          const SyntheticOptions& options, std::uint64_t prototype_seed, Provenance provenance) {
  if (classes == 0 || count < classes) {
    throw ConfigError(fmt::format("synthetic dataset needs count >= classes >= 1 (count {}, classes {})", count,
                                  classes));
  }
  if (side == 0) throw ConfigError("synthetic image side must be positive");
  if (options.blobs_per_class == 0) throw ConfigError("synthetic classes need at least one blob");

  Rng proto_rng(derive_seed(prototype_seed, 0xC1A55));
  std::vector<std::vector<Blob>> prototypes(classes);
  for (auto& proto : prototypes) {
    for (std::size_t i = 0; i < options.blobs_per_class; ++i) proto.push_back(random_blob(proto_rng, side));
  }

  Rng rng(seed);
  const std::size_t plane = side * side;
  const auto s = static_cast<double>(side);
  Dataset ds;
  ds.classes = classes;
  ds.images = Tensor<float>({count, 3, side, side});
  ds.labels.resize(count);
  ds.provenance.assign(count, provenance);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % classes;
    float* image = ds.images.raw() + i * 3 * plane;
    std::fill(image, image + 3 * plane, 0.5f);
    for (const Blob& blob : prototypes[label]) {
      const double amp = 1.0 + options.amplitude_jitter * rng.uniform(-1.0, 1.0);
      paint(image, side, blob, amp, options.position_jitter * s * rng.normal(), options.position_jitter * s * rng.normal());
    }
    for (std::size_t d = 0; d < options.distractors && classes > 1; ++d) {
      std::size_t other = static_cast<std::size_t>(rng.below(classes - 1));
      if (other >= label) ++other;
      const Blob& blob = prototypes[other][rng.below(prototypes[other].size())];
      const double amp = 0.5 * (1.0 + options.amplitude_jitter * rng.uniform(-1.0, 1.0));
      paint(image, side, blob, amp, options.position_jitter * s * rng.normal(), options.position_jitter * s * rng.normal());
    }
    for (std::size_t p = 0; p < 3 * plane; ++p) {
      const double v = image[p] + options.pixel_noise * rng.normal();
      image[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    int assigned = static_cast<int>(label);
    if (options.label_noise > 0.0 && rng.uniform() < options.label_noise) {
      assigned = static_cast<int>(rng.below(classes));
    }
    ds.labels[i] = assigned;
  }
  return ds;
}

std::filesystem::path write_standin_cifar(const fs::path& dir, std::uint64_t seed, std::size_t train_count,
                                          std::size_t test_count) {
  const fs::path root = dir / "cifar-10-batches-bin";
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", root.string(), ec.message()));
  const auto options = cifar_standin_options();
  const std::uint64_t prototypes = derive_seed(seed, 17);
  const Dataset train = synthetic_dataset(derive_seed(seed, 15), train_count, 10, kCifarSide, options, prototypes);
  const Dataset test = synthetic_dataset(derive_seed(seed, 16), test_count, 10, kCifarSide, options, prototypes,
                                         Provenance::test_origin);
  write_cifar_binary(train, root / "data_batch_1.bin", CifarVariant::cifar10);
  write_cifar_binary(test, root / "test_batch.bin", CifarVariant::cifar10);
  std::ofstream marker(root / "STANDIN");
  marker << fmt::format("synthetic stand-in, seed {}, {} train / {} test images; not CIFAR\n", seed, train_count,
                        test_count);
  if (!marker) throw IoError(fmt::format("cannot write '{}'", (root / "STANDIN").string()));
  return root;
}

bool is_standin_cifar(const fs::path& dir) { return fs::is_regular_file(dir / "STANDIN"); }

std::vector<std::size_t> sample_indices(std::uint64_t seed, std::size_t population, std::size_t count) {
  if (count > population) {
    throw ConfigError(fmt::format("cannot draw {} samples from a population of {}", count, population));
  }
  std::vector<std::size_t> idx(population);
  for (std::size_t i = 0; i < population; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(count);
  return idx;
}

Dataset take(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.classes = dataset.classes;
  out.images = dataset.gather_images(indices);
  out.labels = dataset.gather_labels(indices);
  for (std::size_t i : indices) {
    out.provenance.push_back(dataset.provenance.at(i));
    if (!dataset.coarse_labels.empty()) out.coarse_labels.push_back(dataset.coarse_labels.at(i));
  }
  return out;
}

Dataset subset(const Dataset& dataset, std::uint64_t seed, std::size_t count) {
  const auto idx = sample_indices(seed, dataset.size(), count);
  return take(dataset, idx);
}

Dataset build_contaminated_test_set(const Dataset& train, const Dataset& test, std::uint64_t seed,
                                    std::size_t per_source) {
  if (train.size() < per_source || test.size() < per_source) {
    throw ConfigError(fmt::format("contaminated test set needs {} samples per source (train has {}, test has {})",
                                  per_source, train.size(), test.size()));
  }
  if (train.classes != test.classes) throw ConfigError("train and test class counts differ");
  Dataset from_train = subset(train, derive_seed(seed, 1), per_source);
  Dataset from_test = subset(test, derive_seed(seed, 2), per_source);
  from_train.provenance.assign(per_source, Provenance::train_origin);
  from_test.provenance.assign(per_source, Provenance::test_origin);
  if (from_train.coarse_labels.empty() != from_test.coarse_labels.empty()) {
    from_train.coarse_labels.clear();
    from_test.coarse_labels.clear();
  }
  Dataset mixed = concatenate({std::move(from_train), std::move(from_test)});
  const auto order = sample_indices(derive_seed(seed, 3), mixed.size(), mixed.size());
  return take(mixed, order);
}

}  // namespace naslab
