#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>

#include "naslab/dataset.hpp"
#include "naslab/file_io.hpp"

namespace naslab {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("naslab_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Two CIFAR-10 records built byte by byte: label, then 1024 R, 1024 G, 1024 B.
std::string two_record_fixture() {
  std::string bytes;
  for (int r = 0; r < 2; ++r) {
    bytes.push_back(static_cast<char>(r == 0 ? 3 : 9));
    for (std::size_t p = 0; p < kCifarPixels; ++p) bytes.push_back(static_cast<char>((p + 7 * r) % 256));
  }
  return bytes;
}

TEST(Cifar, ParsesHandBuiltRecords) {
  TempDir dir("cifar_fixture");
  write_file(dir.path() / "batch.bin", two_record_fixture());
  const Dataset ds = load_cifar_binary(dir.path() / "batch.bin", CifarVariant::cifar10);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 9}));
  EXPECT_EQ(ds.images.shape(), (Shape{2, 3, 32, 32}));
  // record 1, green channel, row 2, column 5 -> byte index 1024 + 69 + 7
  EXPECT_FLOAT_EQ(ds.images.at(1, 1, 2, 5), static_cast<float>((1024 + 69 + 7) % 256) / 255.0f);
  EXPECT_FLOAT_EQ(ds.images.at(0, 0, 0, 0), 0.0f);
  for (float v : ds.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Cifar, RoundTripIsBitIdentical) {
  TempDir dir("cifar_roundtrip");
  const std::string original = two_record_fixture();
  write_file(dir.path() / "a.bin", original);
  const Dataset ds = load_cifar_binary(dir.path() / "a.bin", CifarVariant::cifar10);
  write_cifar_binary(ds, dir.path() / "b.bin", CifarVariant::cifar10);
  EXPECT_EQ(read_file(dir.path() / "b.bin"), original);
}

TEST(Cifar, Cifar100CarriesCoarseAndFineLabels) {
  TempDir dir("cifar100");
  std::string bytes{static_cast<char>(19), static_cast<char>(99)};
  bytes.append(kCifarPixels, static_cast<char>(255));
  write_file(dir.path() / "train.bin", bytes);
  const Dataset ds = load_cifar_binary(dir.path() / "train.bin", CifarVariant::cifar100);
  EXPECT_EQ(ds.labels, (std::vector<int>{99}));
  EXPECT_EQ(ds.coarse_labels, (std::vector<int>{19}));
  EXPECT_EQ(ds.classes, 100u);
  EXPECT_FLOAT_EQ(ds.images[0], 1.0f);
  write_cifar_binary(ds, dir.path() / "copy.bin", CifarVariant::cifar100);
  EXPECT_EQ(read_file(dir.path() / "copy.bin"), bytes);
}

TEST(Cifar, TruncatedRecordNamesOffset) {
  TempDir dir("cifar_truncated");
  std::string bytes = two_record_fixture();
  bytes.resize(bytes.size() - 10);
  write_file(dir.path() / "t.bin", bytes);
  try {
    load_cifar_binary(dir.path() / "t.bin", CifarVariant::cifar10);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 3073"), std::string::npos) << e.what();
  }
}

TEST(Cifar, BadLabelAndEmptyFile) {
  TempDir dir("cifar_bad");
  std::string bytes = two_record_fixture();
  bytes[3073] = static_cast<char>(10);
  write_file(dir.path() / "bad.bin", bytes);
  EXPECT_THROW(load_cifar_binary(dir.path() / "bad.bin", CifarVariant::cifar10), FormatError);
  write_file(dir.path() / "empty.bin", "");
  EXPECT_TRUE(load_cifar_binary(dir.path() / "empty.bin", CifarVariant::cifar10).empty());
  EXPECT_THROW(load_cifar_binary(dir.path() / "missing.bin", CifarVariant::cifar10), IoError);
}

TEST(Cifar, DirectoryDetectionAndStandInMarker) {
  TempDir dir("cifar_dir");
  EXPECT_FALSE(locate_cifar(dir.path()));
  EXPECT_THROW(load_cifar_directory(dir.path()), IoError);
  write_standin_cifar(dir.path(), 4, 50, 20);
  const auto found = locate_cifar(dir.path());
  ASSERT_TRUE(found);
  EXPECT_EQ(found->first, CifarVariant::cifar10);
  EXPECT_TRUE(is_standin_cifar(found->second));
  const CifarSplit split = load_cifar_directory(dir.path());
  EXPECT_EQ(split.train.size(), 50u);
  EXPECT_EQ(split.test.size(), 20u);
  EXPECT_EQ(split.test.provenance.front(), Provenance::test_origin);
}

TEST(Synthetic, DeterministicAndBalanced) {
  const Dataset a = synthetic_dataset(1, 40, 4, 8);
  const Dataset b = synthetic_dataset(1, 40, 4, 8);
  const Dataset c = synthetic_dataset(2, 40, 4, 8);
  EXPECT_EQ(a.images, b.images);
  EXPECT_NE(a.images, c.images);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.labels[i], static_cast<int>(i % 4));
  for (float v : a.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Subset, DistinctIndicesAndErrors) {
  const auto idx = sample_indices(3, 100, 30);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 30u);
  EXPECT_TRUE(std::all_of(idx.begin(), idx.end(), [](std::size_t i) { return i < 100; }));
  const Dataset ds = synthetic_dataset(1, 20, 2, 4);
  EXPECT_THROW(subset(ds, 1, 21), ConfigError);
  EXPECT_EQ(subset(ds, 1, 20).size(), 20u);
}

TEST(Contamination, HalfTrainHalfTest) {
  const Dataset train = synthetic_dataset(1, 1200, 10, 4, {}, 0, Provenance::train_origin);
  const Dataset test = synthetic_dataset(2, 800, 10, 4, {}, 0, Provenance::test_origin);
  const Dataset mixed = build_contaminated_test_set(train, test, 7, 500);
  ASSERT_EQ(mixed.size(), 1000u);
  const auto from_train = std::count(mixed.provenance.begin(), mixed.provenance.end(), Provenance::train_origin);
  EXPECT_EQ(from_train, 500);
  // Shuffled together, so the first half is not all one source.
  const auto head = std::count(mixed.provenance.begin(), mixed.provenance.begin() + 500, Provenance::train_origin);
  EXPECT_GT(head, 0);
  EXPECT_LT(head, 500);
  EXPECT_THROW(build_contaminated_test_set(train, test, 7, 801), ConfigError);
}

TEST(Contamination, SamplesComeFromTheirSource) {
  const Dataset train = synthetic_dataset(1, 60, 3, 4, {}, 0, Provenance::train_origin);
  const Dataset test = synthetic_dataset(2, 60, 3, 4, {}, 0, Provenance::test_origin);
  const Dataset mixed = build_contaminated_test_set(train, test, 5, 20);
  const std::size_t pixels = 3 * 4 * 4;
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    const Dataset& source = mixed.provenance[i] == Provenance::train_origin ? train : test;
    const float* img = mixed.images.raw() + i * pixels;
    bool found = false;
    for (std::size_t j = 0; j < source.size() && !found; ++j) {
      found = std::equal(img, img + pixels, source.images.raw() + j * pixels) && source.labels[j] == mixed.labels[i];
    }
    EXPECT_TRUE(found) << "sample " << i;
  }
}

}  // namespace
}  // namespace naslab
