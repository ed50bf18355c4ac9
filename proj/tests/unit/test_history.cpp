#include <gtest/gtest.h>

#include <filesystem>

#include "naslab/error.hpp"
#include "naslab/file_io.hpp"
#include "naslab/history.hpp"
#include "naslab/overfit.hpp"

namespace naslab {
namespace {

RunHistory sample_history(std::size_t epochs) {
  RunHistory h(17, {{"conv1", 4}, {"pred", 10}});
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.train_loss = 2.0 / (1.0 + static_cast<double>(e));
    r.test_loss = 1.0 + 0.1 * static_cast<double>(e) + 1.0 / 3.0;
    r.contaminated_loss = 0.7 + 1e-17 * static_cast<double>(e);
    r.test_accuracy = 0.1 * static_cast<double>(e % 10);
    r.penalty = -0.123456789012345;
    r.layers = {{0.1, 0.2, 0.3 + 0.01 * static_cast<double>(e)}, {0.0, 0.45, 0.9}};
    r.filter_correlation = {0.5, 0.25};
    h.append(r);
  }
  return h;
}

TEST(RunHistory, CsvRoundTripIsExact) {
  const RunHistory h = sample_history(5);
  const std::string text = history_csv(h);
  const RunHistory back = parse_history_csv(text);
  EXPECT_EQ(back, h);
  EXPECT_EQ(history_csv(back), text);
}

TEST(RunHistory, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "naslab_history_test.csv";
  const RunHistory h = sample_history(3);
  write_history(h, path);
  EXPECT_EQ(read_history(path), h);
  std::filesystem::remove(path);
}

TEST(RunHistory, Accessors) {
  const RunHistory h = sample_history(4);
  EXPECT_EQ(h.epoch_numbers(), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(h.layer_medians(1), (std::vector<double>{0.45, 0.45, 0.45, 0.45}));
  ASSERT_NE(h.find(2), nullptr);
  EXPECT_EQ(h.find(2)->epoch, 2u);
  EXPECT_EQ(h.find(9), nullptr);
}

TEST(RunHistory, RejectsMisalignedRecords) {
  RunHistory h = sample_history(2);
  EpochRecord r = h.back();
  EXPECT_THROW(h.append(r), AlignmentError);  // epoch not increasing
  r.epoch = 5;
  r.layers.pop_back();
  EXPECT_THROW(h.append(r), AlignmentError);
  r = h.back();
  r.epoch = 5;
  r.contaminated_loss.reset();
  EXPECT_THROW(h.append(r), AlignmentError);
}

TEST(RunHistory, RejectsOutOfRangeAggregates) {
  RunHistory h = sample_history(1);
  EpochRecord r = h.back();
  r.epoch = 1;
  r.layers[0] = {0.1, 0.8, 0.9};  // D = 4 allows at most 0.75
  EXPECT_THROW(h.append(r), DataError);
  r.layers[0] = {0.3, 0.2, 0.4};
  EXPECT_THROW(h.append(r), DataError);
}

TEST(RunHistory, MalformedCsvIsFormatError) {
  std::string text = history_csv(sample_history(2));
  EXPECT_THROW(parse_history_csv(text.substr(0, text.size() - 6) + "x,\n"), FormatError);
  EXPECT_THROW(parse_history_csv("epoch,train_loss\n0,1\n"), FormatError);
}

TEST(Overfit, SmoothingReference) {
  const std::vector<double> losses{3, 2, 1, 1.5, 2, 2.5, 3};
  EXPECT_EQ(smooth_losses(losses), (std::vector<double>{2.5, 2, 1.5, 1.5, 2, 2.5, 2.75}));
}

TEST(Overfit, DetectsUShapeAndBreaksTiesByRawLoss) {
  const std::vector<std::size_t> epochs{0, 1, 2, 3, 4, 5, 6};
  const std::vector<double> losses{3, 2, 1, 1.5, 2, 2.5, 3};
  const auto v = detect_overfit_epoch(epochs, losses);
  EXPECT_EQ(v.epoch, 2u);
  EXPECT_TRUE(v.overfit);
  EXPECT_DOUBLE_EQ(v.min_smoothed, 1.5);
  EXPECT_DOUBLE_EQ(v.final_smoothed, 2.75);
}

TEST(Overfit, MonotoneDecreaseIsNotOverfit) {
  const std::vector<std::size_t> epochs{0, 1, 2, 3, 4};
  const std::vector<double> losses{3, 2.5, 2, 1.5, 1};
  const auto v = detect_overfit_epoch(epochs, losses);
  EXPECT_EQ(v.epoch, 4u);
  EXPECT_FALSE(v.overfit);
}

TEST(Overfit, RatioBoundaryIsStrict) {
  const std::vector<std::size_t> epochs{0, 1, 2, 3, 4, 5};
  // smoothed: 1.5, 1, 1, 1.1, 1.1, 1.1
  const std::vector<double> losses{2, 1, 1, 1.1, 1.1, 1.1};
  EXPECT_FALSE(detect_overfit_epoch(epochs, losses, 1.1).overfit);
  EXPECT_TRUE(detect_overfit_epoch(epochs, losses, 1.09).overfit);
}

TEST(Overfit, ErrorsOnShortOrMisalignedInput) {
  const std::vector<std::size_t> two{0, 1};
  const std::vector<double> losses{1, 2};
  EXPECT_THROW(detect_overfit_epoch(two, losses), InsufficientDataError);
  const std::vector<std::size_t> three{0, 1, 2};
  EXPECT_THROW(detect_overfit_epoch(three, losses), AlignmentError);
}

TEST(Overfit, HistoryOverloadUsesContaminatedLossOnRequest) {
  const RunHistory h = sample_history(6);
  EXPECT_TRUE(detect_overfit_epoch(h).overfit);
  EXPECT_FALSE(detect_overfit_epoch(h, kDefaultOverfitRatio, true).overfit);
}

}  // namespace
}  // namespace naslab
