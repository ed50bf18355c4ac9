#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace naslab {

struct LayerAggregate {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;

  friend bool operator==(const LayerAggregate&, const LayerAggregate&) = default;
};

/// One row of a run log. Epoch 0 is the probe taken before any update.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::optional<double> contaminated_loss;
  double test_accuracy = 0.0;
  double penalty = 0.0;                     // mean NAS penalty over the epoch's minibatches
  std::vector<LayerAggregate> layers;       // one per measured layer
  std::vector<double> filter_correlation;  // max pairwise cosine per measured layer

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct HistoryLayer {
  std::string name;
  std::size_t channels = 0;

  friend bool operator==(const HistoryLayer&, const HistoryLayer&) = default;
};

/// Per-epoch log of one training run, layers ordered by depth.
class RunHistory {
 public:
  RunHistory() = default;
  RunHistory(std::uint64_t seed, std::vector<HistoryLayer> layers);

  std::uint64_t seed() const { return seed_; }
  const std::vector<HistoryLayer>& layers() const { return layers_; }
  const std::vector<EpochRecord>& epochs() const { return epochs_; }
  std::size_t size() const { return epochs_.size(); }
  bool empty() const { return epochs_.empty(); }
  const EpochRecord& back() const;

  /// AlignmentError unless epochs strictly increase and the record has one
  /// aggregate per layer; DataError if an aggregate leaves [0, 1 - 1/D] or is unordered.
  void append(EpochRecord record);

  std::vector<std::size_t> epoch_numbers() const;
  std::vector<double> test_losses() const;
  std::vector<double> contaminated_losses() const;  // StateError if any record lacks one
  std::vector<double> layer_medians(std::size_t layer) const;

  /// Record for `epoch`, if logged.
  const EpochRecord* find(std::size_t epoch) const;

  friend bool operator==(const RunHistory&, const RunHistory&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::vector<HistoryLayer> layers_;
  std::vector<EpochRecord> epochs_;
};

/// CSV with '#' metadata lines for the seed and layers, then one row per
/// epoch. Numbers use the shortest round-trip form, so write/read/write is
/// byte-identical.
std::string history_csv(const RunHistory& history);
RunHistory parse_history_csv(const std::string& text);

void write_history(const RunHistory& history, const std::filesystem::path& path);
RunHistory read_history(const std::filesystem::path& path);

}  // namespace naslab
