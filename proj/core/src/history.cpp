#include "naslab/history.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <sstream>

#include "naslab/error.hpp"
#include "naslab/file_io.hpp"

namespace naslab {

namespace {

constexpr std::string_view kMagic = "# naslab history v1";
constexpr double kBoundSlack = 1e-12;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError(fmt::format("history line {}: '{}' is not a number", line, s));
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError(fmt::format("history line {}: '{}' is not an unsigned integer", line, s));
  }
  return v;
}

}  // namespace

RunHistory::RunHistory(std::uint64_t seed, std::vector<HistoryLayer> layers) : seed_(seed), layers_(std::move(layers)) {
  for (const auto& l : layers_) {
    if (l.name.empty() || l.name.find_first_of(",# \n") != std::string::npos) {
      throw ConfigError(fmt::format("layer name '{}' cannot be logged", l.name));
    }
    if (l.channels < 2) throw ConfigError(fmt::format("layer '{}' has {} channels; NAS needs 2", l.name, l.channels));
  }
}

const EpochRecord& RunHistory::back() const {
  if (epochs_.empty()) throw InsufficientDataError("history has no epochs");
  return epochs_.back();
}

void RunHistory::append(EpochRecord record) {
  if (!epochs_.empty() && record.epoch <= epochs_.back().epoch) {
    throw AlignmentError(fmt::format("epoch {} does not follow epoch {}", record.epoch, epochs_.back().epoch));
  }
  if (record.layers.size() != layers_.size() || record.filter_correlation.size() != layers_.size()) {
    throw AlignmentError(fmt::format("epoch {} has {} aggregates and {} correlations for {} layers", record.epoch,
                                     record.layers.size(), record.filter_correlation.size(), layers_.size()));
  }
  if (!epochs_.empty() && epochs_.front().contaminated_loss.has_value() != record.contaminated_loss.has_value()) {
    throw AlignmentError(fmt::format("epoch {}: contaminated loss present in some records only", record.epoch));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = record.layers[i];
    const double hi = 1.0 - 1.0 / static_cast<double>(layers_[i].channels) + kBoundSlack;
    if (!(a.min >= -kBoundSlack && a.min <= a.median && a.median <= a.max && a.max <= hi)) {
      throw DataError(fmt::format("epoch {}, layer '{}': aggregates ({}, {}, {}) violate 0 <= min <= median <= max <= {}",
                                  record.epoch, layers_[i].name, a.min, a.median, a.max, hi));
    }
  }
  epochs_.push_back(std::move(record));
}

std::vector<std::size_t> RunHistory::epoch_numbers() const {
  std::vector<std::size_t> out;
  for (const auto& r : epochs_) out.push_back(r.epoch);
  return out;
}

std::vector<double> RunHistory::test_losses() const {
  std::vector<double> out;
  for (const auto& r : epochs_) out.push_back(r.test_loss);
  return out;
}

std::vector<double> RunHistory::contaminated_losses() const {
  std::vector<double> out;
  for (const auto& r : epochs_) {
    if (!r.contaminated_loss) throw StateError(fmt::format("epoch {} has no contaminated loss", r.epoch));
    out.push_back(*r.contaminated_loss);
  }
  return out;
}

std::vector<double> RunHistory::layer_medians(std::size_t layer) const {
  if (layer >= layers_.size()) throw ConfigError(fmt::format("layer {} outside history of {}", layer, layers_.size()));
  std::vector<double> out;
  for (const auto& r : epochs_) out.push_back(r.layers[layer].median);
  return out;
}

const EpochRecord* RunHistory::find(std::size_t epoch) const {
  for (const auto& r : epochs_) {
    if (r.epoch == epoch) return &r;
  }
  return nullptr;
}

std::string history_csv(const RunHistory& history) {
  std::string out;
  out += fmt::format("{}\n# seed {}\n", kMagic, history.seed());
  for (const auto& l : history.layers()) out += fmt::format("# layer {} {}\n", l.name, l.channels);
  out += "epoch,train_loss,test_loss,contaminated_loss,test_accuracy,penalty";
  for (const auto& l : history.layers()) out += fmt::format(",{0}_min,{0}_median,{0}_max", l.name);
  for (const auto& l : history.layers()) out += fmt::format(",{}_filter_corr", l.name);
  out += '\n';
  for (const auto& r : history.epochs()) {
    out += fmt::format("{},{},{},", r.epoch, r.train_loss, r.test_loss);
    if (r.contaminated_loss) out += fmt::format("{}", *r.contaminated_loss);
    out += fmt::format(",{},{}", r.test_accuracy, r.penalty);
    for (const auto& a : r.layers) out += fmt::format(",{},{},{}", a.min, a.median, a.max);
    for (double c : r.filter_correlation) out += fmt::format(",{}", c);
    out += '\n';
  }
  return out;
}

RunHistory parse_history_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  if (!next() || line != kMagic) throw FormatError("not a naslab history file (missing header)");
  if (!next() || line.rfind("# seed ", 0) != 0) throw FormatError("history: missing seed line");
  const std::uint64_t seed = parse_uint(line.substr(7), line_no);
  std::vector<HistoryLayer> layers;
  while (next() && line.rfind("# layer ", 0) == 0) {
    const auto parts = split(line.substr(8), ' ');
    if (parts.size() != 2) throw FormatError(fmt::format("history line {}: malformed layer line", line_no));
    layers.push_back({parts[0], parse_uint(parts[1], line_no)});
  }
  RunHistory history(seed, layers);
  const std::size_t columns = 6 + 4 * layers.size();
  if (split(line, ',').size() != columns) {
    throw FormatError(fmt::format("history line {}: header has wrong column count", line_no));
  }
  while (next()) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != columns) {
      throw FormatError(fmt::format("history line {}: {} fields, expected {}", line_no, f.size(), columns));
    }
    EpochRecord r;
    r.epoch = parse_uint(f[0], line_no);
    r.train_loss = parse_double(f[1], line_no);
    r.test_loss = parse_double(f[2], line_no);
    if (!f[3].empty()) r.contaminated_loss = parse_double(f[3], line_no);
    r.test_accuracy = parse_double(f[4], line_no);
    r.penalty = parse_double(f[5], line_no);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      r.layers.push_back({parse_double(f[6 + 3 * i], line_no), parse_double(f[7 + 3 * i], line_no),
                          parse_double(f[8 + 3 * i], line_no)});
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      r.filter_correlation.push_back(parse_double(f[6 + 3 * layers.size() + i], line_no));
    }
    history.append(std::move(r));
  }
  return history;
}

void write_history(const RunHistory& history, const std::filesystem::path& path) {
  write_file(path, history_csv(history));
}

RunHistory read_history(const std::filesystem::path& path) {
  try {
    return parse_history_csv(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

}  // namespace naslab
