#include "naslab/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fmt/format.h>

#include "naslab/error.hpp"
#include "naslab/experiment.hpp"
#include "naslab/file_io.hpp"

namespace naslab {

namespace {

constexpr std::string_view kMagic = "NASLABW1";

struct NamedTensor {
  std::string name;
  Tensor<float>* tensor;
};

std::vector<NamedTensor> state_of(Network<float>& net) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    for (auto& p : net.layer(i).parameters()) out.push_back({net.name(i) + "." + p.name, p.value});
    if (auto* bn = dynamic_cast<BatchNorm<float>*>(&net.layer(i))) {
      out.push_back({net.name(i) + ".running_mean", &bn->running_mean()});
      out.push_back({net.name(i) + ".running_var", &bn->running_var()});
    }
  }
  return out;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, std::string_view s) {
  put_u64(out, s.size());
  out.append(s);
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(fmt::format("'{}': truncated checkpoint at byte offset {}", path_, pos_));
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t u64() {
    const auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  std::string string() {
    const auto n = u64();
    if (n > bytes_.size()) throw FormatError(fmt::format("'{}': bad string length at offset {}", path_, pos_));
    return std::string(take(n));
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string_view bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(Network<float>& network, const ExperimentConfig& config, std::size_t classes,
                     std::size_t image_side, const std::filesystem::path& path) {
  std::string out(kMagic);
  put_u64(out, classes);
  put_u64(out, image_side);
  put_string(out, effective_config_text(config));
  const auto state = state_of(network);
  put_u64(out, state.size());
  for (const auto& [name, tensor] : state) {
    put_string(out, name);
    put_u64(out, tensor->rank());
    for (std::size_t d : tensor->shape()) put_u64(out, d);
    const auto* raw = reinterpret_cast<const char*>(tensor->raw());
    out.append(raw, tensor->size() * sizeof(float));
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader in(bytes, path.string());
  if (in.take(kMagic.size()) != kMagic) throw FormatError(fmt::format("'{}' is not a naslab checkpoint", path.string()));
  Checkpoint ck;
  ck.classes = in.u64();
  ck.image_side = in.u64();
  ck.config = parse_config(in.string());
  ck.network = build_network<float>(ck.config, ck.classes, ck.config.run.seed, ck.image_side);
  auto state = state_of(ck.network);
  const auto count = in.u64();
  if (count != state.size()) {
    throw FormatError(fmt::format("'{}': {} tensors stored, network has {}", path.string(), count, state.size()));
  }
  for (std::size_t t = 0; t < count; ++t) {
    const std::string name = in.string();
    auto it = std::find_if(state.begin(), state.end(), [&](const NamedTensor& n) { return n.name == name; });
    if (it == state.end()) throw FormatError(fmt::format("'{}': unknown tensor '{}'", path.string(), name));
    Shape shape(in.u64());
    for (auto& d : shape) d = in.u64();
    if (shape != it->tensor->shape()) {
      throw FormatError(fmt::format("'{}': tensor '{}' has shape {}, expected {}", path.string(), name,
                                    to_string(shape), to_string(it->tensor->shape())));
    }
    const auto raw = in.take(it->tensor->size() * sizeof(float));
    std::memcpy(it->tensor->raw(), raw.data(), raw.size());
  }
  if (!in.done()) throw FormatError(fmt::format("'{}': trailing bytes after the last tensor", path.string()));
  return ck;
}

}  // namespace naslab
