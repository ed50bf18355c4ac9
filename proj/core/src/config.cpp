#include "naslab/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <functional>
#include <map>
#include <sstream>

#include "naslab/error.hpp"
#include "naslab/file_io.hpp"

namespace naslab {

namespace pt = boost::property_tree;

std::string_view to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::l1: return "l1";
    case RegularizerKind::l2: return "l2";
    case RegularizerKind::dropout: return "dropout";
    case RegularizerKind::batch_norm: return "batchnorm";
    case RegularizerKind::nasreg: return "nasreg";
  }
  return "?";
}

std::string_view to_string(DataSource source) {
  switch (source) {
    case DataSource::automatic: return "auto";
    case DataSource::cifar: return "cifar";
    case DataSource::synthetic: return "synthetic";
    case DataSource::standin: return "standin";
  }
  return "?";
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& field, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", field, v));
  }
  return out;
}

double parse_real(const std::string& field, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", field, v));
  }
  return out;
}

bool parse_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", field, v));
}

template <typename T>
std::vector<T> parse_list(const std::string& field, const std::string& v,
                          const std::function<T(const std::string&, const std::string&)>& item) {
  std::vector<T> out;
  std::stringstream in(v);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(item(field, trim(part)));
  return out;
}

RegularizerKind parse_regularizer(const std::string& field, const std::string& v) {
  for (auto k : {RegularizerKind::none, RegularizerKind::l1, RegularizerKind::l2, RegularizerKind::dropout,
                 RegularizerKind::batch_norm, RegularizerKind::nasreg}) {
    if (v == to_string(k)) return k;
  }
  throw ConfigError(fmt::format("{}: unknown regularizer '{}' (none, l1, l2, dropout, batchnorm, nasreg)", field, v));
}

DataSource parse_source(const std::string& field, const std::string& v) {
  for (auto s : {DataSource::automatic, DataSource::cifar, DataSource::synthetic, DataSource::standin}) {
    if (v == to_string(s)) return s;
  }
  throw ConfigError(fmt::format("{}: unknown data source '{}' (auto, cifar, synthetic, standin)", field, v));
}

LambdaRule parse_rule(const std::string& field, const std::string& v) {
  if (v == "one-over-r") return LambdaRule::one_over_r;
  if (v == "fixed") return LambdaRule::fixed;
  throw ConfigError(fmt::format("{}: unknown lambda rule '{}' (one-over-r, fixed)", field, v));
}

using Setter = std::function<void(ExperimentConfig&, const std::string& field, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"network.architecture",
       [](auto& c, auto& f, auto& v) {
         if (v != "vanilla") throw ConfigError(fmt::format("{}: only 'vanilla' is supported, got '{}'", f, v));
         c.network.architecture = v;
       }},
      {"network.scale", [](auto& c, auto& f, auto& v) { c.network.scale = parse_size(f, v); }},
      {"network.widths",
       [](auto& c, auto& f, auto& v) { c.network.widths = parse_list<std::size_t>(f, v, parse_size); }},
      {"network.bias", [](auto& c, auto& f, auto& v) { c.network.bias = parse_bool(f, v); }},
      {"regularizer.kind", [](auto& c, auto& f, auto& v) { c.regularizer.kind = parse_regularizer(f, v); }},
      {"regularizer.coefficient", [](auto& c, auto& f, auto& v) { c.regularizer.coefficient = parse_real(f, v); }},
      {"regularizer.dropout_conv", [](auto& c, auto& f, auto& v) { c.regularizer.dropout_conv = parse_real(f, v); }},
      {"regularizer.dropout_fc", [](auto& c, auto& f, auto& v) { c.regularizer.dropout_fc = parse_real(f, v); }},
      {"regularizer.bn_momentum", [](auto& c, auto& f, auto& v) { c.regularizer.bn_momentum = parse_real(f, v); }},
      {"regularizer.bn_epsilon", [](auto& c, auto& f, auto& v) { c.regularizer.bn_epsilon = parse_real(f, v); }},
      {"regularizer.lambda_rule", [](auto& c, auto& f, auto& v) { c.regularizer.lambda_rule = parse_rule(f, v); }},
      {"regularizer.lambdas",
       [](auto& c, auto& f, auto& v) { c.regularizer.lambdas = parse_list<double>(f, v, parse_real); }},
      {"optimizer.learning_rate", [](auto& c, auto& f, auto& v) { c.optimizer.learning_rate = parse_real(f, v); }},
      {"optimizer.batch_size", [](auto& c, auto& f, auto& v) { c.optimizer.batch_size = parse_size(f, v); }},
      {"optimizer.epochs", [](auto& c, auto& f, auto& v) { c.optimizer.epochs = parse_size(f, v); }},
      {"data.source", [](auto& c, auto& f, auto& v) { c.data.source = parse_source(f, v); }},
      {"data.path", [](auto& c, auto&, auto& v) { c.data.path = v; }},
      {"data.train_size", [](auto& c, auto& f, auto& v) { c.data.train_size = parse_size(f, v); }},
      {"data.test_size", [](auto& c, auto& f, auto& v) { c.data.test_size = parse_size(f, v); }},
      {"data.contaminated", [](auto& c, auto& f, auto& v) { c.data.contaminated = parse_bool(f, v); }},
      {"data.contaminated_per_source",
       [](auto& c, auto& f, auto& v) { c.data.contaminated_per_source = parse_size(f, v); }},
      {"data.synthetic_classes", [](auto& c, auto& f, auto& v) { c.data.synthetic_classes = parse_size(f, v); }},
      {"probe.batch_size", [](auto& c, auto& f, auto& v) { c.probe.batch_size = parse_size(f, v); }},
      {"probe.heatmap_index", [](auto& c, auto& f, auto& v) { c.probe.heatmap_index = parse_size(f, v); }},
      {"probe.heatmap_scale", [](auto& c, auto& f, auto& v) { c.probe.heatmap_scale = parse_size(f, v); }},
      {"probe.stripe_cell", [](auto& c, auto& f, auto& v) { c.probe.stripe_cell = parse_size(f, v); }},
      {"probe.heatmaps", [](auto& c, auto& f, auto& v) { c.probe.heatmaps = parse_bool(f, v); }},
      {"run.repeats", [](auto& c, auto& f, auto& v) { c.run.repeats = parse_size(f, v); }},
      {"run.seed", [](auto& c, auto& f, auto& v) { c.run.seed = parse_size(f, v); }},
      {"run.out", [](auto& c, auto&, auto& v) { c.run.out = v; }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (network.scale == 0) throw ConfigError("network.scale must be positive");
  if (network.widths.size() != 5) {
    throw ConfigError(fmt::format("network.widths needs 5 values (conv1..conv4, fc1), got {}", network.widths.size()));
  }
  for (std::size_t i = 0; i < network.widths.size(); ++i) {
    if (network.widths[i] / network.scale < 2) {
      throw ConfigError(fmt::format("network.widths[{}] = {} / scale {} leaves fewer than 2 channels", i,
                                    network.widths[i], network.scale));
    }
  }
  if (regularizer.coefficient < 0.0) throw ConfigError("regularizer.coefficient must be >= 0");
  for (auto [name, rate] : {std::pair{"regularizer.dropout_conv", regularizer.dropout_conv},
                            std::pair{"regularizer.dropout_fc", regularizer.dropout_fc}}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError(fmt::format("{} must be in [0, 1), got {}", name, rate));
  }
  if (!(regularizer.bn_momentum >= 0.0 && regularizer.bn_momentum < 1.0)) {
    throw ConfigError("regularizer.bn_momentum must be in [0, 1)");
  }
  if (!(regularizer.bn_epsilon > 0.0)) throw ConfigError("regularizer.bn_epsilon must be > 0");
  for (double l : regularizer.lambdas) {
    if (l < 0.0) throw ConfigError(fmt::format("regularizer.lambdas: {} is negative", l));
  }
  if (regularizer.kind == RegularizerKind::nasreg && regularizer.lambda_rule == LambdaRule::fixed &&
      regularizer.lambdas.empty()) {
    throw ConfigError("regularizer.lambdas is required with lambda_rule = fixed");
  }
  if (!(optimizer.learning_rate >= 0.0)) throw ConfigError("optimizer.learning_rate must be >= 0");
  if (optimizer.batch_size == 0) throw ConfigError("optimizer.batch_size must be positive");
  if (optimizer.epochs > kMaxEpochs) {
    throw ConfigError(fmt::format("optimizer.epochs must be <= {}, got {}", kMaxEpochs, optimizer.epochs));
  }
  if (data.train_size == 0) throw ConfigError("data.train_size must be positive");
  if (data.test_size == 0) throw ConfigError("data.test_size must be positive");
  if (data.contaminated && data.contaminated_per_source == 0) {
    throw ConfigError("data.contaminated_per_source must be positive when data.contaminated is on");
  }
  if (data.synthetic_classes < 2) throw ConfigError("data.synthetic_classes must be >= 2");
  if (probe.batch_size == 0) throw ConfigError("probe.batch_size must be positive");
  if (probe.heatmap_index >= probe.batch_size) {
    throw ConfigError(fmt::format("probe.heatmap_index {} must be < probe.batch_size {}", probe.heatmap_index,
                                  probe.batch_size));
  }
  if (probe.heatmap_scale == 0) throw ConfigError("probe.heatmap_scale must be positive");
  if (probe.stripe_cell == 0) throw ConfigError("probe.stripe_cell must be positive");
  if (run.repeats == 0) throw ConfigError("run.repeats must be positive");
  if (run.out.empty()) throw ConfigError("run.out must not be empty");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  ExperimentConfig config;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError(fmt::format("key '{}' is outside any section", section));
    for (const auto& [key, value] : body) {
      const std::string field = section + "." + key;
      const auto it = table.find(field);
      if (it == table.end()) throw ConfigError(fmt::format("unknown config key '{}'", field));
      it->second(config, field, trim(value.data()));
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

std::string effective_config_text(const ExperimentConfig& c) {
  std::string out;
  out += "[network]\n";
  out += fmt::format("architecture = {}\n", c.network.architecture);
  out += fmt::format("scale = {}\n", c.network.scale);
  out += fmt::format("widths = {}\n", fmt::join(c.network.widths, ", "));
  out += fmt::format("bias = {}\n", c.network.bias);
  out += "\n[regularizer]\n";
  out += fmt::format("kind = {}\n", to_string(c.regularizer.kind));
  out += fmt::format("coefficient = {}\n", c.regularizer.coefficient);
  out += fmt::format("dropout_conv = {}\n", c.regularizer.dropout_conv);
  out += fmt::format("dropout_fc = {}\n", c.regularizer.dropout_fc);
  out += fmt::format("bn_momentum = {}\n", c.regularizer.bn_momentum);
  out += fmt::format("bn_epsilon = {}\n", c.regularizer.bn_epsilon);
  out += fmt::format("lambda_rule = {}\n", to_string(c.regularizer.lambda_rule));
  if (!c.regularizer.lambdas.empty()) out += fmt::format("lambdas = {}\n", fmt::join(c.regularizer.lambdas, ", "));
  out += "\n[optimizer]\n";
  out += fmt::format("learning_rate = {}\n", c.optimizer.learning_rate);
  out += fmt::format("batch_size = {}\n", c.optimizer.batch_size);
  out += fmt::format("epochs = {}\n", c.optimizer.epochs);
  out += "\n[data]\n";
  out += fmt::format("source = {}\n", to_string(c.data.source));
  out += fmt::format("path = {}\n", c.data.path);
  out += fmt::format("train_size = {}\n", c.data.train_size);
  out += fmt::format("test_size = {}\n", c.data.test_size);
  out += fmt::format("contaminated = {}\n", c.data.contaminated);
  out += fmt::format("contaminated_per_source = {}\n", c.data.contaminated_per_source);
  out += fmt::format("synthetic_classes = {}\n", c.data.synthetic_classes);
  out += "\n[probe]\n";
  out += fmt::format("batch_size = {}\n", c.probe.batch_size);
  out += fmt::format("heatmap_index = {}\n", c.probe.heatmap_index);
  out += fmt::format("heatmap_scale = {}\n", c.probe.heatmap_scale);
  out += fmt::format("stripe_cell = {}\n", c.probe.stripe_cell);
  out += fmt::format("heatmaps = {}\n", c.probe.heatmaps);
  out += "\n[run]\n";
  out += fmt::format("repeats = {}\n", c.run.repeats);
  out += fmt::format("seed = {}\n", c.run.seed);
  out += fmt::format("out = {}\n", c.run.out);
  return out;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return effective_config_text(a) == effective_config_text(b);
}

}  // namespace naslab
