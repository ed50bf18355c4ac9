#include "naslab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fmt/format.h>
#include <sstream>

#include "naslab/checkpoint.hpp"
#include "naslab/error.hpp"
#include "naslab/file_io.hpp"
#include "naslab/nas_metrics.hpp"
#include "naslab/nas_regularizer.hpp"
#include "naslab/random.hpp"
#include "naslab/training.hpp"
#include "naslab/version.hpp"
#include "naslab/viz.hpp"

namespace naslab {

namespace fs = std::filesystem;

namespace {

// Seed streams; data streams hang off the base seed so repeats share data.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kShuffleStream = 2,
  kTrainSubset = 11,
  kTestSubset = 12,
  kContamination = 13,
  kProbeSubset = 14,
  kSyntheticTrain = 15,
  kSyntheticTest = 16,
  kPrototypes = 17,
};

constexpr std::size_t kEvalBatch = 250;

}  // namespace

std::vector<std::size_t> effective_widths(const NetworkConfig& network) {
  if (network.scale == 0) throw ConfigError("network.scale must be positive");
  std::vector<std::size_t> out;
  for (std::size_t w : network.widths) out.push_back(w / network.scale);
  return out;
}

std::string measured_label(const std::string& layer_name) {
  constexpr std::string_view suffix = "_bn";
  if (layer_name.size() > suffix.size() && layer_name.ends_with(suffix)) {
    return layer_name.substr(0, layer_name.size() - suffix.size());
  }
  return layer_name;
}

template <typename T>
Network<T> build_network(const ExperimentConfig& config, std::size_t classes, std::uint64_t seed,
                         std::size_t image_side) {
  config.validate();
  if (config.network.architecture != "vanilla") {
    throw ConfigError(fmt::format("network.architecture: unsupported '{}'", config.network.architecture));
  }
  if (classes < 2) throw ConfigError(fmt::format("need at least 2 classes, got {}", classes));
  if (image_side < 4 || image_side % 4 != 0) {
    throw ConfigError(fmt::format("image side {} must be a positive multiple of 4", image_side));
  }
  const auto widths = effective_widths(config.network);
  const auto& reg = config.regularizer;
  const bool nasreg = reg.kind == RegularizerKind::nasreg;
  const bool norm = reg.kind == RegularizerKind::batch_norm;
  const bool drop = reg.kind == RegularizerKind::dropout;

  Rng rng(derive_seed(seed, kInitStream));
  Network<T> net;
  auto add = [&](const LayerSpec& spec, NasTag tag = {}) {
    validate(spec);
    net.add(spec.name, make_layer<T>(spec, rng), tag);
  };
  const NasTag hidden{true, nasreg};

  // Measured pre-activation: the conv/dense output, or its batch-norm output in NormNet.
  auto hidden_block = [&](LayerSpec linear, std::size_t channels, double dropout_rate) {
    const std::string name = linear.name;
    if (norm) {
      add(linear);
      LayerSpec bn;
      bn.kind = LayerKind::batch_norm;
      bn.name = name + "_bn";
      bn.norm_channels = channels;
      bn.norm_momentum = reg.bn_momentum;
      bn.norm_epsilon = reg.bn_epsilon;
      add(bn, hidden);
    } else {
      add(linear, hidden);
    }
    LayerSpec relu;
    relu.kind = LayerKind::relu;
    relu.name = name + "_relu";
    add(relu);
    if (drop) {
      LayerSpec d;
      d.kind = LayerKind::dropout;
      d.name = name + "_drop";
      d.dropout_rate = dropout_rate;
      add(d);
    }
  };
  auto conv = [&](std::size_t index, std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.name = fmt::format("conv{}", index);
    s.conv = {in, out, 3, 3, 1, 1, 1, 1, config.network.bias};
    hidden_block(s, out, reg.dropout_conv);
  };
  auto pool = [&](std::size_t index) {
    LayerSpec s;
    s.kind = LayerKind::max_pool;
    s.name = fmt::format("pool{}", index);
    add(s);
  };

  conv(1, 3, widths[0]);
  conv(2, widths[0], widths[1]);
  pool(1);
  conv(3, widths[1], widths[2]);
  conv(4, widths[2], widths[3]);
  pool(2);

  const std::size_t spatial = image_side / 4;
  LayerSpec fc1;
  fc1.kind = LayerKind::dense;
  fc1.name = "fc1";
  fc1.dense_in = widths[3] * spatial * spatial;
  fc1.dense_out = widths[4];
  fc1.dense_bias = config.network.bias;
  hidden_block(fc1, widths[4], reg.dropout_fc);

  LayerSpec pred;
  pred.kind = LayerKind::dense;
  pred.name = "pred";
  pred.dense_in = widths[4];
  pred.dense_out = classes;
  pred.dense_bias = config.network.bias;
  add(pred, NasTag{true, false});
  net.validate();
  return net;
}

template Network<float> build_network<float>(const ExperimentConfig&, std::size_t, std::uint64_t, std::size_t);
template Network<double> build_network<double>(const ExperimentConfig&, std::size_t, std::uint64_t, std::size_t);

ExperimentData prepare_data(const ExperimentConfig& config) {
  config.validate();
  const auto& dc = config.data;
  const std::uint64_t base = config.run.seed;
  ExperimentData data;

  std::optional<fs::path> cifar_dir;
  if (dc.source == DataSource::cifar || dc.source == DataSource::automatic) {
    std::vector<fs::path> candidates{dc.path};
    if (const char* env = std::getenv("NASLAB_CIFAR_DIR"); env != nullptr && *env != '\0') candidates.emplace_back(env);
    for (const auto& c : candidates) {
      if (locate_cifar(c)) {
        cifar_dir = c;
        break;
      }
    }
    if (!cifar_dir && dc.source == DataSource::cifar) {
      throw IoError(fmt::format("data.source = cifar but no CIFAR binaries under '{}' or $NASLAB_CIFAR_DIR", dc.path));
    }
  }

  Dataset train_pool, test_pool;
  if (cifar_dir) {
    CifarSplit split = load_cifar_directory(*cifar_dir);
    data.standin = is_standin_cifar(locate_cifar(*cifar_dir)->second);
    data.description = fmt::format("{}{} from '{}'", data.standin ? "synthetic stand-in in " : "",
                                   to_string(split.variant), cifar_dir->string());
    train_pool = std::move(split.train);
    test_pool = std::move(split.test);
    data.train = subset(train_pool, derive_seed(base, kTrainSubset), dc.train_size);
    data.test = subset(test_pool, derive_seed(base, kTestSubset), dc.test_size);
  } else {
    const bool standin = dc.source != DataSource::synthetic;
    const SyntheticOptions options = standin ? cifar_standin_options() : SyntheticOptions{};
    const std::uint64_t prototypes = derive_seed(base, kPrototypes);
    data.train = synthetic_dataset(derive_seed(base, kSyntheticTrain), dc.train_size, dc.synthetic_classes, kCifarSide,
                                   options, prototypes, Provenance::train_origin);
    data.test = synthetic_dataset(derive_seed(base, kSyntheticTest), dc.test_size, dc.synthetic_classes, kCifarSide,
                                  options, prototypes, Provenance::test_origin);
    data.standin = standin;
    data.description = standin ? fmt::format("synthetic stand-in ({} classes; CIFAR unavailable)", dc.synthetic_classes)
                               : fmt::format("synthetic blobs ({} classes)", dc.synthetic_classes);
  }
  if (dc.contaminated) {
    data.contaminated = build_contaminated_test_set(data.train, data.test, derive_seed(base, kContamination),
                                                    dc.contaminated_per_source);
  }
  if (config.probe.batch_size > data.test.size()) {
    throw ConfigError(fmt::format("probe.batch_size {} exceeds the {} test images", config.probe.batch_size,
                                  data.test.size()));
  }
  const auto probe_idx = sample_indices(derive_seed(base, kProbeSubset), data.test.size(), config.probe.batch_size);
  data.probe = take(data.test, probe_idx);
  return data;
}

namespace {

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(Network<float>& net, const Dataset& ds) {
  Evaluation ev;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += kEvalBatch) {
    const std::size_t stop = std::min(ds.size(), start + kEvalBatch);
    idx.clear();
    for (std::size_t i = start; i < stop; ++i) idx.push_back(i);
    const auto labels = ds.gather_labels(idx);
    const Tensor<float> logits = net.forward(ds.gather_images(idx), Mode::eval);
    const auto result = cross_entropy_loss<float>(logits, labels);
    loss_sum += static_cast<double>(result.loss) * static_cast<double>(idx.size());
    const auto predicted = predict_classes(logits);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  }
  ev.loss = loss_sum / static_cast<double>(ds.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  return ev;
}

const Tensor<float>* weights_of(Layer<float>& layer) {
  if (auto* c = dynamic_cast<Conv2d<float>*>(&layer)) return &c->weights();
  if (auto* d = dynamic_cast<Dense<float>*>(&layer)) return &d->weights();
  return nullptr;
}

// Weights of the conv/dense layer producing (or feeding the batch norm of) layer `i`.
const Tensor<float>& producing_weights(Network<float>& net, std::size_t i) {
  for (std::size_t j = i + 1; j-- > 0;) {
    if (const auto* w = weights_of(net.layer(j))) return *w;
  }
  throw StateError(fmt::format("layer '{}' has no weighted layer before it", net.name(i)));
}

std::string heatmap_csv_row(std::size_t epoch, const std::string& label, const LayerNasSnapshot& snap) {
  std::string row = fmt::format("{},{},{},{},", epoch, label, snap.rows, snap.cols);
  for (std::size_t i = 0; i < snap.heatmap.size(); ++i) row += fmt::format("{}{}", i == 0 ? "" : " ", snap.heatmap[i]);
  return row + '\n';
}

[[noreturn]] void abort_non_finite(Network<float>& net, const Tensor<float>& batch, std::size_t epoch,
                                   std::size_t step, double loss, const fs::path& dir) {
  net.set_keep_all_outputs(true);
  net.forward(batch, Mode::train);
  std::string report = fmt::format("non-finite loss {} at epoch {}, step {}\n", loss, epoch, step);
  std::string culprit = "logits";
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& out = net.output(i);
    if (const auto bad = out.first_non_finite()) {
      culprit = net.name(i);
      report += fmt::format("first non-finite output: layer '{}' ({}), shape {}, flat index {}, value {}\n", net.name(i),
                            to_string(net.layer(i).kind()), to_string(out.shape()), *bad, out[*bad]);
      break;
    }
  }
  for (const auto& p : net.parameters()) {
    if (const auto bad = p.value->first_non_finite()) {
      report += fmt::format("non-finite parameter '{}' at flat index {}\n", p.name, *bad);
    }
  }
  net.set_keep_all_outputs(false);
  write_file(dir / "diagnostic.txt", report);
  throw DataError(fmt::format("non-finite loss at epoch {}, step {} (first bad layer '{}'); see '{}'", epoch, step,
                              culprit, (dir / "diagnostic.txt").string()));
}

}  // namespace

RunHistory train_run(const ExperimentConfig& config, const ExperimentData& data, std::size_t run, const fs::path& dir,
                     const ProgressFn& progress) {
  const std::uint64_t seed = config.run.seed + run;
  const std::size_t side = data.train.images.dim(2);
  Network<float> net = build_network<float>(config, data.train.classes, seed, side);
  ensure_directory(dir);
  if (config.probe.heatmaps) ensure_directory(dir / "heatmaps");

  const auto measured = net.measured_layers();
  std::vector<HistoryLayer> layers;
  Shape shape{1, 3, side, side};
  for (std::size_t i = 0; i < net.size(); ++i) {
    shape = net.layer(i).output_shape(shape);
    if (net.tag(i).measure_nas) layers.push_back({measured_label(net.name(i)), shape[1]});
  }
  RunHistory history(seed, layers);
  std::string heatmaps = "epoch,layer,rows,cols,values\n";

  const auto& reg = config.regularizer;
  RegularizerConfig nas_config{reg.lambda_rule, reg.lambdas};
  const Sgd<float> sgd(static_cast<float>(config.optimizer.learning_rate));
  Rng shuffle_rng(derive_seed(seed, kShuffleStream));

  auto record_epoch = [&](EpochRecord record) {
    const Evaluation test = evaluate(net, data.test);
    record.test_loss = test.loss;
    record.test_accuracy = test.accuracy;
    if (data.contaminated) record.contaminated_loss = evaluate(net, *data.contaminated).loss;
    net.forward(data.probe.images, Mode::eval);
    for (std::size_t m = 0; m < measured.size(); ++m) {
      const std::size_t i = measured[m];
      const LayerNasSnapshot snap = layer_nas(net.output(i), layers[m].name, config.probe.heatmap_index);
      record.layers.push_back({snap.min, snap.median, snap.max});
      record.filter_correlation.push_back(filter_correlation_report(producing_weights(net, i)).max);
      heatmaps += heatmap_csv_row(record.epoch, layers[m].name, snap);
      if (config.probe.heatmaps) {
        render_heatmap(snap, config.probe.heatmap_scale,
                       dir / "heatmaps" / fmt::format("{}_{}.ppm", layers[m].name, record.epoch));
      }
    }
    history.append(record);
    write_history(history, dir / "history.csv");
    write_file(dir / "heatmaps.csv", heatmaps);
    if (progress) progress(run, history.back());
  };

  EpochRecord initial;
  initial.epoch = 0;
  initial.train_loss = evaluate(net, data.train).loss;
  record_epoch(std::move(initial));

  std::vector<std::size_t> order(data.train.size());
  const std::size_t batch_size = config.optimizer.batch_size;
  for (std::size_t epoch = 1; epoch <= config.optimizer.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0, penalty_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++steps) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(batch_size, order.size() - start));
      const Tensor<float> images = data.train.gather_images(idx);
      const auto labels = data.train.gather_labels(idx);
      net.zero_grad();
      const Tensor<float> logits = net.forward(images, Mode::train);
      const auto task = cross_entropy_loss<float>(logits, labels);
      if (!std::isfinite(task.loss)) abort_non_finite(net, images, epoch, steps, task.loss, dir);

      std::map<std::size_t, Tensor<float>> extra;
      double penalty = 0.0;
      if (reg.kind == RegularizerKind::nasreg) {
        penalty = apply_nas_penalty(net, nas_config, extra).total;
      }
      net.backward(task.gradient, extra);
      auto params = net.parameters();
      if (reg.kind == RegularizerKind::l1 || reg.kind == RegularizerKind::l2) {
        const auto kind = reg.kind == RegularizerKind::l1 ? WeightPenaltyKind::l1 : WeightPenaltyKind::l2;
        penalty = weight_penalty<float>(params, kind, static_cast<float>(reg.coefficient));
      }
      sgd.step(params);
      loss_sum += static_cast<double>(task.loss) * static_cast<double>(idx.size());
      penalty_sum += penalty;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.penalty = steps > 0 ? penalty_sum / static_cast<double>(steps) : 0.0;
    record_epoch(std::move(record));
  }

  render_stripe_plot(history, config.probe.stripe_cell, dir / "stripe.ppm");
  save_checkpoint(net, config, data.train.classes, side, dir / "weights.bin");
  return history;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto started = std::chrono::system_clock::now();
  const ExperimentData data = prepare_data(config);
  ExperimentResult result;
  result.out = config.run.out;
  result.data_description = data.description;
  result.standin = data.standin;
  ensure_directory(result.out);
  write_file(result.out / "effective_config", effective_config_text(config));
  for (std::size_t r = 0; r < config.run.repeats; ++r) {
    result.runs.push_back(train_run(config, data, r, result.out / fmt::format("run{}", r), progress));
  }
  export_lineplot(result.runs, result.out / "lineplot");

  const std::time_t t = std::chrono::system_clock::to_time_t(started);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  const auto elapsed = std::chrono::duration<double>(std::chrono::system_clock::now() - started).count();
  write_file(result.out / "meta",
             fmt::format("naslab_version = {}\nstarted = {}\nelapsed_seconds = {:.1f}\ndata = {}\n"
                         "pixel_scaling = byte / 255, no mean subtraction\ntrain_images = {}\ntest_images = {}\n",
                         kVersion, stamp, elapsed, data.description, data.train.size(), data.test.size()));
  return result;
}

namespace {

std::vector<fs::path> run_dirs(const fs::path& out) {
  std::vector<fs::path> dirs;
  if (!fs::is_directory(out)) throw IoError(fmt::format("'{}' is not a directory", out.string()));
  for (const auto& entry : fs::directory_iterator(out)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("run", 0) == 0 && fs::is_regular_file(entry.path() / "history.csv")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end(), [](const fs::path& a, const fs::path& b) {
    const auto na = a.filename().string(), nb = b.filename().string();
    return na.size() != nb.size() ? na.size() < nb.size() : na < nb;
  });
  if (dirs.empty()) throw IoError(fmt::format("no run*/history.csv under '{}'", out.string()));
  return dirs;
}

std::size_t render_heatmaps(const fs::path& dir, std::size_t scale) {
  const fs::path csv = dir / "heatmaps.csv";
  if (!fs::is_regular_file(csv)) return 0;
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  ensure_directory(dir / "heatmaps");
  std::size_t written = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string epoch, layer, rows, cols, values;
    std::getline(row, epoch, ',');
    std::getline(row, layer, ',');
    std::getline(row, rows, ',');
    std::getline(row, cols, ',');
    std::getline(row, values);
    LayerNasSnapshot snap;
    snap.layer = layer;
    try {
      snap.rows = std::stoul(rows);
      snap.cols = std::stoul(cols);
      std::istringstream vs(values);
      std::string v;
      while (vs >> v) snap.heatmap.push_back(std::stod(v));
    } catch (const std::exception&) {
      throw FormatError(fmt::format("'{}': malformed row '{}'", csv.string(), line.substr(0, 60)));
    }
    render_heatmap(snap, scale, dir / "heatmaps" / fmt::format("{}_{}.ppm", layer, epoch));
    ++written;
  }
  return written;
}

}  // namespace

std::size_t render_logdir(const fs::path& out) {
  ExperimentConfig config;
  if (fs::is_regular_file(out / "effective_config")) config = load_config(out / "effective_config");
  std::vector<RunHistory> runs;
  std::size_t written = 0;
  for (const auto& dir : run_dirs(out)) {
    runs.push_back(read_history(dir / "history.csv"));
    render_stripe_plot(runs.back(), config.probe.stripe_cell, dir / "stripe.ppm");
    ++written;
    if (config.probe.heatmaps) written += render_heatmaps(dir, config.probe.heatmap_scale);
  }
  export_lineplot(runs, out / "lineplot");
  return written + 2;
}

}  // namespace naslab
