#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <iostream>
#include <optional>

#include "naslab/checkpoint.hpp"
#include "naslab/config.hpp"
#include "naslab/dataset.hpp"
#include "naslab/error.hpp"
#include "naslab/experiment.hpp"
#include "naslab/file_io.hpp"
#include "naslab/gradcheck.hpp"
#include "naslab/nas_metrics.hpp"
#include "naslab/version.hpp"
#include "naslab/viz.hpp"

namespace fs = std::filesystem;
using namespace naslab;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> scale;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> repeats;
};

int cmd_train(const std::string& config_path, const Overrides& o, bool quiet) {
  ExperimentConfig config = load_config(config_path);
  if (o.seed) config.run.seed = *o.seed;
  if (o.out) config.run.out = *o.out;
  if (o.scale) config.network.scale = *o.scale;
  if (o.epochs) config.optimizer.epochs = *o.epochs;
  if (o.repeats) config.run.repeats = *o.repeats;
  config.validate();
  auto progress = [&](std::size_t run, const EpochRecord& r) {
    if (quiet) return;
    std::string nas;
    for (const auto& a : r.layers) nas += fmt::format(" {:.3f}", a.median);
    fmt::print("run {} epoch {:3d}  train {:.4f}  test {:.4f}  acc {:.3f}  median NAS{}\n", run, r.epoch,
               r.train_loss, r.test_loss, r.test_accuracy, nas);
    std::fflush(stdout);
  };
  const auto result = run_experiment(config, progress);
  fmt::print("data: {}\nwrote {} run(s) to {}\n", result.data_description, result.runs.size(), result.out.string());
  return 0;
}

int cmd_probe(const std::string& checkpoint_path, const std::string& image_path, const std::string& out,
              std::size_t scale) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const Image image = read_ppm(image_path);
  if (image.width != ck.image_side || image.height != ck.image_side) {
    throw ConfigError(fmt::format("image is {}x{}, the network expects {}x{}", image.width, image.height,
                                  ck.image_side, ck.image_side));
  }
  Tensor<float> input({1, 3, image.height, image.width});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        input.at(0, c, y, x) = static_cast<float>(image.rgb[(y * image.width + x) * 3 + c]) / 255.0f;
      }
    }
  }
  ck.network.forward(input, Mode::eval);
  ensure_directory(out);
  for (std::size_t i : ck.network.measured_layers()) {
    const std::string label = measured_label(ck.network.name(i));
    const LayerNasSnapshot snap = layer_nas(ck.network.output(i), label, 0);
    const fs::path file = fs::path(out) / fmt::format("{}.ppm", label);
    render_heatmap(snap, scale, file);
    fmt::print("{:6s} {:2d}x{:<2d} D={:<4d} NAS min {:.4f} median {:.4f} max {:.4f} -> {}\n", label, snap.rows,
               snap.cols, snap.channels, snap.min, snap.median, snap.max, file.string());
  }
  return 0;
}

int cmd_render(const std::string& logdir) {
  const std::size_t n = render_logdir(logdir);
  fmt::print("re-rendered {} file(s) under {}\n", n, logdir);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(seed)) {
    fmt::print("{:4s} {:32s} probes {:3d} skipped {:2d} max rel err {:.3e}\n", r.passed() ? "ok" : "FAIL", r.name,
               r.probes, r.skipped, r.max_error);
    ok = ok && r.passed();
  }
  fmt::print("{}\n", ok ? "all gradient checks passed" : "gradient checks FAILED");
  return ok ? 0 : 1;
}

int cmd_fetch(const std::string& dir, bool standin, std::uint64_t seed, const std::string& variant) {
  if (auto found = locate_cifar(dir)) {
    fmt::print("{} already present in {}{}\n", to_string(found->first), found->second.string(),
               is_standin_cifar(found->second) ? " (synthetic stand-in)" : "");
    return 0;
  }
  if (standin) {
    const auto root = write_standin_cifar(dir, seed);
    fmt::print("wrote synthetic stand-in (CIFAR-10 layout, not real CIFAR) to {}\n", root.string());
    return 0;
  }
  const bool c100 = variant == "cifar100";
  const std::string archive = c100 ? "cifar-100-binary.tar.gz" : "cifar-10-binary.tar.gz";
  const std::string url = "https://www.cs.toronto.edu/~kriz/" + archive;
  ensure_directory(dir);
  const fs::path target = fs::path(dir) / archive;
  const std::string command = fmt::format("curl -fL --retry 2 -o '{}' '{}' && tar -xzf '{}' -C '{}'", target.string(),
                                          url, target.string(), dir);
  fmt::print("{}\n", command);
  if (std::system(command.c_str()) != 0 || !locate_cifar(dir)) {
    throw IoError(fmt::format("download failed; fetch {} manually and extract it into '{}', "
                              "or run 'naslab fetch-data {} --standin' for a synthetic stand-in",
                              url, dir, dir));
  }
  fmt::print("{} ready in {}\n", variant, dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"naslab: neural activation sparsity training laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Overrides overrides;
  std::string config_path, checkpoint_path, image_path, logdir, data_dir, probe_out = "probe", variant = "cifar10";
  std::uint64_t gradcheck_seed = 7, fetch_seed = 1;
  std::size_t probe_scale = 8;
  bool quiet = false, standin = false;

  auto* train = app.add_subcommand("train", "Train the configured experiment (all repeats)");
  train->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", overrides.seed, "Override run.seed");
  train->add_option("--out", overrides.out, "Override run.out");
  train->add_option("--scale", overrides.scale, "Override network.scale");
  train->add_option("--epochs", overrides.epochs, "Override optimizer.epochs");
  train->add_option("--repeats", overrides.repeats, "Override run.repeats");
  train->add_flag("--quiet", quiet, "No per-epoch progress lines");

  auto* probe = app.add_subcommand("probe", "NAS heatmaps of one image through a saved network");
  probe->add_option("checkpoint", checkpoint_path, "weights.bin written by train")->required()->check(CLI::ExistingFile);
  probe->add_option("image", image_path, "Binary PPM (P6) image")->required()->check(CLI::ExistingFile);
  probe->add_option("--out", probe_out, "Output directory for heatmaps")->capture_default_str();
  probe->add_option("--scale", probe_scale, "Heatmap upscaling factor")->capture_default_str();

  auto* render = app.add_subcommand("render", "Re-emit plots of a training output directory");
  render->add_option("logdir", logdir, "Directory written by train")->required()->check(CLI::ExistingDirectory);

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suites");
  gradcheck->add_option("--seed", gradcheck_seed, "Seed for random test tensors")->capture_default_str();

  auto* fetch = app.add_subcommand("fetch-data", "Download CIFAR, or write a synthetic stand-in");
  fetch->add_option("dir", data_dir, "Target directory")->required();
  fetch->add_option("--variant", variant, "cifar10 or cifar100")
      ->check(CLI::IsMember({"cifar10", "cifar100"}))
      ->capture_default_str();
  fetch->add_flag("--standin", standin, "Write the synthetic stand-in instead of downloading");
  fetch->add_option("--seed", fetch_seed, "Seed of the stand-in")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommands({}).end() ==
                                             std::find_if(app.get_subcommands({}).begin(), app.get_subcommands({}).end(),
                                                          [&](const CLI::App* s) { return s->get_name() == argv[1]; })) {
      message = fmt::format("unknown subcommand '{}'", argv[1]);
    }
    std::cerr << "error: " << message << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, quiet);
    if (*probe) return cmd_probe(checkpoint_path, image_path, probe_out, probe_scale);
    if (*render) return cmd_render(logdir);
    if (*gradcheck) return cmd_gradcheck(gradcheck_seed);
    if (*fetch) return cmd_fetch(data_dir, standin, fetch_seed, variant);
  } catch (const naslab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
