#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "naslab/colormap.hpp"
#include "naslab/history.hpp"
#include "naslab/nas_metrics.hpp"

namespace naslab {

/// 8-bit RGB raster, row-major, three bytes per pixel.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  Rgb pixel(std::size_t x, std::size_t y) const;
  void set(std::size_t x, std::size_t y, Rgb color);

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary PPM: "P6\n<W> <H>\n255\n" followed by W*H*3 bytes.
std::string encode_ppm(const Image& image);
Image decode_ppm(std::string_view bytes);
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// M x N grid of the snapshot's heatmap sample, each cell `scale` pixels square.
Image heatmap_image(const LayerNasSnapshot& snapshot, std::size_t scale = 1);
void render_heatmap(const LayerNasSnapshot& snapshot, std::size_t scale, const std::filesystem::path& path);

/// One row per layer (shallowest on top), one column per epoch, colored by
/// the layer's median NAS. Cells are `cell` pixels square.
Image stripe_image(const RunHistory& history, std::size_t cell = 1);
void render_stripe_plot(const RunHistory& history, std::size_t cell, const std::filesystem::path& path);

/// Functional box plot across repeats: order statistics of each layer's
/// median NAS, and of the test loss, at every epoch.
struct LinePlotRow {
  std::size_t epoch = 0;
  std::string layer;
  LayerAggregate nas;
  LayerAggregate test_loss;
};

/// Rows ordered by epoch, then layer depth. AlignmentError if the runs do
/// not share epochs and layers; ConfigError for no runs.
std::vector<LinePlotRow> lineplot_table(std::span<const RunHistory> runs);
std::string lineplot_csv(std::span<const LinePlotRow> rows);
std::string lineplot_svg(std::span<const LinePlotRow> rows);

/// Writes `<stem>.csv` and `<stem>.svg`.
void export_lineplot(std::span<const RunHistory> runs, const std::filesystem::path& stem);

}  // namespace naslab
