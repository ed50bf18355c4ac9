#include "naslab/viz.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <map>

#include "naslab/error.hpp"
#include "naslab/file_io.hpp"

namespace naslab {

Rgb Image::pixel(std::size_t x, std::size_t y) const {
  const std::size_t o = (y * width + x) * 3;
  return {rgb.at(o), rgb.at(o + 1), rgb.at(o + 2)};
}

void Image::set(std::size_t x, std::size_t y, Rgb color) {
  const std::size_t o = (y * width + x) * 3;
  rgb.at(o) = color.r;
  rgb.at(o + 1) = color.g;
  rgb.at(o + 2) = color.b;
}

std::string encode_ppm(const Image& image) {
  if (image.rgb.size() != image.width * image.height * 3) throw StateError("image buffer does not match its size");
  std::string out = fmt::format("P6\n{} {}\n255\n", image.width, image.height);
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

Image decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string_view {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  auto number = [&](std::string_view what) {
    const auto t = token();
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
      throw FormatError(fmt::format("PPM: bad {} '{}'", what, t));
    }
    return v;
  };
  if (token() != "P6") throw FormatError("PPM: only binary P6 images are supported");
  const std::size_t w = number("width");
  const std::size_t h = number("height");
  if (number("maxval") != 255) throw FormatError("PPM: maxval must be 255");
  if (pos >= bytes.size()) throw FormatError("PPM: missing payload");
  ++pos;  // single whitespace after maxval
  Image img(w, h);
  if (bytes.size() - pos != img.rgb.size()) {
    throw FormatError(fmt::format("PPM: payload has {} bytes, expected {}", bytes.size() - pos, img.rgb.size()));
  }
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.rgb.begin());
  return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) { write_file(path, encode_ppm(image)); }

Image read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

Image heatmap_image(const LayerNasSnapshot& snapshot, std::size_t scale) {
  if (scale == 0) throw ConfigError("heatmap scale must be positive");
  if (snapshot.rows == 0 || snapshot.cols == 0 || snapshot.heatmap.size() != snapshot.rows * snapshot.cols) {
    throw ConfigError(fmt::format("layer '{}': heatmap has {} values for a {} x {} grid", snapshot.layer,
                                  snapshot.heatmap.size(), snapshot.rows, snapshot.cols));
  }
  Image img(snapshot.cols * scale, snapshot.rows * scale);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      img.set(x, y, map_color(snapshot.heatmap[(y / scale) * snapshot.cols + x / scale]));
    }
  }
  return img;
}

void render_heatmap(const LayerNasSnapshot& snapshot, std::size_t scale, const std::filesystem::path& path) {
  write_ppm(heatmap_image(snapshot, scale), path);
}

Image stripe_image(const RunHistory& history, std::size_t cell) {
  if (cell == 0) throw ConfigError("stripe cell size must be positive");
  if (history.layers().empty() || history.empty()) {
    throw InsufficientDataError("stripe plot needs at least one layer and one epoch");
  }
  const std::size_t layers = history.layers().size();
  const std::size_t epochs = history.size();
  Image img(epochs * cell, layers * cell);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t e = 0; e < epochs; ++e) {
      const Rgb c = map_color(history.epochs()[e].layers[l].median);
      for (std::size_t y = l * cell; y < (l + 1) * cell; ++y) {
        for (std::size_t x = e * cell; x < (e + 1) * cell; ++x) img.set(x, y, c);
      }
    }
  }
  return img;
}

void render_stripe_plot(const RunHistory& history, std::size_t cell, const std::filesystem::path& path) {
  write_ppm(stripe_image(history, cell), path);
}

namespace {

LayerAggregate order_statistics(std::vector<double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  LayerAggregate a{*lo, 0.0, *hi};
  a.median = median_of(std::move(values));
  return a;
}

}  // namespace

std::vector<LinePlotRow> lineplot_table(std::span<const RunHistory> runs) {
  if (runs.empty()) throw ConfigError("line plot needs at least one run");
  const auto& ref = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].epoch_numbers() != ref.epoch_numbers()) {
      throw AlignmentError(fmt::format("run {} logs different epochs than run 0", r));
    }
    if (runs[r].layers() != ref.layers()) throw AlignmentError(fmt::format("run {} logs different layers than run 0", r));
  }
  std::vector<LinePlotRow> rows;
  for (std::size_t e = 0; e < ref.size(); ++e) {
    std::vector<double> losses;
    for (const auto& run : runs) losses.push_back(run.epochs()[e].test_loss);
    const LayerAggregate loss = order_statistics(losses);
    for (std::size_t l = 0; l < ref.layers().size(); ++l) {
      std::vector<double> medians;
      for (const auto& run : runs) medians.push_back(run.epochs()[e].layers[l].median);
      rows.push_back({ref.epochs()[e].epoch, ref.layers()[l].name, order_statistics(medians), loss});
    }
  }
  return rows;
}

std::string lineplot_csv(std::span<const LinePlotRow> rows) {
  std::string out = "epoch,layer,min,median,max,test_loss_min,test_loss_median,test_loss_max\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.epoch, r.layer, r.nas.min, r.nas.median, r.nas.max,
                       r.test_loss.min, r.test_loss.median, r.test_loss.max);
  }
  return out;
}

namespace {

constexpr double kWidth = 760, kHeight = 440;
constexpr double kLeft = 60, kRight = 660, kTop = 30, kBottom = 390;

std::string hex(Rgb c) { return fmt::format("#{:02x}{:02x}{:02x}", c.r, c.g, c.b); }

// Shallow layers dark blue, deep layers bright blue.
Rgb depth_blue(std::size_t layer, std::size_t layers) {
  const double t = layers > 1 ? static_cast<double>(layer) / static_cast<double>(layers - 1) : 0.0;
  auto mix = [t](double a, double b) { return static_cast<std::uint8_t>(std::lround(a + t * (b - a))); };
  return {mix(8, 110), mix(29, 190), mix(110, 255)};
}

std::string band_path(const std::vector<double>& xs, const std::vector<double>& lo, const std::vector<double>& hi) {
  std::string d;
  for (std::size_t i = 0; i < xs.size(); ++i) d += fmt::format("{}{:.2f},{:.2f} ", i == 0 ? "M" : "L", xs[i], hi[i]);
  for (std::size_t i = xs.size(); i-- > 0;) d += fmt::format("L{:.2f},{:.2f} ", xs[i], lo[i]);
  return d + "Z";
}

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i) pts += fmt::format("{}{:.2f},{:.2f}", i == 0 ? "" : " ", xs[i], ys[i]);
  return pts;
}

}  // namespace

std::string lineplot_svg(std::span<const LinePlotRow> rows) {
  if (rows.empty()) throw ConfigError("line plot has no rows");
  std::vector<std::string> layers;
  std::vector<std::size_t> epochs;
  for (const auto& r : rows) {
    if (std::find(layers.begin(), layers.end(), r.layer) == layers.end()) layers.push_back(r.layer);
    if (epochs.empty() || epochs.back() != r.epoch) epochs.push_back(r.epoch);
  }
  if (rows.size() != layers.size() * epochs.size()) throw AlignmentError("line plot rows do not form a full grid");

  double nas_top = 0.1, loss_top = 0.0;
  for (const auto& r : rows) {
    nas_top = std::max(nas_top, r.nas.max);
    loss_top = std::max(loss_top, r.test_loss.max);
  }
  nas_top = std::ceil(nas_top * 10.0 - 1e-9) / 10.0;
  loss_top = loss_top > 0.0 ? loss_top * 1.05 : 1.0;

  const double e0 = static_cast<double>(epochs.front()), e1 = static_cast<double>(epochs.back());
  auto x_of = [&](std::size_t e) {
    return e1 > e0 ? kLeft + (static_cast<double>(e) - e0) / (e1 - e0) * (kRight - kLeft) : 0.5 * (kLeft + kRight);
  };
  auto y_nas = [&](double v) { return kBottom - v / nas_top * (kBottom - kTop); };
  auto y_loss = [&](double v) { return kBottom - v / loss_top * (kBottom - kTop); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"#ffffff\"/>\n",
      kWidth, kHeight);
  svg += fmt::format("<path d=\"M{0},{1} L{0},{2} L{3},{2} L{3},{1}\" fill=\"none\" stroke=\"#333333\"/>\n", kLeft,
                     kTop, kBottom, kRight);
  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    const double y = kBottom - f * (kBottom - kTop);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.2f}</text>\n", kLeft - 6, y + 4,
                       f * nas_top);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" fill=\"#c00000\">{:.2f}</text>\n", kRight + 6, y + 4,
                       f * loss_top);
  }
  for (std::size_t e : epochs) {
    if (epochs.size() <= 12 || e % ((epochs.size() + 9) / 10) == 0) {
      svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", x_of(e), kBottom + 16,
                         e);
    }
  }
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">epoch</text>\n", 0.5 * (kLeft + kRight),
                     kHeight - 12);
  svg += fmt::format("<text x=\"14\" y=\"{:.2f}\" transform=\"rotate(-90 14 {:.2f})\" text-anchor=\"middle\">"
                     "median NAS</text>\n",
                     0.5 * (kTop + kBottom), 0.5 * (kTop + kBottom));

  std::vector<double> xs;
  for (std::size_t e : epochs) xs.push_back(x_of(e));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> lo, mid, hi;
    for (std::size_t e = 0; e < epochs.size(); ++e) {
      const auto& r = rows[e * layers.size() + l];
      lo.push_back(y_nas(r.nas.min));
      mid.push_back(y_nas(r.nas.median));
      hi.push_back(y_nas(r.nas.max));
    }
    const std::string color = hex(depth_blue(l, layers.size()));
    svg += fmt::format("<path d=\"{}\" fill=\"{}\" fill-opacity=\"0.25\" stroke=\"none\"/>\n", band_path(xs, lo, hi),
                       color);
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       polyline(xs, mid), color);
    const double ly = kTop + 14.0 * static_cast<double>(l);
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", kRight + 40, ly,
                       color);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", kRight + 54, ly + 9, layers[l]);
  }
  std::vector<double> lo, mid, hi;
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& r = rows[e * layers.size()];
    lo.push_back(y_loss(r.test_loss.min));
    mid.push_back(y_loss(r.test_loss.median));
    hi.push_back(y_loss(r.test_loss.max));
  }
  svg += fmt::format("<path d=\"{}\" fill=\"#c00000\" fill-opacity=\"0.15\" stroke=\"none\"/>\n", band_path(xs, lo, hi));
  svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#c00000\" stroke-width=\"2\"/>\n",
                     polyline(xs, mid));
  const double ly = kTop + 14.0 * static_cast<double>(layers.size());
  svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"#c00000\"/>\n", kRight + 40, ly);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">test loss</text>\n", kRight + 54, ly + 9);
  svg += "</svg>\n";
  return svg;
}

void export_lineplot(std::span<const RunHistory> runs, const std::filesystem::path& stem) {
  const auto rows = lineplot_table(runs);
  std::filesystem::path csv = stem, svg = stem;
  csv += ".csv";
  svg += ".svg";
  write_file(csv, lineplot_csv(rows));
  write_file(svg, lineplot_svg(rows));
}

}  // namespace naslab
