#include "naslab/colormap.hpp"

#include <algorithm>
#include <cmath>

namespace naslab {

double luminance(Rgb color) { return 0.2126 * color.r + 0.7152 * color.g + 0.0722 * color.b; }

Rgb map_color(double s) {
  if (std::isnan(s)) s = 0.0;
  const double pos = std::clamp(s, 0.0, 1.0) * 255.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo >= 255) return kViridis[255];
  const double t = pos - static_cast<double>(lo);
  const Rgb& a = kViridis[lo];
  const Rgb& b = kViridis[lo + 1];
  auto mix = [t](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + t * (static_cast<double>(y) - x)));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

}  // namespace naslab
