#pragma once

#include <array>
#include <cstdint>

namespace naslab {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 256-entry dark-blue to yellow table with strictly increasing luminance.
extern const std::array<Rgb, 256> kViridis;

/// Rec. 709 relative luminance of an 8-bit color, in [0, 255].
double luminance(Rgb color);

/// Color for a value in [0, 1]. Out-of-range values are clamped and NaN maps
/// to 0. Positions between entries are linearly interpolated per channel and
/// rounded to nearest, so map_color(i / 255.0) == kViridis[i].
Rgb map_color(double s);

}  // namespace naslab
