#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "naslab/history.hpp"

namespace naslab {

inline constexpr double kDefaultOverfitRatio = 1.10;

struct OverfitVerdict {
  std::size_t epoch = 0;          // epoch of the minimum smoothed test loss
  bool overfit = false;           // final smoothed loss > ratio * minimum
  double min_smoothed = 0.0;
  double final_smoothed = 0.0;
  std::vector<double> smoothed;
};

/// Centered 3-point moving median. The two end points use the mean of the
/// two values available to them.
std::vector<double> smooth_losses(std::span<const double> losses);

/// Minimum of the smoothed curve; ties go to the lowest raw loss, then the
/// earliest epoch. InsufficientDataError with fewer than 3 points,
/// ConfigError if the sizes differ or ratio < 1.
OverfitVerdict detect_overfit_epoch(std::span<const std::size_t> epochs, std::span<const double> losses,
                                    double ratio = kDefaultOverfitRatio);

/// Uses the clean test loss, or the contaminated one when asked.
OverfitVerdict detect_overfit_epoch(const RunHistory& history, double ratio = kDefaultOverfitRatio,
                                    bool contaminated = false);

}  // namespace naslab
