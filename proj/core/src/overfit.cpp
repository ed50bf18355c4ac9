#include "naslab/overfit.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "naslab/error.hpp"

namespace naslab {

std::vector<double> smooth_losses(std::span<const double> losses) {
  const std::size_t n = losses.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  if (n == 1) {
    out[0] = losses[0];
    return out;
  }
  out[0] = 0.5 * (losses[0] + losses[1]);
  out[n - 1] = 0.5 * (losses[n - 2] + losses[n - 1]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double w[3] = {losses[i - 1], losses[i], losses[i + 1]};
    std::sort(w, w + 3);
    out[i] = w[1];
  }
  return out;
}

OverfitVerdict detect_overfit_epoch(std::span<const std::size_t> epochs, std::span<const double> losses,
                                    double ratio) {
  if (epochs.size() != losses.size()) {
    throw AlignmentError(fmt::format("{} epochs but {} losses", epochs.size(), losses.size()));
  }
  if (losses.size() < 3) {
    throw InsufficientDataError(fmt::format("overfit detection needs at least 3 epochs, got {}", losses.size()));
  }
  if (!(ratio >= 1.0)) throw ConfigError(fmt::format("overfit ratio {} must be >= 1", ratio));

  OverfitVerdict v;
  v.smoothed = smooth_losses(losses);
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (v.smoothed[i] < v.smoothed[best] || (v.smoothed[i] == v.smoothed[best] && losses[i] < losses[best])) {
      best = i;
    }
  }
  v.epoch = epochs[best];
  v.min_smoothed = v.smoothed[best];
  v.final_smoothed = v.smoothed.back();
  v.overfit = v.final_smoothed > ratio * v.min_smoothed;
  return v;
}

OverfitVerdict detect_overfit_epoch(const RunHistory& history, double ratio, bool contaminated) {
  const auto epochs = history.epoch_numbers();
  const auto losses = contaminated ? history.contaminated_losses() : history.test_losses();
  return detect_overfit_epoch(epochs, losses, ratio);
}

}  // namespace naslab
