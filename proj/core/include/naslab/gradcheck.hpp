#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "naslab/layers.hpp"
#include "naslab/network.hpp"
#include "naslab/random.hpp"
#include "naslab/tensor.hpp"

namespace naslab {

// Central-difference step. Truncation error grows as step^2, round-off as 1/step.
inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

struct GradCheckResult {
  std::string name;
  std::size_t probes = 0;   // compared entries
  std::size_t skipped = 0;  // probes whose +-h step crossed a ReLU/pool kink
  double max_error = 0.0;   // worst relative error
  double tolerance = kGradTolerance;

  bool passed() const { return probes > 0 && max_error <= tolerance; }
};

struct GradCheckOptions {
  double step = kGradStep;
  double tolerance = kGradTolerance;
  double floor = 1e-6;            // denominator floor of the relative error
  std::size_t max_probes = 64;    // per tensor; all entries when the tensor is smaller
};

/// Central differences of `loss` w.r.t. entries of `x`, compared with
/// `analytic` (same shape). `signature` reports the kink pattern after the
/// last loss evaluation; probes that change it are skipped.
GradCheckResult check_tensor_gradient(std::string name, Tensor<double>& x, const Tensor<double>& analytic,
                                      const std::function<double()>& loss,
                                      const std::function<std::vector<std::size_t>()>& signature, Rng& rng,
                                      const GradCheckOptions& options = {});

/// Input and parameter gradients of one layer under a random linear
/// projection loss. Dropout runs with a frozen mask; batch norm in `mode`.
std::vector<GradCheckResult> check_layer(LayerKind kind, std::uint64_t seed, Mode mode = Mode::train,
                                         const GradCheckOptions& options = {});

/// Logit gradient of cross_entropy_loss.
GradCheckResult check_cross_entropy(std::uint64_t seed, const GradCheckOptions& options = {});

/// Two-conv toy network (conv relu conv relu pool dense). Cross-entropy
/// plus, when `with_penalty`, the perplexity penalty on both conv
/// pre-activations; checks every parameter tensor.
std::vector<GradCheckResult> check_toy_network(std::uint64_t seed, bool with_penalty,
                                               const GradCheckOptions& options = {});

/// Perplexity penalty w.r.t. the pre-activation tensor itself.
GradCheckResult check_penalty_gradient(std::uint64_t seed, const Shape& shape, const GradCheckOptions& options = {});

/// Every check above: all layer kinds, cross-entropy, penalty on conv and
/// dense pre-activations, and the toy network with and without the penalty.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace naslab
