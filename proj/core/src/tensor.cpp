#include "naslab/tensor.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace naslab {

std::string to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a != b) {
    throw StateError(fmt::format("{}: shape mismatch {} vs {}", what, to_string(a), to_string(b)));
  }
}

}  // namespace naslab
