#pragma once

#include <cstddef>
#include <span>

namespace cbp::kernels {

// y = W x + b, optionally followed by ReLU. W is y.size() x x.size(), row-major.
// Both variants accumulate every row in the same order, so their outputs are
// bitwise identical; the serial one is the reference the tests compare against.
void dense_forward(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                   std::span<float> y, bool relu);
void dense_forward_serial(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                          std::span<float> y, bool relu);

/// Row product shared by both variants.
inline float dense_row(const float* w, const float* x, std::size_t n, float bias) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += static_cast<double>(w[k]) * static_cast<double>(x[k]);
  return static_cast<float>(acc + static_cast<double>(bias));
}

}  // namespace cbp::kernels
