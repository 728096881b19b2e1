#include "cbp/kernels.hpp"

#include <algorithm>

namespace cbp::kernels {

void dense_forward(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                   std::span<float> y, bool relu) {
  const std::size_t rows = y.size();
  const std::size_t cols = x.size();
  const float* w = weight.data();
  const float* xp = x.data();
#pragma omp parallel for schedule(static) if (rows * cols > (1u << 16))
  for (std::size_t r = 0; r < rows; ++r) {
    const float v = dense_row(w + r * cols, xp, cols, bias[r]);
    y[r] = relu ? std::max(v, 0.0f) : v;
  }
}

void dense_forward_serial(std::span<const float> weight, std::span<const float> bias, std::span<const float> x,
                          std::span<float> y, bool relu) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    const float v = dense_row(weight.data() + r * cols, x.data(), cols, bias[r]);
    y[r] = relu ? std::max(v, 0.0f) : v;
  }
}

}  // namespace cbp::kernels
