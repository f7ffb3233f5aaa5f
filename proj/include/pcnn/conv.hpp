#pragma once

#include <cstddef>

#include "pcnn/errors.hpp"
#include "pcnn/matrix.hpp"

namespace pcnn {

/// Valid-region 2D convolution (stride 1, no kernel flip):
///   Y(m, n) = sum_{i,j} w(i, j) * A(m + i, n + j)
/// This is the exact-arithmetic oracle every optical result is compared with.
template <typename T>
Matrix<T> conv2d_reference(const Matrix<T>& image, const Matrix<T>& kernel) {
  if (!image.square() || !kernel.square() || kernel.empty()) {
    throw DimensionError("conv2d_reference expects a square image and a non-empty square kernel");
  }
  const std::size_t m = image.rows();
  const std::size_t n = kernel.rows();
  if (n > m) throw DimensionError("kernel larger than image");
  const std::size_t out = m - n + 1;
  Matrix<T> y(out, out);
  for (std::size_t r = 0; r < out; ++r) {
    for (std::size_t c = 0; c < out; ++c) {
      T acc{};
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) acc += kernel(i, j) * image(r + i, c + j);
      }
      y(r, c) = acc;
    }
  }
  return y;
}

}  // namespace pcnn
