// Convolve a small test pattern on one optical convolution unit and compare
// against exact arithmetic, at a few symbol rates.

#include <cstdio>

#include "pcnn/conv.hpp"
#include "pcnn/ocu.hpp"

using namespace pcnn;

int main() {
  MatrixD img(8, 8, 0.0);
  for (std::size_t r = 2; r < 6; ++r)
    for (std::size_t c = 2; c < 6; ++c) img(r, c) = 1.0;
  img(3, 3) = 0.5;
  const MatrixD kernel{{0.1, 0.4, 0.1}, {0.4, 0.9, 0.4}, {0.1, 0.4, 0.1}};
  const auto exact = conv2d_reference(img, kernel);

  for (double baud : {5e9, 10e9, 25e9}) {
    OcuConfig cfg;
    cfg.clock.baud = baud;
    const auto r = conv2d_optical(img, kernel, cfg);
    std::printf("%.0f GBd  scale %.3f  full scale %.3f  clipped %zu\n", baud / 1e9, r.diagnostics.mapping.scale,
                r.diagnostics.full_scale, r.diagnostics.clipped_samples);
    double worst = 0.0;
    for (std::size_t i = 0; i < exact.rows(); ++i) {
      for (std::size_t j = 0; j < exact.cols(); ++j) {
        std::printf(" %6.3f/%6.3f", r.output(i, j), exact(i, j));
        worst = std::max(worst, std::abs(r.output(i, j) - exact(i, j)));
      }
      std::printf("\n");
    }
    std::printf("max |optical - exact| = %.4f\n\n", worst);
  }
}
