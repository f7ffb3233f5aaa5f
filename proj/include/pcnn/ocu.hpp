#pragma once

// One optical convolution period end to end, plus the exact-arithmetic
// oracles it is checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcnn/conv.hpp"
#include "pcnn/delay_unit.hpp"
#include "pcnn/device_models.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/matrix.hpp"
#include "pcnn/waveform.hpp"

namespace pcnn {

struct IdealDelays {};

/// Delays from a programmed wavelength grid in one dispersive medium. A zero
/// length selects the design length 1 / (baud |D| dl).
struct DispersiveDelays {
  double delta_lambda_nm = 0.2;
  double dispersion_ps_nm_km = -150.0;
  double length_km = 0.0;
  double base_nm = 1550.0;
};

/// N^2 separate delay lines, each with a Gaussian setting error.
struct ArrayedDelays {
  double error_std_s = 0.0;
  std::uint64_t seed = 1;
};

using DelaySource = std::variant<IdealDelays, DispersiveDelays, ArrayedDelays>;

struct OcuConfig {
  SymbolClock clock{10e9, 16};
  double sigma = 0.5;
  double circuit_delay = 0.0;
  int dac_bits = 10;
  int adc_bits = 10;
  double v_max = 1.2;
  /// ADC full scale as a multiple of the largest possible detector output
  /// (i_input times the sum of the realized transmissions).
  double adc_headroom = 1.0;
  double i_input = 1.0;
  bool filter = true;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
  MrrPhysical mrr = params_from_finesse(150.0);
  MappingMode mapping_mode = MappingMode::full_range;
  DelaySource delays = IdealDelays{};

  void validate() const {
    clock.validate();
    mrr.validate();
    if (clock.oversampling < 4) throw ParameterError("oversampling must be at least 4");
    if (!(sigma >= 0.0 && sigma < 1.0)) throw ParameterError("sigma must lie in [0, 1)");
    if (dac_bits < 1 || dac_bits > 16) throw ParameterError("dac_bits must lie in [1, 16]");
    if (adc_bits < 1 || adc_bits > 24) throw ParameterError("adc_bits must lie in [1, 24]");
    if (!(adc_headroom > 0.0)) throw ParameterError("ADC headroom must be positive");
    if (!(noise_std >= 0.0)) throw ParameterError("noise std must be non-negative");
    if (!(v_max > 0.0)) throw ParameterError("v_max must be positive");
    if (!(i_input > 0.0)) throw ParameterError("input intensity must be positive");
  }

  /// Filter off, noise off, 16-bit converters, ideal delays.
  static OcuConfig ideal() {
    OcuConfig c;
    c.filter = false;
    c.noise_std = 0.0;
    c.dac_bits = 16;
    c.adc_bits = 16;
    c.delays = IdealDelays{};
    return c;
  }
};

/// Everything that made one optical period deviate from exact arithmetic.
struct OcuDiagnostics {
  WeightMapping mapping;
  DelayPlan delays;
  std::size_t clipped_samples = 0;
  double full_scale = 0.0;
  /// ADC half step expressed in kernel units (the same units as the output).
  double output_half_step = 0.0;
};

struct OcuResult {
  MatrixD output;
  OcuDiagnostics diagnostics;
};

inline DelayPlan plan_delays(const DelaySource& source, std::size_t m_size, std::size_t n_size, double baud) {
  return std::visit(
      [&](const auto& s) -> DelayPlan {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, IdealDelays>) {
          return required_delays(m_size, n_size, baud);
        } else if constexpr (std::is_same_v<S, DispersiveDelays>) {
          DispersionMedium medium{s.dispersion_ps_nm_km, s.length_km};
          if (medium.length_km == 0.0) {
            medium.length_km =
                resource_requirements(m_size, n_size, s.delta_lambda_nm, s.dispersion_ps_nm_km, baud).length_km;
          }
          return dispersion_delays(pmws_grid(m_size, n_size, s.delta_lambda_nm, s.base_nm), medium);
        } else {
          return arrayed_delays(m_size, n_size, baud, s.error_std_s, s.seed);
        }
      },
      source);
}

/// Optical convolution with a prebuilt V-T database:
/// flatten -> modulate -> weight -> ring filter -> delay -> detect -> ADC -> sample.
/// The output is rescaled to kernel units (mapping scale, input intensity).
inline OcuResult conv2d_optical(const MatrixD& image, const MatrixD& kernel, const OcuConfig& config,
                                const VtDatabase& db) {
  config.validate();
  if (!image.square() || !kernel.square() || kernel.empty()) throw DimensionError("square image and kernel required");
  const std::size_t m = image.rows();
  const std::size_t n = kernel.rows();
  if (n >= m) throw UnsupportedGeometryError("kernel must be smaller than the image");

  OcuDiagnostics diag;
  diag.mapping = map_weights(db, kernel, config.mapping_mode);

  const std::size_t guard = (n - 1) * (m + 1);
  WdmFrame frame = modulate(image.flat(), config.clock, n * n, config.i_input, guard);
  frame = apply_weights(std::move(frame), diag.mapping);
  frame = channel_filter(std::move(frame), config.mrr, diag.mapping, config.filter);
  DelayedFrame delayed = apply_delays(frame, plan_delays(config.delays, m, n, config.clock.baud));
  diag.delays = std::move(delayed.plan);

  PdSignal pd = photodetect(delayed.frame, config.noise_std, config.noise_seed);

  const double realized = diag.mapping.realized_sum();
  SamplingPlan plan;
  plan.sigma = config.sigma;
  plan.circuit_delay = config.circuit_delay;
  plan.adc_bits = config.adc_bits;
  plan.full_scale = realized > 0.0 ? config.adc_headroom * config.i_input * realized : 1.0;
  diag.full_scale = plan.full_scale;
  diag.clipped_samples = count_clipped(pd.samples, plan);
  pd = quantize(std::move(pd), plan);

  const double to_kernel_units = diag.mapping.scale / config.i_input;
  diag.output_half_step = plan.half_step() * to_kernel_units;
  auto samples = sample_outputs(pd, m, n, plan);
  for (double& y : samples) y *= to_kernel_units;
  const std::size_t out = m - n + 1;
  return {MatrixD::from_flat(out, out, samples), std::move(diag)};
}

inline OcuResult conv2d_optical(const MatrixD& image, const MatrixD& kernel, const OcuConfig& config) {
  return conv2d_optical(image, kernel, config, build_vt_database(config.mrr, config.v_max, config.dac_bits));
}

struct CorrelationCheck {
  std::vector<long double> lhs;
  std::vector<long double> rhs;
  long double max_diff = 0;
};

namespace detail {

/// Cross-correlation with the lag convention R(x, y)(q) = sum_k y_k x_{q + k - K},
/// K = |y|, 1-based indices, x zero outside its support; q = 1..|x| + K - 1.
template <typename T>
std::vector<T> cross_correlate(std::span<const T> x, std::span<const T> y) {
  const std::size_t k_len = y.size();
  std::vector<T> r(x.size() + k_len - 1, T{});
  for (std::size_t q = 1; q <= r.size(); ++q) {
    T acc{};
    for (std::size_t k = 1; k <= k_len; ++k) {
      const auto idx = static_cast<std::ptrdiff_t>(q + k) - static_cast<std::ptrdiff_t>(k_len);
      if (idx >= 1 && idx <= static_cast<std::ptrdiff_t>(x.size())) acc += y[k - 1] * x[static_cast<std::size_t>(idx - 1)];
    }
    r[q - 1] = acc;
  }
  return r;
}

}  // namespace detail

/// Checks that the column sums of the delayed-row matrix B' equal the sum of
/// double correlations sum_i R[R(A', w_i), c_i]. Here w_i is kernel row i and
/// c_i is the flattened N x M selector with a single 1 at row i, column M,
/// which moves group i by its (N - i) M symbol offset.
template <typename T>
CorrelationCheck correlation_decomposition_check(std::span<const T> flat_image, const Matrix<T>& kernel) {
  const std::size_t m = detail::checked_square_root(flat_image.size(), "image length");
  if (!kernel.square() || kernel.empty()) throw DimensionError("kernel must be square");
  const std::size_t n = kernel.rows();
  if (n > m) throw UnsupportedGeometryError("kernel larger than image");
  const std::size_t row_len = m * m + (n - 1) * (m + 1);

  // Left side: explicit delayed rows B'_p(q) = w_ij A'(q - d_ij).
  std::vector<T> lhs(row_len, T{});
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t d = (n - i) * m + (n - j);
      for (std::size_t k = 1; k <= flat_image.size(); ++k) lhs[k + d - 1] += kernel(i - 1, j - 1) * flat_image[k - 1];
    }
  }

  // Right side: two nested correlations per kernel row.
  std::vector<T> rhs(row_len, T{});
  for (std::size_t i = 1; i <= n; ++i) {
    const auto group = detail::cross_correlate<T>(flat_image, kernel.row(i - 1));
    std::vector<T> selector(n * m, T{});
    selector[i * m - 1] = T{1};
    const auto shifted = detail::cross_correlate<T>(group, selector);
    // shifted(q) = group(q + i M - N M) = group(q - (N - i) M)
    for (std::size_t q = 1; q <= row_len; ++q) rhs[q - 1] += shifted[q - 1];
  }

  CorrelationCheck out;
  out.lhs.assign(lhs.begin(), lhs.end());
  out.rhs.assign(rhs.begin(), rhs.end());
  for (std::size_t q = 0; q < row_len; ++q) {
    const long double diff = out.lhs[q] > out.rhs[q] ? out.lhs[q] - out.rhs[q] : out.rhs[q] - out.lhs[q];
    out.max_diff = std::max(out.max_diff, diff);
  }
  return out;
}

}  // namespace pcnn
