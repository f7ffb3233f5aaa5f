#pragma once

// Per-wavelength delays that align the kernel taps in time, their realization
// by a programmed multi-wavelength source and one dispersive medium, and
// application of the delays to a frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcnn/errors.hpp"
#include "pcnn/waveform.hpp"

namespace pcnn {

struct ChannelDelay {
  std::size_t i = 0;             ///< kernel row, 1-based
  std::size_t j = 0;             ///< kernel column, 1-based
  double delay_s = 0.0;          ///< required delay
  double error_s = 0.0;          ///< fabrication/setting error of the delay line
  double realized_delay_s = 0.0; ///< delay actually applied (integer samples)
  double rounding_error_s = 0.0; ///< realized - (delay + error)
};

/// Delays indexed row-major over the N x N kernel grid.
struct DelayPlan {
  std::size_t kernel_size = 0;
  std::vector<ChannelDelay> channels;

  const ChannelDelay& at(std::size_t i, std::size_t j) const { return channels[(i - 1) * kernel_size + (j - 1)]; }
  ChannelDelay& at(std::size_t i, std::size_t j) { return channels[(i - 1) * kernel_size + (j - 1)]; }

  double max_delay() const {
    double d = 0.0;
    for (const auto& c : channels) d = std::max(d, c.delay_s + c.error_s);
    return d;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : channels) {
      arr.push_back({{"i", c.i},
                     {"j", c.j},
                     {"delay_s", c.delay_s},
                     {"realized_delay_s", c.realized_delay_s},
                     {"rounding_error_s", c.rounding_error_s}});
    }
    return arr;
  }
};

/// delay(i, j) = [(N - i) M + (N - j)] / baud.
inline DelayPlan required_delays(std::size_t m_size, std::size_t n_size, double baud) {
  if (n_size < 1) throw UnsupportedGeometryError("kernel size must be at least 1");
  if (n_size >= m_size) throw UnsupportedGeometryError("kernel must be smaller than the image");
  if (!(baud > 0.0)) throw ParameterError("baud rate must be positive");
  DelayPlan plan{n_size, {}};
  for (std::size_t i = 1; i <= n_size; ++i) {
    for (std::size_t j = 1; j <= n_size; ++j) {
      const double d = static_cast<double>((n_size - i) * m_size + (n_size - j)) / baud;
      plan.channels.push_back({i, j, d, 0.0, d, 0.0});
    }
  }
  return plan;
}

/// Arrayed delay-line variant: the required plan with an independent Gaussian
/// setting error (std `sigma_s`) on every channel. Realized delays stay >= 0.
inline DelayPlan arrayed_delays(std::size_t m_size, std::size_t n_size, double baud, double sigma_s,
                                std::uint64_t seed) {
  if (!(sigma_s >= 0.0)) throw ParameterError("delay error std must be non-negative");
  DelayPlan plan = required_delays(m_size, n_size, baud);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> err(0.0, sigma_s);
  for (auto& c : plan.channels) {
    c.error_s = sigma_s > 0.0 ? std::max(err(rng), -c.delay_s) : 0.0;
    c.realized_delay_s = c.delay_s + c.error_s;
  }
  return plan;
}

/// Wavelength grid of the programmed source [nm], row-major over (i, j).
struct PmwsGrid {
  std::size_t image_size = 0;
  std::size_t kernel_size = 0;
  double delta_lambda_nm = 0.0;
  double base_nm = 0.0;
  std::vector<double> wavelengths_nm;

  double at(std::size_t i, std::size_t j) const { return wavelengths_nm[(i - 1) * kernel_size + (j - 1)]; }
  double span_nm() const { return wavelengths_nm.back() - wavelengths_nm.front(); }
};

/// PMWS(i, j) = base + (i - 1) M dl + (j - 1) dl: adjacent taps dl apart,
/// adjacent groups M dl apart.
inline PmwsGrid pmws_grid(std::size_t m_size, std::size_t n_size, double delta_lambda_nm, double base_nm = 1550.0) {
  if (!(delta_lambda_nm > 0.0)) throw ParameterError("wavelength spacing must be positive");
  if (n_size < 1) throw UnsupportedGeometryError("kernel size must be at least 1");
  PmwsGrid g{m_size, n_size, delta_lambda_nm, base_nm, {}};
  for (std::size_t i = 1; i <= n_size; ++i) {
    for (std::size_t j = 1; j <= n_size; ++j) {
      g.wavelengths_nm.push_back(base_nm + static_cast<double>((i - 1) * m_size + (j - 1)) * delta_lambda_nm);
    }
  }
  return g;
}

struct DispersionMedium {
  double dispersion_ps_nm_km = -150.0;  ///< D, flat across the band
  double length_km = 1.0;               ///< L

  void validate() const {
    if (!(length_km > 0.0)) throw ParameterError("dispersion medium length must be positive");
    if (dispersion_ps_nm_km == 0.0 || !std::isfinite(dispersion_ps_nm_km)) {
      throw ParameterError("dispersion must be non-zero");
    }
  }
};

/// Group delay differences TDD = (PMWS(i,j) - PMWS(1,1)) L D, anchored so that
/// channel (N, N) has zero delay and (1, 1) the largest. For D < 0 this is the
/// natural ordering; for D > 0 the wavelength-to-channel assignment is reversed.
/// Either way delay(i, j) = |D| L (PMWS(N,N) - PMWS(i,j)).
inline DelayPlan dispersion_delays(const PmwsGrid& grid, const DispersionMedium& medium) {
  medium.validate();
  const std::size_t n = grid.kernel_size;
  const double ps_per_nm = std::abs(medium.dispersion_ps_nm_km) * medium.length_km;
  const double last = grid.at(n, n);
  DelayPlan plan{n, {}};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const double d = (last - grid.at(i, j)) * ps_per_nm * 1e-12;
      plan.channels.push_back({i, j, d, 0.0, d, 0.0});
    }
  }
  return plan;
}

struct ResourceRequirements {
  double bandwidth_nm = 0.0;
  std::size_t lines = 0;
  double length_km = 0.0;
};

/// Optical bandwidth, comb line count and dispersive length for one layer:
///   B = (M + 1)(N - 1) dl,  k = B / dl + 1,  L = 1 / (baud |D| dl).
inline ResourceRequirements resource_requirements(std::size_t m_size, std::size_t n_size, double delta_lambda_nm,
                                                  double dispersion_ps_nm_km, double baud) {
  if (!(delta_lambda_nm > 0.0) || !(baud > 0.0) || dispersion_ps_nm_km == 0.0) {
    throw ParameterError("resource requirements need positive spacing, baud and non-zero dispersion");
  }
  ResourceRequirements r;
  r.bandwidth_nm = static_cast<double>((m_size + 1) * (n_size - 1)) * delta_lambda_nm;
  r.lines = static_cast<std::size_t>(std::llround(r.bandwidth_nm / delta_lambda_nm)) + 1;
  const double d_s_per_nm_km = std::abs(dispersion_ps_nm_km) * 1e-12;
  r.length_km = 1.0 / (baud * d_s_per_nm_km * delta_lambda_nm);
  return r;
}

/// A frame after the delay stage together with the delays actually applied.
struct DelayedFrame {
  WdmFrame frame;
  DelayPlan plan;
};

/// Shifts each channel right by its delay rounded to whole samples (zero-fill).
/// The output grows by the largest shift so no sample is lost.
inline DelayedFrame apply_delays(const WdmFrame& frame, DelayPlan plan) {
  if (plan.channels.size() != frame.channel_count()) throw DimensionError("delay plan does not match channel count");
  const double dt = frame.clock.sample_period();
  std::vector<std::size_t> shifts;
  shifts.reserve(plan.channels.size());
  for (auto& c : plan.channels) {
    const double wanted = std::max(c.delay_s + c.error_s, 0.0);
    const auto shift = static_cast<std::size_t>(std::llround(wanted / dt));
    c.realized_delay_s = static_cast<double>(shift) * dt;
    c.rounding_error_s = c.realized_delay_s - wanted;
    shifts.push_back(shift);
  }
  const std::size_t grow = shifts.empty() ? 0 : *std::max_element(shifts.begin(), shifts.end());
  WdmFrame out{MatrixD(frame.channel_count(), frame.length() + grow), frame.clock, frame.kernel_size};
  for (std::size_t c = 0; c < frame.channel_count(); ++c) {
    const auto src = frame.channels.row(c);
    std::copy(src.begin(), src.end(), out.channels.row(c).begin() + static_cast<std::ptrdiff_t>(shifts[c]));
  }
  return {std::move(out), std::move(plan)};
}

struct DelayFeasibility {
  double max_deviation_symbols = 0.0;
  std::vector<double> deviation_symbols;  ///< |realized - required| per channel
};

/// Compares delays a realization provides (delay + error) with the required plan.
inline DelayFeasibility verify_delay_feasibility(const DelayPlan& realized, const DelayPlan& target, double baud) {
  if (realized.channels.size() != target.channels.size()) throw DimensionError("delay plans differ in shape");
  DelayFeasibility r;
  for (std::size_t c = 0; c < target.channels.size(); ++c) {
    const double have = realized.channels[c].delay_s + realized.channels[c].error_s;
    const double dev = std::abs(have - target.channels[c].delay_s) * baud;
    r.deviation_symbols.push_back(dev);
    r.max_deviation_symbols = std::max(r.max_deviation_symbols, dev);
  }
  return r;
}

}  // namespace pcnn
