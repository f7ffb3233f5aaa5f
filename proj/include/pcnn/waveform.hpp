#pragma once

// Intensity-domain waveforms for the time/wavelength interleaved convolution:
// modulation, ring weighting, ring filter distortion, photodetection, ADC and
// output sampling.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "pcnn/device_models.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/matrix.hpp"

namespace pcnn {

struct SymbolClock {
  double baud = 10e9;    ///< symbols per second
  int oversampling = 16; ///< samples per symbol

  void validate() const {
    if (!(baud > 0.0)) throw ParameterError("baud rate must be positive");
    if (oversampling < 1) throw ParameterError("oversampling must be at least 1");
  }
  double sample_period() const { return 1.0 / (baud * oversampling); }
};

/// N^2 wavelength channels of oversampled intensity, one row per channel.
/// Channel c carries kernel element (c / N, c % N).
struct WdmFrame {
  MatrixD channels;
  SymbolClock clock;
  std::size_t kernel_size = 0;

  std::size_t channel_count() const { return channels.rows(); }
  std::size_t length() const { return channels.cols(); }
};

/// Photodetector output sequence.
struct PdSignal {
  std::vector<double> samples;
  SymbolClock clock;
};

struct SamplingPlan {
  double sigma = 0.5;          ///< sampling position inside a symbol slot, in [0, 1)
  double circuit_delay = 0.0;  ///< lumped wavelength-independent delay [s]
  int adc_bits = 10;
  double full_scale = 1.0;

  void validate() const {
    if (!(sigma >= 0.0 && sigma < 1.0)) throw ParameterError("sigma must lie in [0, 1)");
    if (adc_bits < 1 || adc_bits > 24) throw ParameterError("adc_bits must lie in [1, 24]");
    if (!(full_scale > 0.0)) throw ParameterError("ADC full scale must be positive");
    if (!(circuit_delay >= 0.0)) throw ParameterError("circuit delay must be non-negative");
  }

  double step() const { return full_scale / static_cast<double>((std::uint64_t{1} << adc_bits) - 1); }
  double half_step() const { return 0.5 * step(); }
};

namespace detail {

inline std::size_t checked_square_root(std::size_t n, const char* what) {
  const auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (r * r != n || n == 0) throw DimensionError(std::string(what) + " is not a non-zero perfect square");
  return r;
}

/// FFTW planning is not thread-safe; execution on distinct buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using FftwPlan = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// Rectangular-pulse modulation of the flattened image onto every channel:
/// sample s of symbol k equals i_input * A'(k). `guard_symbols` zero symbols
/// follow the image.
inline WdmFrame modulate(std::span<const double> flat_image, const SymbolClock& clock, std::size_t n_channels,
                         double i_input = 1.0, std::size_t guard_symbols = 0) {
  clock.validate();
  if (!(i_input > 0.0)) throw ParameterError("input intensity must be positive");
  const std::size_t n = detail::checked_square_root(n_channels, "channel count");
  if (flat_image.empty()) throw DimensionError("empty image");
  for (double a : flat_image) {
    if (!(a >= 0.0 && a <= 1.0)) throw RangeError("image values must lie in [0, 1]");
  }
  const auto s = static_cast<std::size_t>(clock.oversampling);
  WdmFrame frame{MatrixD(n_channels, (flat_image.size() + guard_symbols) * s), clock, n};
  for (std::size_t c = 0; c < n_channels; ++c) {
    auto row = frame.channels.row(c);
    for (std::size_t k = 0; k < flat_image.size(); ++k) {
      std::fill_n(row.begin() + static_cast<std::ptrdiff_t>(k * s), s, i_input * flat_image[k]);
    }
  }
  return frame;
}

/// Scales channel c by the realized transmission of mapping record c.
inline WdmFrame apply_weights(WdmFrame frame, const WeightMapping& mapping) {
  if (mapping.channels() != frame.channel_count()) throw DimensionError("channel count differs from weight count");
  for (std::size_t c = 0; c < frame.channel_count(); ++c) {
    const double t = mapping.records[c].realized;
    for (double& x : frame.channels.row(c)) x *= t;
  }
  return frame;
}

/// Zero-phase power response of the ring around the carrier of a channel biased
/// at `voltage`, normalized to unit gain at zero detuning. Evaluated on both
/// sides of the carrier and averaged so the intensity sequence stays real.
inline double ring_intensity_gain(const MrrPhysical& params, double voltage, double t_carrier, double freq) {
  const double up = transmission(params, voltage, freq);
  const double down = transmission(params, voltage, -freq);
  return 0.5 * (up + down) / std::max(t_carrier, 1e-12);
}

/// Linear time-invariant ring distortion on each channel, applied circularly
/// over the frame with a DFT; the trailing guard symbols absorb wrap-around.
/// Negative intensities produced by the filter are clamped to zero.
inline WdmFrame channel_filter(WdmFrame frame, const MrrPhysical& params, const WeightMapping& mapping,
                               bool enabled = true) {
  if (!enabled) return frame;
  params.validate();
  if (mapping.channels() != frame.channel_count()) throw DimensionError("channel count differs from weight count");
  const std::size_t n = frame.length();
  if (n < 2) return frame;
  const std::size_t bins = n / 2 + 1;
  const double fs = frame.clock.baud * frame.clock.oversampling;

  std::unique_ptr<double, detail::FftwFree> time(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
  std::unique_ptr<fftw_complex, detail::FftwFree> spec(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  detail::FftwPlan forward, backward;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    const int len = static_cast<int>(n);
    forward.reset(fftw_plan_dft_r2c_1d(len, time.get(), spec.get(), FFTW_ESTIMATE));
    backward.reset(fftw_plan_dft_c2r_1d(len, spec.get(), time.get(), FFTW_ESTIMATE));
  }

  std::vector<double> gain(bins);
  for (std::size_t c = 0; c < frame.channel_count(); ++c) {
    const auto& rec = mapping.records[c];
    const double t0 = transmission(params, rec.voltage);
    for (std::size_t k = 0; k < bins; ++k) {
      gain[k] = ring_intensity_gain(params, rec.voltage, t0, fs * static_cast<double>(k) / static_cast<double>(n));
    }
    auto row = frame.channels.row(c);
    std::copy(row.begin(), row.end(), time.get());
    fftw_execute(forward.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double g = gain[k] / static_cast<double>(n);
      spec.get()[k][0] *= g;
      spec.get()[k][1] *= g;
    }
    fftw_execute(backward.get());
    std::transform(time.get(), time.get() + n, row.begin(), [](double x) { return std::max(x, 0.0); });
  }
  return frame;
}

/// Incoherent sum over wavelengths, optional additive Gaussian noise, clamp at 0.
inline PdSignal photodetect(const WdmFrame& frame, double noise_std = 0.0, std::uint64_t seed = 0) {
  if (frame.channel_count() == 0 || frame.length() == 0) throw DimensionError("empty frame");
  if (!(noise_std >= 0.0)) throw ParameterError("noise std must be non-negative");
  PdSignal out{std::vector<double>(frame.length(), 0.0), frame.clock};
  for (std::size_t c = 0; c < frame.channel_count(); ++c) {
    const auto row = frame.channels.row(c);
    for (std::size_t s = 0; s < row.size(); ++s) out.samples[s] += row[s];
  }
  if (noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (double& x : out.samples) x = std::max(0.0, x + noise(rng));
  }
  return out;
}

/// Mid-tread uniform quantizer with 2^bits levels spanning [0, full_scale];
/// out-of-range values clip to the end levels.
inline double quantize_value(double x, const SamplingPlan& plan) {
  const double step = plan.step();
  const double top = static_cast<double>((std::uint64_t{1} << plan.adc_bits) - 1);
  return std::clamp(std::round(x / step), 0.0, top) * step;
}

inline PdSignal quantize(PdSignal signal, const SamplingPlan& plan) {
  plan.validate();
  for (double& x : signal.samples) x = quantize_value(x, plan);
  return signal;
}

/// Number of samples that fall outside [0, full_scale].
inline std::size_t count_clipped(std::span<const double> samples, const SamplingPlan& plan) {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](double x) { return x > plan.full_scale; }));
}

/// Time slice (1-based) that carries output (m, n) of an M x M image convolved
/// with an N x N kernel once the per-channel delays have aligned the taps:
///   q = (m + N - 2) M + n + N - 1.
/// Reduces to the familiar (M - N + 1)(m - 1) + (M + m) + n when N = 2.
inline std::size_t sampling_index(std::size_t m, std::size_t n, std::size_t m_size, std::size_t n_size) {
  if (n_size == 0 || n_size > m_size) throw UnsupportedGeometryError("kernel size must lie in [1, M]");
  const std::size_t out = m_size - n_size + 1;
  if (m < 1 || n < 1 || m > out || n > out) throw BoundsError("output index outside the valid region");
  return (m + n_size - 2) * m_size + n + n_size - 1;
}

/// Sample index read for time slice q (1-based): nearest sample to
/// circuit_delay + (q - 1 + sigma) / baud.
inline std::size_t slice_sample_index(std::size_t q, const SymbolClock& clock, const SamplingPlan& plan) {
  const double t = plan.circuit_delay + (static_cast<double>(q) - 1.0 + plan.sigma) / clock.baud;
  return static_cast<std::size_t>(std::llround(t / clock.sample_period()));
}

/// Reads the (M - N + 1)^2 convolution outputs from the detected signal,
/// row-major over (m, n).
inline std::vector<double> sample_outputs(const PdSignal& signal, std::size_t m_size, std::size_t n_size,
                                          const SamplingPlan& plan) {
  plan.validate();
  signal.clock.validate();
  const std::size_t out = m_size - n_size + 1;
  std::vector<double> y;
  y.reserve(out * out);
  for (std::size_t m = 1; m <= out; ++m) {
    for (std::size_t n = 1; n <= out; ++n) {
      const std::size_t idx = slice_sample_index(sampling_index(m, n, m_size, n_size), signal.clock, plan);
      if (idx >= signal.samples.size()) throw BoundsError("signal too short for the requested output slice");
      y.push_back(signal.samples[idx]);
    }
  }
  return y;
}

/// Debug dump: time_s,channel_0..channel_{N^2-1},pd_output.
inline void write_waveform_csv(std::ostream& os, const WdmFrame& frame, const PdSignal& pd) {
  if (pd.samples.size() != frame.length()) throw DimensionError("frame and detector output lengths differ");
  os << "time_s";
  for (std::size_t c = 0; c < frame.channel_count(); ++c) os << ",channel_" << c;
  os << ",pd_output\n" << std::setprecision(12);
  const double dt = frame.clock.sample_period();
  for (std::size_t s = 0; s < frame.length(); ++s) {
    os << static_cast<double>(s) * dt;
    for (std::size_t c = 0; c < frame.channel_count(); ++c) os << ',' << frame.channels(c, s);
    os << ',' << pd.samples[s] << '\n';
  }
}

}  // namespace pcnn
