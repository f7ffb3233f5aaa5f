#pragma once

// Error extraction and injection, precision and baud-rate sweeps, timing,
// throughput and memory models.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pcnn/device_models.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/network.hpp"
#include "pcnn/ocu.hpp"
#include "pcnn/parallel.hpp"
#include "pcnn/seed.hpp"

namespace pcnn {

/// Error = FFV_photonic - FFV_reference - weighting error, element-wise.
inline std::vector<double> extract_error(std::span<const double> ffv_photonic, std::span<const double> ffv_reference,
                                         std::span<const double> weighting_error_ffv) {
  if (ffv_photonic.size() != ffv_reference.size() || ffv_photonic.size() != weighting_error_ffv.size()) {
    throw DimensionError("feature vectors differ in length");
  }
  std::vector<double> e(ffv_photonic.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = ffv_photonic[i] - ffv_reference[i] - weighting_error_ffv[i];
  return e;
}

struct GaussianFit {
  double mean = 0.0;
  double std = 0.0;
};

/// Moment fit: sample mean and unbiased sample standard deviation.
inline GaussianFit gaussian_fit(std::span<const double> samples) {
  if (samples.size() < 2) throw ParameterError("a Gaussian fit needs at least two samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

struct ErrorStats {
  double baud = 0.0;
  std::vector<double> samples;
  GaussianFit fit;
};

/// Adds independent N(mean, std) draws to every feature of every base vector,
/// classifies with the digital classifier and returns one accuracy per trial.
inline std::vector<double> inject_errors(const std::vector<std::vector<double>>& base_ffvs,
                                         std::span<const std::uint8_t> labels, const WeightsBundle& bundle,
                                         const GaussianFit& fit, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw ParameterError("at least one injection trial is required");
  if (base_ffvs.size() != labels.size() || base_ffvs.empty()) throw DimensionError("feature vectors and labels differ");
  std::vector<double> acc(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(derive_seed(seed, {t}));
    std::normal_distribution<double> noise(fit.mean, fit.std);
    std::size_t correct = 0;
    std::vector<double> v;
    for (std::size_t s = 0; s < base_ffvs.size(); ++s) {
      v = base_ffvs[s];
      if (fit.std > 0.0 || fit.mean != 0.0) {
        for (double& x : v) x += fit.std > 0.0 ? noise(rng) : fit.mean;
      }
      correct += classify(bundle, v) == labels[s];
    }
    acc[t] = static_cast<double>(correct) / static_cast<double>(base_ffvs.size());
  }
  return acc;
}

/// One convolution period: [M (M + 2) + 2] / baud + t_c.
inline double conv_time(std::size_t m_size, double baud, double t_c = 0.0) {
  if (!(baud > 0.0) || m_size == 0 || !(t_c >= 0.0)) throw ParameterError("conv_time needs positive inputs");
  const double m = static_cast<double>(m_size);
  return (m * (m + 2.0) + 2.0) / baud + t_c;
}

/// Multiply-accumulate count, one multiply and one add per tap:
/// sum over layers of (M - N + 1)^2 N^2 2 C K.
inline std::uint64_t op_count(const NetworkSpec& spec) {
  std::uint64_t ops = 0;
  for (const auto& s : spec.shapes()) {
    ops += static_cast<std::uint64_t>(s.conv_size * s.conv_size) * s.kernel_size * s.kernel_size * 2 * s.in_channels *
           s.kernels;
  }
  return ops;
}

struct CostReport {
  double baud = 0.0;
  std::vector<std::size_t> periods;
  std::vector<double> layer_time_s;
  double total_time_s = 0.0;
  std::uint64_t ops = 0;
  double speed_ops = 0.0;          ///< ops / total time
  /// Without a mesh: ops over the time left after one first-layer period;
  /// this reconstruction reproduces the published per-2Dconv column.
  std::optional<double> speed_2dconv_ops;
  std::optional<double> average_utilization;  ///< with a mesh
};

inline std::vector<CostReport> throughput_table(const NetworkSpec& spec, std::span<const double> bauds,
                                                const std::optional<MeshSpec>& mesh = std::nullopt, double t_c = 0.0) {
  const auto shapes = spec.shapes();
  std::vector<std::size_t> periods;
  std::optional<double> util;
  if (mesh) {
    const auto sched = mesh_schedule(spec, *mesh);
    periods = sched.periods;
    util = sched.average_utilization;
  } else {
    for (const auto& s : shapes) periods.push_back(s.in_channels * s.kernels);
  }
  std::vector<CostReport> out;
  for (double baud : bauds) {
    CostReport r;
    r.baud = baud;
    r.periods = periods;
    r.ops = op_count(spec);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
      r.layer_time_s.push_back(static_cast<double>(periods[l]) * conv_time(shapes[l].in_size, baud, t_c));
    }
    r.total_time_s = std::accumulate(r.layer_time_s.begin(), r.layer_time_s.end(), 0.0);
    r.speed_ops = static_cast<double>(r.ops) / r.total_time_s;
    if (!mesh) {
      r.speed_2dconv_ops = static_cast<double>(r.ops) / (r.total_time_s - conv_time(shapes.front().in_size, baud, t_c));
    }
    r.average_utilization = util;
    out.push_back(std::move(r));
  }
  return out;
}

/// Published 100%-utilization speeds of the 4x4 mesh [ops/s], keyed by baud.
/// They are not derivable from the other columns and are carried as-is.
inline std::optional<double> reported_full_utilization_speed(double baud) {
  static const std::map<long long, double> table{
      {5, 324e9}, {10, 648e9}, {15, 1.03e12}, {20, 1.29e12}, {25, 1.73e12}};
  const long long g = std::llround(baud / 1e9);
  if (std::abs(baud - static_cast<double>(g) * 1e9) > 1e-6 * baud) return std::nullopt;
  auto it = table.find(g);
  return it == table.end() ? std::nullopt : std::optional<double>(it->second);
}

struct MemoryCost {
  std::uint64_t tma_electronic = 0;   ///< 2 (M - N + 1)^2 slice reads/writes
  std::uint64_t tma_photonic = 0;     ///< read the flattened image, write the result
  std::uint64_t buffer_electronic = 0;  ///< (M - N + 1)^2 N^2 extracted slice elements
  std::uint64_t buffer_photonic = 0;    ///< M^2 input + (M - N + 1)^2 outputs
};

inline MemoryCost memory_model(std::size_t m_size, std::size_t n_size) {
  if (n_size == 0 || n_size >= m_size) throw UnsupportedGeometryError("memory model needs M > N >= 1");
  const std::uint64_t out = m_size - n_size + 1;
  return {2 * out * out, 2, out * out * n_size * n_size, static_cast<std::uint64_t>(m_size) * m_size + out * out};
}

// ---------------------------------------------------------------------------
// Sweeps.

struct PrecisionCell {
  double finesse = 0.0;
  int bits = 0;
  MappingMode mode = MappingMode::full_range;
  double accuracy = 0.0;
  double mean_abs_residual = 0.0;
  double max_abs_residual = 0.0;
  double region_limit_v = 0.0;      ///< quasi-linear boundary of the database
  double mean_region_precision = 0.0;  ///< mean bits over (0, v_l]
};

struct PrecisionSweepOptions {
  double alpha = 0.99;
  double v_max = 1.2;
  MrrPhysical base_ring{};  ///< theta0, v_pi and fsr for every cell
  std::size_t jobs = 1;
};

/// Accuracy with only the weighting error present, for every (finesse, bits)
/// cell: the network runs exactly but with each kernel replaced by the
/// transmissions realized on that cell's database.
inline std::vector<PrecisionCell> precision_sweep(std::span<const double> finesse_list, std::span<const int> bits_list,
                                                  MappingMode mode, const Dataset& data, const WeightsBundle& bundle,
                                                  const PrecisionSweepOptions& opt = {}) {
  if (finesse_list.empty() || bits_list.empty()) throw ParameterError("sweep lists must not be empty");
  std::vector<PrecisionCell> cells(finesse_list.size() * bits_list.size());
  parallel_for(cells.size(), opt.jobs, [&](std::size_t idx) {
    const double f = finesse_list[idx / bits_list.size()];
    const int bits = bits_list[idx % bits_list.size()];
    const auto ring = params_from_finesse(f, opt.alpha, opt.base_ring);
    const auto db = build_vt_database(ring, opt.v_max, bits);
    const auto maps = map_bundle(bundle, db, mode);

    PrecisionCell c;
    c.finesse = f;
    c.bits = bits;
    c.mode = mode;
    c.region_limit_v = quasi_linear_region(db);
    c.mean_region_precision = mean_precision(db, c.region_limit_v);
    std::size_t n = 0;
    for (const auto& layer : maps.layers) {
      for (const auto& m : layer) {
        for (const auto& r : m.records) {
          c.mean_abs_residual += std::abs(r.residual);
          c.max_abs_residual = std::max(c.max_abs_residual, std::abs(r.residual));
          ++n;
        }
      }
    }
    c.mean_abs_residual /= static_cast<double>(std::max<std::size_t>(n, 1));
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
      correct += forward_weighted(data.images[s], bundle, maps).predicted == data.labels[s];
    }
    c.accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
    cells[idx] = c;
  });
  return cells;
}

struct BaudCell {
  ErrorStats errors;
  std::vector<double> trial_accuracy;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

struct BaudSweepOptions {
  std::size_t trials = 10;
  std::uint64_t seed = 7;
  std::size_t jobs = 1;
};

/// For each baud: photonic FFVs of `error_images`, Error per the residual
/// definition, Gaussian fit, and injection of that fit into the weighted
/// reference FFVs of `eval_set`.
inline std::vector<BaudCell> baud_sweep(std::span<const double> bauds, const Dataset& error_images,
                                        const Dataset& eval_set, const WeightsBundle& bundle, const OcuConfig& config,
                                        const BaudSweepOptions& opt = {}) {
  if (bauds.empty() || error_images.size() == 0) throw ParameterError("baud sweep needs bauds and images");
  const auto db = build_vt_database(config.mrr, config.v_max, config.dac_bits);
  const auto maps = map_bundle(bundle, db, config.mapping_mode);

  // Reference and weighting error do not depend on the baud rate.
  std::vector<std::vector<double>> ref(error_images.size()), we(error_images.size());
  for (std::size_t s = 0; s < error_images.size(); ++s) {
    ref[s] = forward_reference(error_images.images[s], bundle).ffv;
    const auto weighted = forward_weighted(error_images.images[s], bundle, maps).ffv;
    we[s].resize(weighted.size());
    for (std::size_t i = 0; i < weighted.size(); ++i) we[s][i] = weighted[i] - ref[s][i];
  }
  std::vector<std::vector<double>> base(eval_set.size());
  for (std::size_t s = 0; s < eval_set.size(); ++s) base[s] = forward_weighted(eval_set.images[s], bundle, maps).ffv;

  std::vector<BaudCell> cells(bauds.size());
  for (std::size_t b = 0; b < bauds.size(); ++b) {
    OcuConfig cfg = config;
    cfg.clock.baud = bauds[b];
    std::vector<std::vector<double>> err(error_images.size());
    parallel_for(error_images.size(), opt.jobs, [&](std::size_t s) {
      OcuConfig c = cfg;
      c.noise_seed = derive_seed(config.noise_seed, {b, s});
      const auto ph = forward_photonic(error_images.images[s], bundle, c, db).trace.ffv;
      err[s] = extract_error(ph, ref[s], we[s]);
    });
    BaudCell& cell = cells[b];
    cell.errors.baud = bauds[b];
    for (const auto& e : err) cell.errors.samples.insert(cell.errors.samples.end(), e.begin(), e.end());
    cell.errors.fit = gaussian_fit(cell.errors.samples);
    if (eval_set.size() > 0) {
      cell.trial_accuracy = inject_errors(base, eval_set.labels, bundle, cell.errors.fit, opt.trials,
                                          derive_seed(opt.seed, {b}));
      const auto f = opt.trials > 1 ? gaussian_fit(cell.trial_accuracy) : GaussianFit{cell.trial_accuracy[0], 0.0};
      cell.mean_accuracy = f.mean;
      cell.std_accuracy = f.std;
    }
  }
  return cells;
}

}  // namespace pcnn
