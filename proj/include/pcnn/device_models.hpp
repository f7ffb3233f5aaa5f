#pragma once

// Micro-ring resonator weight bank: through-port transmission, quantized
// voltage/transmission databases, weight-to-voltage mapping and the
// resulting weighting error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcnn/conv.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/matrix.hpp"

namespace pcnn {

/// Physical parameters of an all-pass (through-port) micro-ring.
struct MrrPhysical {
  double tau = 0.99;     ///< self-coupling (amplitude transmission) constant
  double alpha = 0.99;   ///< round-trip amplitude loss factor
  double theta0 = 0.0;   ///< bias phase [rad]
  double v_pi = 7.5;     ///< voltage for a pi round-trip phase shift [V]
  double fsr = 4.0e12;   ///< free spectral range [Hz]

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("ring tau must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("ring alpha must lie in (0, 1]");
    if (!(v_pi > 0.0)) throw ParameterError("ring v_pi must be positive");
    if (!(fsr > 0.0)) throw ParameterError("ring fsr must be positive");
    if (!std::isfinite(theta0)) throw ParameterError("ring theta0 must be finite");
  }

  /// pi * sqrt(alpha tau) / (1 - alpha tau)
  double finesse() const {
    const double x = alpha * tau;
    return std::numbers::pi * std::sqrt(x) / (1.0 - x);
  }

  /// Resonance full width at half maximum [Hz].
  double fwhm() const { return fsr / finesse(); }
};

/// Round-trip phase for drive voltage `v` and optical detuning `detuning` [Hz].
inline double round_trip_phase(const MrrPhysical& p, double v, double detuning = 0.0) {
  return p.theta0 + std::numbers::pi * v / p.v_pi + 2.0 * std::numbers::pi * detuning / p.fsr;
}

/// Through-port intensity transmission
///   T = 1 - (1 - a^2)(1 - t^2) / ((1 - a t)^2 + 4 a t sin^2(theta / 2)).
inline double transmission(const MrrPhysical& p, double v, double detuning = 0.0) {
  p.validate();
  if (!(v >= 0.0)) throw ParameterError("drive voltage must be non-negative");
  const double at = p.alpha * p.tau;
  const double s = std::sin(0.5 * round_trip_phase(p, v, detuning));
  const double loss = (1.0 - p.alpha * p.alpha) * (1.0 - p.tau * p.tau);
  const double t = 1.0 - loss / ((1.0 - at) * (1.0 - at) + 4.0 * at * s * s);
  return std::clamp(t, 0.0, 1.0);
}

/// Ring whose finesse equals `finesse` for loss factor `alpha`. The finesse
/// relation is quadratic in sqrt(alpha tau), so tau has a closed form.
inline MrrPhysical params_from_finesse(double finesse, double alpha = 0.99, const MrrPhysical& base = {}) {
  if (!(finesse > 0.0) || !std::isfinite(finesse)) throw ParameterError("finesse must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in (0, 1]");
  const double pi = std::numbers::pi;
  const double s = (-pi + std::sqrt(pi * pi + 4.0 * finesse * finesse)) / (2.0 * finesse);
  const double tau = s * s / alpha;
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InfeasibleError("no coupling constant in (0, 1) gives finesse " + std::to_string(finesse) +
                          " at alpha " + std::to_string(alpha));
  }
  MrrPhysical p = base;
  p.tau = tau;
  p.alpha = alpha;
  p.validate();
  return p;
}

struct VtEntry {
  double voltage = 0.0;
  double transmission = 0.0;
};

/// Transmission recorded at every code of a uniform DAC sweep over [0, v_max].
class VtDatabase {
 public:
  VtDatabase() = default;

  /// Samples `curve(v)` at 2^dac_bits uniformly spaced voltages in [0, v_max].
  template <typename Curve>
  static VtDatabase sample_curve(double v_max, int dac_bits, Curve&& curve) {
    if (dac_bits < 1 || dac_bits > 20) throw ParameterError("dac_bits must lie in [1, 20]");
    if (!(v_max > 0.0)) throw ParameterError("v_max must be positive");
    VtDatabase db;
    db.dac_bits_ = dac_bits;
    db.v_max_ = v_max;
    const std::size_t n = std::size_t{1} << dac_bits;
    db.entries_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double v = k + 1 == n ? v_max : v_max * static_cast<double>(k) / static_cast<double>(n - 1);
      const double t = curve(v);
      if (!(t >= 0.0 && t <= 1.0)) throw RangeError("database transmission outside [0, 1]");
      db.entries_[k] = {v, t};
    }
    return db;
  }

  std::span<const VtEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const VtEntry& operator[](std::size_t k) const { return entries_[k]; }
  int dac_bits() const { return dac_bits_; }
  double v_max() const { return v_max_; }
  double voltage_step() const { return v_max_ / static_cast<double>(entries_.size() - 1); }

  /// Grid index of `v`; throws LookupError when `v` is not a grid voltage.
  std::size_t index_of(double v) const {
    const double pos = v / voltage_step();
    const double k = std::round(pos);
    if (k < 0.0 || k >= static_cast<double>(entries_.size()) || std::abs(pos - k) > 1e-6) {
      throw LookupError("voltage " + std::to_string(v) + " is not on the database grid");
    }
    return static_cast<std::size_t>(k);
  }

  void write_csv(std::ostream& os) const {
    os << "voltage,transmission\n" << std::setprecision(12);
    for (const auto& e : entries_) os << e.voltage << ',' << e.transmission << '\n';
  }

 private:
  std::vector<VtEntry> entries_;
  int dac_bits_ = 0;
  double v_max_ = 0.0;
};

inline VtDatabase build_vt_database(const MrrPhysical& params, double v_max = 1.2, int dac_bits = 10) {
  params.validate();
  if (dac_bits > 16) throw ParameterError("dac_bits must not exceed 16");
  return VtDatabase::sample_curve(v_max, dac_bits, [&](double v) { return transmission(params, v); });
}

/// Finite-difference slope dT/dv attributed to grid point k (k >= 1).
inline double gradient_at(const VtDatabase& db, std::size_t k) {
  return (db[k].transmission - db[k - 1].transmission) / (db[k].voltage - db[k - 1].voltage);
}

/// Upper boundary v_l of the quasi-linear region. The region starts at 0 V and
/// ends at the last grid voltage before the slope leaves the top third of its
/// observed range (slope >= min + 2/3 (max - min)) for the first time after
/// having entered it. A constant slope gives v_l = v_max.
inline double quasi_linear_region(const VtDatabase& db) {
  if (db.size() < 2) throw RegionNotFoundError("database has no slope samples");
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = -gmin;
  bool varies = false;
  for (std::size_t k = 1; k < db.size(); ++k) {
    const double g = gradient_at(db, k);
    gmin = std::min(gmin, g);
    gmax = std::max(gmax, g);
    varies = varies || db[k].transmission != db[0].transmission;
  }
  if (!varies) throw RegionNotFoundError("transmission is constant over the sweep");
  if (gmax - gmin <= 1e-12 * std::max(std::abs(gmax), std::abs(gmin))) return db.v_max();

  const double threshold = gmin + 2.0 / 3.0 * (gmax - gmin);
  bool entered = false;
  for (std::size_t k = 1; k < db.size(); ++k) {
    const bool top = gradient_at(db, k) >= threshold;
    if (top) entered = true;
    if (entered && !top) return db[k - 1].voltage;
  }
  if (!entered) throw RegionNotFoundError("no slope reaches the top third of its range");
  return db.v_max();
}

/// Mapping precision in bits at grid point `k`: log2(1 / |T(v_k) - T(v_{k-1})|).
/// std::nullopt marks a flat step (zero difference).
inline std::optional<double> mapping_precision_at(const VtDatabase& db, std::size_t k) {
  if (k == 0 || k >= db.size()) throw LookupError("mapping precision needs a grid point with a predecessor");
  const double step = std::abs(db[k].transmission - db[k - 1].transmission);
  if (step == 0.0) return std::nullopt;
  return -std::log2(step);
}

inline std::optional<double> mapping_precision(const VtDatabase& db, double v_i) {
  return mapping_precision_at(db, db.index_of(v_i));
}

/// Mean precision over grid points in (0, v_upper], flat steps excluded.
inline double mean_precision(const VtDatabase& db, double v_upper) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 1; k < db.size() && db[k].voltage <= v_upper * (1.0 + 1e-12); ++k) {
    if (auto p = mapping_precision_at(db, k)) {
      sum += *p;
      ++count;
    }
  }
  if (count == 0) throw RegionNotFoundError("no non-flat steps below the requested voltage");
  return sum / static_cast<double>(count);
}

enum class MappingMode { full_range, quasi_linear };

inline std::string to_string(MappingMode m) { return m == MappingMode::full_range ? "full-range" : "quasi-linear"; }

inline MappingMode mapping_mode_from_string(const std::string& s) {
  if (s == "full-range") return MappingMode::full_range;
  if (s == "quasi-linear") return MappingMode::quasi_linear;
  throw ParameterError("unknown mapping mode '" + s + "'");
}

struct WeightRecord {
  double target = 0.0;       ///< normalized weight the ring should realize
  double voltage = 0.0;      ///< chosen drive voltage
  double realized = 0.0;     ///< transmission at that voltage
  double residual = 0.0;     ///< realized - target
};

/// Kernel mapped onto a weight bank. `targets = kernel / scale`, so a result
/// computed with realized transmissions is multiplied by `scale` to return to
/// kernel units.
struct WeightMapping {
  MappingMode mode = MappingMode::full_range;
  double scale = 1.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double region_limit = 0.0;  ///< highest voltage searched
  std::vector<WeightRecord> records;  ///< row-major over the kernel

  std::size_t channels() const { return records.size(); }

  MatrixD residual_kernel() const { return collect([](const WeightRecord& r) { return r.residual; }); }
  MatrixD realized_kernel() const { return collect([](const WeightRecord& r) { return r.realized; }); }
  MatrixD target_kernel() const { return collect([](const WeightRecord& r) { return r.target; }); }

  double realized_sum() const {
    double s = 0.0;
    for (const auto& r : records) s += r.realized;
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) {
      recs.push_back({{"w", r.target}, {"v", r.voltage}, {"t_realized", r.realized}, {"residual", r.residual}});
    }
    return {{"mode", to_string(mode)}, {"scale", scale}, {"rows", rows}, {"cols", cols}, {"records", recs}};
  }

 private:
  template <typename F>
  MatrixD collect(F f) const {
    MatrixD m(rows, cols);
    for (std::size_t k = 0; k < records.size(); ++k) m.flat()[k] = f(records[k]);
    return m;
  }
};

/// Maps every kernel element to the database entry whose transmission is
/// nearest to it; equidistant candidates resolve to the lower voltage.
inline WeightMapping map_weights(const VtDatabase& db, const MatrixD& kernel,
                                 MappingMode mode = MappingMode::full_range) {
  if (kernel.empty()) throw DimensionError("empty kernel");
  if (db.size() == 0) throw ParameterError("empty V-T database");
  double wmax = 0.0;
  for (double w : kernel.flat()) {
    if (!std::isfinite(w)) throw UnmappableWeightError("kernel contains a non-finite weight");
    if (w < 0.0) throw UnmappableWeightError("negative weight " + std::to_string(w) + " has no transmission");
    wmax = std::max(wmax, w);
  }

  WeightMapping out;
  out.mode = mode;
  out.rows = kernel.rows();
  out.cols = kernel.cols();
  std::size_t last = db.size() - 1;

  if (mode == MappingMode::full_range) {
    out.scale = wmax > 1.0 ? wmax : 1.0;
  } else {
    const double v_l = quasi_linear_region(db);
    double t_lin = 0.0;
    last = 0;
    for (std::size_t k = 0; k < db.size() && db[k].voltage <= v_l; ++k) {
      t_lin = std::max(t_lin, db[k].transmission);
      last = k;
    }
    out.scale = (wmax > 0.0 && t_lin > 0.0) ? wmax / t_lin : 1.0;
  }
  out.region_limit = db[last].voltage;

  out.records.reserve(kernel.size());
  for (double w : kernel.flat()) {
    const double target = w / out.scale;
    std::size_t best = 0;
    double best_dist = std::abs(db[0].transmission - target);
    for (std::size_t k = 1; k <= last; ++k) {
      const double d = std::abs(db[k].transmission - target);
      if (d < best_dist) {
        best = k;
        best_dist = d;
      }
    }
    out.records.push_back({target, db[best].voltage, db[best].transmission, db[best].transmission - target});
  }
  return out;
}

/// Contribution of the mapping residuals to every output of one convolution:
/// the image convolved with the residual kernel, row-major.
inline std::vector<double> weighting_error(const WeightMapping& mapping, std::span<const double> flat_image) {
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(flat_image.size()))));
  if (m * m != flat_image.size() || flat_image.empty()) throw DimensionError("image length is not a perfect square");
  if (mapping.rows != mapping.cols || mapping.records.size() != mapping.rows * mapping.cols) {
    throw DimensionError("mapping is not a square kernel");
  }
  if (mapping.rows > m) throw DimensionError("kernel larger than image");
  const auto y = conv2d_reference(MatrixD::from_flat(m, m, flat_image), mapping.residual_kernel());
  return y.values();
}

}  // namespace pcnn
