#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "pcnn/device_models.hpp"

using namespace pcnn;
using big = boost::multiprecision::cpp_dec_float_50;

namespace {

// Through-port transmission in 50-digit arithmetic.
double transmission_oracle(double tau, double alpha, double theta) {
  const big a(alpha), t(tau);
  const big s = boost::multiprecision::sin(big(theta) / 2);
  const big num = (1 - a * a) * (1 - t * t);
  const big den = (1 - a * t) * (1 - a * t) + 4 * a * t * s * s;
  return static_cast<double>(1 - num / den);
}

// Bisection on the monotone relation finesse(tau) for fixed alpha.
double tau_by_bisection(double finesse, double alpha) {
  double lo = 1e-12, hi = 1.0 - 1e-15;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    MrrPhysical p;
    p.tau = mid;
    p.alpha = alpha;
    (p.finesse() < finesse ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

VtDatabase linear_db(int bits, double v_max = 1.0) {
  return VtDatabase::sample_curve(v_max, bits, [v_max](double v) { return v / v_max; });
}

}  // namespace

TEST(Transmission, MatchesHighPrecisionOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u01(0.5, 0.999), uv(0.0, 3.0), uth(-1.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    MrrPhysical p;
    p.tau = u01(rng);
    p.alpha = u01(rng);
    p.theta0 = uth(rng);
    const double v = uv(rng);
    const double want = transmission_oracle(p.tau, p.alpha, round_trip_phase(p, v));
    EXPECT_NEAR(transmission(p, v), std::clamp(want, 0.0, 1.0), 1e-12);
  }
}

TEST(Transmission, CriticalCouplingExtinguishesAtResonance) {
  MrrPhysical p;
  p.tau = p.alpha = 0.97;
  EXPECT_NEAR(transmission(p, 0.0), 0.0, 1e-15);
  // off resonance by half an FSR the ring is nearly transparent
  EXPECT_GT(transmission(p, p.v_pi), 0.99);
}

TEST(Transmission, StaysInUnitIntervalAndIsPeriodic) {
  MrrPhysical p;
  for (double v = 0.0; v < 20.0; v += 0.37) {
    const double t = transmission(p, v);
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
    EXPECT_NEAR(t, transmission(p, v + 2.0 * p.v_pi), 1e-12);
  }
}

TEST(Transmission, DetuningOfOneFsrIsIdentity) {
  MrrPhysical p;
  EXPECT_NEAR(transmission(p, 0.3, p.fsr), transmission(p, 0.3), 1e-12);
}

TEST(Transmission, RejectsBadInputs) {
  MrrPhysical p;
  EXPECT_THROW(transmission(p, -0.1), ParameterError);
  p.tau = 1.0;
  EXPECT_THROW(transmission(p, 0.1), ParameterError);
  p.tau = 0.9;
  p.alpha = 0.0;
  EXPECT_THROW(transmission(p, 0.1), ParameterError);
  p.alpha = 0.9;
  p.v_pi = 0.0;
  EXPECT_THROW(transmission(p, 0.1), ParameterError);
}

TEST(Finesse, ParamsRoundTrip) {
  for (double f : {5.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0}) {
    const auto p = params_from_finesse(f);
    EXPECT_NEAR(p.finesse(), f, 1e-9 * f) << f;
    EXPECT_DOUBLE_EQ(p.alpha, 0.99);
  }
}

TEST(Finesse, AgreesWithBisection) {
  for (double f : {100.0, 250.0}) {
    EXPECT_NEAR(params_from_finesse(f).tau, tau_by_bisection(f, 0.99), 1e-12);
    EXPECT_NEAR(params_from_finesse(f).finesse(), f, 1e-6);
  }
}

TEST(Finesse, HigherFinesseMeansWeakerCoupling) {
  EXPECT_GT(params_from_finesse(250).tau, params_from_finesse(100).tau);
  EXPECT_LT(params_from_finesse(250).fwhm(), params_from_finesse(100).fwhm());
}

TEST(Finesse, KeepsOtherFieldsOfBase) {
  MrrPhysical base;
  base.v_pi = 3.0;
  base.fsr = 1e12;
  const auto p = params_from_finesse(100, 0.98, base);
  EXPECT_EQ(p.v_pi, 3.0);
  EXPECT_EQ(p.fsr, 1e12);
}

TEST(Finesse, RejectsInvalid) {
  EXPECT_THROW(params_from_finesse(0.0), ParameterError);
  EXPECT_THROW(params_from_finesse(-3.0), ParameterError);
  EXPECT_THROW(params_from_finesse(100, 1.5), ParameterError);
  // a lossy ring cannot reach a high finesse with any coupling
  EXPECT_THROW(params_from_finesse(100, 0.5), InfeasibleError);
}

TEST(VtDatabaseTest, GridShape) {
  const auto db = build_vt_database(params_from_finesse(150), 1.2, 10);
  ASSERT_EQ(db.size(), 1024u);
  EXPECT_EQ(db[0].voltage, 0.0);
  EXPECT_EQ(db[1023].voltage, 1.2);
  EXPECT_NEAR(db.voltage_step(), 1.2 / 1023, 1e-15);
  for (std::size_t k = 0; k < db.size(); ++k) EXPECT_EQ(db.index_of(db[k].voltage), k);
  EXPECT_THROW(db.index_of(0.5 * db.voltage_step()), LookupError);
  EXPECT_THROW(db.index_of(2.0), LookupError);
}

TEST(VtDatabaseTest, OneBitHasTwoEntries) {
  const auto db = linear_db(1);
  ASSERT_EQ(db.size(), 2u);
  EXPECT_EQ(db[0].transmission, 0.0);
  EXPECT_EQ(db[1].transmission, 1.0);
}

TEST(VtDatabaseTest, RejectsBadArguments) {
  EXPECT_THROW(build_vt_database(MrrPhysical{}, 1.2, 0), ParameterError);
  EXPECT_THROW(build_vt_database(MrrPhysical{}, 1.2, 17), ParameterError);
  EXPECT_THROW(build_vt_database(MrrPhysical{}, 0.0, 8), ParameterError);
  EXPECT_THROW(VtDatabase::sample_curve(1.0, 4, [](double v) { return 2.0 * v; }), RangeError);
}

TEST(VtDatabaseTest, CsvHasHeaderAndOneRowPerCode) {
  std::ostringstream os;
  linear_db(3).write_csv(os);
  const auto s = os.str();
  EXPECT_EQ(s.rfind("voltage,transmission\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 9);
}

TEST(QuasiLinearRegion, LinearCurveSpansEverything) {
  EXPECT_DOUBLE_EQ(quasi_linear_region(linear_db(8)), 1.0);
}

TEST(QuasiLinearRegion, RaisedCosineEndsWhereSlopeLeavesTopThird) {
  // T = (1 - cos(pi v)) / 2 has slope (pi/2) sin(pi v); the top third of the
  // slope range is sin(pi v) >= 2/3, left at v = 1 - asin(2/3)/pi.
  const auto db = VtDatabase::sample_curve(1.0, 10, [](double v) { return 0.5 * (1.0 - std::cos(M_PI * v)); });
  EXPECT_NEAR(quasi_linear_region(db), 1.0 - std::asin(2.0 / 3.0) / M_PI, 3.0 * db.voltage_step());
}

TEST(QuasiLinearRegion, RingHasInteriorBoundary) {
  const auto db = build_vt_database(params_from_finesse(150), 1.2, 10);
  const double v_l = quasi_linear_region(db);
  EXPECT_GT(v_l, 0.0);
  EXPECT_LT(v_l, 1.2);
  // the slope just past v_l is below the top-third threshold
  double gmin = 1e300, gmax = -1e300;
  for (std::size_t k = 1; k < db.size(); ++k) {
    gmin = std::min(gmin, gradient_at(db, k));
    gmax = std::max(gmax, gradient_at(db, k));
  }
  const std::size_t k = db.index_of(v_l);
  EXPECT_LT(gradient_at(db, k + 1), gmin + 2.0 / 3.0 * (gmax - gmin));
  EXPECT_GE(gradient_at(db, k), gmin + 2.0 / 3.0 * (gmax - gmin));
}

TEST(QuasiLinearRegion, ConstantCurveHasNoRegion) {
  const auto db = VtDatabase::sample_curve(1.0, 6, [](double) { return 0.5; });
  EXPECT_THROW(quasi_linear_region(db), RegionNotFoundError);
}

TEST(MappingPrecision, LinearCurveClosedForm) {
  for (int b : {4, 8, 10, 12}) {
    const auto db = linear_db(b);
    const auto p = mapping_precision(db, db[5].voltage);
    ASSERT_TRUE(p.has_value());
    EXPECT_NEAR(*p, std::log2(std::pow(2.0, b) - 1.0), 1e-9);
  }
}

TEST(MappingPrecision, FlatStepIsReported) {
  const auto db = VtDatabase::sample_curve(1.0, 4, [](double v) { return v < 0.5 ? 0.0 : v; });
  EXPECT_FALSE(mapping_precision_at(db, 1).has_value());
  EXPECT_TRUE(mapping_precision_at(db, 10).has_value());
  EXPECT_THROW(mapping_precision_at(db, 0), LookupError);
  EXPECT_THROW(mapping_precision(db, 0.01), LookupError);
}

TEST(MappingPrecision, LowerFinesseIsMorePreciseOverItsRegion) {
  for (int bits : {8, 10, 12}) {
    const auto lo = build_vt_database(params_from_finesse(100), 1.2, bits);
    const auto hi = build_vt_database(params_from_finesse(250), 1.2, bits);
    EXPECT_GT(mean_precision(lo, quasi_linear_region(lo)), mean_precision(hi, quasi_linear_region(hi))) << bits;
  }
}

TEST(MapWeights, NearestTransmissionByExhaustiveSearch) {
  const auto db = build_vt_database(params_from_finesse(150), 1.2, 8);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixD k(3, 3);
    for (double& w : k.flat()) w = u(rng);
    const auto m = map_weights(db, k);
    EXPECT_EQ(m.scale, 1.0);
    for (std::size_t e = 0; e < k.size(); ++e) {
      double best = 1e300;
      for (const auto& entry : db.entries()) best = std::min(best, std::abs(entry.transmission - k.flat()[e]));
      EXPECT_EQ(std::abs(m.records[e].residual), best);
      EXPECT_EQ(m.records[e].realized, db[db.index_of(m.records[e].voltage)].transmission);
    }
  }
}

TEST(MapWeights, TiesGoToLowerVoltage) {
  // codes read 0, 0.25, 0.25, 0
  const auto db = VtDatabase::sample_curve(1.0, 2, [](double v) { return v > 0.0 && v < 0.9 ? 0.25 : 0.0; });
  const auto m = map_weights(db, MatrixD{{0.25, 0.125}});
  EXPECT_EQ(m.records[0].voltage, db[1].voltage);
  EXPECT_EQ(m.records[1].voltage, db[0].voltage);
}

TEST(MapWeights, NormalizesLargeKernels) {
  const auto db = linear_db(10);
  const auto m = map_weights(db, MatrixD{{2.0, 1.0}, {0.5, 0.0}});
  EXPECT_EQ(m.scale, 2.0);
  for (const auto& r : m.records) EXPECT_LE(r.target, 1.0);
  EXPECT_NEAR(m.records[0].realized, 1.0, 1e-12);
}

TEST(MapWeights, ResidualWithinHalfLocalStepInsideSpan) {
  const auto db = build_vt_database(params_from_finesse(150), 1.2, 10);
  double tmin = 1.0, tmax = 0.0, max_gap = 0.0;
  for (std::size_t k = 0; k < db.size(); ++k) {
    tmin = std::min(tmin, db[k].transmission);
    tmax = std::max(tmax, db[k].transmission);
    if (k) max_gap = std::max(max_gap, std::abs(db[k].transmission - db[k - 1].transmission));
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(tmin, tmax);
  for (int t = 0; t < 2000; ++t) {
    const auto m = map_weights(db, MatrixD{{u(rng)}});
    EXPECT_LE(std::abs(m.records[0].residual), 0.5 * max_gap + 1e-15);
  }
}

TEST(MapWeights, QuasiLinearModeStaysInRegion) {
  const auto db = build_vt_database(params_from_finesse(150), 1.2, 10);
  const double v_l = quasi_linear_region(db);
  double t_lin = 0.0;
  for (const auto& e : db.entries()) {
    if (e.voltage <= v_l) t_lin = std::max(t_lin, e.transmission);
  }
  const MatrixD k{{0.1, 0.4}, {0.2, 0.05}};
  const auto m = map_weights(db, k, MappingMode::quasi_linear);
  EXPECT_NEAR(m.scale, 0.4 / t_lin, 1e-12);
  EXPECT_LE(m.region_limit, v_l);
  for (const auto& r : m.records) EXPECT_LE(r.voltage, v_l);
}

TEST(MapWeights, RejectsUnmappable) {
  const auto db = linear_db(4);
  EXPECT_THROW(map_weights(db, MatrixD{{-0.1}}), UnmappableWeightError);
  EXPECT_THROW(map_weights(db, MatrixD{{std::nan("")}}), UnmappableWeightError);
  EXPECT_THROW(map_weights(db, MatrixD{}), DimensionError);
}

TEST(MapWeights, JsonRecords) {
  const auto j = map_weights(linear_db(4), MatrixD{{0.3}}).to_json();
  EXPECT_EQ(j.at("mode"), "full-range");
  ASSERT_EQ(j.at("records").size(), 1u);
  for (const char* key : {"w", "v", "t_realized", "residual"}) EXPECT_TRUE(j["records"][0].contains(key)) << key;
}

TEST(MappingModeNames, RoundTrip) {
  for (auto m : {MappingMode::full_range, MappingMode::quasi_linear}) EXPECT_EQ(mapping_mode_from_string(to_string(m)), m);
  EXPECT_THROW(mapping_mode_from_string("linear"), ParameterError);
}

TEST(WeightingError, IsImageCorrelatedWithResiduals) {
  const auto db = linear_db(4);
  const MatrixD k{{0.33, 0.71}, {0.12, 0.9}};
  const auto m = map_weights(db, k);
  std::vector<double> img(16);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.05 * static_cast<double>(i);
  const auto e = weighting_error(m, img);
  ASSERT_EQ(e.size(), 9u);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      double want = 0.0;
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) want += m.records[i * 2 + j].residual * img[(r + i) * 4 + c + j];
      }
      EXPECT_NEAR(e[r * 3 + c], want, 1e-14);
    }
  }
  EXPECT_THROW(weighting_error(m, std::vector<double>(15, 0.0)), DimensionError);
}

TEST(WeightingError, VanishesWithFineDac) {
  const auto db = linear_db(16);
  const auto m = map_weights(db, MatrixD{{0.123456, 0.654321}, {0.5, 0.25}});
  for (double e : weighting_error(m, std::vector<double>(9, 1.0))) EXPECT_LT(std::abs(e), 4.0 / 65535.0);
}
