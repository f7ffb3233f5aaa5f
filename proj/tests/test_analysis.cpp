#include <gtest/gtest.h>

#include <random>

#include "pcnn/analysis.hpp"

using namespace pcnn;

namespace {

std::uint64_t brute_force_ops(const NetworkSpec& spec) {
  std::uint64_t ops = 0;
  std::size_t m = spec.input_size, c = spec.input_channels;
  for (const auto& l : spec.layers) {
    const std::size_t out = m - l.kernel_size + 1;
    for (std::size_t k = 0; k < l.kernels; ++k)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < out; ++r)
          for (std::size_t q = 0; q < out; ++q)
            for (std::size_t t = 0; t < l.kernel_size * l.kernel_size; ++t) ops += 2;
    m = l.pool ? out / 2 : out;
    c = l.kernels;
  }
  return ops;
}

Dataset random_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    MatrixD m(28, 28);
    for (double& v : m.flat()) v = u(rng);
    d.images.push_back(std::move(m));
    d.labels.push_back(static_cast<std::uint8_t>(rng() % 10));
  }
  return d;
}

// Labels are what the reference network predicts, so reference accuracy is 1.
Dataset self_labelled(const WeightsBundle& b, std::size_t n, std::uint64_t seed) {
  auto d = random_dataset(n, seed);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<std::uint8_t>(forward_reference(d.images[i], b).predicted);
  return d;
}

}  // namespace

TEST(OpCount, DefaultSpec) { EXPECT_EQ(op_count(NetworkSpec{}), 44352u); }

TEST(OpCount, MatchesTapEnumeration) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 30; ++t) {
    NetworkSpec s;
    s.input_size = 12 + rng() % 20;
    s.input_channels = 1 + rng() % 3;
    s.layers = {{1 + rng() % 4, 1 + rng() % 3, true}, {1 + rng() % 4, 1 + rng() % 3, false}};
    EXPECT_EQ(op_count(s), brute_force_ops(s));
  }
}

TEST(Timing, ConvTime) {
  EXPECT_DOUBLE_EQ(conv_time(28, 10e9), (28.0 * 30 + 2) / 10e9);
  EXPECT_DOUBLE_EQ(conv_time(28, 10e9, 50e-12), (28.0 * 30 + 2) / 10e9 + 50e-12);
  EXPECT_THROW(conv_time(28, 0.0), ParameterError);
}

TEST(Throughput, SerialTableAtTenGbaud) {
  const std::vector<double> bauds{10e9};
  const auto r = throughput_table(NetworkSpec{}, bauds).front();
  EXPECT_EQ(r.periods, (std::vector<std::size_t>{2, 8, 16}));
  EXPECT_NEAR(r.layer_time_s[0], 170e-9, 0.05 * 170e-9);
  EXPECT_NEAR(r.layer_time_s[1], 160e-9, 0.05 * 160e-9);
  EXPECT_NEAR(r.layer_time_s[2], 64e-9, 0.10 * 64e-9);
  EXPECT_NEAR(r.total_time_s, 394e-9, 0.05 * 394e-9);
  EXPECT_NEAR(r.speed_ops, 112e9, 0.05 * 112e9);
  ASSERT_TRUE(r.speed_2dconv_ops.has_value());
  // inherits the ~2% gap in the layer totals
  EXPECT_NEAR(*r.speed_2dconv_ops, 143e9, 0.05 * 143e9);
  EXPECT_FALSE(r.average_utilization.has_value());
}

TEST(Throughput, MeshTableAtTenGbaud) {
  const std::vector<double> bauds{10e9};
  const auto r = throughput_table(NetworkSpec{}, bauds, MeshSpec{}).front();
  EXPECT_NEAR(r.total_time_s, 109e-9, 0.05 * 109e-9);
  EXPECT_NEAR(r.speed_ops, 406e9, 0.05 * 406e9);
  EXPECT_NEAR(*r.average_utilization, 0.5416666666666666, 1e-15);
}

TEST(Throughput, TimeIsPeriodsTimesConvTime) {
  const std::vector<double> bauds{5e9, 25e9};
  for (double tc : {0.0, 100e-12}) {
    for (const auto& r : throughput_table(NetworkSpec{}, bauds, std::nullopt, tc)) {
      const auto sh = NetworkSpec{}.shapes();
      double total = 0.0;
      for (std::size_t l = 0; l < 3; ++l) total += r.periods[l] * conv_time(sh[l].in_size, r.baud, tc);
      EXPECT_NEAR(r.total_time_s, total, 1e-20);
    }
  }
}

TEST(Throughput, ReportedFullUtilizationValues) {
  EXPECT_EQ(*reported_full_utilization_speed(5e9), 324e9);
  EXPECT_EQ(*reported_full_utilization_speed(10e9), 648e9);
  EXPECT_EQ(*reported_full_utilization_speed(25e9), 1.73e12);
  EXPECT_FALSE(reported_full_utilization_speed(7e9).has_value());
  EXPECT_FALSE(reported_full_utilization_speed(10.5e9).has_value());
}

TEST(Memory, Examples) {
  EXPECT_EQ(memory_model(3, 2).tma_electronic, 8u);
  EXPECT_EQ(memory_model(3, 2).tma_photonic, 2u);
  EXPECT_EQ(memory_model(28, 3).tma_electronic, 1352u);
  EXPECT_EQ(memory_model(28, 3).buffer_electronic, 26u * 26u * 9u);
  EXPECT_EQ(memory_model(28, 3).buffer_photonic, 28u * 28u + 26u * 26u);
  EXPECT_THROW(memory_model(3, 3), UnsupportedGeometryError);
}

TEST(Memory, GrowthAndOrdering) {
  for (std::size_t m = 5; m <= 100; ++m) {
    const auto c = memory_model(m, 3);
    EXPECT_EQ(c.tma_photonic, 2u);
    EXPECT_LT(c.buffer_photonic, c.buffer_electronic);
  }
  const double ratio = static_cast<double>(memory_model(2000, 3).tma_electronic) / memory_model(1000, 3).tma_electronic;
  EXPECT_NEAR(ratio, 4.0, 0.01);
}

TEST(Errors, ExtractAndFit) {
  const std::vector<double> ph{1.0, 2.0, 3.5}, ref{0.5, 2.0, 3.0}, we{0.25, 0.0, -0.5};
  EXPECT_EQ(extract_error(ph, ref, we), (std::vector<double>{0.25, 0.0, 1.0}));
  EXPECT_THROW(extract_error(ph, ref, std::vector<double>{1.0}), DimensionError);
  const auto f = gaussian_fit(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(f.mean, 2.5);
  EXPECT_NEAR(f.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_THROW(gaussian_fit(std::vector<double>{1.0}), ParameterError);
}

TEST(Errors, FitRecoversDrawnParameters) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.3, 1.7);
  std::vector<double> x(200000);
  for (double& v : x) v = n(rng);
  const auto f = gaussian_fit(x);
  EXPECT_NEAR(f.mean, 0.3, 0.02);
  EXPECT_NEAR(f.std, 1.7, 0.02);
}

TEST(Injection, ZeroNoiseKeepsCleanAccuracyAndNoiseOnlyHurtsOnAverage) {
  const auto b = initialize_bundle(NetworkSpec{}, 4);
  const auto data = self_labelled(b, 60, 5);
  std::vector<std::vector<double>> ffv;
  for (const auto& img : data.images) ffv.push_back(forward_reference(img, b).ffv);
  const auto clean = inject_errors(ffv, data.labels, b, GaussianFit{}, 3, 1);
  for (double a : clean) EXPECT_EQ(a, 1.0);

  double scale = 0.0;
  for (const auto& v : ffv)
    for (double x : v) scale = std::max(scale, std::abs(x));
  double previous = 1.0;
  for (double s : {0.01, 0.05, 0.2, 1.0}) {
    const auto acc = inject_errors(ffv, data.labels, b, GaussianFit{0.0, s * scale}, 20, 9);
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / acc.size();
    EXPECT_LE(mean, previous + 0.02) << s;
    previous = mean;
  }
  const auto wild = inject_errors(ffv, data.labels, b, GaussianFit{0.0, 100 * scale}, 20, 9);
  EXPECT_NEAR(std::accumulate(wild.begin(), wild.end(), 0.0) / wild.size(), 0.1, 0.1);
  EXPECT_EQ(inject_errors(ffv, data.labels, b, GaussianFit{0, 1}, 4, 2), inject_errors(ffv, data.labels, b, GaussianFit{0, 1}, 4, 2));
}

TEST(PrecisionSweep, GridAndTrends) {
  const auto b = initialize_bundle(NetworkSpec{}, 4);
  const auto data = self_labelled(b, 20, 6);
  const std::vector<double> finesse{150, 250};
  const std::vector<int> bits{4, 10, 16};
  PrecisionSweepOptions opt;
  opt.jobs = 2;
  const auto cells = precision_sweep(finesse, bits, MappingMode::full_range, data, b, opt);
  ASSERT_EQ(cells.size(), 6u);
  for (std::size_t f = 0; f < 2; ++f) {
    const auto& c4 = cells[f * 3 + 0];
    const auto& c10 = cells[f * 3 + 1];
    EXPECT_EQ(c4.finesse, finesse[f]);
    EXPECT_EQ(c4.bits, 4);
    // near critical coupling every weight is reachable, so bits dominate the residual
    if (f == 0) EXPECT_GT(c4.mean_abs_residual, c10.mean_abs_residual);
    EXPECT_GE(c4.mean_abs_residual, c10.mean_abs_residual);
  }
  // finesse 250 has a shallow notch, so even 16 bits cannot reach small weights;
  // at finesse 150 and 16 bits the weighted network is the reference
  const std::vector<double> f150{150};
  const std::vector<int> b16{16};
  const auto fine = precision_sweep(f150, b16, MappingMode::full_range, data, b, opt);
  EXPECT_EQ(fine[0].accuracy, 1.0);
  EXPECT_THROW(precision_sweep(std::vector<double>{}, bits, MappingMode::full_range, data, b), ParameterError);
  const auto q = precision_sweep(f150, b16, MappingMode::quasi_linear, data, b, opt);
  EXPECT_EQ(q[0].mode, MappingMode::quasi_linear);
}

TEST(BaudSweep, TenImagesGive360Samples) {
  const auto b = initialize_bundle(NetworkSpec{}, 4);
  const auto imgs = random_dataset(10, 7);
  const auto eval = self_labelled(b, 10, 8);
  const std::vector<double> bauds{10e9};
  BaudSweepOptions opt;
  opt.trials = 3;
  const auto cells = baud_sweep(bauds, imgs, eval, b, OcuConfig{}, opt);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].errors.samples.size(), 360u);
  EXPECT_EQ(cells[0].trial_accuracy.size(), 3u);
}

TEST(BaudSweep, WithoutFilterErrorIsQuantizationSized) {
  const auto b = initialize_bundle(NetworkSpec{}, 4);
  const auto imgs = random_dataset(4, 7);
  OcuConfig cfg;
  cfg.filter = false;
  const std::vector<double> bauds{5e9, 25e9};
  BaudSweepOptions opt;
  opt.trials = 1;
  const auto cells = baud_sweep(bauds, imgs, Dataset{}, b, cfg, opt);
  // every conv output carries at most one ADC half step per optical pass; the
  // largest per-layer half step bounds the feature error after ReLU and pooling
  // scaled by the fan-in of the deeper layers
  const auto db = build_vt_database(cfg.mrr, cfg.v_max, cfg.dac_bits);
  double bound = 0.0;
  for (const auto& img : imgs.images) {
    const auto p = forward_photonic(img, b, cfg, db);
    for (double h : p.diagnostics.max_output_half_step) bound = std::max(bound, h);
  }
  for (const auto& c : cells) EXPECT_LE(c.errors.fit.std, 40.0 * bound / std::sqrt(3.0));
  EXPECT_NEAR(cells[0].errors.fit.std, cells[1].errors.fit.std, 1e-12);
}
