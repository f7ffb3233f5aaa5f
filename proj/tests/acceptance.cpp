// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "pcnn/analysis.hpp"
#include "pcnn/conv.hpp"
#include "pcnn/idx.hpp"

using namespace pcnn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * std::abs(want); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto cfg = OcuConfig::ideal();
  const auto db = build_vt_database(cfg.mrr, cfg.v_max, cfg.dac_bits);
  const std::size_t trials = 1000;
  std::size_t bad = 0;
  double worst = 0.0;  // in half steps
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t M = 3 + rng() % 8;
    const std::size_t N = 1 + rng() % std::min<std::size_t>(3, M - 1);
    MatrixD img(M, M), k(N, N);
    for (double& v : img.flat()) v = u(rng);
    for (double& v : k.flat()) v = u(rng);
    const auto r = conv2d_optical(img, k, cfg, db);
    const auto exact = conv2d_reference(img, k);
    const auto we = weighting_error(r.diagnostics.mapping, img.flat());
    bool ok = true;
    for (std::size_t e = 0; e < exact.size(); ++e) {
      const double d = std::abs(r.output.flat()[e] - (exact.flat()[e] + we[e])) / r.diagnostics.output_half_step;
      worst = std::max(worst, d);
      ok = ok && d <= 1.0 + 1e-9;
    }
    bad += !ok;
  }
  return {bad == 0, fmt("%zu pairs, %zu outside one half step, worst %.3f half steps", trials, bad, worst)};
}

Outcome correlation_identity() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<long long> u(-100, 100);
  const std::size_t trials = 1000;
  std::size_t bad = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t M = 2 + rng() % 9;
    const std::size_t N = 1 + rng() % std::min<std::size_t>(M, 4);
    std::vector<long long> img(M * M);
    for (auto& v : img) v = u(rng);
    Matrix<long long> k(N, N);
    for (auto& v : k.flat()) v = u(rng);
    bad += correlation_decomposition_check<long long>(img, k).max_diff != 0;
  }
  const std::vector<long long> img{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Matrix<long long> k{{1, 2}, {3, 4}};
  const auto c = correlation_decomposition_check<long long>(img, k);
  const auto y = conv2d_reference(Matrix<long long>::from_flat(3, 3, img), k);
  const bool slices = c.lhs[4] == y(0, 0) && c.lhs[5] == y(0, 1) && c.lhs[7] == y(1, 0) && c.lhs[8] == y(1, 1) &&
                      y(0, 0) != 0 && c.max_diff == 0;
  return {bad == 0 && slices, fmt("%zu integer instances, %zu mismatches; 3x3/2x2 outputs at q=5,6,8,9: %s", trials,
                                  bad, slices ? "yes" : "no")};
}

Outcome design_point() {
  const auto r = resource_requirements(28, 3, 0.2, -150.0, 20e9);
  const bool ok = within(r.bandwidth_nm, 11.6, 0.005) && r.lines == 59 && within(r.length_km, 1.67, 0.005);
  return {ok, fmt("B %.3f nm, %zu lines, L %.4f km", r.bandwidth_nm, r.lines, r.length_km)};
}

Outcome ops() {
  const auto n = op_count(NetworkSpec{});
  return {n == 44352, fmt("%llu ops", static_cast<unsigned long long>(n))};
}

Outcome table1() {
  const std::vector<double> bauds{10e9};
  const double want_layers[3] = {170e-9, 160e-9, 64e-9};
  bool ok = true;
  std::string detail;
  for (double t_c : {0.0, 100e-12}) {
    const auto r = throughput_table(NetworkSpec{}, bauds, std::nullopt, t_c).front();
    for (int l = 0; l < 3; ++l) ok = ok && within(r.layer_time_s[l], want_layers[l], 0.10);
    ok = ok && within(r.speed_ops, 112e9, 0.10);
    detail += fmt("t_c %.0f ps: %.1f/%.1f/%.1f ns, %.1f GOPS; ", t_c * 1e12, r.layer_time_s[0] * 1e9,
                  r.layer_time_s[1] * 1e9, r.layer_time_s[2] * 1e9, r.speed_ops / 1e9);
  }
  return {ok, detail};
}

Outcome table2() {
  const std::vector<double> bauds{10e9};
  const auto r = throughput_table(NetworkSpec{}, bauds, MeshSpec{4, 4}, 0.0).front();
  const double util = mesh_schedule(NetworkSpec{}, MeshSpec{4, 4}).average_utilization;
  const bool util_ok = std::round(util * 1000.0) == 542.0;
  const auto stored = reported_full_utilization_speed(10e9);
  const bool ok = within(r.total_time_s, 109e-9, 0.10) && within(r.speed_ops, 406e9, 0.10) && util_ok &&
                  stored && *stored == 648e9;
  return {ok, fmt("total %.1f ns, %.1f GOPS, utilization %.4f%%, stored 100%% value %.0f GOPS", r.total_time_s * 1e9,
                  r.speed_ops / 1e9, util * 100.0, stored ? *stored / 1e9 : -1.0)};
}

Outcome memory() {
  std::size_t bad = 0, cases = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    for (std::size_t m = 5; m <= 100; ++m) {
      if (m <= n) continue;
      const auto c = memory_model(m, n);
      const auto want = 2 * (m - n + 1) * (m - n + 1);
      bad += c.tma_electronic != want || c.tma_photonic != 2;
      ++cases;
    }
  }
  return {bad == 0, fmt("%zu (M, N) cases, %zu mismatches", cases, bad)};
}

struct Mnist {
  idx::Split split;
  WeightsBundle bundle;
  double train_s = 0.0;
};

Mnist& mnist() {
  static Mnist m = [] {
    Mnist out;
    const auto all = idx::load_directory(PCNN_DATA_DIR);
    out.split = idx::split_holdout(all, 200, 7);
    const auto t0 = std::chrono::steady_clock::now();
    out.bundle = train_reference(out.split.train, NetworkSpec{}, TrainOptions{});
    out.train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }();
  return m;
}

Outcome accuracy(std::size_t jobs) {
  auto& m = mnist();
  const auto& hold = m.split.holdout;
  const auto ref = evaluate_reference(hold, m.bundle, jobs);
  const auto ph = evaluate_photonic(hold, m.bundle, OcuConfig{}, std::nullopt, jobs);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < hold.size(); ++i) agree += ph.predictions[i] == ref.predictions[i];
  const double agreement = static_cast<double>(agree) / static_cast<double>(hold.size());
  const bool ok = ref.accuracy >= 0.80 && ref.accuracy - ph.accuracy <= 0.05 && agreement >= 0.90;
  return {ok, fmt("%zu held-out samples: reference %.3f, photonic 10 GBd %.3f, agreement %.3f (training %.1f s)",
                  hold.size(), ref.accuracy, ph.accuracy, agreement, m.train_s)};
}

Outcome baud_degradation(std::size_t jobs) {
  auto& m = mnist();
  const std::vector<double> bauds{5e9, 10e9, 15e9, 20e9, 25e9};
  Dataset error_images;
  for (std::size_t i = 0; i < 10; ++i) {
    error_images.images.push_back(m.split.train.images[i]);
    error_images.labels.push_back(m.split.train.labels[i]);
  }
  BaudSweepOptions opt;
  opt.trials = 20;
  opt.jobs = jobs;
  const auto cells = baud_sweep(bauds, error_images, m.split.holdout, m.bundle, OcuConfig{}, opt);
  bool mono = true;
  std::string stds, accs;
  for (std::size_t b = 0; b < cells.size(); ++b) {
    if (b > 0) mono = mono && cells[b].errors.fit.std >= cells[b - 1].errors.fit.std;
    stds += fmt("%s%.4f", b ? "/" : "", cells[b].errors.fit.std);
    accs += fmt("%s%.3f", b ? "/" : "", cells[b].mean_accuracy);
  }
  const bool ok = mono && cells.back().mean_accuracy <= cells.front().mean_accuracy;
  return {ok, "error std " + stds + "; mean accuracy over 20 trials " + accs};
}

Outcome precision_trends() {
  const auto lo = params_from_finesse(100.0), hi = params_from_finesse(250.0);
  bool finesse_ok = true;
  std::string detail;
  for (int bits : {6, 8, 10, 12}) {
    const auto a = build_vt_database(lo, 1.2, bits), b = build_vt_database(hi, 1.2, bits);
    const double pa = mean_precision(a, quasi_linear_region(a)), pb = mean_precision(b, quasi_linear_region(b));
    finesse_ok = finesse_ok && pa > pb;
    detail += fmt("%d bits F100 %.2f vs F250 %.2f; ", bits, pa, pb);
  }
  bool linear_ok = true;
  double prev = 0.0, worst_step = 0.0;
  for (int bits = 4; bits <= 16; ++bits) {
    const auto db = VtDatabase::sample_curve(1.0, bits, [](double v) { return v; });
    const double p = mean_precision(db, quasi_linear_region(db));
    linear_ok = linear_ok && std::abs(p - std::log2(std::exp2(bits) - 1.0)) < 1e-9;
    if (bits > 4) {
      worst_step = std::max(worst_step, std::abs(p - prev - 1.0));
      linear_ok = linear_ok && std::abs(p - prev - 1.0) < 0.05;
    }
    prev = p;
  }
  detail += fmt("linear curve: exact, per-bit gain within %.4f of 1", worst_step);
  return {finesse_ok && linear_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::size_t jobs = 0;
  app.add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  CLI11_PARSE(app, argc, argv);
  if (jobs == 0) jobs = default_jobs();

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"correlation identity", correlation_identity},
      {"delay design point", design_point},
      {"op count", ops},
      {"serial throughput", table1},
      {"mesh throughput", table2},
      {"memory model", memory},
      {"accuracy", [&] { return accuracy(jobs); }},
      {"baud degradation", [&] { return baud_degradation(jobs); }},
      {"precision trends", precision_trends},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2zu %-22s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), s);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
