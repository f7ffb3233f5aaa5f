// pcnn: train the reference CNN, run it through the photonic simulator, sweep
// device and link parameters, and print timing and memory tables.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 computation failure.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pcnn/analysis.hpp"
#include "pcnn/bundle_io.hpp"
#include "pcnn/idx.hpp"
#include "pcnn/run_io.hpp"

#ifndef PCNN_VERSION
#define PCNN_VERSION "dev"
#endif

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace pcnn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json default_config() {
  return {{"seed", 7},
          {"t_c", 0.0},
          {"ocu",
           {{"baud", 10e9},
            {"oversampling", 16},
            {"sigma", 0.5},
            {"circuit_delay", 0.0},
            {"dac_bits", 10},
            {"adc_bits", 10},
            {"v_max", 1.2},
            {"adc_headroom", 1.0},
            {"i_input", 1.0},
            {"filter", true},
            {"noise_std", 0.0},
            {"finesse", 150.0},
            {"alpha", 0.99},
            {"v_pi", 7.5},
            {"fsr", 4e12},
            {"theta0", 0.0},
            {"mapping_mode", "full-range"},
            {"delays", "ideal"},
            {"delay_error_std_s", 0.0},
            {"delta_lambda_nm", 0.2},
            {"dispersion_ps_nm_km", -150.0}}},
          {"train",
           {{"epochs", 10},
            {"learning_rate", 0.01},
            {"momentum", 0.9},
            {"batch_size", 32},
            {"holdout", 200},
            {"train_limit", 0},
            {"min_train_accuracy", 0.6}}}};
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config ") + section + "." + key + ": " + e.what());
  }
}

OcuConfig ocu_from(const json& cfg) {
  OcuConfig c;
  c.clock = {get<double>(cfg, "ocu", "baud"), get<int>(cfg, "ocu", "oversampling")};
  c.sigma = get<double>(cfg, "ocu", "sigma");
  c.circuit_delay = get<double>(cfg, "ocu", "circuit_delay");
  c.dac_bits = get<int>(cfg, "ocu", "dac_bits");
  c.adc_bits = get<int>(cfg, "ocu", "adc_bits");
  c.v_max = get<double>(cfg, "ocu", "v_max");
  c.adc_headroom = get<double>(cfg, "ocu", "adc_headroom");
  c.i_input = get<double>(cfg, "ocu", "i_input");
  c.filter = get<bool>(cfg, "ocu", "filter");
  c.noise_std = get<double>(cfg, "ocu", "noise_std");
  MrrPhysical base;
  base.v_pi = get<double>(cfg, "ocu", "v_pi");
  base.fsr = get<double>(cfg, "ocu", "fsr");
  base.theta0 = get<double>(cfg, "ocu", "theta0");
  c.mrr = params_from_finesse(get<double>(cfg, "ocu", "finesse"), get<double>(cfg, "ocu", "alpha"), base);
  c.mapping_mode = mapping_mode_from_string(get<std::string>(cfg, "ocu", "mapping_mode"));
  const auto delays = get<std::string>(cfg, "ocu", "delays");
  if (delays == "ideal") {
    c.delays = IdealDelays{};
  } else if (delays == "dispersive") {
    c.delays = DispersiveDelays{get<double>(cfg, "ocu", "delta_lambda_nm"), get<double>(cfg, "ocu", "dispersion_ps_nm_km")};
  } else if (delays == "arrayed") {
    c.delays = ArrayedDelays{get<double>(cfg, "ocu", "delay_error_std_s"), cfg.at("seed").get<std::uint64_t>()};
  } else {
    throw UsageError("config ocu.delays must be ideal, dispersive or arrayed");
  }
  c.noise_seed = cfg.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string confusion_csv(const Matrix<std::size_t>& m) {
  std::ostringstream os;
  os << "true\\predicted";
  for (std::size_t c = 0; c < m.cols(); ++c) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    os << r;
    for (std::size_t c = 0; c < m.cols(); ++c) os << ',' << m(r, c);
    os << '\n';
  }
  return os.str();
}

struct Context {
  std::string command;
  json config;
  fs::path out_dir = ".";
  std::size_t jobs = 1;
  json inputs = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }
  std::string manifest_name() const { return "manifest_" + command + ".json"; }

  void add_input(const fs::path& p) { inputs[p.string()] = run::sha256_file(p); }

  void finish(run::OutputSet& out) const {
    json m{{"command", command},
           {"tool_version", PCNN_VERSION},
           {"seed", seed()},
           {"config", config},
           {"jobs", jobs},
           {"inputs", inputs},
           {"timings", {{"wall_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}}}};
    json outputs = json::array();
    for (const auto& name : out.names()) outputs.push_back(name);
    outputs.push_back(manifest_name());
    m["outputs"] = outputs;
    out.stage(manifest_name(), m.dump(2) + "\n");
    for (const auto& p : out.commit()) std::cout << "wrote " << p.string() << '\n';
  }
};

Dataset load_dataset(Context& ctx, const fs::path& dir) {
  auto d = idx::load_directory(dir);
  ctx.add_input(dir / "train-images-idx3-ubyte");
  ctx.add_input(dir / "train-labels-idx1-ubyte");
  return d;
}

WeightsBundle load_weights(Context& ctx, const fs::path& stem) {
  auto b = load_bundle(stem);
  auto js = stem;
  js += ".json";
  auto bin = stem;
  bin += ".bin";
  ctx.add_input(js);
  ctx.add_input(bin);
  return b;
}

/// The held-out split the bundle was trained against.
idx::Split split_for(const Context& ctx, const Dataset& all, const WeightsBundle& b) {
  const auto holdout = ctx.config.at("train").at("holdout").get<std::size_t>();
  return idx::split_holdout(all, std::min(holdout, all.size()), b.meta.seed);
}

Dataset head(const Dataset& d, std::size_t n) {
  Dataset out;
  n = std::min(n, d.size());
  out.images.assign(d.images.begin(), d.images.begin() + static_cast<std::ptrdiff_t>(n));
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

int cmd_train(Context& ctx, const fs::path& data, const std::string& name) {
  const auto all = load_dataset(ctx, data);
  const auto& t = ctx.config.at("train");
  const auto limit = t.at("train_limit").get<std::size_t>();
  const auto split = idx::split_holdout(all, std::min(t.at("holdout").get<std::size_t>(), all.size()), ctx.seed(),
                                        limit ? limit : static_cast<std::size_t>(-1));
  TrainOptions opt;
  opt.epochs = t.at("epochs").get<std::size_t>();
  opt.seed = ctx.seed();
  opt.learning_rate = t.at("learning_rate").get<double>();
  opt.momentum = t.at("momentum").get<double>();
  opt.batch_size = t.at("batch_size").get<std::size_t>();
  opt.min_train_accuracy = t.at("min_train_accuracy").get<double>();
  const auto b = train_reference(split.train, NetworkSpec{}, opt);
  const auto ref = evaluate_reference(split.holdout, b, ctx.jobs);

  run::OutputSet out(ctx.out_dir);
  const auto bytes = encode_f64le(bundle_parameters(b));
  out.stage(name + ".bin", std::string(bytes.begin(), bytes.end()));
  auto meta = bundle_metadata(b);
  out.stage(name + ".json", meta.dump(2) + "\n");
  std::cout << "train accuracy " << fmt(b.meta.train_accuracy) << ", held-out accuracy " << fmt(ref.accuracy) << " ("
            << split.holdout.size() << " samples)\n";
  ctx.finish(out);
  return 0;
}

int cmd_simulate(Context& ctx, const fs::path& data, const fs::path& weights, std::size_t samples, bool ideal,
                 const std::optional<MeshSpec>& mesh) {
  const auto b = load_weights(ctx, weights);
  const auto all = load_dataset(ctx, data);
  const auto eval = head(split_for(ctx, all, b).holdout, samples);
  OcuConfig cfg = ocu_from(ctx.config);
  if (ideal) {
    const auto keep_clock = cfg.clock;
    cfg = OcuConfig::ideal();
    cfg.clock = keep_clock;
  }
  const auto ref = evaluate_reference(eval, b, ctx.jobs);
  const auto ph = evaluate_photonic(eval, b, cfg, mesh, ctx.jobs);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) agree += ph.predictions[i] == ref.predictions[i];

  const std::vector<double> bauds{cfg.clock.baud};
  const auto cost = throughput_table(b.spec, bauds, mesh, ctx.config.at("t_c").get<double>()).front();
  json result{{"manifest", ctx.manifest_name()},
              {"samples", eval.size()},
              {"baud", cfg.clock.baud},
              {"ideal", ideal},
              {"accuracy", ph.accuracy},
              {"reference_accuracy", ref.accuracy},
              {"agreement", eval.size() ? static_cast<double>(agree) / static_cast<double>(eval.size()) : 0.0},
              {"timing",
               {{"periods", cost.periods},
                {"layer_time_s", cost.layer_time_s},
                {"total_time_s", cost.total_time_s},
                {"ops", cost.ops},
                {"speed_ops", cost.speed_ops}}}};
  if (mesh) result["mesh"] = std::to_string(mesh->rows) + "x" + std::to_string(mesh->cols);

  std::ostringstream preds;
  preds << "index,label,predicted,reference\n";
  for (std::size_t i = 0; i < eval.size(); ++i) {
    preds << i << ',' << int{eval.labels[i]} << ',' << ph.predictions[i] << ',' << ref.predictions[i] << '\n';
  }
  run::OutputSet out(ctx.out_dir);
  out.stage("simulate.json", result.dump(2) + "\n");
  out.stage("confusion.csv", confusion_csv(ph.confusion));
  out.stage("confusion_reference.csv", confusion_csv(ref.confusion));
  out.stage("predictions.csv", preds.str());
  std::cout << "photonic accuracy " << fmt(ph.accuracy) << ", reference " << fmt(ref.accuracy) << ", agreement "
            << fmt(result["agreement"].get<double>()) << '\n';
  ctx.finish(out);
  return 0;
}

int cmd_sweep(Context& ctx, const std::string& kind, const fs::path& data, const fs::path& weights,
              const std::string& bauds_text, std::size_t images, std::size_t trials, std::size_t samples,
              const std::string& finesse_text, const std::string& bits_text, bool dump_errors) {
  if (kind != "baud" && kind != "finesse-adc") throw UsageError("unknown sweep kind '" + kind + "'");
  const auto b = load_weights(ctx, weights);
  const auto all = load_dataset(ctx, data);
  const auto split = split_for(ctx, all, b);
  const auto eval = head(split.holdout, samples);
  const OcuConfig cfg = ocu_from(ctx.config);
  run::OutputSet out(ctx.out_dir);
  json result{{"manifest", ctx.manifest_name()}, {"kind", kind}, {"cells", json::array()}};

  if (kind == "baud") {
    const auto bauds = run::parse_values(bauds_text, 5e9);
    // error statistics come from training images so they never overlap the evaluation set
    const auto error_images = head(split.train, images);
    BaudSweepOptions opt;
    opt.trials = trials;
    opt.seed = ctx.seed();
    opt.jobs = ctx.jobs;
    const auto cells = baud_sweep(bauds, error_images, eval, b, cfg, opt);
    std::ostringstream csv, dump;
    csv << "baud,error_samples,error_mean,error_std,accuracy_mean,accuracy_std,trials\n";
    dump << "baud,index,error\n";
    for (const auto& c : cells) {
      csv << fmt(c.errors.baud) << ',' << c.errors.samples.size() << ',' << fmt(c.errors.fit.mean) << ','
          << fmt(c.errors.fit.std) << ',' << fmt(c.mean_accuracy) << ',' << fmt(c.std_accuracy) << ','
          << c.trial_accuracy.size() << '\n';
      result["cells"].push_back({{"baud", c.errors.baud},
                                 {"error_mean", c.errors.fit.mean},
                                 {"error_std", c.errors.fit.std},
                                 {"trial_accuracy", c.trial_accuracy},
                                 {"accuracy_mean", c.mean_accuracy},
                                 {"accuracy_std", c.std_accuracy}});
      for (std::size_t i = 0; i < c.errors.samples.size(); ++i) {
        dump << fmt(c.errors.baud) << ',' << i << ',' << fmt(c.errors.samples[i]) << '\n';
      }
    }
    out.stage("sweep_baud.csv", csv.str());
    if (dump_errors) out.stage("sweep_baud_errors.csv", dump.str());
  } else {
    const auto finesse = run::parse_values(finesse_text, 50.0);
    std::vector<int> bits;
    for (auto v : run::parse_counts(bits_text)) bits.push_back(static_cast<int>(v));
    PrecisionSweepOptions opt;
    opt.alpha = cfg.mrr.alpha;
    opt.v_max = cfg.v_max;
    opt.base_ring = cfg.mrr;
    opt.jobs = ctx.jobs;
    const auto cells = precision_sweep(finesse, bits, cfg.mapping_mode, eval, b, opt);
    std::ostringstream csv;
    csv << "finesse,bits,mode,accuracy,mean_abs_residual,max_abs_residual,region_limit_v,mean_region_precision\n";
    for (const auto& c : cells) {
      csv << fmt(c.finesse) << ',' << c.bits << ',' << to_string(c.mode) << ',' << fmt(c.accuracy) << ','
          << fmt(c.mean_abs_residual) << ',' << fmt(c.max_abs_residual) << ',' << fmt(c.region_limit_v) << ','
          << fmt(c.mean_region_precision) << '\n';
      result["cells"].push_back({{"finesse", c.finesse},
                                 {"bits", c.bits},
                                 {"mode", to_string(c.mode)},
                                 {"accuracy", c.accuracy},
                                 {"mean_abs_residual", c.mean_abs_residual},
                                 {"max_abs_residual", c.max_abs_residual},
                                 {"region_limit_v", c.region_limit_v},
                                 {"mean_region_precision", c.mean_region_precision}});
    }
    out.stage("sweep_finesse_adc.csv", csv.str());
  }
  out.stage("sweep_" + std::string(kind == "baud" ? "baud" : "finesse_adc") + ".json", result.dump(2) + "\n");
  ctx.finish(out);
  return 0;
}

int cmd_report(Context& ctx, const std::string& bauds_text, const std::optional<MeshSpec>& mesh, bool memory,
               const std::string& m_text, std::size_t n_size) {
  const NetworkSpec spec;
  const auto bauds = run::parse_values(bauds_text, 5e9);
  const double t_c = ctx.config.at("t_c").get<double>();
  run::OutputSet out(ctx.out_dir);
  json result{{"manifest", ctx.manifest_name()}, {"ops", op_count(spec)}, {"t_c", t_c}};

  auto table = [&](const std::optional<MeshSpec>& m) {
    std::ostringstream csv;
    csv << "baud,conv1_ns,conv2_ns,conv3_ns,total_ns,ops,speed_gops";
    csv << (m ? ",average_utilization,reported_full_utilization_gops\n" : ",speed_2dconv_gops\n");
    json rows = json::array();
    for (const auto& r : throughput_table(spec, bauds, m, t_c)) {
      csv << fmt(r.baud);
      for (double t : r.layer_time_s) csv << ',' << fmt(t * 1e9);
      csv << ',' << fmt(r.total_time_s * 1e9) << ',' << r.ops << ',' << fmt(r.speed_ops / 1e9);
      json row{{"baud", r.baud}, {"layer_time_s", r.layer_time_s}, {"total_time_s", r.total_time_s},
               {"speed_ops", r.speed_ops}, {"periods", r.periods}};
      if (m) {
        const auto rep = reported_full_utilization_speed(r.baud);
        csv << ',' << fmt(*r.average_utilization) << ',' << (rep ? fmt(*rep / 1e9) : "");
        row["average_utilization"] = *r.average_utilization;
        if (rep) row["reported_full_utilization_ops"] = *rep;
      } else {
        csv << ',' << fmt(*r.speed_2dconv_ops / 1e9);
        row["speed_2dconv_ops"] = *r.speed_2dconv_ops;
      }
      csv << '\n';
      rows.push_back(row);
    }
    return std::pair{csv.str(), rows};
  };

  auto [serial_csv, serial_rows] = table(std::nullopt);
  out.stage("throughput_serial.csv", serial_csv);
  result["serial"] = serial_rows;
  if (mesh) {
    auto [mesh_csv, mesh_rows] = table(mesh);
    out.stage("throughput_mesh.csv", mesh_csv);
    result["mesh"] = {{"rows", mesh->rows}, {"cols", mesh->cols}, {"table", mesh_rows}};
  }
  if (memory) {
    std::ostringstream csv;
    csv << "m,n,tma_electronic,tma_photonic,buffer_electronic,buffer_photonic\n";
    for (auto m : run::parse_counts(m_text)) {
      const auto c = memory_model(m, n_size);
      csv << m << ',' << n_size << ',' << c.tma_electronic << ',' << c.tma_photonic << ',' << c.buffer_electronic << ','
          << c.buffer_photonic << '\n';
    }
    out.stage("memory.csv", csv.str());
  }
  out.stage("report.json", result.dump(2) + "\n");
  std::cout << "ops per inference " << op_count(spec) << '\n';
  ctx.finish(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photonic CNN simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PCNN_VERSION);

  std::string config_path;
  std::size_t jobs = default_jobs();
  std::string out_dir = ".";
  std::uint64_t seed = 7;
  app.add_option("--config", config_path, "JSON config file (flags take precedence)");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (default: $PCNN_SEED or 7)");

  // shared overrides
  std::string data = "data/mnist5k", weights = "weights";
  double baud = 10e9;
  std::size_t epochs = 10;

  auto* train = app.add_subcommand("train", "Train the reference network");
  train->add_option("--data", data, "Directory with MNIST IDX files");
  auto* epochs_opt = train->add_option("--epochs", epochs, "Training epochs");
  std::string name = "weights";
  train->add_option("--name", name, "Output file stem");

  auto* simulate = app.add_subcommand("simulate", "Evaluate the photonic network");
  simulate->add_option("--data", data, "Directory with MNIST IDX files");
  simulate->add_option("--weights", weights, "Weights file stem");
  auto* baud_opt = simulate->add_option("--baud", baud, "Symbol rate [baud]");
  std::size_t samples = 200;
  simulate->add_option("--samples", samples, "Held-out samples to evaluate");
  bool ideal = false;
  simulate->add_flag("--ideal", ideal, "Filter off, 16-bit converters");
  std::string mesh_text;
  simulate->add_option("--mesh", mesh_text, "Mesh of OCUs, e.g. 4x4");

  auto* sweep = app.add_subcommand("sweep", "Baud-rate or finesse x ADC sweeps");
  std::string kind;
  sweep->add_option("--kind", kind, "baud | finesse-adc")->required();
  sweep->add_option("--data", data, "Directory with MNIST IDX files");
  sweep->add_option("--weights", weights, "Weights file stem");
  std::string bauds_text = "5e9,10e9,15e9,20e9,25e9", finesse_text = "100,150,200,250", bits_text = "6,8,10,12";
  std::size_t images = 10, trials = 20;
  bool dump_errors = false;
  sweep->add_option("--bauds", bauds_text, "List or range a..b[:step]");
  sweep->add_option("--images", images, "Images used for error statistics");
  sweep->add_option("--trials", trials, "Injection trials per baud");
  sweep->add_option("--samples", samples, "Held-out samples to evaluate");
  sweep->add_option("--finesse", finesse_text, "Finesse list or range");
  sweep->add_option("--bits", bits_text, "DAC bit depths for the V-T database");
  sweep->add_flag("--dump-errors", dump_errors, "Also write every error sample");

  auto* report = app.add_subcommand("report", "Throughput and memory tables");
  std::string report_bauds = "5e9..25e9:5e9", m_text = "5..100";
  std::size_t n_size = 3;
  bool memory = false;
  report->add_option("--bauds", report_bauds, "List or range a..b[:step], default step 5e9");
  std::string report_mesh = "4x4";
  auto* report_mesh_opt = report->add_option("--mesh", report_mesh, "Mesh for the parallel table");
  report->add_flag("--memory", memory, "Emit the memory model");
  report->add_option("--m", m_text, "Image sizes for the memory model");
  report->add_option("--n", n_size, "Kernel size for the memory model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Context ctx;
    ctx.jobs = jobs;
    ctx.out_dir = out_dir;
    ctx.config = default_config();
    if (const char* env = std::getenv("PCNN_SEED")) ctx.config["seed"] = static_cast<std::uint64_t>(run::parse_number(env));
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot open config " + config_path);
      json user;
      try {
        user = json::parse(in);
      } catch (const json::exception& e) {
        throw UsageError("config " + config_path + ": " + e.what());
      }
      ctx.config.merge_patch(user);
      ctx.add_input(config_path);
    }
    if (seed_opt->count()) ctx.config["seed"] = seed;
    if (epochs_opt->count()) ctx.config["train"]["epochs"] = epochs;
    if (baud_opt->count()) ctx.config["ocu"]["baud"] = baud;

    std::optional<MeshSpec> mesh;
    if (train->parsed()) {
      ctx.command = "train";
      return cmd_train(ctx, data, name);
    }
    if (simulate->parsed()) {
      ctx.command = "simulate";
      if (!mesh_text.empty()) mesh = run::parse_mesh(mesh_text);
      return cmd_simulate(ctx, data, weights, samples, ideal, mesh);
    }
    if (sweep->parsed()) {
      ctx.command = "sweep";
      return cmd_sweep(ctx, kind, data, weights, bauds_text, images, trials, samples, finesse_text, bits_text,
                       dump_errors);
    }
    ctx.command = "report";
    mesh = run::parse_mesh(report_mesh);
    (void)report_mesh_opt;
    return cmd_report(ctx, report_bauds, mesh, memory, m_text, n_size);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingFailedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const RegionNotFoundError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const BoundsError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
