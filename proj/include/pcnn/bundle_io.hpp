#pragma once

// WeightsBundle on disk: <stem>.json holds the network shape and training
// metadata; <stem>.bin holds every parameter as a little-endian IEEE-754
// binary64 in this order:
//   for each conv layer: kernels (kernel-major, then channel, then row-major
//   taps), then the layer's K biases;
//   classifier weights (row-major, classes x features), classifier biases.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcnn/errors.hpp"
#include "pcnn/network.hpp"

namespace pcnn {

inline constexpr const char* kBundleLayout =
    "f64le; per conv layer: K*C*N*N taps (kernel-major, channel, row-major), K biases; "
    "classifier weights classes*features row-major; classifier biases";

inline nlohmann::json spec_to_json(const NetworkSpec& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.layers) layers.push_back({{"kernels", l.kernels}, {"kernel_size", l.kernel_size}, {"pool", l.pool}});
  return {{"input_size", s.input_size}, {"input_channels", s.input_channels}, {"layers", layers}, {"classes", s.classes}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.input_size = j.at("input_size").get<std::size_t>();
  s.input_channels = j.at("input_channels").get<std::size_t>();
  s.classes = j.at("classes").get<std::size_t>();
  s.layers.clear();
  for (const auto& l : j.at("layers")) {
    s.layers.push_back({l.at("kernels").get<std::size_t>(), l.at("kernel_size").get<std::size_t>(), l.at("pool").get<bool>()});
  }
  return s;
}

inline std::vector<double> bundle_parameters(const WeightsBundle& b) {
  std::vector<double> p;
  for (const auto& l : b.conv) {
    for (const auto& k : l.kernel) p.insert(p.end(), k.flat().begin(), k.flat().end());
    p.insert(p.end(), l.bias.begin(), l.bias.end());
  }
  p.insert(p.end(), b.fc_weights.flat().begin(), b.fc_weights.flat().end());
  p.insert(p.end(), b.fc_bias.begin(), b.fc_bias.end());
  return p;
}

inline std::vector<std::uint8_t> encode_f64le(const std::vector<double>& values) {
  std::vector<std::uint8_t> out(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

inline std::vector<double> decode_f64le(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 8 != 0) throw FormatError("parameter file length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[i * 8 + b]} << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline nlohmann::json bundle_metadata(const WeightsBundle& b) {
  return {{"format", "pcnn-weights-v1"},
          {"layout", kBundleLayout},
          {"parameter_count", bundle_parameters(b).size()},
          {"spec", spec_to_json(b.spec)},
          {"training",
           {{"seed", b.meta.seed},
            {"epochs", b.meta.epochs},
            {"train_samples", b.meta.train_samples},
            {"train_accuracy", b.meta.train_accuracy}}}};
}

/// Rebuilds a bundle from its metadata and flat parameter vector.
inline WeightsBundle bundle_from_parts(const nlohmann::json& meta, const std::vector<double>& params) {
  WeightsBundle b;
  try {
    b.spec = spec_from_json(meta.at("spec"));
    const auto& t = meta.at("training");
    b.meta = {t.at("seed").get<std::uint64_t>(), t.at("epochs").get<std::size_t>(),
              t.at("train_samples").get<std::size_t>(), t.at("train_accuracy").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weights metadata: ") + e.what());
  }
  std::size_t pos = 0;
  auto take = [&](std::size_t n) {
    if (pos + n > params.size()) throw FormatError("parameter file shorter than the spec requires");
    std::vector<double> v(params.begin() + static_cast<std::ptrdiff_t>(pos), params.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return v;
  };
  for (const auto& s : b.spec.shapes()) {
    ConvWeights w{s.kernels, s.in_channels, s.kernel_size, {}, {}};
    for (std::size_t e = 0; e < s.kernels * s.in_channels; ++e) {
      const auto taps = take(s.kernel_size * s.kernel_size);
      w.kernel.push_back(MatrixD::from_flat(s.kernel_size, s.kernel_size, taps));
    }
    w.bias = take(s.kernels);
    b.conv.push_back(std::move(w));
  }
  const std::size_t f = b.spec.ffv_length();
  b.fc_weights = MatrixD::from_flat(b.spec.classes, f, take(b.spec.classes * f));
  b.fc_bias = take(b.spec.classes);
  if (pos != params.size()) throw FormatError("parameter file longer than the spec requires");
  b.validate();
  return b;
}

inline WeightsBundle load_bundle(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  auto bin_path = stem;
  bin_path += ".bin";
  std::ifstream js(json_path);
  if (!js) throw FormatError("cannot open " + json_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw FormatError("cannot open " + bin_path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};
  return bundle_from_parts(meta, decode_f64le(bytes));
}

}  // namespace pcnn
