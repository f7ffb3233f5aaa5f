#pragma once

// The three-convolution-layer MNIST network: offline training, the exact
// reference forward pass, the photonic forward pass and mesh scheduling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcnn/conv.hpp"
#include "pcnn/device_models.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/matrix.hpp"
#include "pcnn/ocu.hpp"
#include "pcnn/parallel.hpp"
#include "pcnn/seed.hpp"

namespace pcnn {

using FeatureMaps = std::vector<MatrixD>;  ///< one square map per channel

struct ConvLayerSpec {
  std::size_t kernels = 1;       ///< K
  std::size_t kernel_size = 3;   ///< N
  bool pool = true;              ///< 2x2 max pool, stride 2, after ReLU
};

struct NetworkSpec {
  std::size_t input_size = 28;
  std::size_t input_channels = 1;
  std::vector<ConvLayerSpec> layers{{2, 3, true}, {4, 3, true}, {4, 3, false}};
  std::size_t classes = 10;

  struct LayerShape {
    std::size_t in_size;       ///< M_l
    std::size_t in_channels;   ///< C_l
    std::size_t conv_size;     ///< M_l - N + 1
    std::size_t out_size;      ///< after pooling
    std::size_t kernels;       ///< K_l
    std::size_t kernel_size;   ///< N
  };

  std::vector<LayerShape> shapes() const {
    std::vector<LayerShape> out;
    std::size_t m = input_size;
    std::size_t c = input_channels;
    for (const auto& l : layers) {
      if (l.kernel_size == 0 || l.kernel_size > m) throw DimensionError("layer kernel does not fit its input");
      const std::size_t conv = m - l.kernel_size + 1;
      const std::size_t pooled = l.pool ? conv / 2 : conv;
      if (pooled == 0) throw DimensionError("layer output collapses to zero size");
      out.push_back({m, c, conv, pooled, l.kernels, l.kernel_size});
      m = pooled;
      c = l.kernels;
    }
    return out;
  }

  /// Length of the flattened feature vector fed to the classifier.
  std::size_t ffv_length() const {
    const auto s = shapes().back();
    return s.out_size * s.out_size * s.kernels;
  }
};

struct ConvWeights {
  std::size_t kernels = 0;
  std::size_t channels = 0;
  std::size_t size = 0;
  std::vector<MatrixD> kernel;  ///< index k * channels + c, all elements >= 0
  std::vector<double> bias;     ///< per kernel, added digitally before ReLU

  const MatrixD& at(std::size_t k, std::size_t c) const { return kernel[k * channels + c]; }
  MatrixD& at(std::size_t k, std::size_t c) { return kernel[k * channels + c]; }
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t train_samples = 0;
  double train_accuracy = 0.0;
};

struct WeightsBundle {
  NetworkSpec spec;
  std::vector<ConvWeights> conv;
  MatrixD fc_weights;          ///< classes x ffv_length
  std::vector<double> fc_bias;
  TrainingMetadata meta;

  void validate() const {
    const auto shapes = spec.shapes();
    if (conv.size() != shapes.size()) throw DimensionError("bundle layer count differs from spec");
    for (std::size_t l = 0; l < conv.size(); ++l) {
      const auto& w = conv[l];
      if (w.kernels != shapes[l].kernels || w.channels != shapes[l].in_channels || w.size != shapes[l].kernel_size ||
          w.kernel.size() != w.kernels * w.channels || w.bias.size() != w.kernels) {
        throw DimensionError("conv layer " + std::to_string(l + 1) + " does not match the spec");
      }
      for (const auto& k : w.kernel) {
        if (k.rows() != w.size || k.cols() != w.size) throw DimensionError("kernel shape mismatch");
        for (double v : k.flat()) {
          if (!(v >= 0.0)) throw UnmappableWeightError("conv kernels must be non-negative");
        }
      }
    }
    if (fc_weights.rows() != spec.classes || fc_weights.cols() != spec.ffv_length() || fc_bias.size() != spec.classes) {
      throw DimensionError("classifier shape does not match the spec");
    }
  }
};

struct Dataset {
  std::vector<MatrixD> images;  ///< pixels in [0, 1]
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return images.size(); }
};

// ---------------------------------------------------------------------------
// Digital building blocks shared by every forward variant.

inline void relu_inplace(MatrixD& m) {
  for (double& x : m.flat()) x = std::max(x, 0.0);
}

inline MatrixD max_pool2(const MatrixD& in) {
  const std::size_t out = in.rows() / 2;
  MatrixD p(out, out);
  for (std::size_t r = 0; r < out; ++r) {
    for (std::size_t c = 0; c < out; ++c) {
      p(r, c) = std::max({in(2 * r, 2 * c), in(2 * r, 2 * c + 1), in(2 * r + 1, 2 * c), in(2 * r + 1, 2 * c + 1)});
    }
  }
  return p;
}

/// Channel-major flatten: index k * S^2 + r * S + c.
inline std::vector<double> flatten(const FeatureMaps& maps) {
  std::vector<double> v;
  for (const auto& m : maps) v.insert(v.end(), m.flat().begin(), m.flat().end());
  return v;
}

inline std::vector<double> classifier_logits(const WeightsBundle& b, std::span<const double> ffv) {
  if (ffv.size() != b.fc_weights.cols()) throw DimensionError("feature vector length differs from classifier input");
  std::vector<double> z(b.fc_bias);
  for (std::size_t o = 0; o < z.size(); ++o) {
    const auto row = b.fc_weights.row(o);
    z[o] += std::inner_product(row.begin(), row.end(), ffv.begin(), 0.0);
  }
  return z;
}

inline std::vector<double> softmax(std::vector<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) sum += (x = std::exp(x - zmax));
  for (double& x : z) x /= sum;
  return z;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::size_t classify(const WeightsBundle& b, std::span<const double> ffv) {
  return argmax(classifier_logits(b, ffv));
}

struct ForwardTrace {
  std::vector<FeatureMaps> layers;  ///< after ReLU and (if any) pooling
  std::vector<double> ffv;
  std::vector<double> scores;       ///< softmax probabilities
  std::size_t predicted = 0;
};

/// Runs the network with a pluggable per-(layer, kernel, channel) convolution.
/// `conv(l, k, c, input, layer_peak)` returns the (M_l - N + 1)^2 map in kernel
/// units; `layer_peak` is the largest value over all channels of the layer input.
template <typename ConvFn>
ForwardTrace run_network(const MatrixD& image, const WeightsBundle& bundle, ConvFn&& conv) {
  const auto shapes = bundle.spec.shapes();
  if (image.rows() != bundle.spec.input_size || image.cols() != bundle.spec.input_size) {
    throw DimensionError("image size differs from the network input");
  }
  ForwardTrace trace;
  FeatureMaps x{image};
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    const auto& w = bundle.conv[l];
    double peak = 0.0;
    for (const auto& ch : x) peak = std::max(peak, *std::max_element(ch.flat().begin(), ch.flat().end()));
    FeatureMaps next;
    for (std::size_t k = 0; k < s.kernels; ++k) {
      MatrixD acc(s.conv_size, s.conv_size, w.bias[k]);
      for (std::size_t c = 0; c < s.in_channels; ++c) {
        const MatrixD y = conv(l, k, c, x[c], peak);
        for (std::size_t e = 0; e < acc.size(); ++e) acc.flat()[e] += y.flat()[e];
      }
      relu_inplace(acc);
      next.push_back(bundle.spec.layers[l].pool ? max_pool2(acc) : std::move(acc));
    }
    trace.layers.push_back(next);
    x = std::move(next);
  }
  trace.ffv = flatten(x);
  trace.scores = softmax(classifier_logits(bundle, trace.ffv));
  trace.predicted = argmax(trace.scores);
  return trace;
}

inline ForwardTrace forward_reference(const MatrixD& image, const WeightsBundle& bundle) {
  return run_network(image, bundle, [&](std::size_t l, std::size_t k, std::size_t c, const MatrixD& in, double) {
    return conv2d_reference(in, bundle.conv[l].at(k, c));
  });
}

/// Every conv kernel of a bundle mapped onto a weight bank.
struct BankMappings {
  std::vector<std::vector<WeightMapping>> layers;  ///< [layer][k * C + c]

  const WeightMapping& at(const WeightsBundle& b, std::size_t l, std::size_t k, std::size_t c) const {
    return layers[l][k * b.conv[l].channels + c];
  }
};

inline BankMappings map_bundle(const WeightsBundle& bundle, const VtDatabase& db, MappingMode mode) {
  BankMappings out;
  for (const auto& layer : bundle.conv) {
    std::vector<WeightMapping> maps;
    for (const auto& k : layer.kernel) maps.push_back(map_weights(db, k, mode));
    out.layers.push_back(std::move(maps));
  }
  return out;
}

/// Exact forward pass with every kernel replaced by its realized
/// transmissions (in kernel units): the reference plus the weighting error.
inline ForwardTrace forward_weighted(const MatrixD& image, const WeightsBundle& bundle, const BankMappings& maps) {
  return run_network(image, bundle, [&](std::size_t l, std::size_t k, std::size_t c, const MatrixD& in, double) {
    const auto& m = maps.at(bundle, l, k, c);
    const double scale = m.scale;
    return conv2d_reference(in, m.realized_kernel().map([scale](double t) { return t * scale; }));
  });
}

struct MeshSpec {
  std::size_t rows = 4;  ///< kernel slots
  std::size_t cols = 4;  ///< channel slots

  void validate() const {
    if (rows < 1 || cols < 1) throw ParameterError("mesh dimensions must be at least 1");
  }
};

struct MeshSchedule {
  std::vector<std::size_t> periods;         ///< with the mesh
  std::vector<std::size_t> serial_periods;  ///< one OCU: C * K
  std::vector<double> utilization;          ///< occupied banks / (rows * cols) per period
  double average_utilization = 0.0;
};

inline MeshSchedule mesh_schedule(const NetworkSpec& spec, const MeshSpec& mesh) {
  mesh.validate();
  MeshSchedule s;
  for (const auto& l : spec.shapes()) {
    const std::size_t periods = ((l.in_channels + mesh.cols - 1) / mesh.cols) * ((l.kernels + mesh.rows - 1) / mesh.rows);
    s.periods.push_back(periods);
    s.serial_periods.push_back(l.in_channels * l.kernels);
    s.utilization.push_back(static_cast<double>(l.in_channels * l.kernels) /
                            static_cast<double>(periods * mesh.rows * mesh.cols));
  }
  s.average_utilization =
      std::accumulate(s.utilization.begin(), s.utilization.end(), 0.0) / static_cast<double>(s.utilization.size());
  return s;
}

struct PhotonicDiagnostics {
  std::vector<std::size_t> periods;  ///< per layer; mesh periods if a mesh is given, else C * K
  std::size_t optical_passes = 0;
  std::size_t clipped_samples = 0;
  std::vector<double> max_output_half_step;  ///< per layer, in layer-output units
};

struct PhotonicTrace {
  ForwardTrace trace;
  PhotonicDiagnostics diagnostics;
};

/// Photonic forward pass: every (channel, kernel) convolution runs through one
/// optical period; channel sums, bias, ReLU, pooling and the classifier run
/// digitally. Each layer input is divided by its peak before modulation and
/// the outputs multiplied back.
inline PhotonicTrace forward_photonic(const MatrixD& image, const WeightsBundle& bundle, const OcuConfig& config,
                                      const VtDatabase& db, const std::optional<MeshSpec>& mesh = std::nullopt) {
  PhotonicDiagnostics diag;
  diag.max_output_half_step.assign(bundle.conv.size(), 0.0);
  auto trace = run_network(image, bundle, [&](std::size_t l, std::size_t k, std::size_t c, const MatrixD& in,
                                              double peak) {
    const std::size_t out = in.rows() - bundle.conv[l].size + 1;
    if (peak <= 0.0) return MatrixD(out, out, 0.0);
    OcuConfig cfg = config;
    cfg.noise_seed = derive_seed(config.noise_seed, {l, k, c});
    if (auto* arr = std::get_if<ArrayedDelays>(&cfg.delays)) arr->seed = derive_seed(arr->seed, {l, k, c});
    auto r = conv2d_optical(in.map([peak](double v) { return std::min(v / peak, 1.0); }), bundle.conv[l].at(k, c),
                            cfg, db);
    ++diag.optical_passes;
    diag.clipped_samples += r.diagnostics.clipped_samples;
    diag.max_output_half_step[l] = std::max(diag.max_output_half_step[l], r.diagnostics.output_half_step * peak);
    return r.output.map([peak](double v) { return v * peak; });
  });
  if (mesh) {
    diag.periods = mesh_schedule(bundle.spec, *mesh).periods;
  } else {
    for (const auto& s : bundle.spec.shapes()) diag.periods.push_back(s.in_channels * s.kernels);
  }
  return {std::move(trace), std::move(diag)};
}

inline PhotonicTrace forward_photonic(const MatrixD& image, const WeightsBundle& bundle, const OcuConfig& config,
                                      const std::optional<MeshSpec>& mesh = std::nullopt) {
  return forward_photonic(image, bundle, config, build_vt_database(config.mrr, config.v_max, config.dac_bits), mesh);
}

// ---------------------------------------------------------------------------
// Training.

struct TrainOptions {
  std::size_t epochs = 10;
  std::uint64_t seed = 7;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  double min_train_accuracy = 0.6;
};

namespace detail {

struct LayerCache {
  FeatureMaps input;
  FeatureMaps pre;      ///< conv + bias
  FeatureMaps output;   ///< after ReLU / pool
};

struct Gradients {
  std::vector<ConvWeights> conv;
  MatrixD fc_weights;
  std::vector<double> fc_bias;

  explicit Gradients(const WeightsBundle& b) : conv(b.conv), fc_weights(b.fc_weights.rows(), b.fc_weights.cols()),
                                               fc_bias(b.fc_bias.size(), 0.0) {
    for (auto& l : conv) {
      for (auto& k : l.kernel) k = MatrixD(k.rows(), k.cols());
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }
};

/// Forward with caches, then backpropagate cross-entropy into `g`.
/// Returns true when the sample was classified correctly.
inline bool accumulate_gradients(const MatrixD& image, std::size_t label, const WeightsBundle& b, Gradients& g) {
  const auto shapes = b.spec.shapes();
  std::vector<LayerCache> cache(shapes.size());
  FeatureMaps x{image};
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    cache[l].input = x;
    FeatureMaps next;
    for (std::size_t k = 0; k < s.kernels; ++k) {
      MatrixD acc(s.conv_size, s.conv_size, b.conv[l].bias[k]);
      for (std::size_t c = 0; c < s.in_channels; ++c) {
        const auto y = conv2d_reference(x[c], b.conv[l].at(k, c));
        for (std::size_t e = 0; e < acc.size(); ++e) acc.flat()[e] += y.flat()[e];
      }
      cache[l].pre.push_back(acc);
      relu_inplace(acc);
      next.push_back(b.spec.layers[l].pool ? max_pool2(acc) : std::move(acc));
    }
    cache[l].output = next;
    x = std::move(next);
  }
  const auto ffv = flatten(x);
  auto p = softmax(classifier_logits(b, ffv));
  const bool correct = argmax(p) == label;

  p[label] -= 1.0;  // dL/dlogits
  std::vector<double> dffv(ffv.size(), 0.0);
  for (std::size_t o = 0; o < p.size(); ++o) {
    g.fc_bias[o] += p[o];
    for (std::size_t f = 0; f < ffv.size(); ++f) {
      g.fc_weights(o, f) += p[o] * ffv[f];
      dffv[f] += p[o] * b.fc_weights(o, f);
    }
  }

  // Unflatten into the last layer's output gradient.
  FeatureMaps dout;
  {
    const auto& s = shapes.back();
    std::size_t idx = 0;
    for (std::size_t k = 0; k < s.kernels; ++k) {
      MatrixD m(s.out_size, s.out_size);
      for (double& v : m.flat()) v = dffv[idx++];
      dout.push_back(std::move(m));
    }
  }

  for (std::size_t l = shapes.size(); l-- > 0;) {
    const auto& s = shapes[l];
    const auto& lc = cache[l];
    FeatureMaps din(s.in_channels, MatrixD(s.in_size, s.in_size));
    for (std::size_t k = 0; k < s.kernels; ++k) {
      // Through pooling and ReLU to the pre-activation.
      MatrixD dpre(s.conv_size, s.conv_size);
      const MatrixD& pre = lc.pre[k];
      if (b.spec.layers[l].pool) {
        for (std::size_t r = 0; r < s.out_size; ++r) {
          for (std::size_t c = 0; c < s.out_size; ++c) {
            std::size_t br = 2 * r, bc = 2 * c;
            for (std::size_t dr = 0; dr < 2; ++dr) {
              for (std::size_t dc = 0; dc < 2; ++dc) {
                if (pre(2 * r + dr, 2 * c + dc) > pre(br, bc)) br = 2 * r + dr, bc = 2 * c + dc;
              }
            }
            if (pre(br, bc) > 0.0) dpre(br, bc) += dout[k](r, c);
          }
        }
      } else {
        for (std::size_t e = 0; e < dpre.size(); ++e) dpre.flat()[e] = pre.flat()[e] > 0.0 ? dout[k].flat()[e] : 0.0;
      }

      auto& gw = g.conv[l];
      for (double v : dpre.flat()) gw.bias[k] += v;
      for (std::size_t c = 0; c < s.in_channels; ++c) {
        const MatrixD& in = lc.input[c];
        MatrixD& gk = gw.at(k, c);
        const MatrixD& wk = b.conv[l].at(k, c);
        for (std::size_t r = 0; r < s.conv_size; ++r) {
          for (std::size_t q = 0; q < s.conv_size; ++q) {
            const double d = dpre(r, q);
            if (d == 0.0) continue;
            for (std::size_t i = 0; i < s.kernel_size; ++i) {
              for (std::size_t j = 0; j < s.kernel_size; ++j) {
                gk(i, j) += d * in(r + i, q + j);
                if (l > 0) din[c](r + i, q + j) += d * wk(i, j);
              }
            }
          }
        }
      }
    }
    dout = std::move(din);
  }
  return correct;
}

}  // namespace detail

/// Fresh bundle: non-negative conv kernels drawn from U(0, 2 / fan_in), zero
/// conv biases, classifier from U(-1/sqrt(F), 1/sqrt(F)).
inline WeightsBundle initialize_bundle(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightsBundle b;
  b.spec = spec;
  for (const auto& s : spec.shapes()) {
    ConvWeights w{s.kernels, s.in_channels, s.kernel_size, {}, std::vector<double>(s.kernels, 0.0)};
    std::uniform_real_distribution<double> u(0.0, 2.0 / static_cast<double>(s.in_channels * s.kernel_size * s.kernel_size));
    for (std::size_t e = 0; e < s.kernels * s.in_channels; ++e) {
      MatrixD k(s.kernel_size, s.kernel_size);
      for (double& v : k.flat()) v = u(rng);
      w.kernel.push_back(std::move(k));
    }
    b.conv.push_back(std::move(w));
  }
  const std::size_t f = spec.ffv_length();
  const double bound = 1.0 / std::sqrt(static_cast<double>(f));
  std::uniform_real_distribution<double> u(-bound, bound);
  b.fc_weights = MatrixD(spec.classes, f);
  for (double& v : b.fc_weights.flat()) v = u(rng);
  b.fc_bias.resize(spec.classes);
  for (double& v : b.fc_bias) v = u(rng);
  return b;
}

/// Mini-batch SGD with momentum on cross-entropy. After every update the conv
/// kernels are projected onto the non-negative orthant. Deterministic for a
/// given seed and dataset order.
inline WeightsBundle train_reference(const Dataset& data, const NetworkSpec& spec, const TrainOptions& opt) {
  if (data.size() == 0 || data.labels.size() != data.size()) throw DimensionError("empty or inconsistent dataset");
  if (opt.batch_size == 0) throw ParameterError("batch size must be positive");
  for (const auto& img : data.images) {
    for (double v : img.flat()) {
      if (!(v >= 0.0 && v <= 1.0)) throw RangeError("training pixels must lie in [0, 1]");
    }
  }
  for (auto l : data.labels) {
    if (l >= spec.classes) throw RangeError("label outside the class range");
  }

  WeightsBundle b = initialize_bundle(spec, opt.seed);
  detail::Gradients velocity(b);
  std::mt19937_64 rng(derive_seed(opt.seed, {1}));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      detail::Gradients g(b);
      for (std::size_t s = start; s < end; ++s) {
        detail::accumulate_gradients(data.images[order[s]], data.labels[order[s]], b, g);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      auto step = [&](double& param, double& vel, double grad) {
        vel = opt.momentum * vel + grad * inv;
        param -= opt.learning_rate * vel;
      };
      for (std::size_t l = 0; l < b.conv.size(); ++l) {
        for (std::size_t e = 0; e < b.conv[l].kernel.size(); ++e) {
          auto p = b.conv[l].kernel[e].flat();
          auto v = velocity.conv[l].kernel[e].flat();
          auto gr = g.conv[l].kernel[e].flat();
          for (std::size_t i = 0; i < p.size(); ++i) {
            step(p[i], v[i], gr[i]);
            p[i] = std::max(p[i], 0.0);
          }
        }
        for (std::size_t k = 0; k < b.conv[l].bias.size(); ++k) {
          step(b.conv[l].bias[k], velocity.conv[l].bias[k], g.conv[l].bias[k]);
        }
      }
      auto p = b.fc_weights.flat();
      auto v = velocity.fc_weights.flat();
      auto gr = g.fc_weights.flat();
      for (std::size_t i = 0; i < p.size(); ++i) step(p[i], v[i], gr[i]);
      for (std::size_t o = 0; o < b.fc_bias.size(); ++o) step(b.fc_bias[o], velocity.fc_bias[o], g.fc_bias[o]);
    }
  }

  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    correct += forward_reference(data.images[s], b).predicted == data.labels[s];
  }
  b.meta = {opt.seed, opt.epochs, data.size(), static_cast<double>(correct) / static_cast<double>(data.size())};
  if (b.meta.train_accuracy < opt.min_train_accuracy) {
    throw TrainingFailedError("training accuracy " + std::to_string(b.meta.train_accuracy) + " below " +
                              std::to_string(opt.min_train_accuracy));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct Evaluation {
  double accuracy = 0.0;
  Matrix<std::size_t> confusion;        ///< rows: true class, cols: predicted
  std::vector<std::size_t> predictions;
};

/// Classifies every sample with `predict(index)`; tasks are independent.
template <typename Predict>
Evaluation evaluate(const Dataset& data, std::size_t classes, Predict&& predict, std::size_t jobs = 1) {
  Evaluation e;
  e.predictions.assign(data.size(), 0);
  parallel_for(data.size(), jobs, [&](std::size_t i) { e.predictions[i] = predict(i); });
  e.confusion = Matrix<std::size_t>(classes, classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t p = e.predictions[i];
    if (p >= classes || data.labels[i] >= classes) throw RangeError("class index outside the confusion matrix");
    ++e.confusion(data.labels[i], p);
    correct += p == data.labels[i];
  }
  e.accuracy = data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
  return e;
}

inline Evaluation evaluate_reference(const Dataset& data, const WeightsBundle& b, std::size_t jobs = 1) {
  return evaluate(data, b.spec.classes, [&](std::size_t i) { return forward_reference(data.images[i], b).predicted; },
                  jobs);
}

/// Photonic evaluation; sample i uses noise seed derive_seed(config.noise_seed, {i}).
inline Evaluation evaluate_photonic(const Dataset& data, const WeightsBundle& b, const OcuConfig& config,
                                    const std::optional<MeshSpec>& mesh = std::nullopt, std::size_t jobs = 1) {
  const auto db = build_vt_database(config.mrr, config.v_max, config.dac_bits);
  return evaluate(
      data, b.spec.classes,
      [&](std::size_t i) {
        OcuConfig cfg = config;
        cfg.noise_seed = derive_seed(config.noise_seed, {i});
        return forward_photonic(data.images[i], b, cfg, db, mesh).trace.predicted;
      },
      jobs);
}

/// Grid sigma whose first-layer optical convolutions are closest (RMS) to the
/// exact ones on `image`. Ties go to the sigma nearest 0.5.
inline double calibrate_sigma(const MatrixD& image, const WeightsBundle& bundle, const OcuConfig& config,
                              std::span<const double> sigma_grid) {
  if (sigma_grid.empty()) throw ParameterError("sigma grid is empty");
  const auto db = build_vt_database(config.mrr, config.v_max, config.dac_bits);
  const auto& layer = bundle.conv.front();
  const double peak = *std::max_element(image.flat().begin(), image.flat().end());
  const MatrixD in = peak > 0.0 ? image.map([peak](double v) { return v / peak; }) : image;

  double best_sigma = sigma_grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double sigma : sigma_grid) {
    if (!(sigma >= 0.0 && sigma < 1.0)) throw ParameterError("sigma grid values must lie in [0, 1)");
    OcuConfig cfg = config;
    cfg.sigma = sigma;
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < layer.kernels; ++k) {
      for (std::size_t c = 0; c < layer.channels; ++c) {
        const auto opt = conv2d_optical(in, layer.at(k, c), cfg, db).output;
        const auto ref = conv2d_reference(in, layer.at(k, c));
        for (std::size_t e = 0; e < ref.size(); ++e) {
          const double d = opt.flat()[e] - ref.flat()[e];
          sq += d * d;
        }
        count += ref.size();
      }
    }
    const double rms = std::sqrt(sq / static_cast<double>(count));
    const double tol = 1e-12 * std::max(1.0, best);
    if (rms < best - tol || (std::abs(rms - best) <= tol && std::abs(sigma - 0.5) < std::abs(best_sigma - 0.5))) {
      best = rms;
      best_sigma = sigma;
    }
  }
  return best_sigma;
}

}  // namespace pcnn
