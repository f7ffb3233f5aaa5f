#pragma once

// MNIST IDX files: big-endian header, magic 0x00000803 for u8 images
// (count, rows, cols) and 0x00000801 for u8 labels (count).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pcnn/errors.hpp"
#include "pcnn/network.hpp"
#include "pcnn/seed.hpp"

namespace pcnn::idx {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw FormatError("truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

}  // namespace detail

/// Images scaled to [0, 1] (pixel / 255).
inline std::vector<MatrixD> read_images(const std::filesystem::path& path) {
  const auto b = detail::read_file(path);
  if (detail::be32(b, 0) != kImageMagic) throw FormatError(path.string() + ": bad image magic");
  const std::size_t n = detail::be32(b, 4);
  const std::size_t rows = detail::be32(b, 8);
  const std::size_t cols = detail::be32(b, 12);
  if (b.size() != 16 + n * rows * cols) throw FormatError(path.string() + ": size does not match header");
  std::vector<MatrixD> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    MatrixD m(rows, cols);
    const std::size_t base = 16 + s * rows * cols;
    for (std::size_t e = 0; e < rows * cols; ++e) m.flat()[e] = b[base + e] / 255.0;
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<std::uint8_t> read_labels(const std::filesystem::path& path) {
  const auto b = detail::read_file(path);
  if (detail::be32(b, 0) != kLabelMagic) throw FormatError(path.string() + ": bad label magic");
  const std::size_t n = detail::be32(b, 4);
  if (b.size() != 8 + n) throw FormatError(path.string() + ": size does not match header");
  return {b.begin() + 8, b.end()};
}

inline std::vector<std::uint8_t> encode_images(const std::vector<std::vector<std::uint8_t>>& images, std::size_t rows,
                                               std::size_t cols) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kImageMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(images.size()));
  detail::put_be32(b, static_cast<std::uint32_t>(rows));
  detail::put_be32(b, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.size() != rows * cols) throw DimensionError("image size differs from the IDX header");
    b.insert(b.end(), img.begin(), img.end());
  }
  return b;
}

inline std::vector<std::uint8_t> encode_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kLabelMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

/// Loads train-images-idx3-ubyte / train-labels-idx1-ubyte from `dir`.
inline Dataset load_directory(const std::filesystem::path& dir) {
  Dataset d;
  d.images = read_images(dir / "train-images-idx3-ubyte");
  d.labels = read_labels(dir / "train-labels-idx1-ubyte");
  if (d.images.size() != d.labels.size()) throw FormatError("image and label counts differ");
  return d;
}

struct Split {
  Dataset train;
  Dataset holdout;
};

/// Seeded random held-out split; at most `train_limit` of the remaining
/// samples (in shuffled order) go to the training set.
inline Split split_holdout(const Dataset& all, std::size_t holdout, std::uint64_t seed,
                           std::size_t train_limit = static_cast<std::size_t>(-1)) {
  if (holdout > all.size()) throw ParameterError("held-out split larger than the dataset");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0x5eed}));
  std::shuffle(order.begin(), order.end(), rng);
  Split s;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Dataset& dst = k < holdout ? s.holdout : s.train;
    if (&dst == &s.train && s.train.size() >= train_limit) continue;
    dst.images.push_back(all.images[order[k]]);
    dst.labels.push_back(all.labels[order[k]]);
  }
  return s;
}

}  // namespace pcnn::idx
