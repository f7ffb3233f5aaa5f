#pragma once

// Command-line plumbing: list and range parsing, file digests and
// all-or-nothing output writing.

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "pcnn/errors.hpp"
#include "pcnn/network.hpp"

namespace pcnn::run {

inline double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ParameterError("not a number: '" + text + "'");
  }
  if (used != text.size() || !std::isfinite(v)) throw ParameterError("not a number: '" + text + "'");
  return v;
}

/// "a,b,c", or an inclusive range "a..b" with optional ":step" (default
/// `default_step`). Empty input is an error.
inline std::vector<double> parse_values(const std::string& text, double default_step = 1.0) {
  if (text.empty()) throw ParameterError("empty list");
  std::vector<double> out;
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(item));
    if (out.empty() || text.back() == ',') throw ParameterError("malformed list '" + text + "'");
    return out;
  }
  const auto colon = text.find(':', dots);
  const double a = parse_number(text.substr(0, dots));
  const double b = parse_number(text.substr(dots + 2, colon == std::string::npos ? std::string::npos : colon - dots - 2));
  const double step = colon == std::string::npos ? default_step : parse_number(text.substr(colon + 1));
  if (!(step > 0.0)) throw ParameterError("range step must be positive");
  if (b < a) throw ParameterError("range end below its start");
  const auto count = static_cast<std::size_t>(std::floor((b - a) / step * (1.0 + 1e-12) + 1e-9)) + 1;
  if (count > 1000000) throw ParameterError("range too long");
  for (std::size_t k = 0; k < count; ++k) out.push_back(a + static_cast<double>(k) * step);
  return out;
}

inline std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_values(text, 1.0)) {
    if (v < 0.0 || v != std::floor(v)) throw ParameterError("expected non-negative integers in '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

/// "RxC", e.g. "4x4".
inline MeshSpec parse_mesh(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ParameterError("mesh must look like 4x4");
  MeshSpec m;
  auto read = [&](std::string_view s, std::size_t& dst) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), dst);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ParameterError("mesh must look like 4x4");
  };
  const std::string_view sv(text);
  read(sv.substr(0, x), m.rows);
  read(sv.substr(x + 1), m.cols);
  m.validate();
  return m;
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return os.str();
}

/// Files are staged in memory and only written by commit(): each goes to a
/// temporary sibling first and is renamed into place, so a failed run leaves
/// no partial outputs behind.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void stage(const std::string& name, std::string content) { files_[name] = std::move(content); }
  bool contains(const std::string& name) const { return files_.count(name) != 0; }
  const std::filesystem::path& dir() const { return dir_; }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& kv : files_) out.push_back(kv.first);
    return out;
  }

  std::vector<std::filesystem::path> commit() const {
    std::filesystem::create_directories(dir_);
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> moves;
    try {
      for (const auto& [name, content] : files_) {
        const auto target = dir_ / name;
        auto tmp = target;
        tmp += ".tmp";
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.close();
        if (!os) throw FormatError("cannot write " + tmp.string());
        moves.emplace_back(tmp, target);
      }
    } catch (...) {
      for (const auto& m : moves) std::filesystem::remove(m.first);
      throw;
    }
    std::vector<std::filesystem::path> written;
    for (const auto& [tmp, target] : moves) {
      std::filesystem::rename(tmp, target);
      written.push_back(target);
    }
    return written;
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> files_;
};

}  // namespace pcnn::run
