#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oamturb/modes.hpp"
#include "oamturb/vectorize.hpp"

// Disk formats: a binary matrix container with full parameter provenance in
// the header, CSV emission at full double precision, and content-keyed cache
// paths.

namespace oamturb {

static_assert(std::endian::native == std::endian::little,
              "container format is little-endian only");

inline constexpr std::uint32_t kContainerVersion = 1;

// Bump when any numerical result changes; cache keys include it so stale
// artifacts are never served.
inline constexpr int kCodeVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ContainerHeader {
  std::uint32_t version = kContainerVersion;
  std::int32_t l_cut = 0;
  std::int32_t n_photons = 1;
  double wavelength = 0.0;
  double waist = 0.0;
  double cn2 = 0.0;
  double t = 0.0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

namespace detail {

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError(std::string("container truncated reading ") + what);
  return value;
}

}  // namespace detail

inline void write_matrix(const std::filesystem::path& path,
                         const ContainerHeader& header, const Matrix& m) {
  if (m.rows() != header.rows || m.cols() != header.cols)
    throw std::domain_error("container header does not match the matrix shape");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");

  out.write("OAMT", 4);
  detail::write_raw(out, header.version);
  detail::write_raw(out, header.l_cut);
  detail::write_raw(out, header.n_photons);
  detail::write_raw(out, header.wavelength);
  detail::write_raw(out, header.waist);
  detail::write_raw(out, header.cn2);
  detail::write_raw(out, header.t);
  detail::write_raw(out, header.rows);
  detail::write_raw(out, header.cols);
  for (std::int64_t i = 0; i < header.rows; ++i)
    for (std::int64_t j = 0; j < header.cols; ++j) {
      detail::write_raw(out, m(i, j).real());
      detail::write_raw(out, m(i, j).imag());
    }
  if (!out) throw FormatError("write failed for " + path.string());
}

inline std::pair<ContainerHeader, Matrix> read_matrix(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OAMT", 4) != 0)
    throw FormatError(path.string() + " is not a matrix container");

  ContainerHeader h;
  h.version = detail::read_raw<std::uint32_t>(in, "version");
  if (h.version != kContainerVersion)
    throw FormatError("container version " + std::to_string(h.version) +
                      " is not the supported version " +
                      std::to_string(kContainerVersion));
  h.l_cut = detail::read_raw<std::int32_t>(in, "l_cut");
  h.n_photons = detail::read_raw<std::int32_t>(in, "n_photons");
  h.wavelength = detail::read_raw<double>(in, "wavelength");
  h.waist = detail::read_raw<double>(in, "waist");
  h.cn2 = detail::read_raw<double>(in, "cn2");
  h.t = detail::read_raw<double>(in, "t");
  h.rows = detail::read_raw<std::int64_t>(in, "rows");
  h.cols = detail::read_raw<std::int64_t>(in, "cols");
  if (h.rows < 0 || h.cols < 0 || h.rows > (1 << 20) || h.cols > (1 << 20))
    throw FormatError("container declares an implausible shape");

  Matrix m(h.rows, h.cols);
  for (std::int64_t i = 0; i < h.rows; ++i)
    for (std::int64_t j = 0; j < h.cols; ++j) {
      const double re = detail::read_raw<double>(in, "matrix data");
      const double im = detail::read_raw<double>(in, "matrix data");
      m(i, j) = std::complex<double>{re, im};
    }
  return {h, m};
}

// Shortest decimal form that round-trips a double exactly.
inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// UTF-8, LF line endings, header row, one row per record, %.17g numbers.
inline void emit_csv(const std::filesystem::path& path,
                     const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << (c ? "," : "") << columns[c];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw std::domain_error("CSV row width does not match the header");
    for (std::size_t c = 0; c < row.size(); ++c)
      out << (c ? "," : "") << format_full(row[c]);
    out << "\n";
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

inline std::vector<std::vector<double>> parse_csv(
    const std::filesystem::path& path, std::vector<std::string>* columns = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names;
  for (std::size_t pos = 0; pos <= line.size();) {
    const std::size_t comma = line.find(',', pos);
    const std::size_t end = (comma == std::string::npos) ? line.size() : comma;
    names.push_back(line.substr(pos, end - pos));
    pos = end + 1;
    if (comma == std::string::npos) break;
  }
  if (columns) *columns = names;

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    char* next = nullptr;
    for (std::size_t c = 0; c < names.size(); ++c) {
      row.push_back(std::strtod(p, &next));
      if (next == p) throw FormatError("CSV field is not a number");
      p = (*next == ',') ? next + 1 : next;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// FNV-1a over the provenance text; stable across platforms.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::string cache_key(const std::string& kind, const PhysicalParams& p,
                             Truncation trunc, double t, int n_photons = 1) {
  std::string text = kind + "|v" + std::to_string(kCodeVersion) + "|L" +
                     std::to_string(trunc.l_cut) + "|n" +
                     std::to_string(n_photons) + "|" +
                     format_full(p.wavelength) + "|" + format_full(p.waist) +
                     "|" + format_full(p.cn2) + "|" + format_full(t);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(text)));
  return kind + "-" + buf;
}

// Cache directory: OAMTURB_CACHE env var when set, else ./oamturb-cache.
inline std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("OAMTURB_CACHE"); env && *env)
    return std::filesystem::path(env);
  return std::filesystem::path("oamturb-cache");
}

}  // namespace oamturb
