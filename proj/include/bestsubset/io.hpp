#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bestsubset/linalg.hpp"

namespace bestsubset {

namespace detail {

inline bool parse_double(const std::string& tok, double& out) {
  std::size_t b = tok.find_first_not_of(" \t\r");
  std::size_t e = tok.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  const std::string t = tok.substr(b, e - b + 1);
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Comma-separated rows, last column is y.  A first line that does not parse
/// as numbers is taken as a header.  Blank lines are skipped.
inline Dataset parse_csv(std::istream& in, std::vector<std::string>* header = nullptr) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto toks = detail::split_commas(line);
    std::vector<double> vals(toks.size());
    bool numeric = true;
    for (std::size_t i = 0; i < toks.size() && numeric; ++i)
      numeric = detail::parse_double(toks[i], vals[i]);
    if (!numeric) {
      if (rows.empty() && width == 0) {
        width = toks.size();
        if (header) *header = toks;
        continue;
      }
      fail(ErrorKind::IoError, "line " + std::to_string(lineno) + ": non-numeric field");
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width)
      fail(ErrorKind::IoError, "line " + std::to_string(lineno) + ": expected " +
                                   std::to_string(width) + " fields, found " +
                                   std::to_string(vals.size()));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) fail(ErrorKind::IoError, "no data rows");
  if (width < 2) fail(ErrorKind::IoError, "need at least one feature column and y");
  Dataset d;
  d.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(width - 1));
  d.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j)
      d.X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    d.y(static_cast<Index>(i)) = rows[i][width - 1];
  }
  return d;
}

inline Dataset read_csv(const std::string& path, std::vector<std::string>* header = nullptr) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  return parse_csv(in, header);
}

/// Shortest round-trip decimal for a double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_csv(std::ostream& out, const Dataset& d, bool with_header = true) {
  if (with_header) {
    for (Index j = 0; j < d.p(); ++j) out << "x" << (j + 1) << ",";
    out << "y\n";
  }
  for (Index i = 0; i < d.n(); ++i) {
    for (Index j = 0; j < d.p(); ++j) out << format_double(d.X(i, j)) << ",";
    out << format_double(d.y(i)) << "\n";
  }
}

inline void write_csv(const std::string& path, const Dataset& d, bool with_header = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  write_csv(out, d, with_header);
}

// Binary layout: "SSEL1", u64 n, u64 p (little endian), X row-major f64,
// then y as n f64.
inline constexpr char kBinaryMagic[5] = {'S', 'S', 'E', 'L', '1'};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::IoError, "truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

inline double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline void write_binary(std::ostream& out, const Dataset& d) {
  out.write(kBinaryMagic, 5);
  detail::put_u64(out, static_cast<std::uint64_t>(d.n()));
  detail::put_u64(out, static_cast<std::uint64_t>(d.p()));
  for (Index i = 0; i < d.n(); ++i)
    for (Index j = 0; j < d.p(); ++j) detail::put_f64(out, d.X(i, j));
  for (Index i = 0; i < d.n(); ++i) detail::put_f64(out, d.y(i));
}

inline Dataset read_binary(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kBinaryMagic, 5) != 0)
    fail(ErrorKind::IoError, "bad magic, expected SSEL1");
  const std::uint64_t n = detail::get_u64(in), p = detail::get_u64(in);
  if (n == 0 || p == 0 || n > (1u << 28) || p > (1u << 28) || n * p > (1ull << 32))
    fail(ErrorKind::IoError, "implausible dimensions in header");
  Dataset d;
  d.X.resize(static_cast<Index>(n), static_cast<Index>(p));
  d.y.resize(static_cast<Index>(n));
  for (Index i = 0; i < d.n(); ++i)
    for (Index j = 0; j < d.p(); ++j) d.X(i, j) = detail::get_f64(in);
  for (Index i = 0; i < d.n(); ++i) d.y(i) = detail::get_f64(in);
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::IoError, "trailing bytes after y");
  return d;
}

inline void write_binary(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  write_binary(out, d);
}

inline Dataset read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  return read_binary(in);
}

/// Dispatch on the file's first bytes.
inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  char magic[5] = {};
  in.read(magic, 5);
  const bool binary = in.gcount() == 5 && std::memcmp(magic, kBinaryMagic, 5) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_binary(in) : parse_csv(in);
}

}  // namespace bestsubset
