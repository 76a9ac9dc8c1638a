#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace page {

// Little-endian binary primitives shared by dataset files and agent
// checkpoints. All integers are 64-bit, all reals are IEEE-754 doubles.

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("unexpected end of stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_i64(std::ostream& os, std::int64_t v) {
  write_u64(os, static_cast<std::uint64_t>(v));
}

inline std::int64_t read_i64(std::istream& is) {
  return static_cast<std::int64_t>(read_u64(is));
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& is) {
  return std::bit_cast<double>(read_u64(is));
}

inline void write_f64_vec(std::ostream& os, const std::vector<double>& v) {
  write_i64(os, static_cast<std::int64_t>(v.size()));
  for (double x : v) write_f64(os, x);
}

inline std::vector<double> read_f64_vec(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 0) throw std::runtime_error("negative vector length");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = read_f64(is);
  return v;
}

inline void write_i64_vec(std::ostream& os, const std::vector<std::int64_t>& v) {
  write_i64(os, static_cast<std::int64_t>(v.size()));
  for (auto x : v) write_i64(os, x);
}

inline std::vector<std::int64_t> read_i64_vec(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 0) throw std::runtime_error("negative vector length");
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = read_i64(is);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_i64(os, static_cast<std::int64_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 0) throw std::runtime_error("negative string length");
  std::string s(static_cast<std::size_t>(n), '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("unexpected end of stream");
  return s;
}

}  // namespace page
