#include "saufno/io.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "saufno/error.hpp"

namespace saufno::io {

namespace {

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

[[noreturn]] void truncated(const std::string& path) { throw Error("TruncatedFile", path + " ends early"); }

}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) truncated(path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_u64_prefixed(std::ostream& out, const std::string& bytes) {
  write_u64(out, bytes.size());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_u64_prefixed(std::istream& in, const std::string& path) {
  const auto n = read_u64(in, path);
  if (n > (std::uint64_t{1} << 32)) throw Error("TruncatedFile", path + " has an implausible header length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) truncated(path);
  return s;
}

void write_f32le(std::ostream& out, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    std::vector<std::uint32_t> tmp(n);
    std::memcpy(tmp.data(), data, n * sizeof(float));
    for (auto& v : tmp) v = bswap32(v);
    out.write(reinterpret_cast<const char*>(tmp.data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
}

void read_f32le(std::istream& in, float* data, std::size_t n, const std::string& path) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)))) truncated(path);
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v;
      std::memcpy(&v, data + i, 4);
      v = bswap32(v);
      std::memcpy(data + i, &v, 4);
    }
  }
}

}  // namespace saufno::io
