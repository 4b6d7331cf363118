#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

// Little-endian binary helpers shared by the THRM and SAUF containers.
namespace saufno::io {

void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in, const std::string& path);

// u64 byte length followed by the bytes.
void write_u64_prefixed(std::ostream& out, const std::string& bytes);
std::string read_u64_prefixed(std::istream& in, const std::string& path);

void write_f32le(std::ostream& out, const float* data, std::size_t n);
// Throws Error("TruncatedFile") when fewer than n values remain.
void read_f32le(std::istream& in, float* data, std::size_t n, const std::string& path);

}  // namespace saufno::io
