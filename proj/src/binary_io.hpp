#pragma once

// Little-endian readers/writers shared by the scene and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ssg/error.hpp"

namespace ssg::detail {

template <class UInt>
void put_le(std::vector<unsigned char>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

template <class UInt>
UInt get_le(const unsigned char* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(p[i]) << (8 * i);
  return v;
}

inline void put_f32(std::vector<unsigned char>& out, float x) { put_le(out, std::bit_cast<std::uint32_t>(x)); }
inline void put_f64(std::vector<unsigned char>& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

}  // namespace ssg::detail
