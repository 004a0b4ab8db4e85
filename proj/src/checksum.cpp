#include "linearizer/checksum.hpp"

#include <bit>
#include <cstdio>
#include <limits>

#include <zlib.h>

namespace linearizer {

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes, std::uint32_t running) {
  uLong crc = running;
  std::size_t offset = 0;
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, std::numeric_limits<uInt>::max());
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void append_le(std::vector<unsigned char>& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(value >> (8 * i)));
}

void append_le(std::vector<unsigned char>& out, std::span<const double> values) {
  out.reserve(out.size() + 8 * values.size());
  for (double v : values) append_le(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t parameters_checksum(const ParameterList& params) {
  std::vector<unsigned char> bytes;
  for (const auto& p : params) {
    bytes.insert(bytes.end(), p.name.begin(), p.name.end());
    bytes.push_back(0);
    append_le(bytes, static_cast<std::uint64_t>(p.var.rows()));
    append_le(bytes, static_cast<std::uint64_t>(p.var.cols()));
    append_le(bytes, p.var.value().data());
  }
  return crc32_bytes(bytes);
}

std::string hex32(std::uint32_t value) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", value);
  return buf;
}

}  // namespace linearizer
