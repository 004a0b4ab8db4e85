#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "linearizer/autodiff.hpp"

namespace linearizer {

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes, std::uint32_t running = 0);

// Appends the IEEE-754 bits of each value, least significant byte first.
void append_le(std::vector<unsigned char>& out, std::span<const double> values);
void append_le(std::vector<unsigned char>& out, std::uint64_t value);

// CRC-32 over parameter names, shapes and little-endian values, in list order.
std::uint32_t parameters_checksum(const ParameterList& params);

std::string hex32(std::uint32_t value);

}  // namespace linearizer
