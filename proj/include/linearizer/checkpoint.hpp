#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "linearizer/config.hpp"
#include "linearizer/rng.hpp"

namespace linearizer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// File layout: 8-byte magic "LINCKPT\0", uint64 little-endian header length,
// a JSON header, then the tensors as little-endian doubles in header order.
// The header records names, shapes, byte offsets, the config snapshot, the RNG
// state and a CRC-32 of the header (without its crc field) plus the payload.
struct Checkpoint {
  std::string kind;  // flow | collapsed | ign | style
  Json config = Json::object();
  Json info = Json::object();  // task-specific metadata
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin = "checkpoint");

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void add_parameters(Checkpoint& ckpt, const ParameterList& params);
// Copies tensors named like the parameters into them. Every parameter must be
// present with the same shape; extra tensors in the checkpoint are ignored.
void assign_parameters(const Checkpoint& ckpt, const ParameterList& params);

// Writes bytes or text atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace linearizer
