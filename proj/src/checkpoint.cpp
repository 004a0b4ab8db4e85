#include "linearizer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unistd.h>

#include "linearizer/checksum.hpp"
#include "linearizer/errors.hpp"

namespace linearizer {

namespace {

constexpr unsigned char kMagic[8] = {'L', 'I', 'N', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t read_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double read_double(const unsigned char* p) { return std::bit_cast<double>(read_u64(p)); }

std::span<const unsigned char> as_bytes(const std::string& s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

std::uint32_t content_crc(const std::string& header, std::span<const unsigned char> payload) {
  return crc32_bytes(payload, crc32_bytes(as_bytes(header)));
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> payload;
  Json entries = Json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", payload.size()}});
    append_le(payload, t.data());
  }
  Json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = ckpt.kind;
  header["rng"] = {{"seed", ckpt.rng_seed}, {"counter", ckpt.rng_counter}};
  header["config"] = ckpt.config;
  header["info"] = ckpt.info;
  header["tensors"] = std::move(entries);
  header["payload_bytes"] = payload.size();
  header["crc32"] = hex32(content_crc(header.dump(), payload));
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  append_le(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) { return IoError(origin + ": " + why); };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw fail("not a checkpoint file");
  }
  const std::uint64_t header_len = read_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw fail("truncated header");
  const std::string text(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::exception& e) {
    throw fail(std::string("corrupt header: ") + e.what());
  }
  try {
    const auto version = header.at("format_version").get<std::uint32_t>();
    if (version != kCheckpointVersion) {
      throw fail("unsupported format version " + std::to_string(version) + " (expected " +
                 std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t payload_start = 16 + header_len;
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() - payload_start != payload_bytes) {
      throw fail("payload holds " + std::to_string(bytes.size() - payload_start) + " bytes, header says " +
                 std::to_string(payload_bytes));
    }
    const std::span<const unsigned char> payload(bytes.data() + payload_start, payload_bytes);
    const std::string stored_crc = header.at("crc32").get<std::string>();
    Json unsigned_header = header;
    unsigned_header.erase("crc32");
    if (hex32(content_crc(unsigned_header.dump(), payload)) != stored_crc) throw fail("checksum mismatch");

    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.rng_seed = header.at("rng").at("seed").get<std::uint64_t>();
    ckpt.rng_counter = header.at("rng").at("counter").get<std::uint64_t>();
    ckpt.config = header.at("config");
    ckpt.info = header.at("info");
    for (const auto& e : header.at("tensors")) {
      const auto rows = e.at("shape").at(0).get<std::size_t>();
      const auto cols = e.at("shape").at(1).get<std::size_t>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t count = rows * cols;
      if (offset % 8 != 0 || offset > payload.size() || count > (payload.size() - offset) / 8) {
        throw fail("tensor '" + e.at("name").get<std::string>() + "' lies outside the payload");
      }
      Tensor t = Tensor::zeros(rows, cols);
      for (std::size_t i = 0; i < count; ++i) t[i] = read_double(payload.data() + offset + 8 * i);
      ckpt.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    return ckpt;
  } catch (const Json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<unsigned char> bytes = serialize_checkpoint(ckpt);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path.string());
}

void add_parameters(Checkpoint& ckpt, const ParameterList& params) {
  for (const auto& p : params) ckpt.tensors.emplace_back(p.name, p.var.value());
}

void assign_parameters(const Checkpoint& ckpt, const ParameterList& params) {
  for (const auto& p : params) {
    if (!ckpt.has(p.name)) throw IoError("checkpoint is missing parameter '" + p.name + "'");
    const Tensor& t = ckpt.tensor(p.name);
    if (t.rows() != p.var.rows() || t.cols() != p.var.cols()) {
      throw IoError("parameter '" + p.name + "' has shape " + t.shape_string() + " in the checkpoint, model expects " +
                    p.var.value().shape_string());
    }
  }
  for (const auto& p : params) {
    Var v = p.var;
    Tensor& dst = v.mutable_value();
    const Tensor& src = ckpt.tensor(p.name);
    dst = Tensor(dst.shape(), src.data());
  }
}

}  // namespace linearizer
