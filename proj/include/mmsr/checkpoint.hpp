#pragma once

// Checkpoint container:
//   8 bytes   magic "MMSRCKPT"
//   u32 LE    format version
//   u64 LE    header length N
//   N bytes   JSON header {format_version, dtype, config, config_hash, iteration,
//             adam_step, tensors: [{name, kind, shape, offset}]}
//   raw little-endian float64 tensor data, in header order

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmsr/adam.hpp"
#include "mmsr/nets.hpp"

namespace mmsr {

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'S', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// FNV-1a 64-bit digest rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

/// Everything needed to resume training or serve inference.
struct Checkpoint {
  nets::Models models;
  AdamState adam;
  std::uint64_t iteration = 0;
  /// Full run configuration (model + training); the model part must match `models.config`.
  nlohmann::json config = nlohmann::json::object();

  Checkpoint() = default;
  explicit Checkpoint(nets::ModelConfig mc) : models(mc) { config["model"] = mc.to_json(); }

  std::string hash() const { return config_hash(config); }
};

namespace detail {

static_assert(sizeof(double) == 8);

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_le(const std::string& in, std::size_t off, int bytes) {
  if (off + static_cast<std::size_t>(bytes) > in.size()) throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["dtype"] = "f64";
  header["config"] = ck.config;
  header["config_hash"] = ck.hash();
  header["iteration"] = ck.iteration;
  header["adam_step"] = ck.adam.step;
  auto params = ck.models.all_params();
  const bool with_adam = !ck.adam.m.empty();
  if (with_adam && (ck.adam.m.size() != params.size() || ck.adam.v.size() != params.size()))
    throw CheckpointError("optimizer state does not match parameter list");

  std::string data;
  nlohmann::json tensors = nlohmann::json::array();
  auto emit = [&](const std::string& name, const char* kind, const Tensor& t) {
    tensors.push_back({{"name", name}, {"kind", kind}, {"shape", t.shape()}, {"offset", data.size()}});
    for (double v : t.values()) detail::put_f64(data, v);
  };
  for (const auto* p : params) emit(p->name, "param", p->value);
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) emit(params[i]->name, "adam_m", ck.adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) emit(params[i]->name, "adam_v", ck.adam.v[i]);
  }
  header["tensors"] = std::move(tensors);

  const std::string hdr = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, hdr.size());
  out += hdr;
  out += data;
  return out;
}

inline Checkpoint deserialize(const std::string& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = detail::get_le(bytes, 12, 8);
  if (20 + hlen > bytes.size()) throw CheckpointError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("dtype", "") != "f64") throw CheckpointError("unsupported checkpoint dtype");
  const std::size_t data0 = 20 + hlen;

  const auto& config = header.at("config");
  Checkpoint ck(nets::ModelConfig::from_json(config.value("model", nlohmann::json::object())));
  ck.config = config;
  if (header.value("config_hash", "") != ck.hash()) throw CheckpointError("checkpoint config hash mismatch");
  ck.iteration = header.at("iteration").get<std::uint64_t>();
  ck.adam.step = header.at("adam_step").get<std::uint64_t>();

  auto params = ck.models.all_params();
  std::size_t np = 0, nm = 0, nv = 0;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto kind = t.at("kind").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto off = t.at("offset").get<std::size_t>();
    Tensor value(shape);
    for (std::size_t i = 0; i < value.size(); ++i)
      value[i] = std::bit_cast<double>(detail::get_le(bytes, data0 + off + 8 * i, 8));
    std::size_t& idx = kind == "param" ? np : kind == "adam_m" ? nm : nv;
    if (kind != "param" && kind != "adam_m" && kind != "adam_v") throw CheckpointError("unknown tensor kind '" + kind + "'");
    if (idx >= params.size() || params[idx]->name != name || params[idx]->value.shape() != shape)
      throw CheckpointError("checkpoint tensor '" + name + "' does not match the model architecture");
    if (kind == "param") {
      params[idx]->value = std::move(value);
      params[idx]->zero_grad();
    } else if (kind == "adam_m") {
      ck.adam.m.push_back(std::move(value));
    } else {
      ck.adam.v.push_back(std::move(value));
    }
    ++idx;
  }
  if (np != params.size()) throw CheckpointError("checkpoint is missing parameters");
  if (nm != nv || (nm != 0 && nm != params.size())) throw CheckpointError("checkpoint optimizer state incomplete");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const auto bytes = serialize(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for '" + path + "'");
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline Checkpoint load_checkpoint(const std::string& path) {
  try {
    return deserialize(read_file_bytes(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace mmsr
