#pragma once

// Binary checkpoint, little-endian:
//   "SKDESC01"  u32 version  u64 architecture hash
//   u32 n + n bytes of config JSON
//   f64 input mean  f64 input std  u64 seed
//   u32 tensor count, then per tensor: u32 name length, name, u32 rank,
//   u32 dims..., f32 values

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchdesc/error.hpp"
#include "sketchdesc/network.hpp"

namespace sketchdesc {

inline constexpr char kCheckpointMagic[8] = {'S', 'K', 'D', 'E', 'S', 'C', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace detail {

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw precondition_error("checkpoint is truncated");
  return v;
}

inline std::string get_string(std::istream& in, std::uint32_t max_len) {
  const auto n = get<std::uint32_t>(in);
  require(n <= max_len, "checkpoint string field is implausibly long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw precondition_error("checkpoint is truncated");
  return s;
}

}  // namespace detail

template <typename T>
void write_checkpoint(std::ostream& out, SketchDescNet<T>& net, std::uint64_t seed) {
  const NetConfig& cfg = net.config();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, cfg.architecture_hash());
  const std::string json = cfg.to_json().dump();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(json.size()));
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  detail::put<double>(out, cfg.input_mean);
  detail::put<double>(out, cfg.input_std);
  detail::put<std::uint64_t>(out, seed);
  const auto tensors = net.state();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (int d : t->shape) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (T v : t->values) detail::put<float>(out, static_cast<float>(v));
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, SketchDescNet<T>& net, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_failure("cannot write checkpoint " + path.string());
  write_checkpoint(out, net, seed);
  if (!out) throw runtime_failure("failed writing checkpoint " + path.string());
}

template <typename T = float>
struct LoadedCheckpoint {
  std::unique_ptr<SketchDescNet<T>> net;
  std::uint64_t seed = 0;
};

template <typename T = float>
LoadedCheckpoint<T> read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  require(in && std::memcmp(magic, kCheckpointMagic, sizeof magic) == 0, "not a sketchdesc checkpoint");
  const auto version = detail::get<std::uint32_t>(in);
  require(version == kCheckpointVersion, "unsupported checkpoint version " + std::to_string(version));
  const auto hash = detail::get<std::uint64_t>(in);
  NetConfig cfg;
  try {
    cfg = NetConfig::from_json(nlohmann::json::parse(detail::get_string(in, 1u << 16)));
  } catch (const nlohmann::json::exception& e) {
    throw precondition_error(std::string("checkpoint config is malformed: ") + e.what());
  }
  require(cfg.architecture_hash() == hash, "checkpoint architecture hash does not match its config");
  const double mean = detail::get<double>(in), stdev = detail::get<double>(in);
  require(mean == cfg.input_mean && stdev == cfg.input_std, "checkpoint input transform disagrees with its config");
  LoadedCheckpoint<T> out;
  out.seed = detail::get<std::uint64_t>(in);
  out.net = std::make_unique<SketchDescNet<T>>(cfg, out.seed);
  auto tensors = out.net->state();
  const auto count = detail::get<std::uint32_t>(in);
  require(count == tensors.size(), "checkpoint tensor count does not match the architecture");
  for (auto& [name, t] : tensors) {
    require(detail::get_string(in, 1024) == name, "checkpoint tensor order differs at " + name);
    const auto rank = detail::get<std::uint32_t>(in);
    require(rank == t->rank(), "checkpoint tensor rank mismatch for " + name);
    for (int d : t->shape) require(detail::get<std::uint32_t>(in) == static_cast<std::uint32_t>(d), "checkpoint shape mismatch for " + name);
    for (auto& v : t->values) v = static_cast<T>(detail::get<float>(in));
  }
  in.peek();
  require(in.eof(), "trailing bytes after checkpoint tensors");
  return out;
}

template <typename T = float>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in);
}

}  // namespace sketchdesc
