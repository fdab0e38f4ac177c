#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "nstab/error.hpp"
#include "nstab/tinynn/transformer.hpp"

namespace nstab::nn {

// Layout, all integers little-endian:
//   8 bytes  magic "NSTABCK1"
//   u32      format version
//   u64      metadata length, then that many bytes of JSON {"model": TransformerConfig, ...}
//   u64      parameter count
//   per parameter: u32 name length, name bytes, u32 rank, u64 per dimension,
//                  row-major IEEE-754 float64 values
inline constexpr char kCheckpointMagic[8] = {'N', 'S', 'T', 'A', 'B', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!in) throw InvalidArgument("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ull << 32)) throw InvalidArgument("checkpoint: implausible field length");
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw InvalidArgument("checkpoint: truncated file");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Transformer& model,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  nlohmann::json meta = extra;
  meta["model"] = model.config();
  const std::string m = meta.dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, m.size());
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  detail::put_le<std::uint64_t>(out, model.parameters().size());
  for (const auto& p : model.parameters()) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Matrix& v = p.tensor.value();
    detail::put_le<std::uint32_t>(out, 2);
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.rows()));
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.cols()));
    for (Eigen::Index k = 0; k < v.size(); ++k) detail::put_le<double>(out, v.data()[k]);
  }
  if (!out) throw InvalidArgument("checkpoint: write failed for " + path.string());
}

struct LoadedCheckpoint {
  Transformer model;
  nlohmann::json metadata;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw InvalidArgument("checkpoint: bad magic in " + path.string());
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw InvalidArgument("checkpoint: unsupported version " + std::to_string(version));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::get_bytes(in, detail::get_le<std::uint64_t>(in)));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("checkpoint: malformed metadata: ") + e.what());
  }
  Transformer model(meta.at("model").get<TransformerConfig>(), 0);
  const auto count = detail::get_le<std::uint64_t>(in);
  if (count != model.parameters().size()) throw InvalidArgument("checkpoint: parameter count differs from config");
  for (std::uint64_t c = 0; c < count; ++c) {
    const std::string name = detail::get_bytes(in, detail::get_le<std::uint32_t>(in));
    if (detail::get_le<std::uint32_t>(in) != 2) throw InvalidArgument("checkpoint: parameter " + name + " is not rank 2");
    const auto rows = detail::get_le<std::uint64_t>(in), cols = detail::get_le<std::uint64_t>(in);
    Matrix& v = model.param(name).mutable_value();
    if (rows != static_cast<std::uint64_t>(v.rows()) || cols != static_cast<std::uint64_t>(v.cols()))
      throw InvalidArgument("checkpoint: shape mismatch for " + name);
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = detail::get_le<double>(in);
  }
  return {std::move(model), std::move(meta)};
}

}  // namespace nstab::nn
