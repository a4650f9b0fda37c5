#pragma once

// Parameter checkpoints: <prefix>.bin holds the little-endian float64 values
// of every tensor in order; <prefix>.json lists names, shapes, offsets and
// the SHA-256 of the .bin file.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/autodiff/nn.hpp"
#include "skillworld/util/digest.hpp"

namespace skillworld::ad {

inline std::vector<unsigned char> serialize_params(const NamedParams& named) {
  std::vector<double> all;
  for (const auto& [_, t] : named) all.insert(all.end(), t.values().begin(), t.values().end());
  const auto view = as_bytes_le(all);
  return {view.begin(), view.end()};
}

/// SHA-256 over the serialized values; equal digests mean bit-identical parameters.
inline std::string params_digest(const NamedParams& named) { return sha256_hex(serialize_params(named)); }

inline nlohmann::json save_checkpoint(const NamedParams& named, const std::string& prefix,
                                      const nlohmann::json& extra = nlohmann::json::object()) {
  const auto bytes = serialize_params(named);
  {
    std::ofstream out(prefix + ".bin", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + prefix + ".bin");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : named) {
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
    offset += t.size();
  }
  nlohmann::json manifest{{"format", "f64le"},
                          {"total_values", offset},
                          {"tensors", tensors},
                          {"sha256", sha256_hex(bytes)},
                          {"extra", extra}};
  std::ofstream out(prefix + ".json");
  if (!out) throw std::runtime_error("cannot write " + prefix + ".json");
  out << manifest.dump(2) << "\n";
  return manifest;
}

/// Fills named tensors in place; names, shapes and checksum must all match.
inline nlohmann::json load_checkpoint(NamedParams& named, const std::string& prefix) {
  std::ifstream jin(prefix + ".json");
  if (!jin) throw std::runtime_error("cannot open " + prefix + ".json");
  const auto manifest = nlohmann::json::parse(jin);
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + prefix + ".bin");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (sha256_hex(bytes) != manifest.at("sha256").get<std::string>())
    throw std::runtime_error("checkpoint " + prefix + " fails its checksum");
  const auto values = doubles_from_bytes(bytes);
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != named.size()) throw std::runtime_error("checkpoint tensor count differs from model");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& e = tensors[i];
    auto& t = named[i].second;
    if (e.at("name").get<std::string>() != named[i].first)
      throw std::runtime_error("checkpoint tensor " + std::to_string(i) + " is '" + e.at("name").get<std::string>() +
                               "', model expects '" + named[i].first + "'");
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + named[i].first);
    const auto off = e.at("offset").get<std::size_t>();
    if (off + t.size() > values.size()) throw std::runtime_error("checkpoint is truncated");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.mutable_values().begin());
  }
  return manifest;
}

}  // namespace skillworld::ad
