#pragma once

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skillworld {

inline std::string to_hex(std::span<const unsigned char> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

inline std::string sha256_hex(std::span<const unsigned char> data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
  SHA256(data.data(), data.size(), md.data());
  return to_hex(md);
}

inline std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline std::string base64_encode(std::span<const unsigned char> data) {
  if (data.empty()) return {};
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw std::invalid_argument("base64_decode: bad length");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw std::invalid_argument("base64_decode: malformed input");
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

/// Little-endian byte image of a float64 array (the host is little-endian).
inline std::span<const unsigned char> as_bytes_le(std::span<const double> values) {
  static_assert(sizeof(double) == 8);
  return {reinterpret_cast<const unsigned char*>(values.data()), values.size() * sizeof(double)};
}

inline std::vector<double> doubles_from_bytes(std::span<const unsigned char> bytes) {
  if (bytes.size() % sizeof(double) != 0) throw std::invalid_argument("byte count not a multiple of 8");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace skillworld
