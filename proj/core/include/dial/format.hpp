#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace dial {

// Shortest round-trip decimal form; keeps emitted CSV/JSON byte-stable.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// FNV-1a over bytes, hex-encoded; used for dataset/config fingerprints in
// run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& s) {
  const std::uint64_t h = fnv1a64(s.data(), s.size());
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[15 - i] = digits[(h >> (4 * i)) & 0xf];
  buf[16] = '\0';
  return std::string(buf, 16);
}

}  // namespace dial
