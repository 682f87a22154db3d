#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sgkit {

// FNV-1a 64-bit. Used for run-manifest input digests and for seeding the
// deterministic test embedding backend. Not cryptographic.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Digest of a file's bytes; empty string if the file cannot be read.
std::string file_digest_hex(const std::string& path);

}  // namespace sgkit
