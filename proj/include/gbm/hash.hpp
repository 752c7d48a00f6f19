#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace gbm {

// FNV-1a, used to fingerprint artifacts in reports and run records.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 14695981039346656037ull) {
  uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_file_hex(const std::filesystem::path& path);
std::string hash_bytes_hex(std::string_view bytes);

// Derives an independent RNG seed from a base seed and a stream label.
// Every parallel consumer (per-sample augmentation, per-epoch shuffles)
// gets its own stream so results do not depend on scheduling.
inline uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = fnv1a64(label);
  for (uint64_t v : {base, a, b}) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (i * 8)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace gbm
