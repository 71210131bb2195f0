#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace trace {

// Seed shared by every persisted or reproducibility-sensitive hash:
// distinct-count summaries and the slice index. Changing it changes
// distinct estimates, so it is part of the on-disk contract.
inline constexpr uint64_t kHashSeed = 0x7452414345C0BE5DULL;

// splitmix64 finalizer.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// MurmurHash64A over arbitrary bytes, finished with mix64.
inline uint64_t hash_bytes(std::string_view bytes, uint64_t seed = kHashSeed) {
  constexpr uint64_t m = 0xC6A4A7935BD1E995ULL;
  constexpr int r = 47;
  const size_t len = bytes.size();
  uint64_t h = seed ^ (len * m);
  const char* data = bytes.data();
  const size_t blocks = len / 8;
  for (size_t i = 0; i < blocks; ++i) {
    uint64_t k;
    std::memcpy(&k, data + i * 8, 8);
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }
  const auto* tail = reinterpret_cast<const unsigned char*>(data + blocks * 8);
  switch (len & 7) {
    case 7: h ^= uint64_t(tail[6]) << 48; [[fallthrough]];
    case 6: h ^= uint64_t(tail[5]) << 40; [[fallthrough]];
    case 5: h ^= uint64_t(tail[4]) << 32; [[fallthrough]];
    case 4: h ^= uint64_t(tail[3]) << 24; [[fallthrough]];
    case 3: h ^= uint64_t(tail[2]) << 16; [[fallthrough]];
    case 2: h ^= uint64_t(tail[1]) << 8; [[fallthrough]];
    case 1:
      h ^= uint64_t(tail[0]);
      h *= m;
  }
  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return mix64(h);
}

}  // namespace trace
