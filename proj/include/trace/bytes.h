#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "trace/errors.h"

namespace trace::bytes {

static_assert(std::endian::native == std::endian::little, "on-disk format assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

inline void put_varint(std::string& out, uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<char>((v & 0x7F) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

// Thrown by the readers below; callers translate it into a format or
// checksum error naming the structure being decoded.
class Truncated : public std::exception {
 public:
  const char* what() const noexcept override { return "truncated input"; }
};

template <typename T>
T get(std::string_view& in) {
  if (in.size() < sizeof(T)) throw Truncated();
  T value;
  std::memcpy(&value, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return value;
}

inline uint64_t get_varint(std::string_view& in) {
  uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (in.empty()) throw Truncated();
    auto byte = static_cast<uint8_t>(in.front());
    in.remove_prefix(1);
    v |= uint64_t(byte & 0x7F) << shift;
    if (!(byte & 0x80)) return v;
  }
  throw Truncated();
}

}  // namespace trace::bytes
