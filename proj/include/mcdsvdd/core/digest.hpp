#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace mcdsvdd {

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// "fnv1a64:<16 hex digits>"; used for config digests and model-card checksums.
inline std::string hex_digest(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace mcdsvdd
