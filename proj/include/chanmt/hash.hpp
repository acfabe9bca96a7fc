#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace chanmt {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;

/// FNV-1a over raw bytes, continuing from `h`.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = kFnvOffset) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) { return fnv1a(s.data(), s.size(), h); }

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

}  // namespace chanmt
