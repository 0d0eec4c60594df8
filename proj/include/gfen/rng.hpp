#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gfen {

/// Named sub-streams derived from one user seed ("init", "shuffle", "dropout", "noise", ...).
/// Streams with different names are independent; the same (seed, name) always replays.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace gfen
