#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "nis/types.hpp"

namespace nis {

// Plain SHA-1 (FIPS 180-1). Used only as the routing hash for unordered
// blocks, not for anything security-sensitive.
std::array<std::uint8_t, 20> sha1(const void* data, std::size_t len);

std::string sha1_hex(const void* data, std::size_t len);

// Routing hash: SHA-1 over the 8-byte little-endian encoding of the key,
// first 8 digest bytes read as a big-endian unsigned integer.
std::uint64_t route_hash(Key k);

// Child slot for an unordered block with x children.
inline std::uint32_t hash_route(Key k, std::uint32_t x) {
  if (x == 0) throw std::invalid_argument("hash_route: x must be positive");
  return static_cast<std::uint32_t>(route_hash(k) % x);
}

}  // namespace nis
