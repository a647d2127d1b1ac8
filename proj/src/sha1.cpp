#include "nis/sha1.hpp"

#include <cstring>

namespace nis {
namespace {

inline std::uint32_t rol(std::uint32_t v, int n) { return (v << n) | (v >> (32 - n)); }

void process_block(const std::uint8_t* p, std::uint32_t h[5]) {
  std::uint32_t w[80];
  for (int i = 0; i < 16; ++i)
    w[i] = (std::uint32_t(p[i * 4]) << 24) | (std::uint32_t(p[i * 4 + 1]) << 16) |
           (std::uint32_t(p[i * 4 + 2]) << 8) | std::uint32_t(p[i * 4 + 3]);
  for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

  std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
  for (int i = 0; i < 80; ++i) {
    std::uint32_t f, k;
    if (i < 20) {
      f = (b & c) | (~b & d);
      k = 0x5a827999;
    } else if (i < 40) {
      f = b ^ c ^ d;
      k = 0x6ed9eba1;
    } else if (i < 60) {
      f = (b & c) | (b & d) | (c & d);
      k = 0x8f1bbcdc;
    } else {
      f = b ^ c ^ d;
      k = 0xca62c1d6;
    }
    std::uint32_t t = rol(a, 5) + f + e + k + w[i];
    e = d;
    d = c;
    c = rol(b, 30);
    b = a;
    a = t;
  }
  h[0] += a;
  h[1] += b;
  h[2] += c;
  h[3] += d;
  h[4] += e;
}

}  // namespace

std::array<std::uint8_t, 20> sha1(const void* data, std::size_t len) {
  std::uint32_t h[5] = {0x67452301, 0xefcdab89, 0x98badcfe, 0x10325476, 0xc3d2e1f0};
  const auto* src = static_cast<const std::uint8_t*>(data);

  std::size_t full = len / 64;
  for (std::size_t i = 0; i < full; ++i) process_block(src + i * 64, h);

  // final padded block(s)
  std::uint8_t tail[128];
  std::size_t rem = len - full * 64;
  std::memcpy(tail, src + full * 64, rem);
  tail[rem] = 0x80;
  std::size_t tail_len = (rem + 1 + 8 <= 64) ? 64 : 128;
  std::memset(tail + rem + 1, 0, tail_len - rem - 1 - 8);
  std::uint64_t bits = std::uint64_t(len) * 8;
  for (int i = 0; i < 8; ++i) tail[tail_len - 1 - i] = std::uint8_t(bits >> (8 * i));
  process_block(tail, h);
  if (tail_len == 128) process_block(tail + 64, h);

  std::array<std::uint8_t, 20> out;
  for (int i = 0; i < 5; ++i) {
    out[i * 4] = std::uint8_t(h[i] >> 24);
    out[i * 4 + 1] = std::uint8_t(h[i] >> 16);
    out[i * 4 + 2] = std::uint8_t(h[i] >> 8);
    out[i * 4 + 3] = std::uint8_t(h[i]);
  }
  return out;
}

std::string sha1_hex(const void* data, std::size_t len) {
  static const char* hex = "0123456789abcdef";
  auto d = sha1(data, len);
  std::string s;
  s.reserve(40);
  for (auto b : d) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 0xf]);
  }
  return s;
}

std::uint64_t route_hash(Key k) {
  std::uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = std::uint8_t(k >> (8 * i));  // little-endian
  auto d = sha1(buf, 8);
  std::uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h = (h << 8) | d[i];  // big-endian read
  return h;
}

}  // namespace nis
