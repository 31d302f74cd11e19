#pragma once

// Straight-line ChaCha20 (RFC 8439) used only as a test oracle.

#include <array>
#include <cstdint>
#include <cstring>
#include <vector>

namespace oracle {

inline std::uint32_t rotl(std::uint32_t v, int c) { return (v << c) | (v >> (32 - c)); }

inline void quarter(std::uint32_t& a, std::uint32_t& b, std::uint32_t& c, std::uint32_t& d) {
  a += b; d ^= a; d = rotl(d, 16);
  c += d; b ^= c; b = rotl(b, 12);
  a += b; d ^= a; d = rotl(d, 8);
  c += d; b ^= c; b = rotl(b, 7);
}

inline std::uint32_t load_le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::array<std::uint8_t, 64> chacha20_block(const std::array<std::uint8_t, 32>& key, std::uint32_t counter,
                                                   const std::array<std::uint8_t, 12>& nonce) {
  std::uint32_t s[16];
  s[0] = 0x61707865; s[1] = 0x3320646e; s[2] = 0x79622d32; s[3] = 0x6b206574;
  for (int i = 0; i < 8; ++i) s[4 + i] = load_le(key.data() + 4 * i);
  s[12] = counter;
  for (int i = 0; i < 3; ++i) s[13 + i] = load_le(nonce.data() + 4 * i);
  std::uint32_t w[16];
  std::memcpy(w, s, sizeof s);
  for (int r = 0; r < 10; ++r) {
    quarter(w[0], w[4], w[8], w[12]);
    quarter(w[1], w[5], w[9], w[13]);
    quarter(w[2], w[6], w[10], w[14]);
    quarter(w[3], w[7], w[11], w[15]);
    quarter(w[0], w[5], w[10], w[15]);
    quarter(w[1], w[6], w[11], w[12]);
    quarter(w[2], w[7], w[8], w[13]);
    quarter(w[3], w[4], w[9], w[14]);
  }
  std::array<std::uint8_t, 64> out{};
  for (int i = 0; i < 16; ++i) {
    const std::uint32_t v = w[i] + s[i];
    for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<std::uint8_t>(v >> (8 * b));
  }
  return out;
}

inline std::vector<std::uint8_t> chacha20_stream(const std::array<std::uint8_t, 32>& key, std::size_t len) {
  std::vector<std::uint8_t> out;
  const std::array<std::uint8_t, 12> nonce{};
  for (std::uint32_t counter = 0; out.size() < len; ++counter) {
    auto block = chacha20_block(key, counter, nonce);
    out.insert(out.end(), block.begin(), block.end());
  }
  out.resize(len);
  return out;
}

}  // namespace oracle
