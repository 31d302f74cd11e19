#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtlwm {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

Bytes to_bytes(std::string_view s);
std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);
Digest digest_from_hex(std::string_view hex);

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

// ChaCha20 (IETF variant, 96-bit nonce) keystream reader. The key is
// SHA-256(secret), the nonce is all-zero and the block counter starts at 0.
// Bytes are handed out strictly in order; position() reports how many have
// been consumed so far.
class KeystreamReader {
 public:
  explicit KeystreamReader(std::span<const std::uint8_t> secret);

  std::uint8_t next_byte();
  // Four consecutive bytes interpreted little-endian.
  std::uint32_t next_u32_le();
  std::uint64_t position() const noexcept { return position_; }

 private:
  void refill();

  Digest key_;
  std::array<std::uint8_t, 64> block_{};
  std::uint32_t counter_ = 0;
  std::size_t offset_ = 64;
  std::uint64_t position_ = 0;
};

// Raw keystream prefix, mainly for diagnostics and tests.
Bytes chacha20_keystream(std::span<const std::uint8_t> secret, std::size_t length);

// Deterministic 64-bit generator seeded from a label; used to derive per-trial seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter);

// Ed25519 signing identity.
struct PublicKey {
  std::array<std::uint8_t, 32> bytes{};
  auto operator<=>(const PublicKey&) const = default;
};

struct SigningKey {
  PublicKey public_key;
  std::array<std::uint8_t, 64> secret{};

  // Deterministic keypair from a 32-byte seed.
  static SigningKey from_seed(std::span<const std::uint8_t> seed);
};

using Signature = std::array<std::uint8_t, 64>;

Signature sign(std::span<const std::uint8_t> message, const SigningKey& key);
bool verify_signature(std::span<const std::uint8_t> message, const Signature& sig,
                      const PublicKey& key);

}  // namespace mtlwm
