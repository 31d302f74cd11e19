#include "mtlwm/crypto.hpp"

#include <sodium.h>

#include <cstring>

#include "mtlwm/errors.hpp"

namespace mtlwm {
namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw CryptoError("libsodium initialisation failed");
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw ParseError("odd-length hex string", hex.size());
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ParseError("invalid hex digit", 2 * i);
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  Bytes raw = from_hex(hex);
  if (raw.size() != 32) throw ParseError("digest must be 32 bytes", raw.size());
  Digest d;
  std::memcpy(d.data(), raw.data(), 32);
  return d;
}

Digest sha256(std::span<const std::uint8_t> data) {
  ensure_sodium();
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest sha256(std::string_view data) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

KeystreamReader::KeystreamReader(std::span<const std::uint8_t> secret) : key_(sha256(secret)) {}

void KeystreamReader::refill() {
  static const std::array<std::uint8_t, 64> kZeros{};
  static const std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> kNonce{};
  crypto_stream_chacha20_ietf_xor_ic(block_.data(), kZeros.data(), kZeros.size(), kNonce.data(),
                                     counter_, key_.data());
  ++counter_;
  offset_ = 0;
}

std::uint8_t KeystreamReader::next_byte() {
  if (offset_ == block_.size()) refill();
  ++position_;
  return block_[offset_++];
}

std::uint32_t KeystreamReader::next_u32_le() {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(next_byte()) << (8 * i);
  return v;
}

Bytes chacha20_keystream(std::span<const std::uint8_t> secret, std::size_t length) {
  KeystreamReader reader(secret);
  Bytes out(length);
  for (auto& b : out) b = reader.next_byte();
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
  // splitmix64 over a mixed input
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SigningKey SigningKey::from_seed(std::span<const std::uint8_t> seed) {
  ensure_sodium();
  if (seed.size() != crypto_sign_SEEDBYTES) throw CryptoError("ed25519 seed must be 32 bytes");
  SigningKey key;
  crypto_sign_seed_keypair(key.public_key.bytes.data(), key.secret.data(), seed.data());
  return key;
}

Signature sign(std::span<const std::uint8_t> message, const SigningKey& key) {
  ensure_sodium();
  Signature sig;
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), key.secret.data());
  return sig;
}

bool verify_signature(std::span<const std::uint8_t> message, const Signature& sig,
                      const PublicKey& key) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(),
                                     key.bytes.data()) == 0;
}

}  // namespace mtlwm
