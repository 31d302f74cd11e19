#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mtlwm/crypto.hpp"
#include "mtlwm/errors.hpp"
#include "mtlwm/nn.hpp"
#include "mtlwm/verification.hpp"
#include "mtlwm/wm_keys.hpp"

namespace mtlwm::notary {

inline constexpr std::uint8_t kWireVersion = 1;

enum class MessageType : std::uint8_t { publish = 1, claim = 2, attestation = 3, noop = 4 };

// Builder for the canonical wire layout:
//   version byte || type byte || (u32 little-endian length || bytes) per field
class CanonicalWriter {
 public:
  CanonicalWriter(MessageType type);
  CanonicalWriter& field(std::span<const std::uint8_t> bytes);
  CanonicalWriter& field(std::string_view text);
  CanonicalWriter& field_u64(std::uint64_t v);
  CanonicalWriter& field_u32(std::uint32_t v);
  const Bytes& bytes() const noexcept { return out_; }

 private:
  Bytes out_;
};

class CanonicalReader {
 public:
  CanonicalReader(std::span<const std::uint8_t> bytes, MessageType expected);
  Bytes field();
  std::uint64_t field_u64();
  std::uint32_t field_u32();
  template <std::size_t N>
  std::array<std::uint8_t, N> field_fixed();
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

template <std::size_t N>
std::array<std::uint8_t, N> CanonicalReader::field_fixed() {
  const std::size_t at = pos_;
  Bytes raw = field();
  if (raw.size() != N) {
    throw ParseError("field of " + std::to_string(raw.size()) + " bytes, expected " +
                         std::to_string(N),
                     at);
  }
  std::array<std::uint8_t, N> out;
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

struct NodeIdentity {
  int node_id = 0;
  SigningKey key;

  // Deterministic keypair from (simulation seed, node id).
  static NodeIdentity derive(int node_id, std::uint64_t seed);
  const PublicKey& public_key() const noexcept { return key.public_key; }
};

// Watermark key descriptor as carried inside a Publish message.
Bytes encode_watermark_key(const WatermarkKey& key);
WatermarkKey decode_watermark_key(std::span<const std::uint8_t> bytes);

// <Publish: key || time || hash(c_WM)>, signed by the sender.
struct PublishMsg {
  Bytes key;
  std::uint64_t time = 0;
  Digest cwm_hash{};
  PublicKey sender;
  Signature signature{};

  static PublishMsg make(const WatermarkKey& key, std::uint64_t time, const Digest& cwm_hash,
                         const SigningKey& signer);
  Bytes signing_bytes() const;
  Bytes encode() const;  // signing bytes followed by the signature field
  static PublishMsg decode(std::span<const std::uint8_t> bytes);
  bool signature_valid() const;
  WatermarkKey watermark_key() const { return decode_watermark_key(key); }
};

// <Claim: l_M || hash(M) || l_cWM>, signed by the sender.
struct ClaimMsg {
  Digest model_ref{};
  Digest model_hash{};
  Digest cwm_ref{};
  PublicKey sender;
  Signature signature{};

  static ClaimMsg make(const Digest& model_ref, const Digest& model_hash, const Digest& cwm_ref,
                       const SigningKey& signer);
  Bytes signing_bytes() const;
  Bytes encode() const;
  static ClaimMsg decode(std::span<const std::uint8_t> bytes);
  bool signature_valid() const;
  Digest digest() const { return sha256(encode()); }
};

struct EntryPosition {
  std::uint64_t term = 0;
  std::uint64_t index = 0;
  auto operator<=>(const EntryPosition&) const = default;
};

// A verifier's signed outcome for one claim.
struct Attestation {
  Digest claim_digest{};
  std::uint32_t verifier = 0;
  bool outcome = false;
  std::string reason;  // "ok", "tampered-model", "unregistered-watermark", "test-failed", ...
  Digest report_digest{};
  std::optional<EntryPosition> matched_publish;
  Digest model_hash{};
  PublicKey publisher;  // sender of the matched publish (zero when none)
  PublicKey verifier_key;
  Signature signature{};

  Bytes signing_bytes() const;
  Bytes encode() const;
  static Attestation decode(std::span<const std::uint8_t> bytes);
  bool signature_valid() const;
};

struct NoOp {
  std::uint64_t term = 0;
};

using Payload = std::variant<PublishMsg, ClaimMsg, Attestation, NoOp>;

Bytes encode_payload(const Payload& payload);
Digest payload_digest(const Payload& payload);
std::string_view payload_type(const Payload& payload);

struct LedgerEntry {
  std::uint64_t term = 0;
  std::uint64_t index = 0;
  Payload payload;
  std::uint64_t received_tick = 0;  // leader clock when the entry was appended
  Digest digest{};                  // payload digest
};

// Immutable content-addressed store; address = SHA-256 of the bytes.
class BlobStore {
 public:
  Digest put(Bytes bytes);
  const Bytes& get(const Digest& address) const;
  bool contains(const Digest& address) const { return blobs_.count(address) != 0; }
  std::size_t size() const noexcept { return blobs_.size(); }

 private:
  std::map<Digest, Bytes> blobs_;
};

struct ClaimContext {
  const BlobStore* store = nullptr;
  std::span<const LedgerEntry> committed;  // verifier's committed log prefix
  double gamma = 0.7;
};

// Independent ownership proof for one claim against the verifier's committed log.
Attestation handle_claim(const ClaimMsg& claim, const ClaimContext& ctx,
                         const NodeIdentity& verifier);

struct Contender {
  PublishMsg publish;
  EntryPosition position;
  bool verified = false;
};

// Among verifying contenders the earliest committed time wins; equal times are
// broken by the lexicographically smaller sender public key.
std::optional<std::size_t> resolve_redeclaration(std::span<const Contender> contenders);

}  // namespace mtlwm::notary
