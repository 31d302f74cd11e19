#include "mtlwm/notary/messages.hpp"

#include <algorithm>
#include <cstring>

#include "mtlwm/errors.hpp"

namespace mtlwm::notary {

CanonicalWriter::CanonicalWriter(MessageType type) {
  out_.push_back(kWireVersion);
  out_.push_back(static_cast<std::uint8_t>(type));
}

CanonicalWriter& CanonicalWriter::field(std::span<const std::uint8_t> bytes) {
  const auto len = static_cast<std::uint32_t>(bytes.size());
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out_.insert(out_.end(), bytes.begin(), bytes.end());
  return *this;
}

CanonicalWriter& CanonicalWriter::field(std::string_view text) {
  return field(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                             text.size()));
}

CanonicalWriter& CanonicalWriter::field_u64(std::uint64_t v) {
  std::array<std::uint8_t, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return field(b);
}

CanonicalWriter& CanonicalWriter::field_u32(std::uint32_t v) {
  std::array<std::uint8_t, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return field(b);
}

CanonicalReader::CanonicalReader(std::span<const std::uint8_t> bytes, MessageType expected)
    : data_(bytes) {
  if (data_.size() < 2) throw ParseError("message shorter than its header", data_.size());
  if (data_[0] != kWireVersion) throw ParseError("unsupported wire version", 0);
  if (data_[1] != static_cast<std::uint8_t>(expected)) throw ParseError("unexpected message type", 1);
  pos_ = 2;
}

Bytes CanonicalReader::field() {
  if (data_.size() - pos_ < 4) throw ParseError("truncated length prefix", pos_);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  if (data_.size() - pos_ < len) throw ParseError("truncated field", pos_);
  Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
            data_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
  pos_ += len;
  return out;
}

std::uint64_t CanonicalReader::field_u64() {
  auto b = field_fixed<8>();
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t CanonicalReader::field_u32() {
  auto b = field_fixed<4>();
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

NodeIdentity NodeIdentity::derive(int node_id, std::uint64_t seed) {
  const std::string label =
      "notary-node/" + std::to_string(seed) + "/" + std::to_string(node_id);
  Digest s = sha256(label);
  return {node_id, SigningKey::from_seed(s)};
}

Bytes encode_watermark_key(const WatermarkKey& key) {
  // n (u32 LE) || m (u32 LE) || secret
  Bytes out;
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(key.n >> (8 * i)));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(key.m >> (8 * i)));
  out.insert(out.end(), key.secret.begin(), key.secret.end());
  return out;
}

WatermarkKey decode_watermark_key(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw ParseError("watermark key descriptor too short", bytes.size());
  WatermarkKey key;
  for (int i = 0; i < 4; ++i) key.n |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  for (int i = 0; i < 4; ++i) key.m |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
  key.secret.assign(bytes.begin() + 8, bytes.end());
  key.validate();
  return key;
}

// --- Publish ---------------------------------------------------------------

PublishMsg PublishMsg::make(const WatermarkKey& key, std::uint64_t time, const Digest& cwm_hash,
                            const SigningKey& signer) {
  PublishMsg msg;
  msg.key = encode_watermark_key(key);
  msg.time = time;
  msg.cwm_hash = cwm_hash;
  msg.sender = signer.public_key;
  msg.signature = sign(msg.signing_bytes(), signer);
  return msg;
}

Bytes PublishMsg::signing_bytes() const {
  return CanonicalWriter(MessageType::publish)
      .field(key)
      .field_u64(time)
      .field(cwm_hash)
      .field(sender.bytes)
      .bytes();
}

Bytes PublishMsg::encode() const {
  Bytes out = signing_bytes();
  CanonicalWriter sig(MessageType::publish);
  sig.field(signature);
  out.insert(out.end(), sig.bytes().begin() + 2, sig.bytes().end());
  return out;
}

PublishMsg PublishMsg::decode(std::span<const std::uint8_t> bytes) {
  CanonicalReader r(bytes, MessageType::publish);
  PublishMsg msg;
  msg.key = r.field();
  msg.time = r.field_u64();
  msg.cwm_hash = r.field_fixed<32>();
  msg.sender.bytes = r.field_fixed<32>();
  msg.signature = r.field_fixed<64>();
  if (!r.done()) throw ParseError("trailing bytes after publish message", bytes.size());
  return msg;
}

bool PublishMsg::signature_valid() const {
  return verify_signature(signing_bytes(), signature, sender);
}

// --- Claim -----------------------------------------------------------------

ClaimMsg ClaimMsg::make(const Digest& model_ref, const Digest& model_hash, const Digest& cwm_ref,
                        const SigningKey& signer) {
  ClaimMsg msg{model_ref, model_hash, cwm_ref, signer.public_key, {}};
  msg.signature = sign(msg.signing_bytes(), signer);
  return msg;
}

Bytes ClaimMsg::signing_bytes() const {
  return CanonicalWriter(MessageType::claim)
      .field(model_ref)
      .field(model_hash)
      .field(cwm_ref)
      .field(sender.bytes)
      .bytes();
}

Bytes ClaimMsg::encode() const {
  Bytes out = signing_bytes();
  CanonicalWriter sig(MessageType::claim);
  sig.field(signature);
  out.insert(out.end(), sig.bytes().begin() + 2, sig.bytes().end());
  return out;
}

ClaimMsg ClaimMsg::decode(std::span<const std::uint8_t> bytes) {
  CanonicalReader r(bytes, MessageType::claim);
  ClaimMsg msg;
  msg.model_ref = r.field_fixed<32>();
  msg.model_hash = r.field_fixed<32>();
  msg.cwm_ref = r.field_fixed<32>();
  msg.sender.bytes = r.field_fixed<32>();
  msg.signature = r.field_fixed<64>();
  if (!r.done()) throw ParseError("trailing bytes after claim message", bytes.size());
  return msg;
}

bool ClaimMsg::signature_valid() const {
  return verify_signature(signing_bytes(), signature, sender);
}

// --- Attestation -----------------------------------------------------------

Bytes Attestation::signing_bytes() const {
  CanonicalWriter w(MessageType::attestation);
  w.field(claim_digest).field_u32(verifier);
  const std::uint8_t flag = outcome ? 1 : 0;
  w.field(std::span<const std::uint8_t>(&flag, 1)).field(reason).field(report_digest);
  const std::uint8_t has_match = matched_publish ? 1 : 0;
  w.field(std::span<const std::uint8_t>(&has_match, 1))
      .field_u64(matched_publish ? matched_publish->term : 0)
      .field_u64(matched_publish ? matched_publish->index : 0)
      .field(model_hash)
      .field(publisher.bytes)
      .field(verifier_key.bytes);
  return w.bytes();
}

Bytes Attestation::encode() const {
  Bytes out = signing_bytes();
  CanonicalWriter sig(MessageType::attestation);
  sig.field(signature);
  out.insert(out.end(), sig.bytes().begin() + 2, sig.bytes().end());
  return out;
}

Attestation Attestation::decode(std::span<const std::uint8_t> bytes) {
  CanonicalReader r(bytes, MessageType::attestation);
  Attestation a;
  a.claim_digest = r.field_fixed<32>();
  a.verifier = r.field_u32();
  a.outcome = r.field_fixed<1>()[0] != 0;
  Bytes reason = r.field();
  a.reason.assign(reason.begin(), reason.end());
  a.report_digest = r.field_fixed<32>();
  const bool has_match = r.field_fixed<1>()[0] != 0;
  EntryPosition pos{r.field_u64(), r.field_u64()};
  if (has_match) a.matched_publish = pos;
  a.model_hash = r.field_fixed<32>();
  a.publisher.bytes = r.field_fixed<32>();
  a.verifier_key.bytes = r.field_fixed<32>();
  a.signature = r.field_fixed<64>();
  if (!r.done()) throw ParseError("trailing bytes after attestation", bytes.size());
  return a;
}

bool Attestation::signature_valid() const {
  return verify_signature(signing_bytes(), signature, verifier_key);
}

// --- Payloads --------------------------------------------------------------

Bytes encode_payload(const Payload& payload) {
  return std::visit(
      [](const auto& p) -> Bytes {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NoOp>) {
          return CanonicalWriter(MessageType::noop).field_u64(p.term).bytes();
        } else {
          return p.encode();
        }
      },
      payload);
}

Digest payload_digest(const Payload& payload) { return sha256(encode_payload(payload)); }

std::string_view payload_type(const Payload& payload) {
  switch (payload.index()) {
    case 0: return "publish";
    case 1: return "claim";
    case 2: return "attestation";
    default: return "noop";
  }
}

// --- Blob store ------------------------------------------------------------

Digest BlobStore::put(Bytes bytes) {
  Digest address = sha256(bytes);
  blobs_.emplace(address, std::move(bytes));
  return address;
}

const Bytes& BlobStore::get(const Digest& address) const {
  auto it = blobs_.find(address);
  if (it == blobs_.end()) throw NotFoundError("no blob at address " + to_hex(address));
  return it->second;
}

// --- Claim handling --------------------------------------------------------

Attestation handle_claim(const ClaimMsg& claim, const ClaimContext& ctx,
                         const NodeIdentity& verifier) {
  Attestation att;
  att.claim_digest = claim.digest();
  att.verifier = static_cast<std::uint32_t>(verifier.node_id);
  att.verifier_key = verifier.public_key();
  att.model_hash = claim.model_hash;

  auto finish = [&](bool ok, std::string reason) {
    att.outcome = ok;
    att.reason = std::move(reason);
    att.signature = sign(att.signing_bytes(), verifier.key);
    return att;
  };

  if (!claim.signature_valid()) return finish(false, "bad-signature");
  if (!ctx.store || !ctx.store->contains(claim.model_ref) || !ctx.store->contains(claim.cwm_ref)) {
    return finish(false, "missing-blob");
  }
  const Bytes& model_bytes = ctx.store->get(claim.model_ref);
  if (sha256(model_bytes) != claim.model_hash) return finish(false, "tampered-model");
  MultiTaskModel model;
  try {
    model = deserialize_model(std::string_view(reinterpret_cast<const char*>(model_bytes.data()),
                                               model_bytes.size()));
  } catch (const Error&) {
    return finish(false, "tampered-model");
  }

  const Bytes& cwm_bytes = ctx.store->get(claim.cwm_ref);
  const Digest cwm_hash = sha256(cwm_bytes);
  const LedgerEntry* match = nullptr;
  for (const auto& entry : ctx.committed) {
    const auto* pub = std::get_if<PublishMsg>(&entry.payload);
    if (pub && pub->cwm_hash == cwm_hash && pub->sender == claim.sender && pub->signature_valid()) {
      match = &entry;
      break;
    }
  }
  if (!match) return finish(false, "unregistered-watermark");
  const auto& publish = std::get<PublishMsg>(match->payload);
  att.matched_publish = EntryPosition{match->term, match->index};
  att.publisher = publish.sender;

  try {
    WatermarkHead head = deserialize_head(
        std::string_view(reinterpret_cast<const char*>(cwm_bytes.data()), cwm_bytes.size()));
    VerifyReport report = verify(model, publish.watermark_key(), head, ctx.gamma);
    att.report_digest = report.digest();
    return finish(report.passed, report.passed ? "ok" : "test-failed");
  } catch (const Error&) {
    return finish(false, "structural-mismatch");
  }
}

std::optional<std::size_t> resolve_redeclaration(std::span<const Contender> contenders) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < contenders.size(); ++i) {
    const auto& c = contenders[i];
    if (!c.verified) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = contenders[*best];
    if (c.publish.time < b.publish.time ||
        (c.publish.time == b.publish.time && c.publish.sender.bytes < b.publish.sender.bytes)) {
      best = i;
    }
  }
  return best;
}

}  // namespace mtlwm::notary
