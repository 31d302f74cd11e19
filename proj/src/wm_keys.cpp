#include "mtlwm/wm_keys.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mtlwm/errors.hpp"

namespace mtlwm {

WatermarkKey WatermarkKey::make(std::string_view secret, std::uint32_t n, std::uint32_t m) {
  WatermarkKey key{to_bytes(secret), n, m == 0 ? default_domain_bits(n) : m};
  key.validate();
  return key;
}

void WatermarkKey::validate(bool allow_empty) const {
  if (n == 0 && !allow_empty) throw ConfigError("watermark key: n must be >= 1");
  if (m < 1 || m > 32) throw ConfigError("watermark key: m must lie in [1, 32]");
  if (static_cast<std::uint64_t>(n) > (std::uint64_t{1} << (m - 1))) {
    throw ConfigError("watermark key: n = " + std::to_string(n) + " exceeds 2^(m-1) for m = " +
                      std::to_string(m));
  }
}

std::uint32_t default_domain_bits(std::uint32_t n) {
  std::uint32_t ceil_log2 = 0;
  while ((std::uint64_t{1} << ceil_log2) < n) ++ceil_log2;
  return std::max<std::uint32_t>(1, 3 * ceil_log2);
}

DerivedIndices derive_indices_detailed(const WatermarkKey& key) {
  key.validate(/*allow_empty=*/true);
  KeystreamReader stream(key.secret);
  const std::uint32_t mask =
      key.m == 32 ? 0xffffffffu : static_cast<std::uint32_t>((std::uint64_t{1} << key.m) - 1);
  DerivedIndices out;
  out.indices.reserve(key.n);
  std::unordered_set<std::uint32_t> seen;
  seen.reserve(key.n * 2);
  while (out.indices.size() < key.n) {
    std::uint32_t v = stream.next_u32_le() & mask;
    ++out.words_consumed;
    if (seen.insert(v).second) out.indices.push_back(v);
  }
  return out;
}

std::vector<std::uint32_t> derive_indices(const WatermarkKey& key) {
  return derive_indices_detailed(key).indices;
}

KeystreamLayout keystream_layout(const WatermarkKey& key) {
  auto derived = derive_indices_detailed(key);
  KeystreamLayout layout;
  layout.index_offset = 0;
  layout.index_bytes = 4 * derived.words_consumed;
  layout.label_offset = layout.index_bytes;
  layout.label_bytes = key.n;
  return layout;
}

namespace {

std::vector<std::uint8_t> labels_after(const WatermarkKey& key, std::uint64_t skip) {
  KeystreamReader stream(key.secret);
  for (std::uint64_t i = 0; i < skip; ++i) stream.next_byte();
  std::vector<std::uint8_t> labels(key.n);
  for (auto& bit : labels) bit = stream.next_byte() & 1u;
  return labels;
}

}  // namespace

std::vector<std::uint8_t> derive_labels(const WatermarkKey& key) {
  return labels_after(key, keystream_layout(key).label_offset);
}

DomainEncoder DomainEncoder::vector(std::uint32_t dim, std::uint32_t m) {
  DomainEncoder enc{EncoderKind::bit_sign_vector, 1, dim, m};
  enc.validate();
  return enc;
}

DomainEncoder DomainEncoder::grid(std::uint32_t height, std::uint32_t width, std::uint32_t m) {
  DomainEncoder enc{EncoderKind::bit_grid, height, width, m};
  enc.validate();
  return enc;
}

void DomainEncoder::validate() const {
  if (m < 1 || m > 32) throw ConfigError("encoder: m must lie in [1, 32]");
  if (kind == EncoderKind::bit_sign_vector && rows != 1) {
    throw ConfigError("encoder: bit-sign-vector has a single row");
  }
  if (static_cast<std::uint64_t>(rows) * cols < m) {
    throw ConfigError("encoder: input space of " + std::to_string(rows * cols) +
                      " cells cannot hold " + std::to_string(m) + " bits");
  }
}

Eigen::VectorXd encode_integer(std::uint64_t n, const DomainEncoder& enc) {
  enc.validate();
  if (n >= (std::uint64_t{1} << enc.m)) {
    throw DomainError("encode_integer: " + std::to_string(n) + " is outside [0, 2^" +
                      std::to_string(enc.m) + ")");
  }
  // Row-major grid flattening puts bit i at cell i, identical to the vector layout.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(enc.input_dim());
  for (std::uint32_t i = 0; i < enc.m; ++i) x[i] = ((n >> i) & 1u) ? 1.0 : -1.0;
  return x;
}

std::vector<int> WatermarkDataset::labels() const {
  std::vector<int> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = points[i].label;
  return out;
}

std::string WatermarkDataset::to_canonical_json() const {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["n"] = n;
  doc["m"] = m;
  auto pts = nlohmann::ordered_json::array();
  for (const auto& p : points) pts.push_back({p.index, p.label});
  doc["points"] = std::move(pts);
  return doc.dump();
}

WatermarkDataset build_wm_dataset(const WatermarkKey& key, const DomainEncoder& enc) {
  key.validate(/*allow_empty=*/true);
  enc.validate();
  if (enc.m != key.m) {
    throw ConfigError("build_wm_dataset: encoder consumes " + std::to_string(enc.m) +
                      " bits but key uses m = " + std::to_string(key.m));
  }
  auto derived = derive_indices_detailed(key);
  auto labels = labels_after(key, 4 * derived.words_consumed);

  WatermarkDataset ds;
  ds.n = key.n;
  ds.m = key.m;
  ds.key_fingerprint = sha256(key.secret);
  ds.points.resize(key.n);
  ds.inputs.resize(enc.input_dim(), key.n);
  for (std::uint32_t i = 0; i < key.n; ++i) {
    ds.points[i] = {derived.indices[i], labels[i]};
    ds.inputs.col(i) = encode_integer(derived.indices[i], enc);
  }
  return ds;
}

DomainBits min_domain_bits(std::uint32_t n, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("min_domain_bits: tau must lie in (0, 1)");
  if (n == 0) throw DomainError("min_domain_bits: n must be >= 1");
  const double nd = n;
  const double arg = 2.0 * nd * (2.0 + (1.0 - tau) * nd);
  DomainBits bits;
  bits.minimum = static_cast<std::uint32_t>(std::ceil(std::log2(arg) - 1e-12));
  bits.default_bits = default_domain_bits(n);
  bits.default_sufficient = bits.default_bits >= bits.minimum;
  return bits;
}

double collision_bound(std::uint32_t n, std::uint32_t m, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("collision_bound: q must lie in [0, 1]");
  const double qn = q * n;
  const double k = std::round(qn);
  if (std::abs(qn - k) > 1e-9) throw DomainError("collision_bound: q * N must be an integer");
  const double nd = n;
  const double r = nd / std::ldexp(1.0, static_cast<int>(m) + 1);
  if (r >= 1.0) return 1.0;
  const double log_binom = std::lgamma(nd + 1) - std::lgamma(k + 1) - std::lgamma(nd - k + 1);
  const double log_r = k > 0 ? k * std::log(r) : 0.0;
  const double log_bound = log_binom + log_r + (nd - k) * std::log1p(-r);
  return std::min(1.0, std::exp(log_bound));
}

std::size_t matched_pairs(const WatermarkDataset& a, const WatermarkDataset& b) {
  std::unordered_map<std::uint32_t, std::uint8_t> lookup;
  lookup.reserve(a.points.size() * 2);
  for (const auto& p : a.points) lookup.emplace(p.index, p.label);
  std::size_t count = 0;
  for (const auto& p : b.points) {
    auto it = lookup.find(p.index);
    if (it != lookup.end() && it->second == p.label) ++count;
  }
  return count;
}

}  // namespace mtlwm
