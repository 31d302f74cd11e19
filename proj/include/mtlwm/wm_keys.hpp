#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mtlwm/crypto.hpp"

namespace mtlwm {

// Secret seed plus the size parameters of the derived watermark dataset.
// Invariants: 1 <= n, 1 <= m <= 32, n <= 2^(m-1).
struct WatermarkKey {
  Bytes secret;
  std::uint32_t n = 0;
  std::uint32_t m = 0;

  // m defaults to default_domain_bits(n) when zero.
  static WatermarkKey make(std::string_view secret, std::uint32_t n, std::uint32_t m = 0);

  // Throws ConfigError on violated invariants. allow_empty admits n == 0.
  void validate(bool allow_empty = false) const;
};

// 3 * ceil(log2 n), at least 1.
std::uint32_t default_domain_bits(std::uint32_t n);

struct WatermarkPoint {
  std::uint32_t index = 0;
  std::uint8_t label = 0;
  bool operator==(const WatermarkPoint&) const = default;
};

// Where each segment of the keystream starts and how long it is, in bytes.
struct KeystreamLayout {
  std::uint64_t index_offset = 0;
  std::uint64_t index_bytes = 0;  // 4 * (words read, rejected duplicates included)
  std::uint64_t label_offset = 0;
  std::uint64_t label_bytes = 0;
};

struct DerivedIndices {
  std::vector<std::uint32_t> indices;
  std::uint64_t words_consumed = 0;
};

DerivedIndices derive_indices_detailed(const WatermarkKey& key);
std::vector<std::uint32_t> derive_indices(const WatermarkKey& key);
std::vector<std::uint8_t> derive_labels(const WatermarkKey& key);
KeystreamLayout keystream_layout(const WatermarkKey& key);

enum class EncoderKind { bit_sign_vector, bit_grid };

// Injective map from [0, 2^m) into model input space. Bit i of the integer
// (LSB = bit 0) becomes coordinate i as +1/-1; trailing coordinates are 0.
// The grid variant lays the same values out row-major and flattens.
struct DomainEncoder {
  EncoderKind kind = EncoderKind::bit_sign_vector;
  std::uint32_t rows = 1;  // grid height (1 for vectors)
  std::uint32_t cols = 0;  // vector length or grid width
  std::uint32_t m = 0;

  static DomainEncoder vector(std::uint32_t dim, std::uint32_t m);
  static DomainEncoder grid(std::uint32_t height, std::uint32_t width, std::uint32_t m);

  std::uint32_t input_dim() const noexcept { return rows * cols; }
  void validate() const;
};

Eigen::VectorXd encode_integer(std::uint64_t n, const DomainEncoder& enc);

struct WatermarkDataset {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::vector<WatermarkPoint> points;
  Digest key_fingerprint{};
  // Encoded inputs, one column per point.
  Eigen::MatrixXd inputs;

  std::vector<int> labels() const;
  // {"version":1,"n":N,"m":m,"points":[[index,label],...]} with no whitespace.
  std::string to_canonical_json() const;
};

WatermarkDataset build_wm_dataset(const WatermarkKey& key, const DomainEncoder& enc);

struct DomainBits {
  std::uint32_t minimum = 0;
  std::uint32_t default_bits = 0;
  bool default_sufficient = false;
};

// ceil(log2(2N(2 + (1 - tau)N))) together with the default width for N.
DomainBits min_domain_bits(std::uint32_t n, double tau);

// min(1, C(N,k) r^k (1-r)^(N-k)) with r = N / 2^(m+1) and k = qN.
double collision_bound(std::uint32_t n, std::uint32_t m, double q);

// Number of (index, label) pairs shared by two datasets.
std::size_t matched_pairs(const WatermarkDataset& a, const WatermarkDataset& b);

}  // namespace mtlwm
