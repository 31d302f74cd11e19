#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlwm/crypto.hpp"
#include "mtlwm/nn.hpp"
#include "mtlwm/wm_keys.hpp"

namespace mtlwm {

struct VerifyReport {
  std::uint32_t n = 0;
  std::uint32_t n_correct = 0;
  double accuracy = 0.0;
  double gamma = 0.0;
  std::uint32_t required = 0;  // ceil(gamma * n)
  bool passed = false;
  std::string key_fingerprint;
  std::string model_hash;
  std::vector<std::uint8_t> correct;  // per point

  bool consistent() const noexcept { return passed == (n_correct >= required); }
  Digest digest() const;
};

// Smallest integer count satisfying count >= gamma * n.
std::uint32_t required_correct(double gamma, std::uint32_t n);

// The watermark branch assembled from a published model's backbone and c_WM.
// Throws VerificationError when the head does not fit the backbone.
MultiTaskModel assemble_branch(const MultiTaskModel& model, const WatermarkHead& head);

// Bit-sign-vector encoder matching the model's input dimension.
DomainEncoder default_encoder(const MultiTaskModel& model, const WatermarkKey& key);

// Ownership test: pass iff the branch classifies at least ceil(gamma * N) of
// the key-derived points. The model is never modified.
VerifyReport verify(const MultiTaskModel& model, const WatermarkKey& key, const WatermarkHead& head,
                    double gamma);
VerifyReport verify(const MultiTaskModel& model, const WatermarkKey& key, const WatermarkHead& head,
                    const DomainEncoder& encoder, double gamma);
// Variant over an already materialised dataset.
VerifyReport verify_dataset(const MultiTaskModel& model, const WatermarkDataset& wm,
                            const WatermarkHead& head, double gamma);

// ((1 - p + p e^lambda) / e^(gamma lambda))^N, evaluated in log space.
double chernoff_bound(double p, double gamma, std::uint32_t n, double lambda);
double log_chernoff_bound(double p, double gamma, std::uint32_t n, double lambda);
// Closed-form minimiser ln(gamma (1 - p) / (p (1 - gamma))).
double optimize_lambda(double p, double gamma);

enum class NullMode { foreign_key, random_head };

struct CalibrationConfig {
  std::uint32_t trials = 200;  // K
  std::uint32_t n = 256;       // points per foreign dataset
  std::uint32_t m = 0;         // 0: default width for n
  std::uint64_t seed = 0;
  NullMode mode = NullMode::foreign_key;
  double target = 1e-6;
  double grid_step = 0.05;
};

struct GammaCalibration {
  std::vector<double> samples;
  double q50 = 0.0;
  double q95 = 0.0;
  double q999 = 0.0;
  double p_max = 0.0;
  std::optional<double> gamma;  // recommended threshold
  std::optional<double> lambda;
  std::optional<double> false_accept_bound;
  std::uint32_t n = 0;
  double target = 0.0;
};

struct GammaRecommendation {
  double gamma = 0.0;
  double lambda = 0.0;
  double bound = 0.0;
};

// Smallest gamma on the grid {step, 2 step, ...} <= 1 that exceeds p_max and
// whose optimised Chernoff bound is at most target.
std::optional<GammaRecommendation> recommend_gamma(double p_max, std::uint32_t n, double target,
                                                   double grid_step = 0.05);

// Linear-interpolated empirical quantile (type 7).
double quantile(std::vector<double> values, double q);

// Accuracy of the watermark branch on datasets derived from K fresh keys.
GammaCalibration calibrate_null(const MultiTaskModel& model, const WatermarkHead& head,
                                const CalibrationConfig& cfg);

}  // namespace mtlwm
