#include "mtlwm/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtlwm/errors.hpp"
#include "mtlwm/training.hpp"

namespace mtlwm {

Digest VerifyReport::digest() const {
  std::string text = std::to_string(n) + "|" + std::to_string(n_correct) + "|" +
                     f64_to_hex(gamma) + "|" + (passed ? "1" : "0") + "|" + key_fingerprint + "|" +
                     model_hash;
  return sha256(text);
}

std::uint32_t required_correct(double gamma, std::uint32_t n) {
  // The epsilon absorbs representation error such as 0.7 * 10 = 7.000000000000001.
  const double need = std::ceil(gamma * static_cast<double>(n) - 1e-9);
  return static_cast<std::uint32_t>(std::max(0.0, need));
}

MultiTaskModel assemble_branch(const MultiTaskModel& model, const WatermarkHead& head) {
  MultiTaskModel branch = model.published();
  branch.set_watermark_head(head);
  try {
    branch.validate();
  } catch (const Error& e) {
    throw VerificationError(std::string("watermark head does not fit the model: ") + e.what());
  }
  return branch;
}

DomainEncoder default_encoder(const MultiTaskModel& model, const WatermarkKey& key) {
  const int dim = model.input_dim();
  if (dim < static_cast<int>(key.m)) {
    throw VerificationError("model input dimension " + std::to_string(dim) +
                            " cannot encode m = " + std::to_string(key.m) + " bits");
  }
  return DomainEncoder::vector(static_cast<std::uint32_t>(dim), key.m);
}

VerifyReport verify_dataset(const MultiTaskModel& model, const WatermarkDataset& wm,
                            const WatermarkHead& head, double gamma) {
  if (!(gamma > 0.5 && gamma <= 1.0)) throw DomainError("verify: gamma must lie in (0.5, 1]");
  MultiTaskModel branch = assemble_branch(model, head);
  if (wm.inputs.rows() != branch.input_dim()) {
    throw VerificationError("watermark inputs do not match the model input dimension");
  }
  VerifyReport report;
  report.n = wm.n;
  report.gamma = gamma;
  report.required = required_correct(gamma, wm.n);
  report.key_fingerprint = to_hex(wm.key_fingerprint);
  report.model_hash = to_hex(model_hash(model.published()));
  report.correct.resize(wm.n);
  if (wm.n > 0) {
    auto pred = predict(forward(branch, wm.inputs, Head::watermark).logits());
    for (std::uint32_t i = 0; i < wm.n; ++i) {
      report.correct[i] = pred[i] == wm.points[i].label;
      report.n_correct += report.correct[i];
    }
    report.accuracy = static_cast<double>(report.n_correct) / wm.n;
  }
  report.passed = report.n_correct >= report.required;
  return report;
}

VerifyReport verify(const MultiTaskModel& model, const WatermarkKey& key, const WatermarkHead& head,
                    const DomainEncoder& encoder, double gamma) {
  if (encoder.input_dim() != static_cast<std::uint32_t>(model.input_dim())) {
    throw VerificationError("encoder output does not match the model input dimension");
  }
  return verify_dataset(model, build_wm_dataset(key, encoder), head, gamma);
}

VerifyReport verify(const MultiTaskModel& model, const WatermarkKey& key, const WatermarkHead& head,
                    double gamma) {
  return verify(model, key, head, default_encoder(model, key), gamma);
}

double log_chernoff_bound(double p, double gamma, std::uint32_t n, double lambda) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("chernoff_bound: p must lie in (0, 1)");
  if (!(gamma > p && gamma <= 1.0)) throw DomainError("chernoff_bound: gamma must lie in (p, 1]");
  if (!(lambda >= 0.0)) throw DomainError("chernoff_bound: lambda must be >= 0");
  if (std::isinf(lambda)) {
    // Limit of the bound as lambda grows: p^N when gamma = 1, unbounded otherwise.
    if (gamma == 1.0) return n * std::log(p);
    return std::numeric_limits<double>::infinity();
  }
  // log(1 - p + p e^lambda) - gamma lambda = log1p(p (e^lambda - 1)) - gamma lambda
  return static_cast<double>(n) * (std::log1p(p * std::expm1(lambda)) - gamma * lambda);
}

double chernoff_bound(double p, double gamma, std::uint32_t n, double lambda) {
  return std::exp(log_chernoff_bound(p, gamma, n, lambda));
}

double optimize_lambda(double p, double gamma) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("optimize_lambda: p must lie in (0, 1)");
  if (!(gamma > p && gamma <= 1.0)) throw DomainError("optimize_lambda: gamma must exceed p");
  if (gamma == 1.0) return std::numeric_limits<double>::infinity();
  return std::log(gamma * (1.0 - p) / (p * (1.0 - gamma)));
}

std::optional<GammaRecommendation> recommend_gamma(double p_max, std::uint32_t n, double target,
                                                   double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw ConfigError("grid step must lie in (0, 1]");
  if (!(p_max > 0.0 && p_max < 1.0)) throw DomainError("p_max must lie in (0, 1)");
  const int steps = static_cast<int>(std::floor(1.0 / grid_step + 1e-9));
  for (int i = 1; i <= steps; ++i) {
    // Round to the grid to avoid accumulating 0.05 increments.
    const double gamma = std::round(i * grid_step * 1e9) / 1e9;
    if (gamma <= p_max) continue;
    const double lambda = optimize_lambda(p_max, gamma);
    const double bound = chernoff_bound(p_max, gamma, n, lambda);
    if (bound <= target) return GammaRecommendation{gamma, lambda, bound};
  }
  return std::nullopt;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

GammaCalibration calibrate_null(const MultiTaskModel& model, const WatermarkHead& head,
                                const CalibrationConfig& cfg) {
  if (cfg.trials < 30) throw ConfigError("calibrate_null needs at least 30 trials");
  if (cfg.n == 0) throw ConfigError("calibrate_null needs n >= 1");
  const std::uint32_t m = cfg.m == 0 ? default_domain_bits(cfg.n) : cfg.m;

  GammaCalibration cal;
  cal.n = cfg.n;
  cal.target = cfg.target;
  cal.samples.reserve(cfg.trials);
  MultiTaskModel branch;
  if (cfg.mode == NullMode::foreign_key) {
    branch = assemble_branch(model, head);
  }
  for (std::uint32_t t = 0; t < cfg.trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(cfg.seed, t);
    if (cfg.mode == NullMode::random_head) {
      WatermarkHead fresh = head;
      std::vector<int> hidden;
      for (std::size_t l = 0; l + 1 < head.net.layers.size(); ++l) {
        hidden.push_back(head.net.layers[l].out_dim());
      }
      fresh.net = build_wm_head(model.backbone, head.taps, hidden, derive_seed(trial_seed, 7));
      branch = assemble_branch(model, fresh);
    }
    const std::string secret = "null-trial/" + std::to_string(cfg.seed) + "/" + std::to_string(t);
    WatermarkKey key = WatermarkKey::make(secret, cfg.n, m);
    auto wm = build_wm_dataset(key, default_encoder(branch, key));
    cal.samples.push_back(watermark_accuracy(branch, wm.inputs, wm.labels()));
  }
  cal.q50 = quantile(cal.samples, 0.5);
  cal.q95 = quantile(cal.samples, 0.95);
  cal.q999 = quantile(cal.samples, 0.999);
  cal.p_max = cal.q999;
  if (auto rec = recommend_gamma(std::clamp(cal.p_max, 1e-9, 1.0 - 1e-9), cfg.n, cfg.target,
                                 cfg.grid_step)) {
    cal.gamma = rec->gamma;
    cal.lambda = rec->lambda;
    cal.false_accept_bound = rec->bound;
  }
  return cal;
}

}  // namespace mtlwm
