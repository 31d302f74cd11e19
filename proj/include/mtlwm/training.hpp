#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtlwm/crypto.hpp"
#include "mtlwm/datasets.hpp"
#include "mtlwm/nn.hpp"
#include "mtlwm/wm_keys.hpp"

namespace mtlwm {

// lambda_func at or above this value freezes the backbone and the primary
// head; only c_WM is trained.
inline constexpr double kFreezeSentinel = 1e6;

struct TrainConfig {
  double weight_decay = 1e-4;  // lambda_0, L2 prior on w during primary training
  double lambda_func = 0.1;    // lambda_1, weight of ||w - w0||^2
  double lambda_da = 1.0;      // lambda_2, weight of the tuning-simulation loss
  double lr_primary = 0.05;
  double lr_wm = 0.05;
  int epochs_primary = 50;
  int epochs_wm = 100;
  int batch_size = 32;
  // Tuning simulation used by the R_DA term.
  int tuning_samples = 2;  // E
  int tuning_steps = 5;    // k
  double lr_inner = 0.05;
  double subset_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  bool frozen_backbone() const noexcept { return lambda_func >= kFreezeSentinel; }
};

// Clean solution w0 (backbone and primary head) that R_func pulls toward.
struct CleanAnchor {
  Network backbone;
  Network primary_head;

  static CleanAnchor of(const MultiTaskModel& model);
  Digest fingerprint() const;
};

struct TrainReport {
  std::vector<double> primary_loss;
  std::vector<double> wm_loss;
  std::vector<double> r_func;
  std::vector<double> r_da;
  std::vector<double> total_loss;
  double primary_accuracy = 0.0;
  double wm_accuracy = 0.0;
  std::string anchor_fingerprint;
  double displacement = 0.0;  // ||w - w0||_2 over backbone and primary head
  std::optional<double> max_output_deviation;
};

struct PrimaryTraining {
  TrainReport report;
  CleanAnchor anchor;
};

// Mini-batch SGD on mean cross-entropy plus lambda_0 weight decay over the
// backbone and primary head. c_WM is left untouched.
PrimaryTraining train_primary(MultiTaskModel& model, const LabeledDataset& data,
                              const TrainConfig& cfg);

// ||w - w0||^2 over backbone and primary head.
double r_func(const MultiTaskModel& model, const CleanAnchor& anchor);
// Gradient 2 (w - w0); wm_head entries are zero.
ModelGrads r_func_grad(const MultiTaskModel& model, const CleanAnchor& anchor);

// k mini-batch SGD steps of the primary objective on a seeded subset of the
// data, starting from the model's current parameters. The input is not modified.
MultiTaskModel simulate_tuning(const MultiTaskModel& model, const LabeledDataset& data,
                               const TrainConfig& cfg, std::uint64_t seed);

struct TuningLoss {
  double value = 0.0;
  ModelGrads grads;  // first-order: watermark-loss gradient evaluated at w^t
};

// Mean watermark cross-entropy over one simulated tuning per seed.
TuningLoss r_da(const MultiTaskModel& model, const LabeledDataset& primary,
                const Eigen::MatrixXd& wm_inputs, std::span<const int> wm_labels,
                const TrainConfig& cfg, std::span<const std::uint64_t> inner_seeds);

using EpochCallback = std::function<void(int epoch, const MultiTaskModel& model)>;

// Minimises mean watermark cross-entropy + lambda_1 R_func + lambda_2 R_DA.
// Throws StateError when no clean anchor is supplied.
TrainReport embed_watermark(MultiTaskModel& model, const std::optional<CleanAnchor>& anchor,
                            const LabeledDataset& primary, const WatermarkDataset& wm,
                            const TrainConfig& cfg, const EpochCallback& on_epoch = {});

double primary_accuracy(const MultiTaskModel& model, const LabeledDataset& data);
double watermark_accuracy(const MultiTaskModel& model, const Eigen::MatrixXd& inputs,
                          std::span<const int> labels);
// Largest absolute logit difference between two models' primary heads.
double max_output_deviation(const MultiTaskModel& a, const MultiTaskModel& b,
                            const LabeledDataset& data);

}  // namespace mtlwm
