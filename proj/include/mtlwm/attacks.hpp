#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlwm/datasets.hpp"
#include "mtlwm/nn.hpp"
#include "mtlwm/training.hpp"
#include "mtlwm/wm_keys.hpp"

namespace mtlwm {

enum class AttackKind { ft, ftll, rtll, np, fp, overwrite, forge };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

// Architecture of a watermark head an adversary can instantiate (the
// template is public, the trained weights are not).
struct HeadTemplate {
  std::vector<int> taps{0, 1, 2};
  std::vector<int> hidden{64};
};

enum class ForgeMethod { logistic, direct };

struct AttackConfig {
  AttackKind kind = AttackKind::ft;
  double lr = 0.005;
  int epochs = 20;
  int batch_size = 32;
  double rho = 0.2;
  std::vector<double> rho_grid;
  double subset_fraction = 0.25;  // share of the adversary pool used by ft/ftll/rtll/fp
  // overwrite / forge
  std::string adversary_secret = "adversary-key";
  std::uint32_t adversary_n = 256;
  std::uint32_t adversary_m = 0;
  std::vector<int> overwrite_epochs{10, 30, 50};
  TrainConfig overwrite_train;
  HeadTemplate head_template;
  ForgeMethod forge_method = ForgeMethod::logistic;
  int forge_max_iterations = 20000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SweepRow {
  double rho = 0.0;
  double primary_accuracy = 0.0;
  double wm_accuracy = 0.0;
};

struct AttackReport {
  std::string kind;
  double primary_before = 0.0;
  double primary_after = 0.0;
  double wm_before = 0.0;
  double wm_after = 0.0;
  // Pruning sweep and break point.
  std::vector<SweepRow> sweep;
  std::optional<double> break_rho;
  std::optional<double> decline_at_break;
  // Overwriting.
  std::optional<double> adversary_wm_accuracy;
  std::vector<int> overwrite_epochs;
  std::vector<double> original_wm_series;
  std::vector<double> adversary_wm_series;
  double fluctuation = 0.0;
  // Forging.
  std::optional<double> forged_accuracy;
  std::optional<bool> forge_separated;
  std::optional<int> forge_iterations;
};

// ft: backbone + c_p; ftll: c_p only; rtll: reinitialised c_p, then c_p only.
// The watermark head is never touched.
MultiTaskModel fine_tune(const MultiTaskModel& model, const LabeledDataset& adversary,
                         const AttackConfig& cfg);

struct PrunedModel {
  MultiTaskModel model;
  PruneMask mask;
};

PrunedModel neuron_prune(const MultiTaskModel& model, double rho);

// Prune by magnitude, then fine-tune all primary layers with the mask
// re-applied after every step.
PrunedModel fine_prune(const MultiTaskModel& model, const LabeledDataset& adversary,
                       const AttackConfig& cfg);

// Sweep an ascending rho grid; the break point is the first rho where the
// watermark accuracy falls below gamma.
AttackReport prune_to_break(const MultiTaskModel& model, const WatermarkDataset& wm,
                            const LabeledDataset& test, double gamma, std::vector<double> grid);

struct OverwriteResult {
  MultiTaskModel model;  // published model after overwriting (no watermark head)
  WatermarkHead adversary_head;
  WatermarkKey adversary_key;
  AttackReport report;
};

// The adversary embeds its own watermark into a stolen model with the same
// embedding procedure, anchored at the stolen weights. When host_head and
// host_wm are given, the original branch is tracked after every epoch.
OverwriteResult overwrite(const MultiTaskModel& stolen, const LabeledDataset& adversary,
                          const AttackConfig& cfg, const WatermarkHead* host_head = nullptr,
                          const WatermarkDataset* host_wm = nullptr);

struct ForgeResult {
  WatermarkHead head;
  WatermarkKey key;
  bool separated = false;
  double accuracy = 0.0;
  int iterations = 0;
};

// Fit a linear head on frozen tapped features so that it classifies every
// point of the adversary's dataset; the model itself is left unchanged.
ForgeResult forge(const MultiTaskModel& model, const AttackConfig& cfg);

struct EvalContext {
  const LabeledDataset* test = nullptr;
  const WatermarkDataset* wm = nullptr;
  double gamma = 0.7;
};

// Runs cfg.kind against a host model (watermark head attached for evaluation
// only) and measures primary and watermark accuracy before and after.
AttackReport run_attack(const MultiTaskModel& host, const LabeledDataset& adversary,
                        const EvalContext& eval, const AttackConfig& cfg);

}  // namespace mtlwm
