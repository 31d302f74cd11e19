#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlwm/attacks.hpp"
#include "mtlwm/datasets.hpp"
#include "mtlwm/nn.hpp"
#include "mtlwm/notary/simulator.hpp"
#include "mtlwm/training.hpp"
#include "mtlwm/verification.hpp"
#include "mtlwm/wm_keys.hpp"

namespace mtlwm {

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | csv
  std::string path;            // csv only
  int classes = 4;
  int dim = 16;
  int n_per_class = 250;
  double spread = 0.15;
  SplitSpec split;
};

struct KeyConfig {
  std::string secret = "owner-key";
  std::uint32_t n = 256;
  std::uint32_t m = 0;            // 0: default width
  std::string encoder = "vector";  // vector | grid
  std::uint32_t grid_height = 0;   // grid only; width = input_dim / height
};

struct VerificationConfig {
  double gamma = 0.7;
  double target = 1e-6;  // acceptable false-accept probability
  std::uint32_t trials = 200;
  std::uint32_t calibration_n = 256;
  NullMode null_mode = NullMode::foreign_key;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  DatasetConfig dataset;
  ModelSpec model;
  KeyConfig key;
  TrainConfig train;
  std::vector<AttackConfig> attacks;
  VerificationConfig verification;
  notary::SimConfig notary;

  // Cross-field consistency; throws ConfigError.
  void validate() const;
  WatermarkKey watermark_key() const;
  DomainEncoder encoder() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// "a.b.c=value"; the value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Reads a JSON document, applies overrides, parses and validates.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});
nlohmann::json attack_config_to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& doc, std::uint64_t default_seed = 0);

nlohmann::json to_json(const TrainReport& report);
nlohmann::json to_json(const VerifyReport& report);
nlohmann::json to_json(const AttackReport& report);
nlohmann::json to_json(const GammaCalibration& cal);

nlohmann::json key_to_json(const WatermarkKey& key);
WatermarkKey key_from_json(const nlohmann::json& doc);

struct PreparedData {
  Split split;  // zero-padded to the model input dimension
  WatermarkKey key;
  DomainEncoder encoder;
  WatermarkDataset wm;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct TrainedModel {
  MultiTaskModel clean;  // after primary training; fresh watermark head
  MultiTaskModel model;  // watermarked, head attached
  CleanAnchor anchor;
  TrainReport primary_report;
  TrainReport embed_report;
  double clean_test_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wm_accuracy = 0.0;
};

TrainedModel train_clean(const ExperimentConfig& cfg, const PreparedData& data);
// Embeds into a copy of trained.clean with the given training configuration.
TrainedModel embed_variant(const TrainedModel& clean, const PreparedData& data, const TrainConfig& train);
TrainedModel train_pipeline(const ExperimentConfig& cfg, const PreparedData& data);

struct AblationRun {
  std::string name;  // none | r_func | r_da | both
  TrainConfig train;
  TrainedModel result;
};

// The four regularizer configurations, all starting from the same clean model.
std::vector<AblationRun> run_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                      const TrainedModel& clean);

std::vector<AttackReport> run_attacks(const ExperimentConfig& cfg, const PreparedData& data,
                                      const MultiTaskModel& model);

GammaCalibration run_calibration(const ExperimentConfig& cfg, const MultiTaskModel& model);

// Host trains and publishes, an adversary steals the published model,
// overwrites it with its own key and publishes later, then both claim the
// stolen model and the notary resolves the redeclaration.
struct OwnershipStory {
  TrainedModel host;
  OverwriteResult adversary;
  notary::Scenario scenario;
  notary::SimResult sim;
  VerifyReport host_on_stolen;
  VerifyReport adversary_on_stolen;
  bool host_publish_committed = false;
  bool adversary_publish_committed = false;
  std::optional<std::string> winner;  // scenario label of the winning publisher
};

struct StoryTimeline {
  std::uint64_t host_publish = 1000;
  std::uint64_t adversary_publish = 3000;
  std::uint64_t claims = 5000;
};

OwnershipStory run_ownership_story(const ExperimentConfig& cfg, const PreparedData& data,
                                   const StoryTimeline& timeline = {});

}  // namespace mtlwm
