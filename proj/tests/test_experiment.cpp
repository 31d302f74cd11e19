#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "mtlwm/errors.hpp"
#include "mtlwm/experiment.hpp"
#include "mtlwm/report.hpp"

using namespace mtlwm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mtlwm_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST(Config, DefaultsInheritTheGlobalSeed) {
  const auto cfg = config_from_json(json{{"seed", 17}, {"dataset", {{"classes", 3}}}});
  EXPECT_EQ(cfg.train.seed, 17u);
  EXPECT_EQ(cfg.dataset.split.seed, 17u);
  EXPECT_EQ(cfg.notary.seed, 17u);
  EXPECT_EQ(cfg.model.num_classes, 3);
}

TEST(Config, RoundTrip) {
  auto cfg = fixtures::small_config(9);
  AttackConfig np;
  np.kind = AttackKind::np;
  np.rho_grid = {0.0, 0.5};
  cfg.attacks.push_back(np);
  const json doc = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(doc)), doc);
}

TEST(Config, Overrides) {
  json doc = config_to_json(ExperimentConfig{});
  apply_override(doc, "train.epochs_wm=7");
  apply_override(doc, "key.secret=someone");
  apply_override(doc, "model.taps=[0,2]");
  const auto cfg = config_from_json(doc);
  EXPECT_EQ(cfg.train.epochs_wm, 7);
  EXPECT_EQ(cfg.key.secret, "someone");
  EXPECT_EQ(cfg.model.taps, (std::vector<int>{0, 2}));
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "seed.inner=1"), ConfigError);
}

TEST(Config, ValidationErrors) {
  auto bad = [](const std::string& assignment) {
    json doc = config_to_json(ExperimentConfig{});
    apply_override(doc, assignment);
    return config_from_json(doc);
  };
  auto check = [&](const std::string& a) {
    EXPECT_THROW(bad(a).validate(), ConfigError) << a;
  };
  check("dataset.kind=parquet");
  check("dataset.classes=1");
  check("model.taps=[5]");
  check("model.input_dim=8");
  check("key.encoder=spiral");
  check("dataset.split.train=0.9");
  check("train.batch_size=0");
}

TEST(Config, LoadFromFile) {
  const auto dir = scratch("load");
  write_json(dir / "cfg.json", json{{"seed", 3}, {"key", {{"n", 32}}}});
  const auto cfg = load_config((dir / "cfg.json").string(), {"key.n=48"});
  EXPECT_EQ(cfg.key.n, 48u);
  EXPECT_THROW(load_config((dir / "absent.json").string()), ConfigError);
  write_text(dir / "broken.json", "{\"seed\":");
  EXPECT_THROW(load_config((dir / "broken.json").string()), ConfigError);
}

TEST(Config, KeyJson) {
  const auto key = WatermarkKey::make("owner", 64, 20);
  const auto back = key_from_json(key_to_json(key));
  EXPECT_EQ(back.secret, key.secret);
  EXPECT_EQ(back.n, 64u);
  EXPECT_EQ(back.m, 20u);
  EXPECT_EQ(key_from_json(json{{"secret", "owner"}, {"n", 64}, {"m", 20}}).secret, key.secret);
}

TEST(Report, HistogramCountsEverySample) {
  std::vector<double> samples;
  for (int i = 0; i <= 100; ++i) samples.push_back(i / 100.0);
  const auto csv = histogram_csv(samples, 20);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "bin_low,bin_high,count");
  long total = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    total += std::stol(line.substr(line.rfind(',') + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 20);
  EXPECT_EQ(total, 101);
}

TEST(Report, SweepAndFluctuationColumns) {
  AttackReport r;
  r.sweep = {{0.0, 0.9, 1.0}, {0.5, 0.8, 0.6}};
  EXPECT_EQ(line_count(np_sweep_csv(r)), 3u);
  EXPECT_EQ(np_sweep_csv(r).substr(0, np_sweep_csv(r).find('\n')), "rho,primary_accuracy,wm_accuracy");
  r.overwrite_epochs = {0, 10};
  r.original_wm_series = {1.0, 0.98};
  r.adversary_wm_series = {0.5, 1.0};
  const auto fl = fluctuation_csv(r);
  EXPECT_EQ(fl.substr(0, fl.find('\n')), "epoch,original_wm_accuracy,adversary_wm_accuracy");
  EXPECT_EQ(line_count(fl), 3u);
}

TEST(Report, ConsolidateEmptyDirectory) {
  EXPECT_EQ(consolidate_run(scratch("empty")), json::object());
  EXPECT_EQ(consolidate_run(fs::temp_directory_path() / "mtlwm_no_such_run"), json::object());
}

TEST(Pipeline, DeterministicPerSeed) {
  auto cfg = fixtures::small_config(21);
  cfg.train.epochs_primary = 5;
  cfg.train.epochs_wm = 5;
  const auto data = prepare_data(cfg);
  const auto a = train_pipeline(cfg, data);
  const auto b = train_pipeline(cfg, prepare_data(cfg));
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  EXPECT_EQ(data.split.train.dim(), cfg.model.input_dim);
}

TEST(Pipeline, AblationProducesFourVariants) {
  auto cfg = fixtures::small_config(22);
  cfg.train.epochs_primary = 5;
  cfg.train.epochs_wm = 3;
  const auto data = prepare_data(cfg);
  const auto clean = train_clean(cfg, data);
  const auto runs = run_ablation(cfg, data, clean);
  ASSERT_EQ(runs.size(), 4u);
  std::vector<std::string> names;
  for (const auto& r : runs) names.push_back(r.name);
  EXPECT_EQ(names, (std::vector<std::string>{"none", "r_func", "r_da", "both"}));
  EXPECT_EQ(runs[0].train.lambda_func, 0.0);
  EXPECT_EQ(runs[0].train.lambda_da, 0.0);
  EXPECT_GT(runs[3].train.lambda_func, 0.0);
  EXPECT_GT(runs[3].train.lambda_da, 0.0);
}
