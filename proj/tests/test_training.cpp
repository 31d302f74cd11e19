#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mtlwm/errors.hpp"
#include "mtlwm/training.hpp"

using namespace mtlwm;

namespace {

struct Small {
  fixtures::Trained base;
  TrainedModel clean;
};

const Small& clean_setup() {
  static const Small s = [] {
    Small out;
    out.base.cfg = fixtures::small_config(3);
    out.base.data = prepare_data(out.base.cfg);
    out.clean = train_clean(out.base.cfg, out.base.data);
    return out;
  }();
  return s;
}

double primary_loss(const MultiTaskModel& m, const LabeledDataset& d) {
  return cross_entropy(forward(m, d.inputs, Head::primary).logits(), d.labels);
}

}  // namespace

TEST(Primary, ZeroLearningRateIsIdentity) {
  const auto& s = clean_setup();
  auto cfg = s.base.cfg.train;
  cfg.lr_primary = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs_primary = 2;
  auto model = build_model(s.base.cfg.model, 1);
  const auto before = model;
  train_primary(model, s.base.data.split.train, cfg);
  EXPECT_EQ(model.backbone, before.backbone);
  EXPECT_EQ(model.primary_head, before.primary_head);
}

TEST(Primary, BlobsReachHighAccuracy) {
  ExperimentConfig cfg;
  cfg.seed = 4;
  cfg.dataset.split.seed = 4;
  cfg.train.seed = 4;
  cfg.dataset.spread = 0.1;
  cfg.train.epochs_primary = 50;
  const auto data = prepare_data(cfg);
  const auto t = train_clean(cfg, data);
  EXPECT_GE(t.clean_test_accuracy, 0.98);
  EXPECT_EQ(t.primary_report.primary_loss.size(), static_cast<std::size_t>(cfg.train.epochs_primary));
}

TEST(Primary, LinearClassifierFitsBlobs) {
  for (std::uint64_t seed : {0, 2}) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.dataset.dim = 16;
    cfg.dataset.spread = 0.1;
    cfg.dataset.split.seed = seed;
    cfg.model.input_dim = 16;
    cfg.model.backbone_widths = {16};
    cfg.model.backbone_activation = Activation::identity;
    cfg.model.taps = {0};
    cfg.key.n = 8;
    cfg.train.seed = seed;
    cfg.train.epochs_primary = 200;
    const auto data = prepare_data(cfg);
    const auto t = train_clean(cfg, data);
    EXPECT_GE(t.primary_report.primary_accuracy, 0.99) << seed;
  }
}

TEST(RFunc, ValueAndGradient) {
  const auto& s = clean_setup();
  const auto anchor = CleanAnchor::of(s.clean.clean);
  auto m = s.clean.clean;
  EXPECT_EQ(r_func(m, anchor), 0.0);
  m.backbone.layers[0].weight(0, 0) += 0.5;
  m.primary_head.layers[0].bias[1] -= 0.25;
  EXPECT_NEAR(r_func(m, anchor), 0.25 + 0.0625, 1e-15);

  const auto g = r_func_grad(m, anchor);
  const double h = 1e-6;
  auto probe = [&](double& p, double analytic) {
    const double saved = p;
    p = saved + h;
    const double up = r_func(m, anchor);
    p = saved - h;
    const double down = r_func(m, anchor);
    p = saved;
    EXPECT_NEAR((up - down) / (2 * h), analytic, 1e-6);
  };
  probe(m.backbone.layers[0].weight(0, 0), g.backbone.layers[0].weight(0, 0));
  probe(m.primary_head.layers[0].bias[1], g.primary_head.layers[0].bias[1]);
  probe(m.backbone.layers[1].weight(2, 3), g.backbone.layers[1].weight(2, 3));
  for (const auto& l : g.wm_head.layers) EXPECT_TRUE(l.weight.isZero(0.0));
}

TEST(Tuning, ZeroStepsIsIdentity) {
  const auto& s = clean_setup();
  auto cfg = s.base.cfg.train;
  cfg.tuning_steps = 0;
  const auto tuned = simulate_tuning(s.clean.clean, s.base.data.split.train, cfg, 4);
  EXPECT_EQ(tuned.backbone, s.clean.clean.backbone);
  EXPECT_EQ(tuned.primary_head, s.clean.clean.primary_head);
}

TEST(Tuning, DescendsAndIsDeterministic) {
  const auto& s = clean_setup();
  auto cfg = s.base.cfg.train;
  cfg.tuning_steps = 20;
  cfg.subset_fraction = 1.0;
  cfg.lr_inner = 0.05;
  const auto& data = s.base.data.split.train;
  auto start = build_model(s.base.cfg.model, 8);
  const auto tuned = simulate_tuning(start, data, cfg, 5);
  EXPECT_LT(primary_loss(tuned, data), primary_loss(start, data));
  const auto again = simulate_tuning(start, data, cfg, 5);
  EXPECT_EQ(again.backbone, tuned.backbone);
  EXPECT_NE(simulate_tuning(start, data, cfg, 6).backbone, tuned.backbone);
}

TEST(RDa, ZeroStepsEqualsWatermarkLoss) {
  const auto& s = clean_setup();
  auto cfg = s.base.cfg.train;
  cfg.tuning_steps = 0;
  const auto& wm = s.base.data.wm;
  const auto labels = wm.labels();
  const std::vector<std::uint64_t> seeds{1};
  const auto da = r_da(s.clean.model, s.base.data.split.train, wm.inputs, labels, cfg, seeds);
  const auto direct = backward(s.clean.model, wm.inputs, labels, Head::watermark);
  EXPECT_NEAR(da.value, direct.loss, 1e-12);
  EXPECT_EQ(da.grads.wm_head, direct.grads.wm_head);
}

TEST(RDa, AveragesOverTuningSamples) {
  const auto& s = clean_setup();
  const auto& cfg = s.base.cfg.train;
  const auto& wm = s.base.data.wm;
  const auto labels = wm.labels();
  const auto& d = s.base.data.split.train;
  const std::vector<std::uint64_t> a{11}, b{12}, both{11, 12};
  const auto ra = r_da(s.clean.model, d, wm.inputs, labels, cfg, a);
  const auto rb = r_da(s.clean.model, d, wm.inputs, labels, cfg, b);
  const auto rab = r_da(s.clean.model, d, wm.inputs, labels, cfg, both);
  EXPECT_NEAR(rab.value, 0.5 * (ra.value + rb.value), 1e-12);
  const double g_ab = rab.grads.backbone.layers[0].weight(0, 0);
  EXPECT_NEAR(g_ab, 0.5 * (ra.grads.backbone.layers[0].weight(0, 0) + rb.grads.backbone.layers[0].weight(0, 0)),
              1e-12);
  EXPECT_THROW(r_da(s.clean.model, d, wm.inputs, labels, cfg, std::vector<std::uint64_t>{}), ConfigError);
}

TEST(RDa, GradientIsADescentDirection) {
  const auto& s = clean_setup();
  const auto& cfg = s.base.cfg.train;
  const auto& wm = s.base.data.wm;
  const auto labels = wm.labels();
  const auto& d = s.base.data.split.train;
  const std::vector<std::uint64_t> seeds{21};
  auto m = s.clean.clean;
  const auto da = r_da(m, d, wm.inputs, labels, cfg, seeds);
  auto stepped = m;
  axpy(stepped.backbone, -1e-3, da.grads.backbone);
  axpy(stepped.wm_head, -1e-3, da.grads.wm_head);
  EXPECT_LT(r_da(stepped, d, wm.inputs, labels, cfg, seeds).value, da.value);
}

TEST(Embed, RequiresAnchor) {
  const auto& s = clean_setup();
  auto m = s.clean.clean;
  EXPECT_THROW(embed_watermark(m, std::nullopt, s.base.data.split.train, s.base.data.wm, s.base.cfg.train),
               StateError);
}

TEST(Embed, SentinelFreezesBackboneAndPrimaryHead) {
  const auto& s = clean_setup();
  auto cfg = s.base.cfg.train;
  cfg.lambda_func = kFreezeSentinel;
  cfg.lambda_da = 0.0;
  cfg.epochs_wm = 5;
  auto m = s.clean.clean;
  const auto before = m;
  const auto report =
      embed_watermark(m, CleanAnchor::of(before), s.base.data.split.train, s.base.data.wm, cfg);
  EXPECT_EQ(m.backbone, before.backbone);
  EXPECT_EQ(m.primary_head, before.primary_head);
  EXPECT_NE(m.wm_head, before.wm_head);
  const auto& x = s.base.data.split.test.inputs;
  EXPECT_EQ(forward(m, x, Head::primary).logits(), forward(before, x, Head::primary).logits());
  EXPECT_EQ(report.displacement, 0.0);
}

TEST(Embed, ReportCurvesAreConsistent) {
  const auto& s = clean_setup();
  auto cfg = s.base.cfg.train;
  cfg.epochs_wm = 4;
  auto m = s.clean.clean;
  const auto report =
      embed_watermark(m, CleanAnchor::of(s.clean.clean), s.base.data.split.train, s.base.data.wm, cfg);
  ASSERT_EQ(report.total_loss.size(), 4u);
  ASSERT_EQ(report.wm_loss.size(), 4u);
  ASSERT_EQ(report.r_func.size(), 4u);
  ASSERT_EQ(report.r_da.size(), 4u);
  ASSERT_EQ(report.primary_loss.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    const double expect = report.wm_loss[e] + cfg.lambda_func * report.r_func[e] + cfg.lambda_da * report.r_da[e];
    EXPECT_NEAR(report.total_loss[e], expect, 1e-9);
  }
  EXPECT_GE(report.r_func.back(), 0.0);
}

TEST(Embed, FunctionalRegularizerLimitsDisplacement) {
  const auto& s = clean_setup();
  std::vector<double> disp;
  for (double lambda1 : {0.0, 0.1, 1.0, 10.0}) {
    auto cfg = s.base.cfg.train;
    cfg.lambda_da = 0.0;
    cfg.lambda_func = lambda1;
    cfg.epochs_wm = 30;
    disp.push_back(embed_variant(s.clean, s.base.data, cfg).embed_report.displacement);
  }
  EXPECT_GT(disp[0], disp[1]);
  for (std::size_t i = 1; i < disp.size(); ++i) EXPECT_LE(disp[i], disp[i - 1] * 1.05);
}

TEST(Embed, FullPipelineEmbedsTheWatermark) {
  const auto& t = fixtures::small_trained();
  EXPECT_GE(t.trained.wm_accuracy, 0.99);
  EXPECT_GE(t.trained.test_accuracy, t.trained.clean_test_accuracy - 0.05);
}
