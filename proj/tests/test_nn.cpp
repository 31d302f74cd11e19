#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtlwm/errors.hpp"
#include "mtlwm/nn.hpp"
#include "oracles/sha256_ref.hpp"

using namespace mtlwm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MultiTaskModel model_with(Activation act, std::uint64_t seed) {
  ModelSpec spec;
  spec.input_dim = 5;
  spec.backbone_widths = {6, 4, 3};
  spec.backbone_activation = act;
  spec.num_classes = 3;
  spec.primary_hidden = {4};
  spec.wm_hidden = {3};
  spec.taps = {0, 2};
  auto m = build_model(spec, seed);
  // Nonzero biases keep ReLU pre-activations off the kink.
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  for (auto* net : {&m.backbone, &m.primary_head, &m.wm_head}) {
    for (auto& l : net->layers) {
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = u(rng);
    }
  }
  return m;
}

double loss_at(const MultiTaskModel& m, const MatrixXd& x, const std::vector<int>& y, Head head) {
  const auto trace = forward(m, x, head);
  return cross_entropy(trace.logits(), y);
}

// Central differences over every parameter of one network of the model.
void check_gradients(MultiTaskModel model, Network MultiTaskModel::*part, Network ModelGrads::*gpart,
                     const MatrixXd& x, const std::vector<int>& y, Head head) {
  const auto analytic = backward(model, x, y, head);
  const double h = 1e-5;
  Network& net = model.*part;
  const Network& g = analytic.grads.*gpart;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto probe = [&](double& param, double grad, const char* what) {
      const double saved = param;
      param = saved + h;
      const double up = loss_at(model, x, y, head);
      param = saved - h;
      const double down = loss_at(model, x, y, head);
      param = saved;
      const double numeric = (up - down) / (2 * h);
      EXPECT_LE(std::abs(numeric - grad), 1e-6 * std::max(1.0, std::abs(numeric)))
          << what << " layer " << l << " analytic " << grad << " numeric " << numeric;
    };
    for (Eigen::Index i = 0; i < net.layers[l].weight.size(); ++i) {
      probe(net.layers[l].weight.data()[i], g.layers[l].weight.data()[i], "weight");
    }
    for (Eigen::Index i = 0; i < net.layers[l].bias.size(); ++i) {
      probe(net.layers[l].bias[i], g.layers[l].bias[i], "bias");
    }
  }
}

MatrixXd random_inputs(int d, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  MatrixXd x(d, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
  return x;
}

VectorXd apply_ref(const DenseLayer& l, const VectorXd& in) {
  VectorXd out(l.out_dim());
  for (int r = 0; r < l.out_dim(); ++r) {
    double s = l.bias[r];
    for (int c = 0; c < l.in_dim(); ++c) s += l.weight(r, c) * in[c];
    if (l.activation == Activation::relu) s = s > 0 ? s : 0;
    if (l.activation == Activation::tanh) s = std::tanh(s);
    out[r] = s;
  }
  return out;
}

}  // namespace

TEST(Forward, ZeroModelGivesZeroLogits) {
  std::vector<LayerSpec> specs{{3, 4, Activation::identity}, {4, 2, Activation::identity}};
  MultiTaskModel m;
  m.backbone = Network::zeros(specs);
  m.primary_head = Network::zeros(std::vector<LayerSpec>{{2, 3, Activation::identity}});
  const auto trace = forward(m, VectorXd::Ones(3).eval(), Head::primary);
  EXPECT_TRUE(trace.logits().isZero());
}

TEST(Forward, SingleUnit) {
  MultiTaskModel m;
  m.backbone = Network::zeros(std::vector<LayerSpec>{{1, 1, Activation::relu}});
  m.backbone.layers[0].weight(0, 0) = 2;
  m.backbone.layers[0].bias[0] = 1;
  m.primary_head = Network::zeros(std::vector<LayerSpec>{{1, 2, Activation::identity}});
  const auto trace = forward(m, (VectorXd(1) << 3).finished(), Head::primary);
  EXPECT_DOUBLE_EQ(trace.backbone[0](0, 0), 7.0);
}

TEST(Forward, WatermarkHeadMatchesHandComposition) {
  const auto m = model_with(Activation::tanh, 3);
  const VectorXd x = random_inputs(5, 1, 9).col(0);
  std::vector<VectorXd> acts;
  VectorXd h = x;
  for (const auto& l : m.backbone.layers) {
    h = apply_ref(l, h);
    acts.push_back(h);
  }
  VectorXd tapped(acts[0].size() + acts[2].size());
  tapped << acts[0], acts[2];
  VectorXd z = tapped;
  for (const auto& l : m.wm_head.layers) z = apply_ref(l, z);
  const auto trace = forward(m, x, Head::watermark);
  EXPECT_LT((trace.logits().col(0) - z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((tapped_features(m.backbone, m.taps, MatrixXd(x)).col(0) - tapped).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, ShapeMismatchIsStructural) {
  const auto m = model_with(Activation::relu, 1);
  EXPECT_THROW(forward(m, MatrixXd(MatrixXd::Zero(4, 2)), Head::primary), StructuralError);
}

TEST(Backward, FiniteDifferencesPrimary) {
  for (Activation act : {Activation::tanh, Activation::relu, Activation::identity}) {
    const auto m = model_with(act, 11);
    const MatrixXd x = random_inputs(5, 7, 12);
    const std::vector<int> y{0, 1, 2, 1, 0, 2, 2};
    check_gradients(m, &MultiTaskModel::backbone, &ModelGrads::backbone, x, y, Head::primary);
    check_gradients(m, &MultiTaskModel::primary_head, &ModelGrads::primary_head, x, y, Head::primary);
  }
}

TEST(Backward, FiniteDifferencesWatermarkThroughTaps) {
  for (Activation act : {Activation::tanh, Activation::relu}) {
    const auto m = model_with(act, 21);
    const MatrixXd x = random_inputs(5, 6, 22);
    const std::vector<int> y{0, 1, 1, 0, 1, 0};
    check_gradients(m, &MultiTaskModel::backbone, &ModelGrads::backbone, x, y, Head::watermark);
    check_gradients(m, &MultiTaskModel::wm_head, &ModelGrads::wm_head, x, y, Head::watermark);
  }
}

TEST(Backward, HeadIsolation) {
  const auto m = model_with(Activation::relu, 5);
  const MatrixXd x = random_inputs(5, 4, 6);
  const auto wm = backward(m, x, std::vector<int>{0, 1, 0, 1}, Head::watermark);
  for (const auto& l : wm.grads.primary_head.layers) {
    EXPECT_TRUE(l.weight.isZero(0.0));
    EXPECT_TRUE(l.bias.isZero(0.0));
  }
  const auto pr = backward(m, x, std::vector<int>{0, 1, 2, 1}, Head::primary);
  for (const auto& l : pr.grads.wm_head.layers) EXPECT_TRUE(l.weight.isZero(0.0));

  // Updating c_WM alone leaves primary outputs bit-identical.
  auto moved = m;
  sgd_step(moved.wm_head, wm.grads.wm_head, 0.5);
  EXPECT_EQ(forward(m, x, Head::primary).logits(), forward(moved, x, Head::primary).logits());
}

TEST(Backward, ZeroGradientAtMinimum) {
  // One logit pair with tied weights: symmetric targets make the bias gradient vanish.
  MultiTaskModel m;
  m.backbone = Network::zeros(std::vector<LayerSpec>{{1, 1, Activation::identity}});
  m.primary_head = Network::zeros(std::vector<LayerSpec>{{1, 2, Activation::identity}});
  const auto g = backward(m, MatrixXd::Zero(1, 2), std::vector<int>{0, 1}, Head::primary);
  EXPECT_NEAR(g.grads.primary_head.layers[0].bias.norm(), 0.0, 1e-15);
}

TEST(Backward, NonFiniteReportsLayer) {
  auto m = model_with(Activation::relu, 2);
  m.backbone.layers[1].weight(0, 0) = std::numeric_limits<double>::infinity();
  try {
    backward(m, random_inputs(5, 2, 1), std::vector<int>{0, 1}, Head::primary);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.layer(), 1);
  }
}

TEST(Sgd, UpdateRule) {
  Network w = Network::zeros(std::vector<LayerSpec>{{1, 1, Activation::identity}});
  w.layers[0].weight(0, 0) = 1.0;
  Network g = w.zeros_like();
  auto copy = w;
  sgd_step(copy, g, 0.0, 0.1);
  EXPECT_EQ(copy, w);
  sgd_step(w, g, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(w.layers[0].weight(0, 0), 0.9);
}

TEST(Sgd, ConvergesOnQuadratic) {
  // f(w) = 0.5 a (w - c)^2 per coordinate
  Network w = Network::zeros(std::vector<LayerSpec>{{2, 2, Activation::identity}});
  const double a = 2.0, c = -0.75;
  for (int it = 0; it < 200; ++it) {
    Network g = w.zeros_like();
    g.layers[0].weight = (a * (w.layers[0].weight.array() - c)).matrix();
    g.layers[0].bias = (a * (w.layers[0].bias.array() - c)).matrix();
    sgd_step(w, g, 0.25);
  }
  EXPECT_LT((w.layers[0].weight.array() - c).abs().maxCoeff(), 1e-6);
  EXPECT_LT((w.layers[0].bias.array() - c).abs().maxCoeff(), 1e-6);
}

TEST(Prune, EndpointsAndCount) {
  ModelSpec spec;
  spec.input_dim = 10;
  spec.backbone_widths = {50, 10};
  spec.taps = {0, 1};
  auto m = build_model(spec, 4);
  ASSERT_EQ(m.backbone.weight_count(), 1000u);

  auto same = m;
  auto mask0 = apply_prune_mask(same, 0.0);
  EXPECT_EQ(mask0.pruned, 0u);
  EXPECT_EQ(same.backbone, m.backbone);

  auto pruned = m;
  auto mask = apply_prune_mask(pruned, 0.3);
  EXPECT_EQ(mask.pruned, 300u);
  std::size_t zeros = 0;
  for (const auto& l : pruned.backbone.layers) zeros += (l.weight.array() == 0.0).count();
  EXPECT_EQ(zeros, 300u);
  // Biases exempt; every survivor is at least as large as every pruned weight.
  double max_pruned = 0, min_kept = 1e300;
  for (std::size_t l = 0; l < m.backbone.layers.size(); ++l) {
    EXPECT_EQ(pruned.backbone.layers[l].bias, m.backbone.layers[l].bias);
    const auto& w = m.backbone.layers[l].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (pruned.backbone.layers[l].weight.data()[i] == 0.0) max_pruned = std::max(max_pruned, std::abs(w.data()[i]));
      else min_kept = std::min(min_kept, std::abs(w.data()[i]));
    }
  }
  EXPECT_LE(max_pruned, min_kept);

  auto all = m;
  apply_prune_mask(all, 1.0);
  for (const auto& l : all.backbone.layers) EXPECT_TRUE(l.weight.isZero(0.0));
}

TEST(Prune, TiesBrokenByLayerRowCol) {
  std::vector<LayerSpec> specs{{2, 2, Activation::relu}, {2, 2, Activation::relu}};
  MultiTaskModel m;
  m.backbone = Network::zeros(specs);
  for (auto& l : m.backbone.layers) l.weight.setConstant(0.5);
  m.primary_head = Network::zeros(std::vector<LayerSpec>{{2, 2, Activation::identity}});
  auto mask = apply_prune_mask(m, 0.5);
  EXPECT_EQ(mask.pruned, 4u);
  EXPECT_TRUE(m.backbone.layers[0].weight.isZero(0.0));
  EXPECT_TRUE((m.backbone.layers[1].weight.array() == 0.5).all());
}

TEST(Serialization, RoundTripAndCanonicalForm) {
  const auto m = model_with(Activation::tanh, 8);
  const std::string text = serialize_model(m);
  EXPECT_EQ(text.find_first_of(" \n\t"), std::string::npos);
  EXPECT_EQ(text.rfind("{\"backbone\":[{\"activation\":\"tanh\",\"bias\":{\"f64hex\":[", 0), 0u);
  EXPECT_NE(text.find("\"c_p\":"), std::string::npos);
  EXPECT_NE(text.find(",\"taps\":[0,2],\"version\":1}"), std::string::npos);
  const auto back = deserialize_model(text);
  EXPECT_EQ(back.backbone, m.backbone);
  EXPECT_EQ(back.primary_head, m.primary_head);
  EXPECT_EQ(back.wm_head, m.wm_head);
  EXPECT_EQ(serialize_model(back), text);
}

TEST(Serialization, FloatsAreBigEndianBitPatterns) {
  EXPECT_EQ(f64_to_hex(1.0), "3ff0000000000000");
  EXPECT_EQ(f64_to_hex(-2.0), "c000000000000000");
  EXPECT_EQ(f64_from_hex("3ff0000000000000"), 1.0);
  EXPECT_EQ(std::signbit(f64_from_hex(f64_to_hex(-0.0))), true);
  EXPECT_THROW(f64_from_hex("3ff"), ParseError);
}

TEST(Serialization, WeightFlipChangesBytesAndHash) {
  auto m = model_with(Activation::relu, 8);
  const std::string before = serialize_model(m);
  m.backbone.layers[2].weight(1, 1) = std::nextafter(m.backbone.layers[2].weight(1, 1), 1e9);
  EXPECT_NE(serialize_model(m), before);
}

TEST(Serialization, HashMatchesExternalSha256) {
  const auto m = model_with(Activation::relu, 10);
  const std::string text = serialize_model(m);
  const auto expected = oracle::sha256(text);
  const auto got = model_hash(m);
  EXPECT_TRUE(std::equal(got.begin(), got.end(), expected.begin()));
  const auto head = m.watermark_head();
  const auto head_expected = oracle::sha256(serialize_head(head));
  const auto head_got = head_hash(head);
  EXPECT_TRUE(std::equal(head_got.begin(), head_got.end(), head_expected.begin()));
}

TEST(Serialization, MalformedInputReportsPosition) {
  const std::string text = serialize_model(model_with(Activation::relu, 1));
  try {
    deserialize_model(text.substr(0, 40));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.position(), 0u);
  }
  EXPECT_THROW(deserialize_model("{\"version\":1}"), ParseError);
  EXPECT_THROW(deserialize_model("[]"), ParseError);
  std::string wrong_version = text;
  wrong_version.replace(wrong_version.rfind("\"version\":1"), 11, "\"version\":2");
  EXPECT_THROW(deserialize_model(wrong_version), ParseError);
}

TEST(Serialization, HeadRoundTrip) {
  const auto m = model_with(Activation::relu, 12);
  const auto head = m.watermark_head();
  const auto back = deserialize_head(serialize_head(head));
  EXPECT_EQ(back.net, head.net);
  EXPECT_EQ(back.taps, head.taps);
}

TEST(Model, PublishedStripsWatermarkHead) {
  const auto m = model_with(Activation::relu, 13);
  const auto pub = m.published();
  EXPECT_TRUE(pub.wm_head.empty());
  EXPECT_EQ(pub.backbone, m.backbone);
  EXPECT_EQ(serialize_model(pub).find("\"c_wm\":[]"), serialize_model(pub).find("\"c_wm\":"));
  EXPECT_EQ(m.tapped_width(), 6 + 3);
}
