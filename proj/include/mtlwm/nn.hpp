#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtlwm/crypto.hpp"

namespace mtlwm {

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::relu;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out_dim x in_dim
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;

  int in_dim() const noexcept { return static_cast<int>(weight.cols()); }
  int out_dim() const noexcept { return static_cast<int>(weight.rows()); }
  bool operator==(const DenseLayer& other) const;
};

// An ordered stack of dense layers; adjacent dimensions chain.
struct Network {
  std::vector<DenseLayer> layers;

  static Network zeros(std::span<const LayerSpec> specs);
  // He-style Gaussian initialisation with zero biases.
  static Network random(std::span<const LayerSpec> specs, std::uint64_t seed);
  Network zeros_like() const;

  bool empty() const noexcept { return layers.empty(); }
  int in_dim() const;
  int out_dim() const;
  std::size_t parameter_count() const;
  std::size_t weight_count() const;
  void validate() const;

  bool operator==(const Network& other) const;
};

// c_WM together with the backbone layers it reads from.
struct WatermarkHead {
  Network net;
  std::vector<int> taps;
};

enum class Head { primary, watermark };

// Shared backbone with two independent heads. The published model is the
// backbone followed by primary_head; wm_head is kept private by the owner.
struct MultiTaskModel {
  Network backbone;
  Network primary_head;
  Network wm_head;
  std::vector<int> taps;  // ascending backbone layer indices feeding wm_head

  int input_dim() const { return backbone.in_dim(); }
  int tapped_width() const;
  WatermarkHead watermark_head() const { return {wm_head, taps}; }
  void set_watermark_head(const WatermarkHead& head);
  // Copy with the watermark head stripped.
  MultiTaskModel published() const;
  void validate(bool require_wm_head = true) const;
};

struct ModelSpec {
  int input_dim = 32;
  std::vector<int> backbone_widths{64, 64, 64};
  Activation backbone_activation = Activation::relu;
  int num_classes = 4;
  std::vector<int> primary_hidden;  // empty: single linear layer
  std::vector<int> wm_hidden{64};   // empty: linear c_WM
  std::vector<int> taps{0, 1, 2};
};

MultiTaskModel build_model(const ModelSpec& spec, std::uint64_t seed);
// Fresh c_WM for the given backbone, shape taken from spec.wm_hidden and taps.
Network build_wm_head(const Network& backbone, std::span<const int> taps,
                      std::span<const int> hidden, std::uint64_t seed);

// Post-activation outputs of every backbone layer plus the requested head's logits.
// Columns are samples.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> backbone;
  Eigen::MatrixXd head_input;
  std::vector<Eigen::MatrixXd> head;
  const Eigen::MatrixXd& logits() const { return head.back(); }
};

ForwardTrace forward(const MultiTaskModel& model, const Eigen::MatrixXd& x, Head head);
ForwardTrace forward(const MultiTaskModel& model, const Eigen::VectorXd& x, Head head);

// Concatenated tapped activations, ascending layer order.
Eigen::MatrixXd tapped_features(const Network& backbone, std::span<const int> taps,
                                const Eigen::MatrixXd& x);

struct ModelGrads {
  Network backbone;
  Network primary_head;
  Network wm_head;
};

ModelGrads zero_grads(const MultiTaskModel& model);

struct LossAndGrads {
  double loss = 0.0;
  ModelGrads grads;
};

// Mean softmax cross-entropy over the batch and its exact gradient with
// respect to every parameter on the path of the requested head.
LossAndGrads backward(const MultiTaskModel& model, const Eigen::MatrixXd& x,
                      std::span<const int> targets, Head head);

double cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> targets);
std::vector<int> predict(const Eigen::MatrixXd& logits);
double accuracy(const Eigen::MatrixXd& logits, std::span<const int> targets);

// w <- w - lr * (grad + weight_decay * w)
void sgd_step(Network& params, const Network& grads, double lr, double weight_decay = 0.0);

// Scalar helpers over parameter vectors.
double squared_distance(const Network& a, const Network& b);
void axpy(Network& y, double alpha, const Network& x);  // y += alpha * x (same shapes)
bool all_finite(const Network& net);

// Per-weight keep flag for the backbone; biases are never pruned.
struct PruneMask {
  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> keep;
  std::size_t pruned = 0;
  void apply(Network& backbone) const;
};

// Zero the floor(rho * W) smallest-magnitude backbone weights (global ranking,
// ties broken by layer, row, column).
PruneMask apply_prune_mask(MultiTaskModel& model, double rho);

// Canonical JSON: sorted keys, no whitespace, doubles as 16 hex digit IEEE-754 bit patterns.
std::string serialize_model(const MultiTaskModel& model);
MultiTaskModel deserialize_model(std::string_view text);
std::string serialize_head(const WatermarkHead& head);
WatermarkHead deserialize_head(std::string_view text);

Digest model_hash(const MultiTaskModel& model);
Digest head_hash(const WatermarkHead& head);

std::string f64_to_hex(double v);
double f64_from_hex(std::string_view hex);

}  // namespace mtlwm
