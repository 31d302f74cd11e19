#include "mtlwm/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <tuple>

#include <nlohmann/json.hpp>

#include "mtlwm/errors.hpp"

namespace mtlwm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

void activate(MatrixXd& z, Activation act) {
  switch (act) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

// Multiply the upstream gradient by the activation derivative, expressed
// through the post-activation output.
void activation_backward(MatrixXd& grad, const MatrixXd& out, Activation act) {
  switch (act) {
    case Activation::relu: grad = (out.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= (1.0 - out.array().square()); break;
    case Activation::identity: break;
  }
}

MatrixXd apply_layer(const DenseLayer& layer, const MatrixXd& x) {
  MatrixXd z = layer.weight * x;
  z.colwise() += layer.bias;
  activate(z, layer.activation);
  return z;
}

void check_finite(const MatrixXd& m, const char* what, std::ptrdiff_t layer) {
  if (!m.allFinite()) throw NumericalError(std::string("non-finite ") + what, layer);
}

}  // namespace

bool DenseLayer::operator==(const DenseLayer& other) const {
  return activation == other.activation && weight.rows() == other.weight.rows() &&
         weight.cols() == other.weight.cols() && bias.size() == other.bias.size() &&
         weight == other.weight && bias == other.bias;
}

Network Network::zeros(std::span<const LayerSpec> specs) {
  Network net;
  for (const auto& s : specs) {
    if (s.in_dim < 1 || s.out_dim < 1) throw StructuralError("layer dimensions must be >= 1");
    net.layers.push_back({MatrixXd::Zero(s.out_dim, s.in_dim), VectorXd::Zero(s.out_dim),
                          s.activation});
  }
  net.validate();
  return net;
}

Network Network::random(std::span<const LayerSpec> specs, std::uint64_t seed) {
  Network net = zeros(specs);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / layer.in_dim()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
  }
  return net;
}

Network Network::zeros_like() const {
  Network out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    out.layers.push_back({MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          VectorXd::Zero(l.bias.size()), l.activation});
  }
  return out;
}

int Network::in_dim() const {
  if (layers.empty()) throw StructuralError("empty network has no input dimension");
  return layers.front().in_dim();
}

int Network::out_dim() const {
  if (layers.empty()) throw StructuralError("empty network has no output dimension");
  return layers.back().out_dim();
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::size_t Network::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size();
  return n;
}

void Network::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() < 1 || l.weight.cols() < 1) {
      throw StructuralError("layer " + std::to_string(i) + " has an empty weight matrix");
    }
    if (l.bias.size() != l.weight.rows()) {
      throw StructuralError("layer " + std::to_string(i) + " bias length does not match rows");
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw StructuralError("layer " + std::to_string(i) + " input " +
                            std::to_string(l.in_dim()) + " does not chain with output " +
                            std::to_string(layers[i - 1].out_dim()));
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw NumericalError("non-finite parameter", static_cast<std::ptrdiff_t>(i));
    }
  }
}

bool Network::operator==(const Network& other) const { return layers == other.layers; }

int MultiTaskModel::tapped_width() const {
  int width = 0;
  for (int t : taps) width += backbone.layers.at(t).out_dim();
  return width;
}

void MultiTaskModel::set_watermark_head(const WatermarkHead& head) {
  wm_head = head.net;
  taps = head.taps;
}

MultiTaskModel MultiTaskModel::published() const {
  MultiTaskModel out;
  out.backbone = backbone;
  out.primary_head = primary_head;
  return out;
}

void MultiTaskModel::validate(bool require_wm_head) const {
  if (backbone.empty()) throw StructuralError("model has no backbone");
  backbone.validate();
  primary_head.validate();
  if (!primary_head.empty() && primary_head.in_dim() != backbone.out_dim()) {
    throw StructuralError("primary head input does not match backbone output");
  }
  if (!require_wm_head && wm_head.empty()) return;
  wm_head.validate();
  if (taps.empty()) throw StructuralError("watermark head has no tapped layers");
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 0 || taps[i] >= static_cast<int>(backbone.layers.size())) {
      throw StructuralError("tap " + std::to_string(taps[i]) + " is not a backbone layer");
    }
    if (i > 0 && taps[i] <= taps[i - 1]) throw StructuralError("taps must be strictly ascending");
  }
  if (wm_head.in_dim() != tapped_width()) {
    throw StructuralError("watermark head expects " + std::to_string(wm_head.in_dim()) +
                          " inputs but taps provide " + std::to_string(tapped_width()));
  }
  if (wm_head.out_dim() != 2) throw StructuralError("watermark head must have 2 outputs");
}

Network build_wm_head(const Network& backbone, std::span<const int> taps,
                      std::span<const int> hidden, std::uint64_t seed) {
  int width = 0;
  for (int t : taps) width += backbone.layers.at(t).out_dim();
  std::vector<LayerSpec> specs;
  int prev = width;
  for (int h : hidden) {
    specs.push_back({prev, h, Activation::relu});
    prev = h;
  }
  specs.push_back({prev, 2, Activation::identity});
  return Network::random(specs, seed);
}

MultiTaskModel build_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.backbone_widths.empty()) throw ConfigError("model needs at least one backbone layer");
  if (spec.num_classes < 2) throw ConfigError("model needs at least two primary classes");
  MultiTaskModel model;
  std::vector<LayerSpec> bb;
  int prev = spec.input_dim;
  for (int w : spec.backbone_widths) {
    bb.push_back({prev, w, spec.backbone_activation});
    prev = w;
  }
  model.backbone = Network::random(bb, derive_seed(seed, 0));
  std::vector<LayerSpec> cp;
  for (int h : spec.primary_hidden) {
    cp.push_back({prev, h, Activation::relu});
    prev = h;
  }
  cp.push_back({prev, spec.num_classes, Activation::identity});
  model.primary_head = Network::random(cp, derive_seed(seed, 1));
  model.taps = spec.taps;
  std::sort(model.taps.begin(), model.taps.end());
  for (int t : model.taps) {
    if (t < 0 || t >= static_cast<int>(spec.backbone_widths.size())) {
      throw ConfigError("tap " + std::to_string(t) + " is not a backbone layer");
    }
  }
  model.wm_head = build_wm_head(model.backbone, model.taps, spec.wm_hidden, derive_seed(seed, 2));
  model.validate();
  return model;
}

namespace {

MatrixXd concat_taps(const std::vector<MatrixXd>& acts, std::span<const int> taps) {
  Eigen::Index rows = 0;
  for (int t : taps) rows += acts[t].rows();
  MatrixXd out(rows, acts.front().cols());
  Eigen::Index offset = 0;
  for (int t : taps) {
    out.middleRows(offset, acts[t].rows()) = acts[t];
    offset += acts[t].rows();
  }
  return out;
}

}  // namespace

Eigen::MatrixXd tapped_features(const Network& backbone, std::span<const int> taps,
                                const Eigen::MatrixXd& x) {
  if (taps.empty()) throw StructuralError("no tapped layers");
  const int deepest = *std::max_element(taps.begin(), taps.end());
  if (deepest >= static_cast<int>(backbone.layers.size())) {
    throw StructuralError("tap beyond backbone depth");
  }
  std::vector<MatrixXd> acts;
  const MatrixXd* input = &x;
  for (int l = 0; l <= deepest; ++l) {
    acts.push_back(apply_layer(backbone.layers[l], *input));
    input = &acts.back();
  }
  return concat_taps(acts, taps);
}

ForwardTrace forward(const MultiTaskModel& model, const MatrixXd& x, Head head) {
  if (x.rows() != model.input_dim()) {
    throw StructuralError("input has " + std::to_string(x.rows()) + " features, model expects " +
                          std::to_string(model.input_dim()));
  }
  ForwardTrace trace;
  trace.backbone.reserve(model.backbone.layers.size());
  const MatrixXd* input = &x;
  for (const auto& layer : model.backbone.layers) {
    trace.backbone.push_back(apply_layer(layer, *input));
    input = &trace.backbone.back();
  }
  const Network* net = nullptr;
  if (head == Head::primary) {
    if (model.primary_head.empty()) throw StructuralError("model has no primary head");
    trace.head_input = trace.backbone.back();
    net = &model.primary_head;
  } else {
    if (model.wm_head.empty()) throw StructuralError("model has no watermark head");
    trace.head_input = concat_taps(trace.backbone, model.taps);
    if (trace.head_input.rows() != model.wm_head.in_dim()) {
      throw StructuralError("watermark head input mismatch");
    }
    net = &model.wm_head;
  }
  input = &trace.head_input;
  for (const auto& layer : net->layers) {
    trace.head.push_back(apply_layer(layer, *input));
    input = &trace.head.back();
  }
  return trace;
}

ForwardTrace forward(const MultiTaskModel& model, const VectorXd& x, Head head) {
  return forward(model, MatrixXd(x), head);
}

ModelGrads zero_grads(const MultiTaskModel& model) {
  return {model.backbone.zeros_like(), model.primary_head.zeros_like(), model.wm_head.zeros_like()};
}

double cross_entropy(const MatrixXd& logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.cols()) {
    throw StructuralError("target count does not match batch size");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    total += lse - logits(targets[j], j);
  }
  return logits.cols() > 0 ? total / static_cast<double>(logits.cols()) : 0.0;
}

std::vector<int> predict(const MatrixXd& logits) {
  std::vector<int> out(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index arg;
    logits.col(j).maxCoeff(&arg);
    out[j] = static_cast<int>(arg);
  }
  return out;
}

double accuracy(const MatrixXd& logits, std::span<const int> targets) {
  if (logits.cols() == 0) return 0.0;
  auto pred = predict(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == targets[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

LossAndGrads backward(const MultiTaskModel& model, const MatrixXd& x, std::span<const int> targets,
                      Head head) {
  const Network& net = head == Head::primary ? model.primary_head : model.wm_head;
  if (net.empty()) throw StructuralError("requested head is empty");
  const int classes = net.out_dim();
  for (int t : targets) {
    if (t < 0 || t >= classes) throw DomainError("target " + std::to_string(t) + " out of range");
  }
  ForwardTrace trace = forward(model, x, head);
  for (std::size_t l = 0; l < trace.backbone.size(); ++l) {
    check_finite(trace.backbone[l], "activation", static_cast<std::ptrdiff_t>(l));
  }
  const MatrixXd& logits = trace.logits();

  LossAndGrads out;
  out.loss = cross_entropy(logits, targets);
  out.grads = zero_grads(model);
  Network& head_grads = head == Head::primary ? out.grads.primary_head : out.grads.wm_head;

  const double inv_batch = 1.0 / static_cast<double>(x.cols());
  MatrixXd grad(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    VectorXd e = (logits.col(j).array() - mx).exp();
    grad.col(j) = e / e.sum();
    grad(targets[j], j) -= 1.0;
  }
  grad *= inv_batch;

  const std::ptrdiff_t head_offset = static_cast<std::ptrdiff_t>(model.backbone.layers.size());
  for (std::ptrdiff_t l = static_cast<std::ptrdiff_t>(net.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = net.layers[l];
    const MatrixXd& in = l == 0 ? trace.head_input : trace.head[l - 1];
    activation_backward(grad, trace.head[l], layer.activation);
    head_grads.layers[l].weight.noalias() = grad * in.transpose();
    head_grads.layers[l].bias = grad.rowwise().sum();
    check_finite(head_grads.layers[l].weight, "gradient", head_offset + l);
    grad = layer.weight.transpose() * grad;
  }

  // grad now holds d loss / d head_input; scatter it back over the backbone.
  const int depth = static_cast<int>(model.backbone.layers.size());
  std::vector<MatrixXd> upstream(depth);
  int top = depth - 1;
  if (head == Head::primary) {
    upstream[top] = std::move(grad);
  } else {
    top = model.taps.back();
    Eigen::Index offset = 0;
    for (int t : model.taps) {
      const Eigen::Index rows = trace.backbone[t].rows();
      upstream[t] = grad.middleRows(offset, rows);
      offset += rows;
    }
  }
  MatrixXd carry;
  for (int l = top; l >= 0; --l) {
    MatrixXd g = upstream[l].size() ? upstream[l] : MatrixXd::Zero(trace.backbone[l].rows(), x.cols());
    if (carry.size()) g += carry;
    const auto& layer = model.backbone.layers[l];
    const MatrixXd& in = l == 0 ? x : trace.backbone[l - 1];
    activation_backward(g, trace.backbone[l], layer.activation);
    out.grads.backbone.layers[l].weight.noalias() = g * in.transpose();
    out.grads.backbone.layers[l].bias = g.rowwise().sum();
    check_finite(out.grads.backbone.layers[l].weight, "gradient", l);
    if (l > 0) carry = layer.weight.transpose() * g;
  }
  return out;
}

void sgd_step(Network& params, const Network& grads, double lr, double weight_decay) {
  if (params.layers.size() != grads.layers.size()) throw StructuralError("gradient shape mismatch");
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    if (weight_decay != 0.0) {
      p.weight -= lr * (g.weight + weight_decay * p.weight);
      p.bias -= lr * (g.bias + weight_decay * p.bias);
    } else {
      p.weight -= lr * g.weight;
      p.bias -= lr * g.bias;
    }
  }
}

double squared_distance(const Network& a, const Network& b) {
  if (a.layers.size() != b.layers.size()) throw StructuralError("network shapes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight.rows() != b.layers[i].weight.rows() ||
        a.layers[i].weight.cols() != b.layers[i].weight.cols()) {
      throw StructuralError("layer " + std::to_string(i) + " shapes differ");
    }
    total += (a.layers[i].weight - b.layers[i].weight).squaredNorm();
    total += (a.layers[i].bias - b.layers[i].bias).squaredNorm();
  }
  return total;
}

void axpy(Network& y, double alpha, const Network& x) {
  if (y.layers.size() != x.layers.size()) throw StructuralError("network shapes differ");
  for (std::size_t i = 0; i < y.layers.size(); ++i) {
    y.layers[i].weight += alpha * x.layers[i].weight;
    y.layers[i].bias += alpha * x.layers[i].bias;
  }
}

bool all_finite(const Network& net) {
  for (const auto& l : net.layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

void PruneMask::apply(Network& backbone) const {
  for (std::size_t i = 0; i < keep.size() && i < backbone.layers.size(); ++i) {
    backbone.layers[i].weight = keep[i].select(backbone.layers[i].weight, 0.0);
  }
}

PruneMask apply_prune_mask(MultiTaskModel& model, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("prune fraction must lie in [0, 1]");
  struct Slot {
    double magnitude;
    std::size_t layer;
    Eigen::Index row, col;
  };
  std::vector<Slot> slots;
  slots.reserve(model.backbone.weight_count());
  PruneMask mask;
  for (std::size_t l = 0; l < model.backbone.layers.size(); ++l) {
    const auto& w = model.backbone.layers[l].weight;
    mask.keep.emplace_back(w.rows(), w.cols());
    mask.keep.back().setConstant(true);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) slots.push_back({std::abs(w(r, c)), l, r, c});
  }
  const auto count =
      static_cast<std::size_t>(std::floor(rho * static_cast<double>(slots.size()) + 1e-9));
  auto key = [](const Slot& s) { return std::tie(s.magnitude, s.layer, s.row, s.col); };
  std::stable_sort(slots.begin(), slots.end(),
                   [&](const Slot& a, const Slot& b) { return key(a) < key(b); });
  for (std::size_t i = 0; i < count && i < slots.size(); ++i) {
    mask.keep[slots[i].layer](slots[i].row, slots[i].col) = false;
  }
  mask.pruned = std::min(count, slots.size());
  mask.apply(model.backbone);
  return mask;
}

// ---------------------------------------------------------------------------
// Canonical serialization

std::string f64_to_hex(double v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[i] = kDigits[(bits >> (60 - 4 * i)) & 0xf];
  return out;
}

double f64_from_hex(std::string_view hex) {
  if (hex.size() != 16) throw ParseError("f64hex value must have 16 digits", 0);
  std::uint64_t bits = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else throw ParseError("invalid lowercase hex digit in f64hex", 0);
    bits = (bits << 4) | static_cast<std::uint64_t>(d);
  }
  return std::bit_cast<double>(bits);
}

namespace {

json encode_floats(const double* data, Eigen::Index rows, Eigen::Index cols, bool row_major_src) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = row_major_src ? data[r * cols + c] : data[c * rows + r];
      arr.push_back(f64_to_hex(v));
    }
  return json{{"f64hex", std::move(arr)}};
}

json encode_network(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"activation", std::string(to_string(l.activation))},
                      {"bias", encode_floats(l.bias.data(), l.bias.size(), 1, false)},
                      {"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"weight", encode_floats(l.weight.data(), l.weight.rows(), l.weight.cols(),
                                               false)}});
  }
  return layers;
}

[[noreturn]] void structural(const std::string& path, const std::string& what) {
  throw ParseError("invalid model document: " + path + ": " + what, 0);
}

const json& field(const json& obj, const char* name, const std::string& path) {
  if (!obj.is_object()) structural(path, "expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) structural(path, std::string("missing field '") + name + "'");
  return *it;
}

std::vector<double> decode_floats(const json& node, std::size_t expected, const std::string& path) {
  const json& arr = field(node, "f64hex", path);
  if (!arr.is_array() || arr.size() != expected) {
    structural(path, "expected " + std::to_string(expected) + " f64hex values");
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_string()) structural(path, "f64hex entries must be strings");
    double d;
    try {
      d = f64_from_hex(v.get<std::string>());
    } catch (const ParseError&) {
      structural(path, "malformed f64hex entry");
    }
    if (!std::isfinite(d)) structural(path, "non-finite parameter");
    out.push_back(d);
  }
  return out;
}

int positive_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > (1 << 24)) {
    structural(path, "expected a positive integer");
  }
  return v.get<int>();
}

Network decode_network(const json& arr, const std::string& path) {
  if (!arr.is_array()) structural(path, "expected an array of layers");
  Network net;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string lp = path + "[" + std::to_string(i) + "]";
    const json& obj = arr[i];
    const int in = positive_int(field(obj, "in", lp), lp + ".in");
    const int out = positive_int(field(obj, "out", lp), lp + ".out");
    const json& act = field(obj, "activation", lp);
    if (!act.is_string()) structural(lp, "activation must be a string");
    DenseLayer layer;
    try {
      layer.activation = activation_from_string(act.get<std::string>());
    } catch (const ConfigError&) {
      structural(lp, "unknown activation");
    }
    auto w = decode_floats(field(obj, "weight", lp), static_cast<std::size_t>(in) * out,
                           lp + ".weight");
    auto b = decode_floats(field(obj, "bias", lp), static_cast<std::size_t>(out), lp + ".bias");
    layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(w.data(), out, in);
    layer.bias = Eigen::Map<const VectorXd>(b.data(), out);
    net.layers.push_back(std::move(layer));
  }
  try {
    net.validate();
  } catch (const Error& e) {
    structural(path, e.what());
  }
  return net;
}

std::vector<int> decode_taps(const json& arr, const std::string& path) {
  if (!arr.is_array()) structural(path, "expected an array");
  std::vector<int> taps;
  for (const auto& v : arr) {
    if (!v.is_number_integer()) structural(path, "taps must be integers");
    taps.push_back(v.get<int>());
  }
  return taps;
}

json parse_document(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
}

void check_version(const json& doc) {
  const json& v = field(doc, "version", "$");
  if (!v.is_number_integer() || v.get<int>() != 1) structural("$.version", "unsupported version");
}

}  // namespace

std::string serialize_model(const MultiTaskModel& model) {
  json doc;
  doc["version"] = 1;
  doc["backbone"] = encode_network(model.backbone);
  doc["c_p"] = encode_network(model.primary_head);
  doc["c_wm"] = encode_network(model.wm_head);
  doc["taps"] = model.taps;
  return doc.dump();
}

MultiTaskModel deserialize_model(std::string_view text) {
  json doc = parse_document(text);
  check_version(doc);
  MultiTaskModel model;
  model.backbone = decode_network(field(doc, "backbone", "$"), "$.backbone");
  model.primary_head = decode_network(field(doc, "c_p", "$"), "$.c_p");
  model.wm_head = decode_network(field(doc, "c_wm", "$"), "$.c_wm");
  model.taps = decode_taps(field(doc, "taps", "$"), "$.taps");
  try {
    model.validate(/*require_wm_head=*/false);
  } catch (const Error& e) {
    structural("$", e.what());
  }
  return model;
}

std::string serialize_head(const WatermarkHead& head) {
  json doc;
  doc["version"] = 1;
  doc["c_wm"] = encode_network(head.net);
  doc["taps"] = head.taps;
  return doc.dump();
}

WatermarkHead deserialize_head(std::string_view text) {
  json doc = parse_document(text);
  check_version(doc);
  WatermarkHead head;
  head.net = decode_network(field(doc, "c_wm", "$"), "$.c_wm");
  head.taps = decode_taps(field(doc, "taps", "$"), "$.taps");
  if (head.net.empty()) structural("$.c_wm", "watermark head has no layers");
  return head;
}

Digest model_hash(const MultiTaskModel& model) { return sha256(serialize_model(model)); }

Digest head_hash(const WatermarkHead& head) { return sha256(serialize_head(head)); }

}  // namespace mtlwm
