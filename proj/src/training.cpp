#include "mtlwm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mtlwm/errors.hpp"

namespace mtlwm {

using Eigen::MatrixXd;

void TrainConfig::validate() const {
  for (double v : {weight_decay, lambda_func, lambda_da, lr_primary, lr_wm, lr_inner}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("training rates must be finite and >= 0");
  }
  if (epochs_primary < 0 || epochs_wm < 0) throw ConfigError("epoch counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lambda_da > 0.0 && (tuning_samples < 1 || tuning_steps < 0)) {
    throw ConfigError("R_DA needs tuning_samples >= 1 and tuning_steps >= 0");
  }
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    throw ConfigError("subset_fraction must lie in (0, 1]");
  }
}

CleanAnchor CleanAnchor::of(const MultiTaskModel& model) {
  return {model.backbone, model.primary_head};
}

Digest CleanAnchor::fingerprint() const {
  MultiTaskModel m;
  m.backbone = backbone;
  m.primary_head = primary_head;
  return model_hash(m);
}

namespace {

struct Batch {
  MatrixXd x;
  std::vector<int> y;
};

Batch gather(const MatrixXd& inputs, std::span<const int> labels,
             std::span<const std::size_t> order) {
  Batch b;
  b.x.resize(inputs.rows(), static_cast<Eigen::Index>(order.size()));
  b.y.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    b.x.col(static_cast<Eigen::Index>(i)) = inputs.col(static_cast<Eigen::Index>(order[i]));
    b.y[i] = labels[order[i]];
  }
  return b;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Primary SGD over the given sample order, in batches.
double primary_epoch(MultiTaskModel& model, const LabeledDataset& data,
                     std::span<const std::size_t> order, int batch_size, double lr,
                     double weight_decay) {
  std::vector<double> losses;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto len = std::min<std::size_t>(batch_size, order.size() - start);
    Batch b = gather(data.inputs, data.labels, order.subspan(start, len));
    auto lg = backward(model, b.x, b.y, Head::primary);
    if (!std::isfinite(lg.loss)) throw NumericalError("non-finite primary loss", -1);
    sgd_step(model.backbone, lg.grads.backbone, lr, weight_decay);
    sgd_step(model.primary_head, lg.grads.primary_head, lr, weight_decay);
    losses.push_back(lg.loss);
  }
  return mean(losses);
}

}  // namespace

double primary_accuracy(const MultiTaskModel& model, const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  return accuracy(forward(model, data.inputs, Head::primary).logits(), data.labels);
}

double watermark_accuracy(const MultiTaskModel& model, const MatrixXd& inputs,
                          std::span<const int> labels) {
  if (inputs.cols() == 0) return 0.0;
  return accuracy(forward(model, inputs, Head::watermark).logits(), labels);
}

double max_output_deviation(const MultiTaskModel& a, const MultiTaskModel& b,
                            const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  const MatrixXd la = forward(a, data.inputs, Head::primary).logits();
  const MatrixXd lb = forward(b, data.inputs, Head::primary).logits();
  return (la - lb).cwiseAbs().maxCoeff();
}

PrimaryTraining train_primary(MultiTaskModel& model, const LabeledDataset& data,
                              const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  PrimaryTraining out;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7072696d));
  auto order = iota_n(data.size());
  try {
    for (int epoch = 0; epoch < cfg.epochs_primary; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      const double loss =
          primary_epoch(model, data, order, cfg.batch_size, cfg.lr_primary, cfg.weight_decay);
      if (!std::isfinite(loss)) throw TrainingError("primary training diverged");
      out.report.primary_loss.push_back(loss);
      out.report.total_loss.push_back(loss);
    }
  } catch (const NumericalError& e) {
    throw TrainingError(std::string("primary training diverged: ") + e.what());
  }
  out.anchor = CleanAnchor::of(model);
  out.report.anchor_fingerprint = to_hex(out.anchor.fingerprint());
  out.report.primary_accuracy = primary_accuracy(model, data);
  out.report.displacement = 0.0;
  return out;
}

double r_func(const MultiTaskModel& model, const CleanAnchor& anchor) {
  return squared_distance(model.backbone, anchor.backbone) +
         squared_distance(model.primary_head, anchor.primary_head);
}

ModelGrads r_func_grad(const MultiTaskModel& model, const CleanAnchor& anchor) {
  ModelGrads g{model.backbone, model.primary_head, model.wm_head.zeros_like()};
  axpy(g.backbone, -1.0, anchor.backbone);
  axpy(g.primary_head, -1.0, anchor.primary_head);
  for (auto* net : {&g.backbone, &g.primary_head}) {
    for (auto& l : net->layers) {
      l.weight *= 2.0;
      l.bias *= 2.0;
    }
  }
  return g;
}

MultiTaskModel simulate_tuning(const MultiTaskModel& model, const LabeledDataset& data,
                               const TrainConfig& cfg, std::uint64_t seed) {
  MultiTaskModel tuned = model;
  if (cfg.tuning_steps == 0 || data.size() == 0) return tuned;
  auto subset = sample_indices(data.size(), cfg.subset_fraction, seed);
  if (subset.empty()) return tuned;
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::size_t cursor = subset.size();
  for (int step = 0; step < cfg.tuning_steps; ++step) {
    if (cursor >= subset.size()) {
      std::shuffle(subset.begin(), subset.end(), rng);
      cursor = 0;
    }
    const auto len = std::min<std::size_t>(cfg.batch_size, subset.size() - cursor);
    Batch b = gather(data.inputs, data.labels, std::span(subset).subspan(cursor, len));
    cursor += len;
    auto lg = backward(tuned, b.x, b.y, Head::primary);
    sgd_step(tuned.backbone, lg.grads.backbone, cfg.lr_inner, cfg.weight_decay);
    sgd_step(tuned.primary_head, lg.grads.primary_head, cfg.lr_inner, cfg.weight_decay);
  }
  return tuned;
}

TuningLoss r_da(const MultiTaskModel& model, const LabeledDataset& primary,
                const MatrixXd& wm_inputs, std::span<const int> wm_labels, const TrainConfig& cfg,
                std::span<const std::uint64_t> inner_seeds) {
  if (inner_seeds.empty()) throw ConfigError("r_da needs at least one tuning sample");
  TuningLoss out{0.0, zero_grads(model)};
  const double scale = 1.0 / static_cast<double>(inner_seeds.size());
  for (std::uint64_t seed : inner_seeds) {
    MultiTaskModel tuned = simulate_tuning(model, primary, cfg, seed);
    auto lg = backward(tuned, wm_inputs, wm_labels, Head::watermark);
    out.value += scale * lg.loss;
    axpy(out.grads.backbone, scale, lg.grads.backbone);
    axpy(out.grads.wm_head, scale, lg.grads.wm_head);
  }
  return out;
}

TrainReport embed_watermark(MultiTaskModel& model, const std::optional<CleanAnchor>& anchor,
                            const LabeledDataset& primary, const WatermarkDataset& wm,
                            const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (!anchor) throw StateError("embed_watermark requires the clean anchor w0 from primary training");
  model.validate();
  if (wm.inputs.rows() != model.input_dim()) {
    throw StructuralError("watermark inputs have " + std::to_string(wm.inputs.rows()) +
                          " features, model expects " + std::to_string(model.input_dim()));
  }
  const bool frozen = cfg.frozen_backbone();
  const bool use_da = cfg.lambda_da > 0.0;
  const auto labels = wm.labels();

  TrainReport report;
  report.anchor_fingerprint = to_hex(anchor->fingerprint());
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x776d));
  auto order = iota_n(wm.points.size());
  std::uint64_t step = 0;
  const std::uint64_t da_base = derive_seed(cfg.seed, 0x6461);

  try {
    for (int epoch = 0; epoch < cfg.epochs_wm; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<double> wm_terms, func_terms, da_terms, totals;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
        const auto len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
        Batch b = gather(wm.inputs, labels, std::span(order).subspan(start, len));

        auto lg = backward(model, b.x, b.y, Head::watermark);
        ModelGrads total = std::move(lg.grads);
        double func_value = 0.0;
        if (!frozen && cfg.lambda_func > 0.0) {
          func_value = r_func(model, *anchor);
          auto fg = r_func_grad(model, *anchor);
          axpy(total.backbone, cfg.lambda_func, fg.backbone);
          axpy(total.primary_head, cfg.lambda_func, fg.primary_head);
        }
        double da_value = 0.0;
        if (use_da) {
          std::vector<std::uint64_t> seeds(cfg.tuning_samples);
          for (int e = 0; e < cfg.tuning_samples; ++e) {
            seeds[e] = derive_seed(da_base, step * cfg.tuning_samples + e);
          }
          auto da = r_da(model, primary, b.x, b.y, cfg, seeds);
          da_value = da.value;
          axpy(total.backbone, cfg.lambda_da, da.grads.backbone);
          axpy(total.wm_head, cfg.lambda_da, da.grads.wm_head);
        }
        if (!frozen) {
          sgd_step(model.backbone, total.backbone, cfg.lr_wm);
          sgd_step(model.primary_head, total.primary_head, cfg.lr_wm);
        }
        sgd_step(model.wm_head, total.wm_head, cfg.lr_wm);

        const double lambda1 = frozen ? 0.0 : cfg.lambda_func;
        wm_terms.push_back(lg.loss);
        func_terms.push_back(func_value);
        da_terms.push_back(da_value);
        totals.push_back(lg.loss + lambda1 * func_value + cfg.lambda_da * da_value);
        if (!std::isfinite(totals.back())) throw TrainingError("watermark embedding diverged");
      }
      report.wm_loss.push_back(mean(wm_terms));
      report.r_func.push_back(mean(func_terms));
      report.r_da.push_back(mean(da_terms));
      report.total_loss.push_back(mean(totals));
      if (primary.size()) {
        report.primary_loss.push_back(
            cross_entropy(forward(model, primary.inputs, Head::primary).logits(), primary.labels));
      }
      if (on_epoch) on_epoch(epoch + 1, model);
    }
  } catch (const NumericalError& e) {
    throw TrainingError(std::string("watermark embedding diverged: ") + e.what());
  }

  report.wm_accuracy = watermark_accuracy(model, wm.inputs, labels);
  report.primary_accuracy = primary.size() ? primary_accuracy(model, primary) : 0.0;
  report.displacement = std::sqrt(r_func(model, *anchor));
  return report;
}

}  // namespace mtlwm
