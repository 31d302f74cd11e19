#include "mtlwm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mtlwm/errors.hpp"
#include "mtlwm/verification.hpp"

namespace mtlwm {

using Eigen::MatrixXd;

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::ft: return "ft";
    case AttackKind::ftll: return "ftll";
    case AttackKind::rtll: return "rtll";
    case AttackKind::np: return "np";
    case AttackKind::fp: return "fp";
    case AttackKind::overwrite: return "overwrite";
    case AttackKind::forge: return "forge";
  }
  return "ft";
}

AttackKind attack_kind_from_string(std::string_view name) {
  for (auto k : {AttackKind::ft, AttackKind::ftll, AttackKind::rtll, AttackKind::np, AttackKind::fp,
                 AttackKind::overwrite, AttackKind::forge}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("attack: rho must lie in [0, 1]");
  for (double r : rho_grid) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("attack: rho grid values must lie in [0, 1]");
  }
  if (!(lr >= 0.0)) throw ConfigError("attack: lr must be >= 0");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    throw ConfigError("attack: subset_fraction must lie in (0, 1]");
  }
  if (epochs < 0 || batch_size < 1) throw ConfigError("attack: invalid epochs or batch size");
}

namespace {

enum class Trainable { all, last };

void tune_primary(MultiTaskModel& model, const LabeledDataset& data, double lr, int epochs,
                  int batch_size, Trainable which, std::uint64_t seed, const PruneMask* mask) {
  if (lr == 0.0 || epochs == 0 || data.size() == 0) return;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  MatrixXd x(data.inputs.rows(), 0);
  std::vector<int> y;
  try {
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const auto len = std::min<std::size_t>(batch_size, order.size() - start);
        x.resize(data.inputs.rows(), static_cast<Eigen::Index>(len));
        y.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
          x.col(static_cast<Eigen::Index>(i)) = data.inputs.col(static_cast<Eigen::Index>(order[start + i]));
          y[i] = data.labels[order[start + i]];
        }
        auto lg = backward(model, x, y, Head::primary);
        if (!std::isfinite(lg.loss)) throw AttackError("fine-tuning diverged");
        if (which == Trainable::all) sgd_step(model.backbone, lg.grads.backbone, lr);
        sgd_step(model.primary_head, lg.grads.primary_head, lr);
        if (mask) mask->apply(model.backbone);
      }
    }
  } catch (const NumericalError& e) {
    throw AttackError(std::string("fine-tuning diverged: ") + e.what());
  }
}

}  // namespace

MultiTaskModel fine_tune(const MultiTaskModel& model, const LabeledDataset& adversary,
                         const AttackConfig& cfg) {
  cfg.validate();
  MultiTaskModel out = model;
  Trainable which = Trainable::all;
  switch (cfg.kind) {
    case AttackKind::ft: which = Trainable::all; break;
    case AttackKind::ftll: which = Trainable::last; break;
    case AttackKind::rtll: {
      which = Trainable::last;
      std::vector<LayerSpec> specs;
      for (const auto& l : out.primary_head.layers) specs.push_back({l.in_dim(), l.out_dim(), l.activation});
      out.primary_head = Network::random(specs, derive_seed(cfg.seed, 0x72746c6c));
      break;
    }
    default: throw ConfigError("fine_tune expects an ft, ftll or rtll configuration");
  }
  tune_primary(out, adversary, cfg.lr, cfg.epochs, cfg.batch_size, which,
               derive_seed(cfg.seed, 0x6674), nullptr);
  return out;
}

PrunedModel neuron_prune(const MultiTaskModel& model, double rho) {
  PrunedModel out{model, {}};
  out.mask = apply_prune_mask(out.model, rho);
  return out;
}

PrunedModel fine_prune(const MultiTaskModel& model, const LabeledDataset& adversary,
                       const AttackConfig& cfg) {
  cfg.validate();
  PrunedModel out = neuron_prune(model, cfg.rho);
  tune_primary(out.model, adversary, cfg.lr, cfg.epochs, cfg.batch_size, Trainable::all,
               derive_seed(cfg.seed, 0x6670), &out.mask);
  return out;
}

AttackReport prune_to_break(const MultiTaskModel& model, const WatermarkDataset& wm,
                            const LabeledDataset& test, double gamma, std::vector<double> grid) {
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("rho grid must be ascending");
  const auto labels = wm.labels();
  AttackReport report;
  report.kind = "np";
  report.primary_before = primary_accuracy(model, test);
  report.wm_before = watermark_accuracy(model, wm.inputs, labels);
  report.primary_after = report.primary_before;
  report.wm_after = report.wm_before;
  for (double rho : grid) {
    auto pruned = neuron_prune(model, rho);
    SweepRow row{rho, primary_accuracy(pruned.model, test),
                 watermark_accuracy(pruned.model, wm.inputs, labels)};
    report.sweep.push_back(row);
    if (!report.break_rho && row.wm_accuracy < gamma) {
      report.break_rho = rho;
      report.decline_at_break = report.primary_before - row.primary_accuracy;
      report.primary_after = row.primary_accuracy;
      report.wm_after = row.wm_accuracy;
    }
  }
  return report;
}

OverwriteResult overwrite(const MultiTaskModel& stolen, const LabeledDataset& adversary,
                          const AttackConfig& cfg, const WatermarkHead* host_head,
                          const WatermarkDataset* host_wm) {
  cfg.validate();
  OverwriteResult out;
  out.adversary_key = WatermarkKey::make(cfg.adversary_secret, cfg.adversary_n, cfg.adversary_m);
  MultiTaskModel model = stolen.published();
  model.taps = cfg.head_template.taps;
  std::sort(model.taps.begin(), model.taps.end());
  model.wm_head = build_wm_head(model.backbone, model.taps, cfg.head_template.hidden,
                                derive_seed(cfg.seed, 0x6f77));
  auto adv_wm = build_wm_dataset(out.adversary_key, default_encoder(model, out.adversary_key));
  const auto adv_labels = adv_wm.labels();

  std::vector<int> grid = cfg.overwrite_epochs;
  std::sort(grid.begin(), grid.end());
  const int total_epochs = grid.empty() ? 0 : std::max(0, grid.back());

  MultiTaskModel host_branch;
  std::vector<int> host_labels;
  double baseline = 0.0;
  if (host_head && host_wm) {
    host_branch = assemble_branch(stolen, *host_head);
    host_labels = host_wm->labels();
    baseline = watermark_accuracy(host_branch, host_wm->inputs, host_labels);
    out.report.wm_before = baseline;
  }
  out.report.kind = "overwrite";
  out.report.overwrite_epochs = grid;

  auto record = [&](int epoch, const MultiTaskModel& current) {
    if (!std::binary_search(grid.begin(), grid.end(), epoch)) return;
    out.report.adversary_wm_series.push_back(watermark_accuracy(current, adv_wm.inputs, adv_labels));
    if (host_head && host_wm) {
      host_branch.backbone = current.backbone;
      host_branch.primary_head = current.primary_head;
      const double acc = watermark_accuracy(host_branch, host_wm->inputs, host_labels);
      out.report.original_wm_series.push_back(acc);
      out.report.fluctuation = std::max(out.report.fluctuation, std::abs(acc - baseline));
    }
  };
  record(0, model);

  TrainConfig tc = cfg.overwrite_train;
  tc.epochs_wm = total_epochs;
  tc.seed = derive_seed(cfg.seed, 0x6f7774);
  std::optional<CleanAnchor> anchor = CleanAnchor::of(model);
  try {
    embed_watermark(model, anchor, adversary, adv_wm, tc, record);
  } catch (const TrainingError& e) {
    throw AttackError(std::string("overwriting diverged: ") + e.what());
  }

  out.report.adversary_wm_accuracy = watermark_accuracy(model, adv_wm.inputs, adv_labels);
  if (host_head && host_wm) {
    host_branch.backbone = model.backbone;
    host_branch.primary_head = model.primary_head;
    out.report.wm_after = watermark_accuracy(host_branch, host_wm->inputs, host_labels);
  }
  out.adversary_head = model.watermark_head();
  out.model = model.published();
  return out;
}

ForgeResult forge(const MultiTaskModel& model, const AttackConfig& cfg) {
  ForgeResult out;
  out.key = WatermarkKey::make(cfg.adversary_secret, cfg.adversary_n, cfg.adversary_m);
  std::vector<int> taps = cfg.head_template.taps;
  std::sort(taps.begin(), taps.end());
  MultiTaskModel probe = model.published();
  auto wm = build_wm_dataset(out.key, default_encoder(probe, out.key));
  const MatrixXd features = tapped_features(probe.backbone, taps, wm.inputs);
  const auto width = features.rows();
  if (static_cast<Eigen::Index>(out.key.n) > width + 1) {
    throw ConfigError("forge: N = " + std::to_string(out.key.n) +
                      " exceeds the linear head capacity L + 1 = " + std::to_string(width + 1));
  }
  const auto labels = wm.labels();
  const Eigen::Index n = features.cols();

  // The logit margin is s(f) = v.f + c with logits (-s/2, s/2).
  Eigen::VectorXd v = Eigen::VectorXd::Zero(width);
  double c = 0.0;
  auto correct_count = [&]() {
    Eigen::VectorXd s = (features.transpose() * v).array() + c;
    int hit = 0;
    for (Eigen::Index j = 0; j < n; ++j) hit += (s[j] > 0.0) == (labels[j] == 1);
    return hit;
  };

  if (cfg.forge_method == ForgeMethod::direct) {
    // Minimum-norm affine interpolation of +-1 targets.
    MatrixXd a(n, width + 1);
    a.leftCols(width) = features.transpose();
    a.col(width).setOnes();
    Eigen::VectorXd t(n);
    for (Eigen::Index j = 0; j < n; ++j) t[j] = labels[j] == 1 ? 1.0 : -1.0;
    Eigen::VectorXd sol = a.completeOrthogonalDecomposition().solve(t);
    v = sol.head(width);
    c = sol[width];
    out.iterations = 1;
  } else {
    // Full-batch gradient descent on the logistic loss.
    const double scale = features.colwise().squaredNorm().maxCoeff() + 1.0;
    const double lr = 4.0 / scale;
    for (int it = 0; it < cfg.forge_max_iterations; ++it) {
      if (correct_count() == n) break;
      Eigen::VectorXd s = (features.transpose() * v).array() + c;
      Eigen::VectorXd g(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double y = labels[j] == 1 ? 1.0 : 0.0;
        g[j] = 1.0 / (1.0 + std::exp(-s[j])) - y;
      }
      v -= lr * (features * g) / static_cast<double>(n);
      c -= lr * g.mean();
      out.iterations = it + 1;
    }
  }

  DenseLayer layer;
  layer.activation = Activation::identity;
  layer.weight.resize(2, width);
  layer.weight.row(0) = -0.5 * v.transpose();
  layer.weight.row(1) = 0.5 * v.transpose();
  layer.bias.resize(2);
  layer.bias << -0.5 * c, 0.5 * c;
  out.head.net.layers.push_back(std::move(layer));
  out.head.taps = taps;

  MultiTaskModel branch = assemble_branch(probe, out.head);
  out.accuracy = watermark_accuracy(branch, wm.inputs, labels);
  out.separated = out.accuracy == 1.0;
  return out;
}

AttackReport run_attack(const MultiTaskModel& host, const LabeledDataset& adversary,
                        const EvalContext& eval, const AttackConfig& cfg) {
  cfg.validate();
  if (!eval.test || !eval.wm) throw ConfigError("run_attack needs a test set and the host dataset");
  const auto labels = eval.wm->labels();
  const WatermarkHead host_head = host.watermark_head();
  auto measure = [&](const MultiTaskModel& m, double& primary, double& wm_acc) {
    primary = primary_accuracy(m, *eval.test);
    MultiTaskModel branch = assemble_branch(m, host_head);
    wm_acc = watermark_accuracy(branch, eval.wm->inputs, labels);
  };

  auto tuning_data = [&] {
    return adversary.subset(sample_indices(adversary.size(), cfg.subset_fraction, cfg.seed));
  };

  AttackReport report;
  switch (cfg.kind) {
    case AttackKind::ft:
    case AttackKind::ftll:
    case AttackKind::rtll: {
      measure(host, report.primary_before, report.wm_before);
      auto tuned = fine_tune(host, tuning_data(), cfg);
      measure(tuned, report.primary_after, report.wm_after);
      break;
    }
    case AttackKind::fp: {
      measure(host, report.primary_before, report.wm_before);
      auto pruned = fine_prune(host, tuning_data(), cfg);
      measure(pruned.model, report.primary_after, report.wm_after);
      break;
    }
    case AttackKind::np: {
      std::vector<double> grid = cfg.rho_grid.empty() ? std::vector<double>{cfg.rho} : cfg.rho_grid;
      report = prune_to_break(assemble_branch(host, host_head), *eval.wm, *eval.test, eval.gamma,
                              grid);
      break;
    }
    case AttackKind::overwrite: {
      auto result = overwrite(host, adversary, cfg, &host_head, eval.wm);
      report = std::move(result.report);
      report.primary_before = primary_accuracy(host, *eval.test);
      report.primary_after = primary_accuracy(result.model, *eval.test);
      break;
    }
    case AttackKind::forge: {
      measure(host, report.primary_before, report.wm_before);
      auto result = forge(host, cfg);
      report.primary_after = report.primary_before;
      report.wm_after = report.wm_before;
      report.forged_accuracy = result.accuracy;
      report.forge_separated = result.separated;
      report.forge_iterations = result.iterations;
      break;
    }
  }
  report.kind = std::string(to_string(cfg.kind));
  return report;
}

}  // namespace mtlwm
