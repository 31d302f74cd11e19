#pragma once

#include "mtlwm/experiment.hpp"

namespace fixtures {

// Desk-scale pipeline shrunk for unit tests: 4 blobs in 16 dims, N = 64.
inline mtlwm::ExperimentConfig small_config(std::uint64_t seed = 7) {
  mtlwm::ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.dataset.n_per_class = 100;
  cfg.dataset.split.seed = seed;
  cfg.key.n = 64;
  cfg.train.seed = seed;
  cfg.train.epochs_primary = 30;
  cfg.train.epochs_wm = 60;
  cfg.notary.seed = seed;
  cfg.validate();
  return cfg;
}

struct Trained {
  mtlwm::ExperimentConfig cfg;
  mtlwm::PreparedData data;
  mtlwm::TrainedModel trained;
};

// Trained once per test binary.
inline const Trained& small_trained() {
  static const Trained t = [] {
    Trained out;
    out.cfg = small_config();
    out.data = mtlwm::prepare_data(out.cfg);
    out.trained = mtlwm::train_pipeline(out.cfg, out.data);
    return out;
  }();
  return t;
}

}  // namespace fixtures
