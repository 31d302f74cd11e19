#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlwm/attacks.hpp"
#include "mtlwm/verification.hpp"

namespace mtlwm {

// CSV artifacts. Column sets are fixed:
//   np sweep:      rho,primary_accuracy,wm_accuracy
//   fluctuation:   epoch,original_wm_accuracy,adversary_wm_accuracy
//   histogram:     bin_low,bin_high,count
//   quantiles:     quantile,value
std::string np_sweep_csv(const AttackReport& report);
std::string fluctuation_csv(const AttackReport& report);
// Equal-width bins over [0, 1]; the last bin is closed on the right.
std::string histogram_csv(const std::vector<double>& samples, int bins = 20);
std::string quantiles_csv(const GammaCalibration& cal);

void write_text(const std::filesystem::path& path, std::string_view text);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// Collects the known JSON artifacts of a run directory into one document and
// regenerates the derived CSV files next to it. Missing artifacts are skipped.
nlohmann::json consolidate_run(const std::filesystem::path& run_dir);

}  // namespace mtlwm
