#include "mtlwm/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mtlwm/errors.hpp"

namespace mtlwm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string np_sweep_csv(const AttackReport& report) {
  std::string out = "rho,primary_accuracy,wm_accuracy\n";
  for (const auto& row : report.sweep) {
    out += num(row.rho) + "," + num(row.primary_accuracy) + "," + num(row.wm_accuracy) + "\n";
  }
  return out;
}

std::string fluctuation_csv(const AttackReport& report) {
  std::string out = "epoch,original_wm_accuracy,adversary_wm_accuracy\n";
  for (std::size_t i = 0; i < report.overwrite_epochs.size(); ++i) {
    out += std::to_string(report.overwrite_epochs[i]) + ",";
    out += (i < report.original_wm_series.size() ? num(report.original_wm_series[i]) : "") + ",";
    out += (i < report.adversary_wm_series.size() ? num(report.adversary_wm_series[i]) : "") + "\n";
  }
  return out;
}

std::string histogram_csv(const std::vector<double>& samples, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (double s : samples) {
    int b = static_cast<int>(s * bins);
    counts[std::clamp(b, 0, bins - 1)]++;
  }
  std::string out = "bin_low,bin_high,count\n";
  for (int b = 0; b < bins; ++b) {
    out += num(static_cast<double>(b) / bins) + "," + num(static_cast<double>(b + 1) / bins) + "," +
           std::to_string(counts[b]) + "\n";
  }
  return out;
}

std::string quantiles_csv(const GammaCalibration& cal) {
  return "quantile,value\n0.5," + num(cal.q50) + "\n0.95," + num(cal.q95) + "\n0.999," + num(cal.q999) + "\n";
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  json doc = json::parse(read_text(path), nullptr, false);
  if (doc.is_discarded()) throw ParseError(path.string() + " is not valid JSON", 0);
  return doc;
}

namespace {

AttackReport attack_from_json(const json& j) {
  AttackReport r;
  r.kind = j.value("kind", "");
  for (const auto& row : j.value("sweep", json::array())) {
    r.sweep.push_back({row.at("rho").get<double>(), row.at("primary_accuracy").get<double>(),
                       row.at("wm_accuracy").get<double>()});
  }
  r.overwrite_epochs = j.value("overwrite_epochs", std::vector<int>{});
  r.original_wm_series = j.value("original_wm_series", std::vector<double>{});
  r.adversary_wm_series = j.value("adversary_wm_series", std::vector<double>{});
  return r;
}

}  // namespace

json consolidate_run(const fs::path& run_dir) {
  json report = json::object();
  if (!fs::exists(run_dir)) return report;
  for (const char* name : {"train_report.json", "ablation.json", "calibration.json", "attacks.json",
                           "resolution.json", "verify_report.json"}) {
    const fs::path p = run_dir / name;
    if (fs::exists(p)) report[fs::path(name).stem().string()] = read_json(p);
  }
  if (report.contains("calibration")) {
    const auto samples = report["calibration"].value("samples", std::vector<double>{});
    write_text(run_dir / "null_histogram.csv", histogram_csv(samples));
  }
  if (report.contains("attacks")) {
    for (const auto& a : report["attacks"]) {
      const AttackReport r = attack_from_json(a);
      if (r.kind == "np") write_text(run_dir / "np_sweep.csv", np_sweep_csv(r));
      if (r.kind == "overwrite") write_text(run_dir / "overwrite_fluctuation.csv", fluctuation_csv(r));
    }
  }
  return report;
}

}  // namespace mtlwm
