// mtlwm command-line tool: train, verify, attack, bounds, calibrate, notary, report.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>

#include "mtlwm/errors.hpp"
#include "mtlwm/experiment.hpp"
#include "mtlwm/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtlwm;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;

void diagnose(std::string_view kind, std::string_view message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

fs::path output_dir(const ExperimentConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MTLWM_OUT"); env && *env) return env;
  return cfg.output_dir;
}


MultiTaskModel load_model(const fs::path& path) { return deserialize_model(read_text(path)); }

void write_model_set(const fs::path& dir, const TrainedModel& t, const WatermarkKey& key) {
  write_text(dir / "model.json", serialize_model(t.model.published()));
  write_text(dir / "model_full.json", serialize_model(t.model));
  write_text(dir / "cwm.json", serialize_head(t.model.watermark_head()));
  write_json(dir / "key.json", key_to_json(key));
}

json train_summary(const TrainedModel& t) {
  return {{"primary", to_json(t.primary_report)},
          {"embed", to_json(t.embed_report)},
          {"clean_test_accuracy", t.clean_test_accuracy},
          {"test_accuracy", t.test_accuracy},
          {"wm_accuracy", t.wm_accuracy},
          {"model_hash", to_hex(model_hash(t.model.published()))},
          {"cwm_hash", to_hex(head_hash(t.model.watermark_head()))}};
}

// Loads the watermarked model from a run directory, training it when absent.
MultiTaskModel trained_model(const ExperimentConfig& cfg, const PreparedData& data, const fs::path& dir) {
  const fs::path full = dir / "model_full.json";
  if (fs::exists(full)) return load_model(full);
  TrainedModel t = train_pipeline(cfg, data);
  write_model_set(dir, t, data.key);
  write_json(dir / "train_report.json", train_summary(t));
  return t.model;
}

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "experiment config (JSON)");
    cmd->add_option("-s,--set", overrides, "override a config field: dotted.path=value");
    cmd->add_option("-o,--out", out, "output directory (overrides config and MTLWM_OUT)");
  }
  ExperimentConfig load() const {
    if (!config.empty() && !fs::exists(config)) throw ConfigError("config file not found: " + config);
    return load_config(config, overrides);
  }
};

int cmd_train(const ConfigArgs& args, bool ablation) {
  ExperimentConfig cfg = args.load();
  const fs::path dir = output_dir(cfg, args.out);
  PreparedData data = prepare_data(cfg);
  write_json(dir / "config.json", config_to_json(cfg));
  if (!ablation) {
    TrainedModel t = train_pipeline(cfg, data);
    write_model_set(dir, t, data.key);
    write_json(dir / "train_report.json", train_summary(t));
    std::cout << "model " << to_hex(model_hash(t.model.published())) << "\n"
              << "clean test accuracy " << t.clean_test_accuracy << "\n"
              << "watermarked test accuracy " << t.test_accuracy << "\n"
              << "watermark accuracy " << t.wm_accuracy << "\n";
    return 0;
  }
  TrainedModel clean = train_clean(cfg, data);
  json summary = json::array();
  for (const auto& run : run_ablation(cfg, data, clean)) {
    const fs::path sub = dir / "ablation" / run.name;
    write_model_set(sub, run.result, data.key);
    json s = train_summary(run.result);
    s["name"] = run.name;
    s["lambda_func"] = run.train.lambda_func;
    s["lambda_da"] = run.train.lambda_da;
    write_json(sub / "train_report.json", s);
    summary.push_back({{"name", run.name},
                       {"lambda_func", run.train.lambda_func},
                       {"lambda_da", run.train.lambda_da},
                       {"test_accuracy", run.result.test_accuracy},
                       {"wm_accuracy", run.result.wm_accuracy},
                       {"displacement", run.result.embed_report.displacement},
                       {"model_hash", s["model_hash"]}});
    std::cout << std::left << std::setw(8) << run.name << " test " << run.result.test_accuracy << "  wm "
              << run.result.wm_accuracy << "\n";
  }
  write_json(dir / "ablation.json", summary);
  return 0;
}

struct VerifyArgs {
  std::string model, cwm, key, secret, report;
  std::uint32_t n = 0, m = 0;
  double gamma = 0.7;
};

int cmd_verify(const VerifyArgs& a) {
  WatermarkKey key;
  if (!a.key.empty()) {
    key = key_from_json(read_json(a.key));
  } else if (!a.secret.empty() && a.n > 0) {
    key = WatermarkKey::make(a.secret, a.n, a.m);
  } else {
    throw ConfigError("verify needs --key FILE or --secret with --n");
  }
  MultiTaskModel model = load_model(a.model);
  WatermarkHead head = deserialize_head(read_text(a.cwm));
  VerifyReport r = verify(model, key, head, a.gamma);
  json doc = to_json(r);
  if (!a.report.empty()) write_json(a.report, doc);
  doc.erase("correct");
  std::cout << doc.dump() << "\n";
  return r.passed ? 0 : kExitFail;
}

int cmd_attack(const ConfigArgs& args, const std::string& run_dir) {
  ExperimentConfig cfg = args.load();
  const fs::path dir = output_dir(cfg, args.out);
  const fs::path source = run_dir.empty() ? dir : fs::path(run_dir);
  if (cfg.attacks.empty()) throw ConfigError("config has no attacks");
  PreparedData data = prepare_data(cfg);
  MultiTaskModel model = trained_model(cfg, data, source);
  auto reports = run_attacks(cfg, data, model);
  json all = json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    all.push_back(to_json(r));
    if (r.kind == "np") write_text(dir / "np_sweep.csv", np_sweep_csv(r));
    if (r.kind == "overwrite") write_text(dir / "overwrite_fluctuation.csv", fluctuation_csv(r));
    std::cout << std::left << std::setw(10) << r.kind << " primary " << r.primary_before << " -> "
              << r.primary_after << "  wm " << r.wm_before << " -> " << r.wm_after;
    if (r.kind == "np") {
      std::cout << "  break rho " << (r.break_rho ? std::to_string(*r.break_rho) : "none");
    }
    if (r.adversary_wm_accuracy) std::cout << "  adversary wm " << *r.adversary_wm_accuracy;
    if (r.forged_accuracy) std::cout << "  forged " << *r.forged_accuracy;
    std::cout << "\n";
  }
  write_json(dir / "attacks.json", all);
  return 0;
}

struct BoundsArgs {
  std::vector<std::uint32_t> n{600};
  double tau = 0.5;
  double p = 0.575;
  double gamma = 0.7;
  std::optional<double> lambda;
  bool as_json = false;
};

int cmd_bounds(const BoundsArgs& a) {
  if (!(a.gamma > 0.5 && a.gamma <= 1.0)) throw ConfigError("--gamma must lie in (0.5, 1]");
  if (!(a.p > 0.0 && a.p < 1.0)) throw ConfigError("--p must lie in (0, 1)");
  if (!(a.tau >= 0.0 && a.tau <= 1.0)) throw ConfigError("--tau must lie in [0, 1]");
  json rows = json::array();
  for (std::uint32_t n : a.n) {
    if (n == 0) throw ConfigError("--n must be positive");
    const DomainBits bits = min_domain_bits(n, a.tau);
    const double lambda = a.lambda ? *a.lambda : optimize_lambda(a.p, a.gamma);
    const double bound = chernoff_bound(a.p, a.gamma, n, lambda);
    rows.push_back({{"n", n},
                    {"m_default", bits.default_bits},
                    {"m_min", bits.minimum},
                    {"default_sufficient", bits.default_sufficient},
                    {"tau", a.tau},
                    {"p", a.p},
                    {"gamma", a.gamma},
                    {"lambda", std::isfinite(lambda) ? json(lambda) : json("inf")},
                    {"lambda_source", a.lambda ? "given" : "optimal"},
                    {"false_accept_bound", bound}});
  }
  if (a.as_json) {
    std::cout << rows.dump(2) << "\n";
    return 0;
  }
  std::cout << std::left << std::setw(8) << "N" << std::setw(11) << "m_default" << std::setw(7) << "m_min"
            << std::setw(6) << "tau" << std::setw(8) << "p" << std::setw(7) << "gamma" << std::setw(12)
            << "lambda" << "bound\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(8) << r["n"].get<std::uint32_t>() << std::setw(11)
              << r["m_default"].get<std::uint32_t>() << std::setw(7) << r["m_min"].get<std::uint32_t>()
              << std::setw(6) << a.tau << std::setw(8) << a.p << std::setw(7) << a.gamma << std::setw(12)
              << (r["lambda"].is_number() ? std::to_string(r["lambda"].get<double>()) : std::string("inf"))
              << std::scientific << std::setprecision(3) << r["false_accept_bound"].get<double>()
              << std::defaultfloat << std::setprecision(6) << "\n";
  }
  return 0;
}

int cmd_calibrate(const ConfigArgs& args, const std::string& run_dir) {
  ExperimentConfig cfg = args.load();
  const fs::path dir = output_dir(cfg, args.out);
  const fs::path source = run_dir.empty() ? dir : fs::path(run_dir);
  PreparedData data = prepare_data(cfg);
  MultiTaskModel model = trained_model(cfg, data, source);
  GammaCalibration cal = run_calibration(cfg, model);
  write_json(dir / "calibration.json", to_json(cal));
  write_text(dir / "null_quantiles.csv", quantiles_csv(cal));
  write_text(dir / "null_histogram.csv", histogram_csv(cal.samples));
  std::cout << "trials " << cal.samples.size() << "  N " << cal.n << "\n"
            << "q50 " << cal.q50 << "  q95 " << cal.q95 << "  q999 " << cal.q999 << "\n";
  if (cal.gamma) {
    std::cout << "recommended gamma " << *cal.gamma << "  bound " << *cal.false_accept_bound << "\n";
  } else {
    std::cout << "no gamma on the grid meets target " << cal.target << "\n";
  }
  return 0;
}

int cmd_notary(const ConfigArgs& args, const std::string& scenario_path, bool story) {
  ExperimentConfig cfg = args.load();
  const fs::path dir = output_dir(cfg, args.out);
  notary::SimResult sim;
  json summary;
  if (story) {
    PreparedData data = prepare_data(cfg);
    OwnershipStory s = run_ownership_story(cfg, data);
    sim = std::move(s.sim);
    summary = sim.summary();
    summary["host_verifies_stolen"] = s.host_on_stolen.passed;
    summary["adversary_verifies_stolen"] = s.adversary_on_stolen.passed;
    summary["winner"] = s.winner ? json(*s.winner) : json(nullptr);
  } else {
    if (scenario_path.empty()) throw ConfigError("notary needs --scenario FILE or --story");
    json doc = read_json(scenario_path);
    const auto base = fs::path(scenario_path).parent_path();
    notary::Scenario scenario = notary::parse_scenario(doc, base.empty() ? "." : base.string());
    sim = notary::run_simulation(cfg.notary, scenario);
    summary = sim.summary();
  }
  write_text(dir / "trace.jsonl", sim.trace_jsonl());
  write_json(dir / "resolution.json", summary);
  std::cout << "safety violations " << sim.safety_violations << "\n";
  for (const auto& r : sim.requests) {
    if (r.kind == "attestation") continue;
    std::cout << r.kind << " " << (r.label.empty() ? "-" : r.label) << " " << to_string(r.status) << "\n";
  }
  for (const auto& c : sim.claims) {
    std::cout << "claim " << (c.label.empty() ? "-" : c.label) << " attestations " << c.attestations
              << " positive " << c.positive << (c.verified ? " verified" : " rejected") << "\n";
  }
  for (const auto& r : sim.resolutions) {
    std::cout << "resolution " << to_hex(r.model_hash).substr(0, 16) << " winner "
              << (r.winner ? r.labels[*r.winner] : std::string("none")) << "\n";
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  json report = consolidate_run(run_dir);
  if (fs::exists(run_dir)) write_json(fs::path(run_dir) / "report.json", report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task watermark toolkit"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  bool ablation = false;
  auto* train = app.add_subcommand("train", "train a clean model and embed the watermark");
  train_args.attach(train);
  train->add_flag("--ablation", ablation, "train the none / r_func / r_da / both variants");

  VerifyArgs verify_args;
  auto* verify_cmd = app.add_subcommand("verify", "ownership test against a published model");
  verify_cmd->add_option("--model", verify_args.model, "published model file")->required();
  verify_cmd->add_option("--cwm", verify_args.cwm, "watermark head file")->required();
  verify_cmd->add_option("--key", verify_args.key, "key file (JSON)");
  verify_cmd->add_option("--secret", verify_args.secret, "key secret (text)");
  verify_cmd->add_option("--n", verify_args.n, "number of watermark points");
  verify_cmd->add_option("--m", verify_args.m, "domain bits (0: default)");
  verify_cmd->add_option("--gamma", verify_args.gamma, "threshold");
  verify_cmd->add_option("--report", verify_args.report, "write the full report here");

  ConfigArgs attack_args;
  std::string attack_run;
  auto* attack = app.add_subcommand("attack", "run the configured attacks");
  attack_args.attach(attack);
  attack->add_option("--run-dir", attack_run, "directory holding model_full.json");

  BoundsArgs bounds_args;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  auto* bounds = app.add_subcommand("bounds", "domain width and false-accept bounds");
  bounds->add_option("--n", bounds_args.n, "watermark sizes");
  bounds->add_option("--tau", bounds_args.tau, "tolerated overlap fraction");
  bounds->add_option("--p", bounds_args.p, "null accuracy");
  bounds->add_option("--gamma", bounds_args.gamma, "threshold");
  auto* lambda_opt = bounds->add_option("--lambda", lambda, "Chernoff parameter (default: optimal)");
  bounds->add_flag("--json", bounds_args.as_json, "emit JSON");

  ConfigArgs cal_args;
  std::string cal_run;
  auto* calibrate = app.add_subcommand("calibrate", "null distribution and recommended gamma");
  cal_args.attach(calibrate);
  calibrate->add_option("--run-dir", cal_run, "directory holding model_full.json");

  ConfigArgs notary_args;
  std::string scenario;
  bool story = false;
  auto* notary_cmd = app.add_subcommand("notary", "run the notary simulation");
  notary_args.attach(notary_cmd);
  notary_cmd->add_option("--scenario", scenario, "scenario script (JSON)");
  notary_cmd->add_flag("--story", story, "train, overwrite and resolve the full ownership story");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "consolidate a run directory");
  report->add_option("run_dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args, ablation);
    if (*verify_cmd) {
      try {
        return cmd_verify(verify_args);
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        diagnose("structural", e.what());
        return kExitConfig;
      }
    }
    if (*attack) return cmd_attack(attack_args, attack_run);
    if (*bounds) {
      if (lambda_opt->count()) bounds_args.lambda = lambda;
      return cmd_bounds(bounds_args);
    }
    if (*calibrate) return cmd_calibrate(cal_args, cal_run);
    if (*notary_cmd) return cmd_notary(notary_args, scenario, story);
    if (*report) return cmd_report(report_dir);
  } catch (const TrainingError& e) {
    diagnose("training", e.what());
    return kExitTraining;
  } catch (const AttackError& e) {
    diagnose("attack", e.what());
    return kExitTraining;
  } catch (const ConfigError& e) {
    diagnose("config", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    diagnose("parse", e.what());
    return kExitConfig;
  } catch (const NotFoundError& e) {
    diagnose("not-found", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    diagnose("error", e.what());
    return kExitFail;
  } catch (const std::exception& e) {
    diagnose("internal", e.what());
    return kExitFail;
  }
  return 0;
}
