#include "mtlwm/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mtlwm/errors.hpp"

namespace mtlwm {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& doc, const char* key, T& out) {
  if (auto it = doc.find(key); it != doc.end() && !it->is_null()) out = it->get<T>();
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
  return *it;
}

std::string_view to_string(NullMode mode) {
  return mode == NullMode::foreign_key ? "foreign_key" : "random_head";
}

NullMode null_mode_from_string(std::string_view s) {
  if (s == "foreign_key") return NullMode::foreign_key;
  if (s == "random_head") return NullMode::random_head;
  throw ConfigError("unknown null mode '" + std::string(s) + "'");
}

std::string_view to_string(ForgeMethod m) { return m == ForgeMethod::direct ? "direct" : "logistic"; }

ForgeMethod forge_method_from_string(std::string_view s) {
  if (s == "logistic") return ForgeMethod::logistic;
  if (s == "direct") return ForgeMethod::direct;
  throw ConfigError("unknown forge method '" + std::string(s) + "'");
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return {{"weight_decay", c.weight_decay},       {"lambda_func", c.lambda_func},
          {"lambda_da", c.lambda_da},             {"lr_primary", c.lr_primary},
          {"lr_wm", c.lr_wm},                     {"epochs_primary", c.epochs_primary},
          {"epochs_wm", c.epochs_wm},             {"batch_size", c.batch_size},
          {"tuning_samples", c.tuning_samples},   {"tuning_steps", c.tuning_steps},
          {"lr_inner", c.lr_inner},               {"subset_fraction", c.subset_fraction},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& doc, TrainConfig c) {
  if (!doc.is_object()) throw ConfigError("train config must be an object");
  read(doc, "weight_decay", c.weight_decay);
  read(doc, "lambda_func", c.lambda_func);
  read(doc, "lambda_da", c.lambda_da);
  read(doc, "lr_primary", c.lr_primary);
  read(doc, "lr_wm", c.lr_wm);
  read(doc, "epochs_primary", c.epochs_primary);
  read(doc, "epochs_wm", c.epochs_wm);
  read(doc, "batch_size", c.batch_size);
  read(doc, "tuning_samples", c.tuning_samples);
  read(doc, "tuning_steps", c.tuning_steps);
  read(doc, "lr_inner", c.lr_inner);
  read(doc, "subset_fraction", c.subset_fraction);
  read(doc, "seed", c.seed);
  return c;
}

json attack_config_to_json(const AttackConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"rho", c.rho},
          {"rho_grid", c.rho_grid},
          {"subset_fraction", c.subset_fraction},
          {"adversary_secret", c.adversary_secret},
          {"adversary_n", c.adversary_n},
          {"adversary_m", c.adversary_m},
          {"overwrite_epochs", c.overwrite_epochs},
          {"overwrite_train", train_config_to_json(c.overwrite_train)},
          {"head_template", {{"taps", c.head_template.taps}, {"hidden", c.head_template.hidden}}},
          {"forge_method", std::string(to_string(c.forge_method))},
          {"forge_max_iterations", c.forge_max_iterations},
          {"seed", c.seed}};
}

AttackConfig attack_config_from_json(const json& doc, std::uint64_t default_seed) {
  if (!doc.is_object()) throw ConfigError("attack entries must be objects");
  AttackConfig c;
  c.seed = default_seed;
  c.kind = attack_kind_from_string(doc.at("kind").get<std::string>());
  read(doc, "lr", c.lr);
  read(doc, "epochs", c.epochs);
  read(doc, "batch_size", c.batch_size);
  read(doc, "rho", c.rho);
  read(doc, "rho_grid", c.rho_grid);
  read(doc, "subset_fraction", c.subset_fraction);
  read(doc, "adversary_secret", c.adversary_secret);
  read(doc, "adversary_n", c.adversary_n);
  read(doc, "adversary_m", c.adversary_m);
  read(doc, "overwrite_epochs", c.overwrite_epochs);
  if (doc.contains("overwrite_train")) {
    c.overwrite_train = train_config_from_json(doc["overwrite_train"], c.overwrite_train);
  }
  if (doc.contains("head_template")) {
    read(doc["head_template"], "taps", c.head_template.taps);
    read(doc["head_template"], "hidden", c.head_template.hidden);
  }
  if (doc.contains("forge_method")) c.forge_method = forge_method_from_string(doc["forge_method"].get<std::string>());
  read(doc, "forge_max_iterations", c.forge_max_iterations);
  read(doc, "seed", c.seed);
  c.validate();
  return c;
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  ExperimentConfig cfg;
  try {
    read(doc, "seed", cfg.seed);
    read(doc, "output_dir", cfg.output_dir);

    const json& ds = section(doc, "dataset");
    read(ds, "kind", cfg.dataset.kind);
    read(ds, "path", cfg.dataset.path);
    read(ds, "classes", cfg.dataset.classes);
    read(ds, "dim", cfg.dataset.dim);
    read(ds, "n_per_class", cfg.dataset.n_per_class);
    read(ds, "spread", cfg.dataset.spread);
    cfg.dataset.split.seed = cfg.seed;
    if (ds.contains("split")) {
      const json& sp = ds["split"];
      read(sp, "train", cfg.dataset.split.train);
      read(sp, "test", cfg.dataset.split.test);
      read(sp, "adversary", cfg.dataset.split.adversary);
      read(sp, "seed", cfg.dataset.split.seed);
    }

    const json& md = section(doc, "model");
    read(md, "input_dim", cfg.model.input_dim);
    read(md, "backbone", cfg.model.backbone_widths);
    if (md.contains("activation")) {
      cfg.model.backbone_activation = activation_from_string(md["activation"].get<std::string>());
    }
    cfg.model.num_classes = cfg.dataset.classes;
    read(md, "num_classes", cfg.model.num_classes);
    read(md, "primary_hidden", cfg.model.primary_hidden);
    read(md, "wm_hidden", cfg.model.wm_hidden);
    read(md, "taps", cfg.model.taps);

    const json& key = section(doc, "key");
    read(key, "secret", cfg.key.secret);
    read(key, "n", cfg.key.n);
    read(key, "m", cfg.key.m);
    read(key, "encoder", cfg.key.encoder);
    read(key, "grid_height", cfg.key.grid_height);

    TrainConfig train;
    train.seed = cfg.seed;
    cfg.train = train_config_from_json(section(doc, "train"), train);

    if (auto it = doc.find("attacks"); it != doc.end()) {
      if (!it->is_array()) throw ConfigError("'attacks' must be an array");
      for (const auto& a : *it) cfg.attacks.push_back(attack_config_from_json(a, cfg.seed));
    }

    const json& ver = section(doc, "verification");
    read(ver, "gamma", cfg.verification.gamma);
    read(ver, "target", cfg.verification.target);
    read(ver, "trials", cfg.verification.trials);
    read(ver, "calibration_n", cfg.verification.calibration_n);
    if (ver.contains("null_mode")) cfg.verification.null_mode = null_mode_from_string(ver["null_mode"].get<std::string>());

    json notary_doc = section(doc, "notary");
    if (!notary_doc.contains("seed")) notary_doc["seed"] = cfg.seed;
    if (!notary_doc.contains("gamma")) notary_doc["gamma"] = cfg.verification.gamma;
    cfg.notary = notary::parse_sim_config(notary_doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json attacks = json::array();
  for (const auto& a : cfg.attacks) attacks.push_back(attack_config_to_json(a));
  return {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"dataset",
       {{"kind", cfg.dataset.kind},
        {"path", cfg.dataset.path},
        {"classes", cfg.dataset.classes},
        {"dim", cfg.dataset.dim},
        {"n_per_class", cfg.dataset.n_per_class},
        {"spread", cfg.dataset.spread},
        {"split",
         {{"train", cfg.dataset.split.train},
          {"test", cfg.dataset.split.test},
          {"adversary", cfg.dataset.split.adversary},
          {"seed", cfg.dataset.split.seed}}}}},
      {"model",
       {{"input_dim", cfg.model.input_dim},
        {"backbone", cfg.model.backbone_widths},
        {"activation", std::string(to_string(cfg.model.backbone_activation))},
        {"num_classes", cfg.model.num_classes},
        {"primary_hidden", cfg.model.primary_hidden},
        {"wm_hidden", cfg.model.wm_hidden},
        {"taps", cfg.model.taps}}},
      {"key",
       {{"secret", cfg.key.secret},
        {"n", cfg.key.n},
        {"m", cfg.key.m},
        {"encoder", cfg.key.encoder},
        {"grid_height", cfg.key.grid_height}}},
      {"train", train_config_to_json(cfg.train)},
      {"attacks", std::move(attacks)},
      {"verification",
       {{"gamma", cfg.verification.gamma},
        {"target", cfg.verification.target},
        {"trials", cfg.verification.trials},
        {"calibration_n", cfg.verification.calibration_n},
        {"null_mode", std::string(to_string(cfg.verification.null_mode))}}},
      {"notary", notary::sim_config_to_json(cfg.notary)}};
}

void ExperimentConfig::validate() const {
  if (dataset.kind != "blobs" && dataset.kind != "csv") {
    throw ConfigError("dataset.kind must be 'blobs' or 'csv'");
  }
  if (dataset.kind == "csv" && dataset.path.empty()) throw ConfigError("dataset.path is required for csv");
  if (dataset.classes < 2) throw ConfigError("dataset.classes must be >= 2");
  if (dataset.dim < 1) throw ConfigError("dataset.dim must be >= 1");
  if (dataset.kind == "blobs" && dataset.n_per_class < 1) throw ConfigError("dataset.n_per_class must be >= 1");
  if (!(dataset.spread > 0.0)) throw ConfigError("dataset.spread must be positive");
  const auto& sp = dataset.split;
  if (sp.train <= 0 || sp.test < 0 || sp.adversary < 0 || sp.train + sp.test + sp.adversary > 1.0 + 1e-9) {
    throw ConfigError("dataset.split fractions must be non-negative and sum to at most 1");
  }
  if (model.num_classes != dataset.classes) {
    throw ConfigError("model.num_classes (" + std::to_string(model.num_classes) +
                      ") differs from dataset.classes (" + std::to_string(dataset.classes) + ")");
  }
  if (model.input_dim < dataset.dim) {
    throw ConfigError("model.input_dim (" + std::to_string(model.input_dim) +
                      ") is smaller than dataset.dim (" + std::to_string(dataset.dim) + ")");
  }
  if (model.backbone_widths.empty()) throw ConfigError("model.backbone needs at least one layer");
  for (int t : model.taps) {
    if (t < 0 || t >= static_cast<int>(model.backbone_widths.size())) {
      throw ConfigError("model.taps index " + std::to_string(t) + " outside the backbone");
    }
  }
  if (model.taps.empty()) throw ConfigError("model.taps must name at least one backbone layer");
  if (key.encoder != "vector" && key.encoder != "grid") throw ConfigError("key.encoder must be 'vector' or 'grid'");
  watermark_key().validate();
  DomainEncoder enc = encoder();
  enc.validate();
  if (static_cast<int>(enc.input_dim()) != model.input_dim) {
    throw ConfigError("key encoder produces " + std::to_string(enc.input_dim()) +
                      " features, model.input_dim is " + std::to_string(model.input_dim));
  }
  train.validate();
  for (const auto& a : attacks) {
    a.validate();
    for (int t : a.head_template.taps) {
      if (t < 0 || t >= static_cast<int>(model.backbone_widths.size())) {
        throw ConfigError("attack head template tap " + std::to_string(t) + " outside the backbone");
      }
    }
    const std::uint32_t adv_m = a.adversary_m ? a.adversary_m : default_domain_bits(a.adversary_n);
    if ((a.kind == AttackKind::overwrite || a.kind == AttackKind::forge) &&
        adv_m > static_cast<std::uint32_t>(model.input_dim)) {
      throw ConfigError("adversary key width exceeds model.input_dim");
    }
  }
  if (!(verification.gamma > 0.5 && verification.gamma <= 1.0)) {
    throw ConfigError("verification.gamma must lie in (0.5, 1]");
  }
  if (!(verification.target > 0.0 && verification.target < 1.0)) {
    throw ConfigError("verification.target must lie in (0, 1)");
  }
  if (verification.calibration_n > (1u << 30)) throw ConfigError("verification.calibration_n too large");
  notary.validate();
}

WatermarkKey ExperimentConfig::watermark_key() const {
  WatermarkKey k = WatermarkKey::make(key.secret, key.n, key.m);
  return k;
}

DomainEncoder ExperimentConfig::encoder() const {
  const std::uint32_t m = key.m ? key.m : default_domain_bits(key.n);
  if (key.encoder == "grid") {
    if (key.grid_height == 0 || model.input_dim % key.grid_height != 0) {
      throw ConfigError("key.grid_height must divide model.input_dim");
    }
    return DomainEncoder::grid(key.grid_height, model.input_dim / key.grid_height, m);
  }
  return DomainEncoder::vector(model.input_dim, m);
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like path=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (node->is_null()) *node = json::object();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw ConfigError("override path '" + path + "' indexes an array with '" + part + "'");
      }
      if (idx >= node->size()) throw ConfigError("override path '" + path + "' index out of range");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      node = &(*node)[part];
    } else {
      throw ConfigError("override path '" + path + "' descends into a scalar");
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

json to_json(const TrainReport& r) {
  json doc{{"primary_loss", r.primary_loss},
           {"wm_loss", r.wm_loss},
           {"r_func", r.r_func},
           {"r_da", r.r_da},
           {"total_loss", r.total_loss},
           {"primary_accuracy", r.primary_accuracy},
           {"wm_accuracy", r.wm_accuracy},
           {"anchor_fingerprint", r.anchor_fingerprint},
           {"displacement", r.displacement},
           {"max_output_deviation", opt(r.max_output_deviation)}};
  return doc;
}

json to_json(const VerifyReport& r) {
  std::vector<int> correct(r.correct.begin(), r.correct.end());
  return {{"n", r.n},
          {"n_correct", r.n_correct},
          {"accuracy", r.accuracy},
          {"gamma", r.gamma},
          {"required", r.required},
          {"passed", r.passed},
          {"key_fingerprint", r.key_fingerprint},
          {"model_hash", r.model_hash},
          {"correct", correct},
          {"digest", to_hex(r.digest())}};
}

json to_json(const AttackReport& r) {
  json sweep = json::array();
  for (const auto& row : r.sweep) {
    sweep.push_back({{"rho", row.rho}, {"primary_accuracy", row.primary_accuracy}, {"wm_accuracy", row.wm_accuracy}});
  }
  json doc{{"kind", r.kind},
           {"primary_before", r.primary_before},
           {"primary_after", r.primary_after},
           {"wm_before", r.wm_before},
           {"wm_after", r.wm_after},
           {"sweep", std::move(sweep)},
           {"break_rho", opt(r.break_rho)},
           {"decline_at_break", opt(r.decline_at_break)},
           {"adversary_wm_accuracy", opt(r.adversary_wm_accuracy)},
           {"overwrite_epochs", r.overwrite_epochs},
           {"original_wm_series", r.original_wm_series},
           {"adversary_wm_series", r.adversary_wm_series},
           {"fluctuation", r.fluctuation},
           {"forged_accuracy", opt(r.forged_accuracy)},
           {"forge_separated", r.forge_separated ? json(*r.forge_separated) : json(nullptr)},
           {"forge_iterations", r.forge_iterations ? json(*r.forge_iterations) : json(nullptr)}};
  return doc;
}

json to_json(const GammaCalibration& c) {
  return {{"samples", c.samples},
          {"q50", c.q50},
          {"q95", c.q95},
          {"q999", c.q999},
          {"p_max", c.p_max},
          {"gamma", opt(c.gamma)},
          {"lambda", opt(c.lambda)},
          {"false_accept_bound", opt(c.false_accept_bound)},
          {"n", c.n},
          {"target", c.target}};
}

json key_to_json(const WatermarkKey& key) {
  return {{"secret_hex", to_hex(key.secret)}, {"n", key.n}, {"m", key.m}};
}

WatermarkKey key_from_json(const json& doc) {
  try {
    WatermarkKey key;
    if (doc.contains("secret_hex")) {
      key.secret = from_hex(doc["secret_hex"].get<std::string>());
    } else {
      key.secret = to_bytes(doc.at("secret").get<std::string>());
    }
    key.n = doc.at("n").get<std::uint32_t>();
    key.m = doc.contains("m") ? doc["m"].get<std::uint32_t>() : 0;
    if (key.m == 0) key.m = default_domain_bits(key.n);
    key.validate();
    return key;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed key document: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("malformed key document: ") + e.what());
  }
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  LabeledDataset full;
  if (cfg.dataset.kind == "csv") {
    full = load_csv(cfg.dataset.path, cfg.dataset.dim, cfg.dataset.classes);
  } else {
    full = gen_blobs(cfg.dataset.classes, cfg.dataset.dim, cfg.dataset.n_per_class, cfg.dataset.spread, cfg.seed);
  }
  PreparedData out;
  Split s = split(full, cfg.dataset.split);
  out.split.train = s.train.padded_to(cfg.model.input_dim);
  out.split.test = s.test.padded_to(cfg.model.input_dim);
  out.split.adversary = s.adversary.padded_to(cfg.model.input_dim);
  out.key = cfg.watermark_key();
  out.encoder = cfg.encoder();
  out.wm = build_wm_dataset(out.key, out.encoder);
  return out;
}

namespace {

TrainConfig anchored(TrainConfig train, std::uint64_t salt) {
  train.seed = derive_seed(train.seed, salt);
  return train;
}

}  // namespace

TrainedModel train_clean(const ExperimentConfig& cfg, const PreparedData& data) {
  TrainedModel out;
  out.clean = build_model(cfg.model, cfg.seed);
  auto primary = train_primary(out.clean, data.split.train, cfg.train);
  out.primary_report = std::move(primary.report);
  out.anchor = std::move(primary.anchor);
  out.clean_test_accuracy = data.split.test.size() ? primary_accuracy(out.clean, data.split.test) : 0.0;
  out.model = out.clean;
  return out;
}

TrainedModel embed_variant(const TrainedModel& clean, const PreparedData& data, const TrainConfig& train) {
  TrainedModel out = clean;
  out.model = clean.clean;
  out.embed_report = embed_watermark(out.model, out.anchor, data.split.train, data.wm, anchored(train, 0x656d));
  if (data.split.test.size()) {
    out.test_accuracy = primary_accuracy(out.model, data.split.test);
    out.embed_report.max_output_deviation = max_output_deviation(out.model, clean.clean, data.split.test);
  }
  out.wm_accuracy = out.embed_report.wm_accuracy;
  return out;
}

TrainedModel train_pipeline(const ExperimentConfig& cfg, const PreparedData& data) {
  return embed_variant(train_clean(cfg, data), data, cfg.train);
}

std::vector<AblationRun> run_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                      const TrainedModel& clean) {
  const double l1 = cfg.train.lambda_func > 0.0 ? cfg.train.lambda_func : TrainConfig{}.lambda_func;
  const double l2 = cfg.train.lambda_da > 0.0 ? cfg.train.lambda_da : TrainConfig{}.lambda_da;
  const std::pair<const char*, std::pair<double, double>> variants[] = {
      {"none", {0.0, 0.0}}, {"r_func", {l1, 0.0}}, {"r_da", {0.0, l2}}, {"both", {l1, l2}}};
  std::vector<AblationRun> runs;
  for (const auto& [name, lambdas] : variants) {
    AblationRun run;
    run.name = name;
    run.train = cfg.train;
    run.train.lambda_func = lambdas.first;
    run.train.lambda_da = lambdas.second;
    run.result = embed_variant(clean, data, run.train);
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<AttackReport> run_attacks(const ExperimentConfig& cfg, const PreparedData& data,
                                      const MultiTaskModel& model) {
  EvalContext eval{&data.split.test, &data.wm, cfg.verification.gamma};
  std::vector<AttackReport> reports;
  for (const auto& attack : cfg.attacks) {
    reports.push_back(run_attack(model, data.split.adversary, eval, attack));
  }
  return reports;
}

GammaCalibration run_calibration(const ExperimentConfig& cfg, const MultiTaskModel& model) {
  CalibrationConfig cc;
  cc.trials = cfg.verification.trials;
  cc.n = cfg.verification.calibration_n;
  cc.seed = cfg.seed;
  cc.mode = cfg.verification.null_mode;
  cc.target = cfg.verification.target;
  return calibrate_null(model.published(), model.watermark_head(), cc);
}

namespace {

Bytes text_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

bool committed(const notary::SimResult& sim, const std::string& label) {
  const auto* r = sim.find_request(label);
  return r && r->status == notary::RequestStatus::confirmed;
}

}  // namespace

OwnershipStory run_ownership_story(const ExperimentConfig& cfg, const PreparedData& data,
                                   const StoryTimeline& timeline) {
  if (cfg.notary.nodes < 2) throw ConfigError("the ownership story needs at least two notary nodes");
  OwnershipStory story;
  story.host = train_pipeline(cfg, data);
  const WatermarkHead host_head = story.host.model.watermark_head();

  auto configured = std::find_if(cfg.attacks.begin(), cfg.attacks.end(),
                                 [](const auto& a) { return a.kind == AttackKind::overwrite; });
  AttackConfig adv;
  if (configured != cfg.attacks.end()) {
    adv = *configured;
  } else {
    adv.kind = AttackKind::overwrite;
    adv.seed = derive_seed(cfg.seed, 0x616476);
    adv.overwrite_train = cfg.train;
  }
  // The adversary only holds the published model.
  story.adversary = overwrite(story.host.model.published(), data.split.adversary, adv, &host_head, &data.wm);

  const MultiTaskModel& stolen = story.adversary.model;
  story.host_on_stolen = verify(stolen, data.key, host_head, data.encoder, cfg.verification.gamma);
  story.adversary_on_stolen = verify(stolen, story.adversary.adversary_key, story.adversary.adversary_head,
                                     cfg.verification.gamma);

  const Bytes host_cwm = text_bytes(serialize_head(host_head));
  const Bytes adv_cwm = text_bytes(serialize_head(story.adversary.adversary_head));
  const Bytes stolen_bytes = text_bytes(serialize_model(stolen));

  using notary::ActionKind;
  notary::ScenarioAction host_pub;
  host_pub.tick = timeline.host_publish;
  host_pub.kind = ActionKind::publish;
  host_pub.node = 0;
  host_pub.key = data.key;
  host_pub.cwm = host_cwm;
  host_pub.label = "host-publish";

  notary::ScenarioAction adv_pub = host_pub;
  adv_pub.tick = timeline.adversary_publish;
  adv_pub.node = 1;
  adv_pub.key = story.adversary.adversary_key;
  adv_pub.cwm = adv_cwm;
  adv_pub.label = "adversary-publish";

  notary::ScenarioAction host_claim;
  host_claim.tick = timeline.claims;
  host_claim.kind = ActionKind::claim;
  host_claim.node = 0;
  host_claim.model = stolen_bytes;
  host_claim.cwm = host_cwm;
  host_claim.label = "host";

  notary::ScenarioAction adv_claim = host_claim;
  adv_claim.node = 1;
  adv_claim.cwm = adv_cwm;
  adv_claim.label = "adversary";

  story.scenario = {host_pub, adv_pub, host_claim, adv_claim};
  story.sim = notary::run_simulation(cfg.notary, story.scenario);
  story.host_publish_committed = committed(story.sim, "host-publish");
  story.adversary_publish_committed = committed(story.sim, "adversary-publish");
  for (const auto& r : story.sim.resolutions) {
    if (r.winner) story.winner = r.labels[*r.winner];
  }
  return story;
}

}  // namespace mtlwm
