// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtlwm/attacks.hpp"
#include "mtlwm/errors.hpp"
#include "mtlwm/experiment.hpp"
#include "mtlwm/notary/simulator.hpp"
#include "mtlwm/verification.hpp"
#include "mtlwm/wm_keys.hpp"

using namespace mtlwm;
using nlohmann::json;

namespace {

constexpr double kGamma = 0.7;
const std::vector<double> kRhoGrid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Exact P[Binomial(n, p) >= k].
double binomial_tail(std::uint32_t n, double p, std::uint32_t k) {
  double total = 0.0;
  for (std::uint32_t i = k; i <= n; ++i) {
    const double log_c = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    total += std::exp(log_c + i * std::log(p) + (n - i) * std::log1p(-p));
  }
  return total;
}

// Desk-scale blobs pipeline per seed: the clean model plus the variants with
// and without R_DA, all embedded from the same clean solution.
struct SeedRun {
  ExperimentConfig cfg;
  PreparedData data;
  TrainedModel clean;
  TrainedModel both;     // R_func + R_DA
  TrainedModel no_da;    // R_func only
};

const SeedRun& seed_run(std::uint64_t seed) {
  static std::map<std::uint64_t, SeedRun> cache;
  auto it = cache.find(seed);
  if (it != cache.end()) return it->second;
  SeedRun run;
  run.cfg = config_from_json(json{{"seed", seed}, {"notary", {{"drop_probability", 0.05}}}});
  run.cfg.validate();
  run.data = prepare_data(run.cfg);
  run.clean = train_clean(run.cfg, run.data);
  run.both = embed_variant(run.clean, run.data, run.cfg.train);
  TrainConfig no_da = run.cfg.train;
  no_da.lambda_da = 0.0;
  run.no_da = embed_variant(run.clean, run.data, no_da);
  return cache.emplace(seed, std::move(run)).first->second;
}

AttackConfig tuning_attack(AttackKind kind, std::uint64_t seed) {
  AttackConfig a;
  a.kind = kind;
  a.lr = 0.1 * TrainConfig{}.lr_primary;
  a.epochs = 20;
  a.subset_fraction = 0.25;
  a.rho = 0.2;
  a.seed = derive_seed(seed, 0x6174);
  return a;
}

double wm_after(const SeedRun& r, const TrainedModel& t, AttackKind kind) {
  EvalContext eval{&r.data.split.test, &r.data.wm, kGamma};
  return run_attack(t.model, r.data.split.adversary, eval, tuning_attack(kind, r.cfg.seed)).wm_after;
}

// --- criteria ---------------------------------------------------------------

Outcome c1_bounds() {
  const double v = chernoff_bound(0.575, 0.7, 600, 0.34);
  bool ok = v >= 1e-8 && v <= 1e-7;
  std::string detail = "bound(0.575,0.7,600,0.34)=" + fmt("%.4e", v) + " paper 2.69e-08 delta " +
                       fmt("%+.3e", v - 2.69e-8);
  for (double p : {0.1, 0.5, 0.575, 0.9}) {
    for (std::uint32_t n : {1u, 20u, 600u}) ok = ok && chernoff_bound(p, 0.95, n, 0.0) == 1.0;
  }
  std::size_t cases = 0, violations = 0;
  for (std::uint32_t n = 1; n <= 25; ++n) {
    for (double p : {0.5, 0.575}) {
      for (double gamma : {0.6, 0.7}) {
        const auto k = required_correct(gamma, n);
        const double tail = binomial_tail(n, p, k);
        for (double lambda : {0.1, 0.34, optimize_lambda(p, gamma), 2.0}) {
          ++cases;
          if (chernoff_bound(p, gamma, n, lambda) * (1.0 + 1e-12) < tail) ++violations;
        }
      }
    }
  }
  ok = ok && violations == 0;
  detail += "; lambda=0 -> 1; tail dominance " + std::to_string(cases - violations) + "/" + std::to_string(cases);
  return {ok, detail};
}

Outcome c2_domain() {
  const auto b = min_domain_bits(600, 0.5);
  bool ok = b.minimum == 19 && b.default_bits == 30 && b.default_bits >= b.minimum;
  const std::uint32_t n = 64, m = 18;
  const int trials = 10000;
  const auto enc = DomainEncoder::vector(m, m);
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto a = build_wm_dataset(WatermarkKey::make("mc-a/" + std::to_string(t), n, m), enc);
    const auto c = build_wm_dataset(WatermarkKey::make("mc-b/" + std::to_string(t), n, m), enc);
    const double k = static_cast<double>(matched_pairs(a, c));
    sum += k;
    sum_sq += k * k;
  }
  const double mean = sum / trials;
  const double var = std::max(0.0, sum_sq / trials - mean * mean);
  const double se = std::sqrt(var / trials);
  const double expected = static_cast<double>(n) * n / std::ldexp(1.0, m + 1);
  const bool within = std::abs(mean - expected) <= 3.0 * se;
  ok = ok && within;
  return {ok, "m_min(600,0.5)=" + std::to_string(b.minimum) + " m(600)=" + std::to_string(b.default_bits) +
                  "; matched pairs mean " + fmt("%.5f", mean) + " expected " + fmt("%.5f", expected) +
                  " 3se " + fmt("%.5f", 3 * se)};
}

Outcome c3_correctness() {
  const auto& r = seed_run(0);
  const auto head = r.both.model.watermark_head();
  const auto published = r.both.model.published();
  const auto own = verify(published, r.data.key, head, r.data.encoder, kGamma);
  int foreign_passes = 0;
  for (int i = 0; i < 100; ++i) {
    const auto key = WatermarkKey::make("foreign-owner-" + std::to_string(i), r.data.key.n);
    foreign_passes += verify(published, key, head, kGamma).passed;
  }
  const bool ok = r.both.wm_accuracy >= 0.99 && own.passed && foreign_passes == 0 && r.data.key.n == 256;
  return {ok, "own key acc " + fmt("%.4f", own.accuracy) + (own.passed ? " pass" : " FAIL") +
                  "; foreign keys passing " + std::to_string(foreign_passes) + "/100"};
}

Outcome c4_calibration() {
  const auto& r = seed_run(0);
  CalibrationConfig cfg;
  cfg.trials = 200;
  cfg.n = 600;
  cfg.seed = 0xca1;
  cfg.mode = NullMode::foreign_key;
  const auto cal = calibrate_null(r.both.model, r.both.model.watermark_head(), cfg);
  const auto [lo, hi] = std::minmax_element(cal.samples.begin(), cal.samples.end());
  const bool in_range = *lo >= 0.38 && *hi <= 0.62;
  const bool gamma_ok = cal.gamma && *cal.gamma <= 0.7 + 1e-12;
  return {in_range && gamma_ok,
          "K=200 N=600 range [" + fmt("%.4f", *lo) + ", " + fmt("%.4f", *hi) + "] q999 " + fmt("%.4f", cal.q999) +
              " recommended gamma " + (cal.gamma ? fmt("%.2f", *cal.gamma) : std::string("none"))};
}

Outcome c5_functionality() {
  const auto& r = seed_run(0);
  const double gap = std::abs(r.both.test_accuracy - r.clean.clean_test_accuracy);
  TrainConfig frozen = r.cfg.train;
  frozen.lambda_func = kFreezeSentinel;
  const auto sentinel = embed_variant(r.clean, r.data, frozen);
  const bool identical = sentinel.model.backbone == r.clean.clean.backbone &&
                         sentinel.model.primary_head == r.clean.clean.primary_head;
  return {gap <= 0.02 + 1e-12 && identical,
          "clean " + fmt("%.4f", r.clean.clean_test_accuracy) + " watermarked " + fmt("%.4f", r.both.test_accuracy) +
              " gap " + fmt("%.4f", gap) + "; sentinel backbone " + (identical ? "bit-identical" : "CHANGED")};
}

Outcome c6_tuning() {
  double ft_with = 0, ft_without = 0, fp_with = 0, fp_without = 0;
  bool stays = true;
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto& r = seed_run(seed);
    const double a = wm_after(r, r.both, AttackKind::ft);
    const double b = wm_after(r, r.no_da, AttackKind::ft);
    const double c = wm_after(r, r.both, AttackKind::fp);
    const double d = wm_after(r, r.no_da, AttackKind::fp);
    ft_with += a / 3;
    ft_without += b / 3;
    fp_with += c / 3;
    fp_without += d / 3;
    stays = stays && a >= kGamma && c >= kGamma;
  }
  const bool ok = ft_with >= ft_without && fp_with >= fp_without && stays;
  return {ok, "FT wm with/without R_DA " + fmt("%.4f", ft_with) + "/" + fmt("%.4f", ft_without) + "; FP " +
                  fmt("%.4f", fp_with) + "/" + fmt("%.4f", fp_without) + "; both-model >= gamma on all seeds: " +
                  (stays ? "yes" : "no")};
}

Outcome c7_overwrite() {
  const auto& r = seed_run(0);
  AttackConfig a;
  a.kind = AttackKind::overwrite;
  a.adversary_secret = "fresh-adversary-key";
  a.adversary_n = 256;
  a.overwrite_epochs = {10, 30, 50};
  a.overwrite_train = r.cfg.train;
  a.seed = 0x0f;
  const auto head = r.both.model.watermark_head();
  const auto res = overwrite(r.both.model.published(), r.data.split.adversary, a, &head, &r.data.wm);
  const auto& orig = res.report.original_wm_series;
  const auto& adv = res.report.adversary_wm_series;
  bool ok = orig.size() == 3 && adv.size() == 3;
  std::ostringstream series;
  for (std::size_t i = 0; ok && i < orig.size(); ++i) {
    ok = ok && orig[i] >= kGamma;
    series << " e" << a.overwrite_epochs[i] << "=" << fmt("%.3f", orig[i]) << "/" << fmt("%.3f", adv[i]);
  }
  ok = ok && !adv.empty() && adv.back() >= kGamma;
  return {ok, "original/adversary wm acc:" + series.str()};
}

Outcome c8_forge() {
  const auto& r = seed_run(0);
  const auto published = r.both.model.published();
  const auto before = model_hash(published);
  AttackConfig a;
  a.kind = AttackKind::forge;
  a.adversary_secret = "forger";
  a.adversary_n = 64;
  a.head_template.taps = {1, 2};
  a.head_template.hidden = {};
  const auto f = forge(published, a);
  const int width = f.head.net.in_dim();
  const auto v = verify(published, f.key, f.head, kGamma);
  const bool unchanged = model_hash(published) == before && model_hash(r.both.model.published()) == before;
  const bool ok = width == 128 && f.head.net.layers.size() == 1 && f.accuracy == 1.0 && unchanged && v.passed;
  return {ok, "L=" + std::to_string(width) + " N=64 forged acc " + fmt("%.3f", f.accuracy) + " in " +
                  std::to_string(f.iterations) + " iterations; hash " + (unchanged ? "unchanged" : "CHANGED") +
                  "; verify " + (v.passed ? "pass" : "fail")};
}

// Committed prefix of every node agrees with the global committed sequence.
bool prefixes_agree(const notary::SimResult& r) {
  for (std::size_t node = 0; node < r.logs.size(); ++node) {
    if (r.commit_index[node] > r.committed.size() || r.commit_index[node] > r.logs[node].size()) return false;
    for (std::uint64_t i = 0; i < r.commit_index[node]; ++i) {
      if (r.logs[node][i].digest != r.committed[i].digest) return false;
    }
  }
  return true;
}

Outcome c9_consensus() {
  const auto& base = seed_run(0);
  const Bytes cwm = [&] {
    const std::string s = serialize_head(base.both.model.watermark_head());
    return Bytes(s.begin(), s.end());
  }();
  auto publish = [&](std::uint64_t tick, int node, std::string label) {
    notary::ScenarioAction a;
    a.tick = tick;
    a.kind = notary::ActionKind::publish;
    a.node = node;
    a.key = base.data.key;
    a.cwm = cwm;
    a.label = std::move(label);
    return a;
  };
  auto crash = [](std::uint64_t tick, int node) {
    notary::ScenarioAction a;
    a.tick = tick;
    a.kind = node < 0 ? notary::ActionKind::crash_leader : notary::ActionKind::crash;
    a.node = node;
    return a;
  };

  int seeds = 50, leader_crashes = 0, violations = 0, divergent = 0, quorum_commits = 0, quorum_runs = 0, minority_commits = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    notary::SimConfig cfg;
    cfg.nodes = 5;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.drop_probability = 0.05;
    cfg.delay_min = 1;
    cfg.delay_max = 5;
    cfg.ticks = 10000;
    const notary::Scenario prefix{publish(1000, 0, "pre"), crash(2000, -1)};

    // Which leader the mid-run crash takes down; the prefix replays identically.
    notary::SimConfig probe = cfg;
    probe.ticks = 2001;
    std::set<int> dead;
    for (const auto& ev : notary::run_simulation(probe, prefix).trace) {
      if (ev["event"] == "crash") dead.insert(ev["node"].get<int>());
    }
    leader_crashes += !dead.empty();

    for (std::size_t target : {2u, 3u}) {
      notary::Scenario s = prefix;
      std::set<int> down = dead;
      std::uint64_t tick = 2200;
      for (int node = 0; node < cfg.nodes && down.size() < target; ++node) {
        if (down.insert(node).second) s.push_back(crash(tick += 100, node));
      }
      for (int node = 0; node < cfg.nodes; ++node) s.push_back(publish(4000, node, "post-" + std::to_string(node)));
      const auto r = notary::run_simulation(cfg, s);
      violations += static_cast<int>(r.safety_violations);
      divergent += !prefixes_agree(r);
      for (int node = 0; node < cfg.nodes; ++node) {
        if (down.count(node)) continue;
        const auto* req = r.find_request("post-" + std::to_string(node));
        const bool confirmed = req && req->status == notary::RequestStatus::confirmed;
        if (target == 2) {
          ++quorum_runs;
          quorum_commits += confirmed;
        } else {
          minority_commits += confirmed;
        }
      }
      if (target == 3) {
        for (const auto& e : r.committed) {
          if (const auto* p = std::get_if<notary::PublishMsg>(&e.payload); p && e.received_tick >= 4000) {
            ++minority_commits;
          }
        }
      }
    }
  }
  const bool ok = violations == 0 && divergent == 0 && quorum_commits == quorum_runs && minority_commits == 0;
  return {ok, std::to_string(seeds) + " seeds, leader crashed mid-run on " + std::to_string(leader_crashes) +
                  ": safety violations " + std::to_string(violations) +
                  ", divergent runs " + std::to_string(divergent) + "; publishes with <=2 crashed committed " +
                  std::to_string(quorum_commits) + "/" + std::to_string(quorum_runs) +
                  "; with 3 crashed committed " + std::to_string(minority_commits)};
}

Outcome c10_story() {
  const auto& r = seed_run(0);
  const auto story = run_ownership_story(r.cfg, r.data);
  std::size_t verified_claims = 0;
  for (const auto& c : story.sim.claims) verified_claims += c.verified;
  const auto replay = notary::run_simulation(r.cfg.notary, story.scenario);
  const bool replayable = replay.trace_jsonl() == story.sim.trace_jsonl();
  const bool ok = story.host_publish_committed && story.adversary_publish_committed &&
                  story.host_on_stolen.passed && story.adversary_on_stolen.passed && verified_claims == 2 &&
                  story.sim.safety_violations == 0 && story.winner == std::optional<std::string>("host") &&
                  replayable;
  return {ok, std::string("publishes committed ") + (story.host_publish_committed ? "host " : "") +
                  (story.adversary_publish_committed ? "adversary" : "") + "; claims verified " +
                  std::to_string(verified_claims) + "/2; winner " + story.winner.value_or("none") +
                  "; replay " + (replayable ? "identical" : "DIFFERS")};
}

Outcome c11_pruning() {
  int positive = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto& r = seed_run(seed);
    const auto rep = prune_to_break(r.both.model, r.data.wm, r.data.split.test, kGamma, kRhoGrid);
    const bool pos = rep.break_rho && rep.decline_at_break && *rep.decline_at_break > 0.0;
    positive += pos;
    detail << " seed" << seed << ":";
    if (rep.break_rho) {
      detail << "rho*=" << fmt("%.2f", *rep.break_rho) << ",decline=" << fmt("%.3f", *rep.decline_at_break);
    } else {
      detail << "none";
    }
  }
  return {positive >= 2, std::to_string(positive) + "/3 positive;" + detail.str()};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"1 bounds-exact", 1, c1_bounds},
      {"2 domain-size", 30, c2_domain},
      {"3 correctness", 300, c3_correctness},
      {"4 null-calibration", 300, c4_calibration},
      {"5 functionality", 300, c5_functionality},
      {"6 tuning-robustness", 900, c6_tuning},
      {"7 overwriting", 600, c7_overwrite},
      {"8 forging", 120, c8_forge},
      {"9 consensus", 120, c9_consensus},
      {"10 ownership-story", 600, c10_story},
      {"11 pruning-cost", 600, c11_pruning},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = out.pass && in_time;
    failed += !pass;
    std::printf("%s criterion %s: %s (%.2fs, budget %.0fs%s)\n", pass ? "PASS" : "FAIL", c.name, out.detail.c_str(),
                secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
