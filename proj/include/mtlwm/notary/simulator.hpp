#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlwm/notary/messages.hpp"

namespace mtlwm::notary {

struct CrashEvent {
  int node = 0;
  std::uint64_t tick = 0;
  std::optional<std::uint64_t> recover_tick;
};

struct SimConfig {
  int nodes = 5;
  std::uint64_t seed = 0;
  std::uint64_t delay_min = 1;  // ticks
  std::uint64_t delay_max = 5;
  double drop_probability = 0.0;
  std::vector<CrashEvent> crashes;
  std::uint64_t election_timeout_min = 150;
  std::uint64_t election_timeout_max = 300;
  std::uint64_t heartbeat_interval = 50;
  std::uint64_t timestamp_window = 500;  // W
  std::uint64_t client_timeout = 3000;
  std::uint64_t client_retry = 100;
  std::uint64_t ticks = 10000;  // simulated run length
  double gamma = 0.7;           // verification threshold used by attesting nodes
  bool record_messages = true;

  void validate() const;
};

enum class ActionKind { publish, claim, crash, crash_leader, recover };

struct ScenarioAction {
  std::uint64_t tick = 0;
  ActionKind kind = ActionKind::publish;
  int node = 0;
  // publish
  std::optional<WatermarkKey> key;
  Bytes cwm;  // canonical c_WM serialisation
  std::optional<std::uint64_t> time;  // defaults to the action tick
  // claim
  Bytes model;  // canonical published-model serialisation
  std::optional<Digest> claimed_model_hash;  // defaults to hash of `model`
  std::string label;  // free-form tag echoed into the trace
};

using Scenario = std::vector<ScenarioAction>;

enum class RequestStatus { pending, confirmed, rejected, timed_out };
std::string_view to_string(RequestStatus status);

struct RequestOutcome {
  int node = 0;
  std::string kind;  // publish / claim / attestation
  std::string label;
  Digest digest{};
  RequestStatus status = RequestStatus::pending;
  std::string reason;
  std::uint64_t submitted_tick = 0;
  std::uint64_t resolved_tick = 0;
  std::optional<std::uint64_t> index;  // ledger index when confirmed
};

struct ClaimSummary {
  Digest claim_digest{};
  Digest model_hash{};
  PublicKey sender;
  std::string label;
  std::size_t attestations = 0;
  std::size_t positive = 0;
  bool verified = false;  // majority of distinct verifiers attested true
  std::vector<std::string> reasons;
  std::optional<EntryPosition> matched_publish;
};

struct Resolution {
  Digest model_hash{};
  std::vector<Contender> contenders;
  std::vector<std::string> labels;
  std::optional<std::size_t> winner;
};

struct SimResult {
  std::vector<nlohmann::ordered_json> trace;
  std::vector<std::vector<LedgerEntry>> logs;  // per node, full log
  std::vector<std::uint64_t> commit_index;      // per node
  std::vector<LedgerEntry> committed;           // global committed sequence
  std::size_t safety_violations = 0;
  std::vector<RequestOutcome> requests;
  std::vector<ClaimSummary> claims;
  std::vector<Resolution> resolutions;
  std::vector<bool> alive;

  std::string trace_jsonl() const;
  nlohmann::json summary() const;
  const RequestOutcome* find_request(std::string_view label) const;
};

// Deterministic single-threaded event-loop simulation of leader-based log
// replication among notary nodes, driven by the scenario script.
SimResult run_simulation(const SimConfig& cfg, const Scenario& scenario, const BlobStore& seed_blobs = {});

// JSON scenario scripts. Relative file paths are resolved against base_dir.
Scenario parse_scenario(const nlohmann::json& doc, const std::string& base_dir = ".");
SimConfig parse_sim_config(const nlohmann::json& doc);
nlohmann::json sim_config_to_json(const SimConfig& cfg);

}  // namespace mtlwm::notary
