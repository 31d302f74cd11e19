#include "mtlwm/notary/simulator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "mtlwm/errors.hpp"

namespace mtlwm::notary {

using nlohmann::json;
using nlohmann::ordered_json;

void SimConfig::validate() const {
  if (nodes < 1) throw ConfigError("simulation needs at least one node");
  if (delay_min > delay_max) throw ConfigError("delay_min exceeds delay_max");
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
    throw ConfigError("drop_probability must lie in [0, 1]");
  }
  if (election_timeout_min == 0 || election_timeout_min > election_timeout_max) {
    throw ConfigError("invalid election timeout range");
  }
  if (heartbeat_interval == 0 || heartbeat_interval >= election_timeout_min) {
    throw ConfigError("heartbeat interval must be positive and below the election timeout");
  }
  if (client_retry == 0) throw ConfigError("client_retry must be positive");
  for (const auto& c : crashes) {
    if (c.node < 0 || c.node >= nodes) throw ConfigError("crash schedule names an unknown node");
  }
}

std::string_view to_string(RequestStatus status) {
  switch (status) {
    case RequestStatus::pending: return "pending";
    case RequestStatus::confirmed: return "confirmed";
    case RequestStatus::rejected: return "rejected";
    case RequestStatus::timed_out: return "timed-out";
  }
  return "pending";
}

namespace {

struct RequestVote {
  std::uint64_t term;
  std::uint64_t last_index;
  std::uint64_t last_term;
};
struct VoteReply {
  std::uint64_t term;
  bool granted;
};
struct AppendEntries {
  std::uint64_t term;
  std::uint64_t prev_index;
  std::uint64_t prev_term;
  std::vector<LedgerEntry> entries;
  std::uint64_t leader_commit;
};
struct AppendReply {
  std::uint64_t term;
  bool success;
  std::uint64_t match_index;
  std::uint64_t last_index;
};
struct ClientRequest {
  Payload payload;
  Digest digest;
};
struct ClientReply {
  Digest digest;
  bool committed;
  std::string reason;
  std::uint64_t index;
};

using Body = std::variant<RequestVote, VoteReply, AppendEntries, AppendReply, ClientRequest, ClientReply>;

const char* body_name(const Body& b) {
  static constexpr const char* kNames[] = {"request-vote", "vote-reply",     "append-entries",
                                           "append-reply", "client-request", "client-reply"};
  return kNames[b.index()];
}

struct Envelope {
  std::uint64_t deliver;
  std::uint64_t seq;
  int from;
  int to;
  Body body;
};

struct EnvelopeLater {
  bool operator()(const Envelope& a, const Envelope& b) const {
    return std::tie(a.deliver, a.seq) > std::tie(b.deliver, b.seq);
  }
};

enum class Role { follower, candidate, leader };

struct PendingRequest {
  Payload payload;
  std::size_t outcome;
  std::uint64_t deadline;
  std::uint64_t next_retry;
};

struct Node {
  NodeIdentity identity;
  bool alive = true;
  Role role = Role::follower;
  std::uint64_t term = 0;
  std::optional<int> voted_for;
  std::vector<LedgerEntry> log;
  std::uint64_t commit_index = 0;
  std::uint64_t last_applied = 0;
  int leader_hint = -1;
  std::uint64_t election_deadline = 0;
  std::uint64_t next_heartbeat = 0;
  std::vector<std::uint64_t> next_index;
  std::vector<std::uint64_t> match_index;
  std::set<int> votes;
  std::mt19937_64 rng;
  std::map<Digest, PendingRequest> pending;
  std::map<Digest, std::set<int>> requesters;

  std::uint64_t last_index() const { return log.size(); }
  std::uint64_t term_at(std::uint64_t i) const { return i == 0 ? 0 : log[i - 1].term; }
  std::optional<std::uint64_t> find(const Digest& d) const {
    for (const auto& e : log) {
      if (e.digest == d) return e.index;
    }
    return std::nullopt;
  }
};

class Simulation {
 public:
  Simulation(const SimConfig& cfg, const BlobStore& blobs) : cfg_(cfg), store_(blobs) {
    net_rng_.seed(derive_seed(cfg.seed, 0x6e6574));
    for (int i = 0; i < cfg.nodes; ++i) {
      Node n;
      n.identity = NodeIdentity::derive(i, cfg.seed);
      n.rng.seed(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(i)));
      nodes_.push_back(std::move(n));
    }
    for (auto& n : nodes_) reset_election_timer(n, 0);
  }

  SimResult run(const Scenario& input) {
    Scenario scenario = input;
    for (const auto& c : cfg_.crashes) {
      ScenarioAction crash;
      crash.tick = c.tick;
      crash.kind = ActionKind::crash;
      crash.node = c.node;
      scenario.push_back(crash);
      if (c.recover_tick) {
        ScenarioAction rec = crash;
        rec.tick = *c.recover_tick;
        rec.kind = ActionKind::recover;
        scenario.push_back(rec);
      }
    }
    std::stable_sort(scenario.begin(), scenario.end(),
                     [](const auto& a, const auto& b) { return a.tick < b.tick; });
    for (const auto& a : scenario) {
      if (a.node < 0 || a.node >= cfg_.nodes) {
        if (a.kind != ActionKind::crash_leader) throw ConfigError("scenario names an unknown node");
      }
    }

    std::size_t next_action = 0;
    for (now_ = 0; now_ <= cfg_.ticks; ++now_) {
      while (next_action < scenario.size() && scenario[next_action].tick <= now_) {
        perform(scenario[next_action++]);
      }
      while (!queue_.empty() && queue_.top().deliver <= now_) {
        Envelope env = queue_.top();
        queue_.pop();
        deliver(env);
      }
      for (auto& n : nodes_) {
        if (n.alive) on_tick(n);
      }
    }
    return finish();
  }

 private:
  // --- trace -----------------------------------------------------------------
  ordered_json& event(int node, std::string_view name) {
    ordered_json ev;
    ev["tick"] = now_;
    ev["node"] = node;
    ev["event"] = name;
    result_.trace.push_back(std::move(ev));
    return result_.trace.back();
  }

  // --- network ---------------------------------------------------------------
  void send(int from, int to, Body body) {
    if (from == to) {
      deliver(Envelope{now_, seq_++, from, to, std::move(body)});
      return;
    }
    const bool dropped = std::bernoulli_distribution(cfg_.drop_probability)(net_rng_);
    const std::uint64_t delay =
        std::uniform_int_distribution<std::uint64_t>(cfg_.delay_min, cfg_.delay_max)(net_rng_);
    if (cfg_.record_messages) {
      auto& ev = event(from, dropped ? "drop" : "send");
      ev["type"] = body_name(body);
      ev["to"] = to;
    }
    if (dropped) return;
    queue_.push(Envelope{now_ + std::max<std::uint64_t>(1, delay), seq_++, from, to, std::move(body)});
  }

  void broadcast(int from, const Body& body) {
    for (int i = 0; i < cfg_.nodes; ++i) {
      if (i != from) send(from, i, body);
    }
  }

  void deliver(const Envelope& env) {
    Node& n = nodes_[env.to];
    if (!n.alive || !nodes_[env.from].alive) return;
    std::visit([&](const auto& body) { handle(n, env.from, body); }, env.body);
  }

  // --- timers ----------------------------------------------------------------
  void reset_election_timer(Node& n, std::uint64_t from) {
    n.election_deadline = from + std::uniform_int_distribution<std::uint64_t>(
                                     cfg_.election_timeout_min, cfg_.election_timeout_max)(n.rng);
  }

  int majority() const { return cfg_.nodes / 2 + 1; }

  void on_tick(Node& n) {
    if (n.role == Role::leader) {
      if (now_ >= n.next_heartbeat) replicate(n);
    } else if (now_ >= n.election_deadline) {
      start_election(n);
    }
    client_tick(n);
  }

  void start_election(Node& n) {
    n.role = Role::candidate;
    ++n.term;
    n.voted_for = n.identity.node_id;
    n.votes = {n.identity.node_id};
    n.leader_hint = -1;
    reset_election_timer(n, now_);
    auto& ev = event(n.identity.node_id, "election");
    ev["term"] = n.term;
    if (static_cast<int>(n.votes.size()) >= majority()) {
      become_leader(n);
      return;
    }
    broadcast(n.identity.node_id, RequestVote{n.term, n.last_index(), n.term_at(n.last_index())});
  }

  void become_leader(Node& n) {
    n.role = Role::leader;
    n.leader_hint = n.identity.node_id;
    n.next_index.assign(cfg_.nodes, n.last_index() + 1);
    n.match_index.assign(cfg_.nodes, 0);
    auto& ev = event(n.identity.node_id, "leader");
    ev["term"] = n.term;
    // A no-op in the new term lets entries from earlier terms commit.
    append_local(n, NoOp{n.term});
    replicate(n);
  }

  void step_down(Node& n, std::uint64_t term) {
    if (term > n.term) {
      n.term = term;
      n.voted_for.reset();
    }
    if (n.role != Role::follower) {
      n.role = Role::follower;
      reset_election_timer(n, now_);
    }
  }

  std::uint64_t append_local(Node& n, Payload payload) {
    LedgerEntry e;
    e.term = n.term;
    e.index = n.last_index() + 1;
    e.digest = payload_digest(payload);
    e.payload = std::move(payload);
    e.received_tick = now_;
    n.log.push_back(std::move(e));
    n.match_index[n.identity.node_id] = n.last_index();
    advance_leader_commit(n);
    return n.last_index();
  }

  void replicate(Node& n) {
    n.next_heartbeat = now_ + cfg_.heartbeat_interval;
    for (int peer = 0; peer < cfg_.nodes; ++peer) {
      if (peer == n.identity.node_id) continue;
      const std::uint64_t next = std::max<std::uint64_t>(1, n.next_index[peer]);
      AppendEntries ae{n.term, next - 1, n.term_at(next - 1), {}, n.commit_index};
      for (std::uint64_t i = next; i <= n.last_index() && ae.entries.size() < 64; ++i) {
        ae.entries.push_back(n.log[i - 1]);
      }
      send(n.identity.node_id, peer, std::move(ae));
    }
  }

  void advance_leader_commit(Node& n) {
    for (std::uint64_t idx = n.last_index(); idx > n.commit_index; --idx) {
      if (n.log[idx - 1].term != n.term) break;
      int count = 0;
      for (int peer = 0; peer < cfg_.nodes; ++peer) count += n.match_index[peer] >= idx;
      if (count >= majority()) {
        n.commit_index = idx;
        break;
      }
    }
    apply_committed(n);
  }

  // --- message handlers ------------------------------------------------------
  void handle(Node& n, int from, const RequestVote& rv) {
    if (rv.term > n.term) step_down(n, rv.term);
    bool granted = false;
    if (rv.term == n.term && (!n.voted_for || *n.voted_for == from)) {
      const std::uint64_t my_last_term = n.term_at(n.last_index());
      const bool up_to_date = rv.last_term > my_last_term ||
                              (rv.last_term == my_last_term && rv.last_index >= n.last_index());
      if (up_to_date) {
        granted = true;
        n.voted_for = from;
        reset_election_timer(n, now_);
      }
    }
    send(n.identity.node_id, from, VoteReply{n.term, granted});
  }

  void handle(Node& n, int from, const VoteReply& vr) {
    if (vr.term > n.term) {
      step_down(n, vr.term);
      return;
    }
    if (n.role != Role::candidate || vr.term != n.term || !vr.granted) return;
    n.votes.insert(from);
    if (static_cast<int>(n.votes.size()) >= majority()) become_leader(n);
  }

  void handle(Node& n, int from, const AppendEntries& ae) {
    if (ae.term < n.term) {
      send(n.identity.node_id, from, AppendReply{n.term, false, 0, n.last_index()});
      return;
    }
    if (ae.term > n.term || n.role != Role::follower) step_down(n, ae.term);
    n.leader_hint = from;
    reset_election_timer(n, now_);

    if (ae.prev_index > n.last_index() || n.term_at(ae.prev_index) != ae.prev_term) {
      const std::uint64_t hint = std::min(n.last_index(), ae.prev_index > 0 ? ae.prev_index - 1 : 0);
      send(n.identity.node_id, from, AppendReply{n.term, false, 0, hint});
      return;
    }
    std::uint64_t idx = ae.prev_index;
    for (const auto& entry : ae.entries) {
      ++idx;
      if (idx <= n.last_index()) {
        if (n.log[idx - 1].term == entry.term) continue;
        if (idx <= n.commit_index) {
          // Would rewrite a committed entry; recorded as a safety violation.
          ++result_.safety_violations;
          event(n.identity.node_id, "safety-violation")["index"] = idx;
        }
        n.log.resize(idx - 1);
      }
      n.log.push_back(entry);
    }
    const std::uint64_t last_new = ae.prev_index + ae.entries.size();
    if (ae.leader_commit > n.commit_index) {
      n.commit_index = std::min(ae.leader_commit, last_new);
      apply_committed(n);
    }
    send(n.identity.node_id, from, AppendReply{n.term, true, last_new, n.last_index()});
  }

  void handle(Node& n, int from, const AppendReply& ar) {
    if (ar.term > n.term) {
      step_down(n, ar.term);
      return;
    }
    if (n.role != Role::leader || ar.term != n.term) return;
    if (ar.success) {
      n.match_index[from] = std::max(n.match_index[from], ar.match_index);
      n.next_index[from] = n.match_index[from] + 1;
      advance_leader_commit(n);
    } else {
      n.next_index[from] =
          std::max<std::uint64_t>(1, std::min(n.next_index[from] - 1, ar.last_index + 1));
    }
  }

  std::optional<std::string> validate_request(const Payload& payload) const {
    if (const auto* p = std::get_if<PublishMsg>(&payload)) {
      if (!p->signature_valid()) return "bad-signature";
      const std::uint64_t skew = p->time > now_ ? p->time - now_ : now_ - p->time;
      if (skew > cfg_.timestamp_window) return "stale-timestamp";
      try {
        p->watermark_key();
      } catch (const Error&) {
        return "malformed-key";
      }
      return std::nullopt;
    }
    if (const auto* c = std::get_if<ClaimMsg>(&payload)) {
      if (!c->signature_valid()) return "bad-signature";
      return std::nullopt;
    }
    if (const auto* a = std::get_if<Attestation>(&payload)) {
      if (!a->signature_valid()) return "bad-signature";
      return std::nullopt;
    }
    return "unsupported";
  }

  void handle(Node& n, int from, const ClientRequest& req) {
    if (n.role != Role::leader) return;
    if (auto idx = n.find(req.digest)) {
      if (*idx <= n.commit_index) {
        send(n.identity.node_id, from, ClientReply{req.digest, true, "", *idx});
      } else {
        n.requesters[req.digest].insert(from);
      }
      return;
    }
    if (auto reason = validate_request(req.payload)) {
      auto& ev = event(n.identity.node_id, "reject");
      ev["type"] = payload_type(req.payload);
      ev["reason"] = *reason;
      ev["digest"] = to_hex(req.digest);
      send(n.identity.node_id, from, ClientReply{req.digest, false, *reason, 0});
      return;
    }
    n.requesters[req.digest].insert(from);
    const auto idx = append_local(n, req.payload);
    auto& ev = event(n.identity.node_id, "append");
    ev["index"] = idx;
    ev["term"] = n.term;
    ev["type"] = payload_type(req.payload);
    replicate(n);
  }

  void handle(Node& n, int /*from*/, const ClientReply& reply) {
    auto it = n.pending.find(reply.digest);
    if (it == n.pending.end()) return;
    RequestOutcome& out = result_.requests[it->second.outcome];
    out.resolved_tick = now_;
    if (reply.committed) {
      out.status = RequestStatus::confirmed;
      out.index = reply.index;
    } else {
      out.status = RequestStatus::rejected;
      out.reason = reply.reason;
    }
    auto& ev = event(n.identity.node_id, out.kind + (reply.committed ? "-confirmed" : "-rejected"));
    ev["digest"] = to_hex(reply.digest);
    if (reply.committed) ev["index"] = reply.index;
    else ev["reason"] = reply.reason;
    if (!out.label.empty()) ev["label"] = out.label;
    n.pending.erase(it);
  }

  // --- application -----------------------------------------------------------
  void apply_committed(Node& n) {
    while (n.last_applied < n.commit_index) {
      ++n.last_applied;
      const LedgerEntry& entry = n.log[n.last_applied - 1];
      auto [it, inserted] = first_commit_.emplace(entry.index, entry.digest);
      if (inserted) {
        result_.committed.push_back(entry);
      } else if (it->second != entry.digest) {
        ++result_.safety_violations;
        event(n.identity.node_id, "safety-violation")["index"] = entry.index;
      }
      auto& ev = event(n.identity.node_id, "commit");
      ev["index"] = entry.index;
      ev["term"] = entry.term;
      ev["type"] = payload_type(entry.payload);
      ev["digest"] = to_hex(entry.digest);

      if (n.role == Role::leader) {
        auto req = n.requesters.find(entry.digest);
        if (req != n.requesters.end()) {
          for (int client : req->second) {
            send(n.identity.node_id, client, ClientReply{entry.digest, true, "", entry.index});
          }
          n.requesters.erase(req);
        }
      }
      if (const auto* claim = std::get_if<ClaimMsg>(&entry.payload)) {
        attest(n, *claim);
      }
    }
  }

  void attest(Node& n, const ClaimMsg& claim) {
    ClaimContext ctx{&store_, std::span<const LedgerEntry>(n.log.data(), n.last_applied), cfg_.gamma};
    Attestation att = handle_claim(claim, ctx, n.identity);
    auto& ev = event(n.identity.node_id, "attestation");
    ev["claim"] = to_hex(att.claim_digest);
    ev["outcome"] = att.outcome;
    ev["reason"] = att.reason;
    submit(n, Payload{att}, "attestation", "");
  }

  // --- client side -----------------------------------------------------------
  void submit(Node& n, Payload payload, std::string kind, std::string label) {
    const Digest digest = payload_digest(payload);
    if (n.pending.count(digest)) return;
    RequestOutcome out;
    out.node = n.identity.node_id;
    out.kind = std::move(kind);
    out.label = std::move(label);
    out.digest = digest;
    out.submitted_tick = now_;
    result_.requests.push_back(out);
    auto& ev = event(n.identity.node_id, out.kind + "-submitted");
    ev["digest"] = to_hex(digest);
    if (!out.label.empty()) ev["label"] = out.label;
    n.pending.emplace(digest, PendingRequest{std::move(payload), result_.requests.size() - 1,
                                             now_ + cfg_.client_timeout, now_});
  }

  void client_tick(Node& n) {
    for (auto it = n.pending.begin(); it != n.pending.end();) {
      PendingRequest& p = it->second;
      if (now_ >= p.deadline) {
        RequestOutcome& out = result_.requests[p.outcome];
        out.status = RequestStatus::timed_out;
        out.resolved_tick = now_;
        auto& ev = event(n.identity.node_id, out.kind + "-timeout");
        ev["digest"] = to_hex(out.digest);
        if (!out.label.empty()) ev["label"] = out.label;
        it = n.pending.erase(it);
        continue;
      }
      if (now_ >= p.next_retry) {
        p.next_retry = now_ + cfg_.client_retry;
        const Digest digest = it->first;
        const ClientRequest req{p.payload, digest};
        ++it;
        // The request reaches every node; only the current leader acts on it.
        broadcast(n.identity.node_id, req);
        send(n.identity.node_id, n.identity.node_id, req);
        continue;
      }
      ++it;
    }
  }

  // --- scenario --------------------------------------------------------------
  int current_leader() const {
    int best = -1;
    for (int i = 0; i < cfg_.nodes; ++i) {
      const Node& n = nodes_[i];
      if (n.alive && n.role == Role::leader && (best < 0 || n.term > nodes_[best].term)) best = i;
    }
    return best;
  }

  void perform(const ScenarioAction& a) {
    switch (a.kind) {
      case ActionKind::crash_leader: {
        const int leader = current_leader();
        if (leader < 0) {
          event(-1, "no-leader");
          return;
        }
        crash(leader);
        return;
      }
      case ActionKind::crash: crash(a.node); return;
      case ActionKind::recover: {
        Node& n = nodes_[a.node];
        if (n.alive) return;
        n.alive = true;
        n.role = Role::follower;
        n.votes.clear();
        n.leader_hint = -1;
        n.requesters.clear();
        reset_election_timer(n, now_);
        event(a.node, "recover");
        return;
      }
      case ActionKind::publish: {
        Node& n = nodes_[a.node];
        if (!n.alive) {
          event(a.node, "publish-skipped")["reason"] = "node-down";
          return;
        }
        if (!a.key) throw ConfigError("publish action without a watermark key");
        const Digest cwm_hash = sha256(a.cwm);
        PublishMsg msg = PublishMsg::make(*a.key, a.time.value_or(now_), cwm_hash, n.identity.key);
        submit(n, Payload{msg}, "publish", a.label);
        return;
      }
      case ActionKind::claim: {
        Node& n = nodes_[a.node];
        if (!n.alive) {
          event(a.node, "claim-skipped")["reason"] = "node-down";
          return;
        }
        const Digest model_ref = store_.put(a.model);
        const Digest cwm_ref = store_.put(a.cwm);
        const Digest model_hash = a.claimed_model_hash.value_or(sha256(a.model));
        ClaimMsg msg = ClaimMsg::make(model_ref, model_hash, cwm_ref, n.identity.key);
        claim_labels_[msg.digest()] = a.label;
        submit(n, Payload{msg}, "claim", a.label);
        return;
      }
    }
  }

  void crash(int node) {
    Node& n = nodes_[node];
    if (!n.alive) return;
    n.alive = false;
    auto& ev = event(node, "crash");
    ev["role"] = n.role == Role::leader ? "leader" : (n.role == Role::candidate ? "candidate" : "follower");
  }

  // --- results ---------------------------------------------------------------
  SimResult finish() {
    for (const auto& n : nodes_) {
      result_.logs.push_back(n.log);
      result_.commit_index.push_back(n.commit_index);
      result_.alive.push_back(n.alive);
    }
    summarize_claims();
    return std::move(result_);
  }

  void summarize_claims() {
    std::map<Digest, std::size_t> claim_slot;
    std::map<Digest, std::set<std::uint32_t>> seen_verifiers;
    for (const auto& entry : result_.committed) {
      if (const auto* c = std::get_if<ClaimMsg>(&entry.payload)) {
        ClaimSummary s;
        s.claim_digest = c->digest();
        s.model_hash = c->model_hash;
        s.sender = c->sender;
        if (auto it = claim_labels_.find(s.claim_digest); it != claim_labels_.end()) s.label = it->second;
        claim_slot.emplace(s.claim_digest, result_.claims.size());
        result_.claims.push_back(std::move(s));
      }
    }
    for (const auto& entry : result_.committed) {
      const auto* a = std::get_if<Attestation>(&entry.payload);
      if (!a) continue;
      auto slot = claim_slot.find(a->claim_digest);
      if (slot == claim_slot.end()) continue;
      if (!seen_verifiers[a->claim_digest].insert(a->verifier).second) continue;
      ClaimSummary& s = result_.claims[slot->second];
      ++s.attestations;
      s.positive += a->outcome;
      s.reasons.push_back(a->reason);
      if (a->outcome && a->matched_publish && !s.matched_publish) s.matched_publish = a->matched_publish;
    }
    for (auto& s : result_.claims) s.verified = s.attestations > 0 && 2 * s.positive > s.attestations;

    std::map<Digest, Resolution> by_model;
    for (const auto& s : result_.claims) {
      if (!s.matched_publish) continue;
      const auto& idx = s.matched_publish->index;
      if (idx == 0 || idx > result_.committed.size()) continue;
      const auto* pub = std::get_if<PublishMsg>(&result_.committed[idx - 1].payload);
      if (!pub) continue;
      Resolution& r = by_model[s.model_hash];
      r.model_hash = s.model_hash;
      r.contenders.push_back({*pub, *s.matched_publish, s.verified});
      r.labels.push_back(s.label);
    }
    for (auto& [hash, r] : by_model) {
      r.winner = resolve_redeclaration(r.contenders);
      result_.resolutions.push_back(std::move(r));
    }
  }

  SimConfig cfg_;
  BlobStore store_;
  std::vector<Node> nodes_;
  std::priority_queue<Envelope, std::vector<Envelope>, EnvelopeLater> queue_;
  std::mt19937_64 net_rng_;
  std::uint64_t seq_ = 0;
  std::uint64_t now_ = 0;
  std::map<std::uint64_t, Digest> first_commit_;
  std::map<Digest, std::string> claim_labels_;
  SimResult result_;
};

}  // namespace

SimResult run_simulation(const SimConfig& cfg, const Scenario& scenario, const BlobStore& seed_blobs) {
  cfg.validate();
  Simulation sim(cfg, seed_blobs);
  return sim.run(scenario);
}

std::string SimResult::trace_jsonl() const {
  std::string out;
  for (const auto& ev : trace) {
    out += ev.dump();
    out += '\n';
  }
  return out;
}

const RequestOutcome* SimResult::find_request(std::string_view label) const {
  for (const auto& r : requests) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

json SimResult::summary() const {
  json doc;
  doc["safety_violations"] = safety_violations;
  doc["commit_index"] = commit_index;
  doc["committed_entries"] = committed.size();
  json reqs = json::array();
  for (const auto& r : requests) {
    json j{{"node", r.node},
           {"kind", r.kind},
           {"label", r.label},
           {"digest", to_hex(r.digest)},
           {"status", std::string(to_string(r.status))},
           {"submitted_tick", r.submitted_tick},
           {"resolved_tick", r.resolved_tick}};
    if (!r.reason.empty()) j["reason"] = r.reason;
    if (r.index) j["index"] = *r.index;
    reqs.push_back(std::move(j));
  }
  doc["requests"] = std::move(reqs);
  json claims_doc = json::array();
  for (const auto& c : claims) {
    json j{{"claim", to_hex(c.claim_digest)}, {"model_hash", to_hex(c.model_hash)},
           {"sender", to_hex(c.sender.bytes)}, {"label", c.label},
           {"attestations", c.attestations},   {"positive", c.positive},
           {"verified", c.verified},           {"reasons", c.reasons}};
    if (c.matched_publish) j["matched_publish"] = {c.matched_publish->term, c.matched_publish->index};
    claims_doc.push_back(std::move(j));
  }
  doc["claims"] = std::move(claims_doc);
  json res = json::array();
  for (const auto& r : resolutions) {
    json contenders = json::array();
    for (std::size_t i = 0; i < r.contenders.size(); ++i) {
      const auto& c = r.contenders[i];
      contenders.push_back({{"label", r.labels[i]},
                            {"publisher", to_hex(c.publish.sender.bytes)},
                            {"time", c.publish.time},
                            {"entry", {c.position.term, c.position.index}},
                            {"verified", c.verified}});
    }
    json j{{"model_hash", to_hex(r.model_hash)}, {"contenders", std::move(contenders)}};
    if (r.winner) {
      j["winner"] = r.labels[*r.winner];
      j["winner_publisher"] = to_hex(r.contenders[*r.winner].publish.sender.bytes);
    } else {
      j["winner"] = nullptr;
    }
    res.push_back(std::move(j));
  }
  doc["resolutions"] = std::move(res);
  return doc;
}

namespace {

Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("scenario references missing file " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

Scenario parse_scenario(const json& doc, const std::string& base_dir) {
  if (!doc.is_array()) throw ConfigError("scenario must be a JSON array of actions");
  const std::filesystem::path base(base_dir);
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  Scenario out;
  try {
    for (const auto& a : doc) {
      if (!a.is_object()) throw ConfigError("scenario actions must be objects");
      ScenarioAction act;
      act.tick = a.at("tick").get<std::uint64_t>();
      const std::string kind = a.at("action").get<std::string>();
      act.node = get_or<int>(a, "node", 0);
      act.label = get_or<std::string>(a, "label", "");
      if (kind == "publish") {
        act.kind = ActionKind::publish;
        const std::string secret = a.at("secret").get<std::string>();
        act.key = WatermarkKey::make(secret, a.at("n").get<std::uint32_t>(),
                                     get_or<std::uint32_t>(a, "m", 0));
        act.cwm = read_file_bytes(resolve(a.at("cwm").get<std::string>()));
        if (a.contains("time")) act.time = a["time"].get<std::uint64_t>();
      } else if (kind == "claim") {
        act.kind = ActionKind::claim;
        act.model = read_file_bytes(resolve(a.at("model").get<std::string>()));
        act.cwm = read_file_bytes(resolve(a.at("cwm").get<std::string>()));
        if (a.contains("model_hash")) act.claimed_model_hash = digest_from_hex(a["model_hash"].get<std::string>());
      } else if (kind == "crash") {
        act.kind = ActionKind::crash;
      } else if (kind == "crash-leader") {
        act.kind = ActionKind::crash_leader;
        act.node = -1;
      } else if (kind == "recover") {
        act.kind = ActionKind::recover;
      } else {
        throw ConfigError("unknown scenario action '" + kind + "'");
      }
      out.push_back(std::move(act));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  return out;
}

SimConfig parse_sim_config(const json& doc) {
  SimConfig cfg;
  if (doc.is_null()) return cfg;
  if (!doc.is_object()) throw ConfigError("simulation config must be an object");
  try {
    cfg.nodes = get_or(doc, "nodes", cfg.nodes);
    cfg.seed = get_or(doc, "seed", cfg.seed);
    cfg.delay_min = get_or(doc, "delay_min", cfg.delay_min);
    cfg.delay_max = get_or(doc, "delay_max", cfg.delay_max);
    cfg.drop_probability = get_or(doc, "drop_probability", cfg.drop_probability);
    cfg.election_timeout_min = get_or(doc, "election_timeout_min", cfg.election_timeout_min);
    cfg.election_timeout_max = get_or(doc, "election_timeout_max", cfg.election_timeout_max);
    cfg.heartbeat_interval = get_or(doc, "heartbeat_interval", cfg.heartbeat_interval);
    cfg.timestamp_window = get_or(doc, "timestamp_window", cfg.timestamp_window);
    cfg.client_timeout = get_or(doc, "client_timeout", cfg.client_timeout);
    cfg.client_retry = get_or(doc, "client_retry", cfg.client_retry);
    cfg.ticks = get_or(doc, "ticks", cfg.ticks);
    cfg.gamma = get_or(doc, "gamma", cfg.gamma);
    cfg.record_messages = get_or(doc, "record_messages", cfg.record_messages);
    if (doc.contains("crashes")) {
      for (const auto& c : doc["crashes"]) {
        CrashEvent ev{c.at("node").get<int>(), c.at("tick").get<std::uint64_t>(), std::nullopt};
        if (c.contains("recover_tick")) ev.recover_tick = c["recover_tick"].get<std::uint64_t>();
        cfg.crashes.push_back(ev);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed simulation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json sim_config_to_json(const SimConfig& cfg) {
  json crashes = json::array();
  for (const auto& c : cfg.crashes) {
    json j{{"node", c.node}, {"tick", c.tick}};
    if (c.recover_tick) j["recover_tick"] = *c.recover_tick;
    crashes.push_back(std::move(j));
  }
  return {{"nodes", cfg.nodes},
          {"seed", cfg.seed},
          {"delay_min", cfg.delay_min},
          {"delay_max", cfg.delay_max},
          {"drop_probability", cfg.drop_probability},
          {"crashes", std::move(crashes)},
          {"election_timeout_min", cfg.election_timeout_min},
          {"election_timeout_max", cfg.election_timeout_max},
          {"heartbeat_interval", cfg.heartbeat_interval},
          {"timestamp_window", cfg.timestamp_window},
          {"client_timeout", cfg.client_timeout},
          {"client_retry", cfg.client_retry},
          {"ticks", cfg.ticks},
          {"gamma", cfg.gamma},
          {"record_messages", cfg.record_messages}};
}

}  // namespace mtlwm::notary
