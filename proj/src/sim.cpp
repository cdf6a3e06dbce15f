#include "hbhc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hbhc {

namespace {

constexpr std::uint64_t kTickMs = 100;

double uniform01(std::mt19937_64& rng) {
  return std::ldexp(static_cast<double>(rng() >> 11), -53);
}

// Uniform draw from [0, n) without modulo bias.
std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) {
  std::uint64_t limit = ~0ull - ~0ull % n;
  for (;;) {
    std::uint64_t v = rng();
    if (v < limit) return v % n;
  }
}

// k distinct values from [0, n), order-insensitive use.
std::vector<std::uint32_t> sample_distinct(std::mt19937_64& rng,
                                           std::uint32_t n, std::uint32_t k) {
  std::vector<std::uint32_t> pool(n);
  for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
  k = std::min(k, n);
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint32_t j = i + static_cast<std::uint32_t>(below(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

struct AgentRt {
  std::map<std::uint64_t, Heartbeat> held;
  bool sentinel_held = false;
  bool sentinel_presented = false;
  Heartbeat sentinel_hb;
  bool crypto_checked = false;
};

class SimRun {
 public:
  explicit SimRun(const SimConfig& config)
      : cfg_(config), rng_(config.rng_seed) {}

  SimTrace go() {
    validate_static();
    swarm_ = build_swarm(cfg_.spec);
    resolve_events();
    rt_.resize(swarm_.agents.size());
    if (!cfg_.verifier_cold_cache) {
      for (const auto& agent : swarm_.agents)
        if (!agent.children.empty())
          vstate_.cached_parent_keys.emplace(agent.identity.agent_id,
                                             agent.identity.heartbeat_pk);
    }
    build_overlays();

    const std::uint64_t interval = cfg_.policy.interval_ms;
    const std::uint64_t cadence =
        cfg_.auth_cadence_ms == 0 ? interval : cfg_.auth_cadence_ms;
    const std::uint64_t end = cfg_.duration_epochs * interval;
    for (std::uint64_t t = 0; t < end; t += kTickMs) {
      if (t % interval == 0) distribute_epoch(t / interval);
      if (t >= cfg_.auth_phase_ms &&
          (t - cfg_.auth_phase_ms) % cadence == 0) {
        for (std::uint32_t i = 1; i < swarm_.agents.size(); ++i) attempt(i, t);
      }
    }
    return std::move(trace_);
  }

 private:
  void validate_static() const {
    if (cfg_.duration_epochs == 0)
      throw std::invalid_argument("duration must be at least one epoch");
    if (cfg_.policy.interval_ms == 0 || cfg_.policy.interval_ms % kTickMs != 0)
      throw std::invalid_argument("interval must be a positive tick multiple");
    if (cfg_.auth_cadence_ms % kTickMs != 0 || cfg_.auth_phase_ms % kTickMs != 0)
      throw std::invalid_argument("auth cadence and phase must be tick multiples");
    auto check_rate = [](double p) {
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("drop rates must lie in [0, 1]");
    };
    std::visit(
        [&](const auto& model) {
          using T = std::decay_t<decltype(model)>;
          if constexpr (std::is_same_v<T, PushDelivery>) {
            check_rate(model.drop_rate);
          } else if constexpr (std::is_same_v<T, DualPathDelivery>) {
            check_rate(model.drop_rate_per_path);
          } else if constexpr (std::is_same_v<T, PrecomputeDelivery>) {
            check_rate(model.drop_rate);
            if (model.buffer_epochs == 0)
              throw std::invalid_argument("buffer must cover at least one epoch");
            if (cfg_.policy.mode != FreshnessMode::TimeEpoch)
              throw std::invalid_argument(
                  "buffered delivery requires time-epoch freshness");
          } else if constexpr (std::is_same_v<T, PullDelivery>) {
            check_rate(model.drop_rate);
          } else if constexpr (std::is_same_v<T, GossipDelivery>) {
            check_rate(model.per_hop_drop);
            if (model.fanout == 0 || model.seed_set_size == 0)
              throw std::invalid_argument(
                  "gossip needs a positive fanout and seed set");
          }
        },
        cfg_.delivery);
  }

  void resolve_events() {
    auto agent_index = [&](const AgentId& id) {
      auto it = swarm_.index.find(id);
      if (it == swarm_.index.end())
        throw std::invalid_argument("event references unknown agent: " + id);
      return it->second;
    };
    for (const auto& rev : cfg_.revocations) {
      std::uint32_t idx = agent_index(rev.parent_id);
      if (rev.at_epoch >= cfg_.duration_epochs)
        throw std::invalid_argument("revocation lies outside the run");
      if (!revocations_.emplace(idx, rev).second)
        throw std::invalid_argument("duplicate revocation for " + rev.parent_id);
    }
    for (const auto& ex : cfg_.exclusions) {
      std::uint32_t p = agent_index(ex.parent_id);
      std::uint32_t c = agent_index(ex.child_id);
      if (swarm_.agents[c].parent != p)
        throw std::invalid_argument(ex.child_id + " is not a child of " +
                                    ex.parent_id);
      exclusions_[{p, c}] = ex.from_epoch;
    }
    for (const auto& part : cfg_.partitions) {
      if (part.from_epoch >= part.to_epoch)
        throw std::invalid_argument("partition range is empty");
      for (const auto& id : part.entities) {
        if (id == "verifier") continue;  // local verification: no effect
        partitions_.push_back({agent_index(id), part.from_epoch, part.to_epoch});
      }
    }
    for (const auto& [id, offset] : cfg_.clock_offsets_ms) {
      offsets_[agent_index(id)] = offset;
    }
  }

  void build_overlays() {
    const auto* gossip = std::get_if<GossipDelivery>(&cfg_.delivery);
    if (!gossip) return;
    for (std::uint32_t p = 0; p < swarm_.agents.size(); ++p) {
      const auto& kids = swarm_.agents[p].children;
      if (kids.empty()) continue;
      Overlay ov;
      std::uint32_t m = static_cast<std::uint32_t>(kids.size());
      ov.out.resize(m);
      std::uint32_t fanout = std::min(gossip->fanout, m - 1 > 0 ? m - 1 : 0u);
      for (std::uint32_t c = 0; c < m; ++c) {
        if (fanout == 0) continue;
        auto picks = sample_distinct(rng_, m - 1, fanout);
        for (std::uint32_t pick : picks)
          ov.out[c].push_back(pick >= c ? pick + 1 : pick);  // skip self slot
      }
      ov.seeds = sample_distinct(rng_, m, gossip->seed_set_size);
      std::sort(ov.seeds.begin(), ov.seeds.end());
      ov.max_rounds = gossip->max_rounds
                          ? gossip->max_rounds
                          : static_cast<std::uint32_t>(
                                std::ceil(std::log2(std::max(2u, m)))) + 3;
      overlays_.emplace(p, std::move(ov));
    }
  }

  bool partitioned(std::uint32_t idx, std::uint64_t epoch) const {
    for (const auto& p : partitions_)
      if (p.idx == idx && epoch >= p.from && epoch < p.to) return true;
    return false;
  }

  bool excluded(std::uint32_t parent, std::uint32_t child,
                std::uint64_t epoch) const {
    auto it = exclusions_.find({parent, child});
    return it != exclusions_.end() && epoch >= it->second;
  }

  void record(TraceRecord rec) { trace_.records.push_back(std::move(rec)); }

  TraceRecord base_record(std::uint32_t idx, std::uint64_t epoch,
                          std::uint64_t t, SimEvent event) const {
    TraceRecord rec;
    rec.epoch = epoch;
    rec.agent_id = swarm_.agents[idx].identity.agent_id;
    rec.level = swarm_.agents[idx].identity.level;
    rec.event = event;
    rec.t_ms = t;
    return rec;
  }

  void receive(std::uint32_t child, const Heartbeat& hb) {
    AgentRt& rt = rt_[child];
    if (hb.epoch == kSentinelEpoch) {
      rt.sentinel_held = true;
      rt.sentinel_hb = hb;
    } else {
      rt.held.emplace(hb.epoch, hb);
    }
  }

  // One emission act per live parent per epoch; frames then flow through the
  // delivery model in the same tick.
  void distribute_epoch(std::uint64_t epoch) {
    const std::uint64_t t = epoch * cfg_.policy.interval_ms;
    for (std::uint32_t p = 0; p < swarm_.agents.size(); ++p) {
      if (swarm_.agents[p].children.empty()) continue;
      auto rev = revocations_.find(p);
      bool ceased = rev != revocations_.end() && epoch > rev->second.at_epoch;
      if (ceased) continue;
      bool sentinel = rev != revocations_.end() &&
                      epoch == rev->second.at_epoch &&
                      rev->second.mode == RevocationMode::Sentinel;

      std::vector<Heartbeat> frames = emit(p, epoch, sentinel);
      trace_.heartbeats_generated += frames.size();
      TraceRecord rec = base_record(p, epoch, t, SimEvent::Heartbeat);
      rec.ok = true;
      rec.sentinel_frame = sentinel;
      record(std::move(rec));
      parent_latest_[p] = frames.back();

      if (std::holds_alternative<PullDelivery>(cfg_.delivery)) continue;
      if (std::holds_alternative<GossipDelivery>(cfg_.delivery)) {
        gossip_epoch(p, epoch, t, frames.back());
        continue;
      }
      for (std::uint32_t c : swarm_.agents[p].children)
        deliver_direct(p, c, epoch, t, frames);
    }
  }

  std::vector<Heartbeat> emit(std::uint32_t p, std::uint64_t epoch,
                              bool sentinel) {
    const AgentIdentity& id = swarm_.agents[p].identity;
    if (sentinel) return {revocation_heartbeat(id)};
    if (cfg_.policy.mode == FreshnessMode::Sequence)
      return {sequence_heartbeat_gen(id, epoch + 1)};
    HeartbeatConfig hb_cfg;
    hb_cfg.interval_ms = cfg_.policy.interval_ms;
    if (const auto* pre = std::get_if<PrecomputeDelivery>(&cfg_.delivery)) {
      hb_cfg.precompute_cap = pre->buffer_epochs;
      if (epoch == 0)
        return precompute(id, 0, pre->buffer_epochs, hb_cfg).heartbeats;
      return precompute(id, epoch + pre->buffer_epochs - 1, 1, hb_cfg)
          .heartbeats;
    }
    return {heartbeat_gen(id, epoch * hb_cfg.interval_ms, hb_cfg)};
  }

  void deliver_direct(std::uint32_t p, std::uint32_t c, std::uint64_t epoch,
                      std::uint64_t t, const std::vector<Heartbeat>& frames) {
    TraceRecord rec = base_record(c, epoch, t, SimEvent::Delivery);
    bool suppressed = partitioned(p, epoch) || partitioned(c, epoch) ||
                      excluded(p, c, epoch);
    bool got = false;
    if (!suppressed) {
      if (const auto* push = std::get_if<PushDelivery>(&cfg_.delivery)) {
        trace_.deliveries_attempted++;
        got = uniform01(rng_) >= push->drop_rate;
        if (got) {
          trace_.deliveries_succeeded++;
          trace_.bytes_delivered += kHeartbeatFrameSize * frames.size();
        }
      } else if (const auto* dual =
                     std::get_if<DualPathDelivery>(&cfg_.delivery)) {
        for (int path = 0; path < 2; ++path) {
          trace_.deliveries_attempted++;
          if (uniform01(rng_) >= dual->drop_rate_per_path) {
            trace_.deliveries_succeeded++;
            trace_.bytes_delivered += kHeartbeatFrameSize * frames.size();
            got = true;
          }
        }
      } else {
        const auto& pre = std::get<PrecomputeDelivery>(cfg_.delivery);
        trace_.deliveries_attempted++;
        // The provisioning handoff is part of spawning the child.
        got = epoch == 0 || uniform01(rng_) >= pre.drop_rate;
        if (got) {
          trace_.deliveries_succeeded++;
          trace_.bytes_delivered += kHeartbeatFrameSize * frames.size();
        }
      }
    }
    if (got)
      for (const Heartbeat& hb : frames) receive(c, hb);
    rec.ok = got;
    record(std::move(rec));
  }

  void gossip_epoch(std::uint32_t p, std::uint64_t epoch, std::uint64_t t,
                    const Heartbeat& frame) {
    const auto& gossip = std::get<GossipDelivery>(cfg_.delivery);
    const auto& kids = swarm_.agents[p].children;
    const Overlay& ov = overlays_.at(p);
    std::uint32_t m = static_cast<std::uint32_t>(kids.size());
    std::vector<char> holder(m, 0);

    bool parent_cut = partitioned(p, epoch);
    for (std::uint32_t s : ov.seeds) {
      std::uint32_t c = kids[s];
      if (parent_cut || partitioned(c, epoch) || excluded(p, c, epoch))
        continue;
      trace_.deliveries_attempted++;
      if (uniform01(rng_) >= gossip.per_hop_drop) {
        trace_.deliveries_succeeded++;
        trace_.bytes_delivered += kHeartbeatFrameSize;
        holder[s] = 1;
      }
    }
    for (std::uint32_t round = 0; round < ov.max_rounds; ++round) {
      std::vector<std::uint32_t> fresh;
      std::uint32_t holders = 0;
      for (std::uint32_t h = 0; h < m; ++h) {
        if (!holder[h]) continue;
        holders++;
        if (partitioned(kids[h], epoch)) continue;
        for (std::uint32_t o : ov.out[h]) {
          trace_.deliveries_attempted++;
          bool ok = uniform01(rng_) >= gossip.per_hop_drop &&
                    !partitioned(kids[o], epoch);
          if (!ok) continue;
          trace_.deliveries_succeeded++;
          trace_.bytes_delivered += kHeartbeatFrameSize;
          if (!holder[o]) fresh.push_back(o);
        }
      }
      if (holders == m) break;
      for (std::uint32_t o : fresh) holder[o] = 1;
      if (fresh.empty() && round > 0) break;
    }
    for (std::uint32_t c = 0; c < m; ++c) {
      if (holder[c]) receive(kids[c], frame);
      TraceRecord rec = base_record(kids[c], epoch, t, SimEvent::Delivery);
      rec.ok = holder[c] != 0;
      record(std::move(rec));
    }
  }

  void pull_fetch(std::uint32_t c, std::uint64_t epoch, std::uint64_t t) {
    const auto* pull = std::get_if<PullDelivery>(&cfg_.delivery);
    if (!pull) return;
    std::uint32_t p = swarm_.agents[c].parent;
    auto latest = parent_latest_.find(p);
    if (latest == parent_latest_.end()) return;  // nothing emitted yet
    auto rev = revocations_.find(p);
    bool gone = rev != revocations_.end() && epoch > rev->second.at_epoch;
    TraceRecord rec = base_record(c, epoch, t, SimEvent::Delivery);
    bool got = false;
    if (!gone && !partitioned(p, epoch) && !partitioned(c, epoch) &&
        !excluded(p, c, epoch)) {
      trace_.deliveries_attempted++;
      got = uniform01(rng_) >= pull->drop_rate;
      if (got) {
        trace_.deliveries_succeeded++;
        trace_.bytes_delivered += kHeartbeatFrameSize;
        receive(c, latest->second);
      }
    }
    rec.ok = got;
    record(std::move(rec));
  }

  std::int64_t local_epoch(std::uint32_t idx, std::uint64_t t) const {
    std::int64_t local = static_cast<std::int64_t>(t);
    auto it = offsets_.find(idx);
    if (it != offsets_.end()) local += it->second;
    if (local < 0) local = 0;
    return local / static_cast<std::int64_t>(cfg_.policy.interval_ms);
  }

  // The freshest frame the agent would present: the sentinel once, then the
  // newest held frame that is not in the agent's own future.
  const Heartbeat* presentable(std::uint32_t idx, std::uint64_t t) {
    AgentRt& rt = rt_[idx];
    if (rt.sentinel_held && !rt.sentinel_presented) {
      rt.sentinel_presented = true;
      return &rt.sentinel_hb;
    }
    if (rt.held.empty()) return nullptr;
    if (cfg_.policy.mode == FreshnessMode::Sequence)
      return &rt.held.rbegin()->second;
    std::int64_t own = local_epoch(idx, t);
    auto it = rt.held.upper_bound(static_cast<std::uint64_t>(own));
    if (it == rt.held.begin()) return &it->second;  // only future frames held
    return &std::prev(it)->second;
  }

  void attempt(std::uint32_t leaf, std::uint64_t t) {
    const std::uint64_t epoch = t / cfg_.policy.interval_ms;
    pull_fetch(leaf, epoch, t);

    std::int64_t shifted = static_cast<std::int64_t>(t) + cfg_.verifier_offset_ms;
    std::uint64_t verifier_now =
        shifted < 0 ? 0 : static_cast<std::uint64_t>(shifted);

    std::vector<std::uint32_t> path;  // leaf up to (not including) root
    for (std::uint32_t i = leaf; i != 0; i = swarm_.agents[i].parent)
      path.push_back(i);
    std::reverse(path.begin(), path.end());

    bool full = cfg_.full_crypto || !rt_[leaf].crypto_checked;
    rt_[leaf].crypto_checked = true;

    TraceRecord rec = base_record(leaf, epoch, t, SimEvent::Auth);
    rec.ok = true;
    trace_.auth_attempts++;
    for (std::uint32_t link : path) {
      const Heartbeat* hb = presentable(link, t);
      if (!hb) {
        rec.ok = false;
        rec.reject_reason = RejectReason::HeartbeatExpired;
        rec.age_epochs.reset();
        break;
      }
      Challenge challenge = issue_challenge(verifier_now, rng_);
      const Credential& cred = *swarm_.agents[link].credential;
      AuthProof proof;
      if (full) {
        proof = create_auth_proof(swarm_.agents[link].identity.identity_sk,
                                  cred, *hb, challenge.nonce);
      } else {
        proof.credential = cred;
        proof.epoch = hb->epoch;
        proof.heartbeat_sig = hb->sig;
      }
      VerifyResult res = verify_auth(proof, vstate_, challenge, verifier_now,
                                     cfg_.policy, full);
      rec.age_epochs = res.heartbeat_age_epochs;
      if (!res.accepted) {
        rec.ok = false;
        rec.reject_reason = res.reason;
        break;
      }
    }
    if (rec.ok) trace_.auth_accepted++;
    record(std::move(rec));
  }

  struct Partition {
    std::uint32_t idx;
    std::uint64_t from;
    std::uint64_t to;
  };
  struct Overlay {
    std::vector<std::vector<std::uint32_t>> out;
    std::vector<std::uint32_t> seeds;
    std::uint32_t max_rounds = 0;
  };

  SimConfig cfg_;
  std::mt19937_64 rng_;
  Swarm swarm_;
  std::vector<AgentRt> rt_;
  VerifierState vstate_;
  SimTrace trace_;
  std::map<std::uint32_t, RevocationEvent> revocations_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> exclusions_;
  std::vector<Partition> partitions_;
  std::map<std::uint32_t, std::int64_t> offsets_;
  std::map<std::uint32_t, Overlay> overlays_;
  std::map<std::uint32_t, Heartbeat> parent_latest_;
};

}  // namespace

double SimTrace::fprr() const {
  if (auth_attempts == 0) return 0.0;
  return static_cast<double>(auth_attempts - auth_accepted) /
         static_cast<double>(auth_attempts);
}

Swarm build_swarm(const HierarchySpec& spec) {
  if (spec.branching.empty())
    throw std::invalid_argument("hierarchy needs at least one level");
  for (std::uint32_t b : spec.branching)
    if (b == 0)
      throw std::invalid_argument("branching factors must be positive");

  Swarm swarm;
  SwarmAgent root;
  root.identity = create_root("root", spec.root_seed);
  swarm.agents.push_back(std::move(root));
  swarm.index.emplace("root", 0);

  std::vector<std::uint32_t> frontier{0};
  for (std::uint32_t branch : spec.branching) {
    std::vector<std::uint32_t> next;
    for (std::uint32_t pi : frontier) {
      ChildRegistry registry;
      for (std::uint32_t i = 1; i <= branch; ++i) {
        AgentId parent_id = swarm.agents[pi].identity.agent_id;
        AgentId child_id = parent_id + "." + std::to_string(i);
        auto issued =
            issue_credential(swarm.agents[pi].identity, child_id, 0, &registry);
        SwarmAgent agent;
        agent.credential = std::move(issued.first);
        agent.identity = std::move(issued.second);
        agent.parent = pi;
        std::uint32_t idx = static_cast<std::uint32_t>(swarm.agents.size());
        swarm.agents.push_back(std::move(agent));
        swarm.agents[pi].children.push_back(idx);
        swarm.index.emplace(child_id, idx);
        next.push_back(idx);
      }
    }
    frontier = std::move(next);
  }
  return swarm;
}

SimTrace run(const SimConfig& config) { return SimRun(config).go(); }

static std::string_view event_name(SimEvent event) {
  switch (event) {
    case SimEvent::Heartbeat: return "heartbeat";
    case SimEvent::Delivery: return "delivery";
    case SimEvent::Auth: return "auth";
  }
  return "unknown";
}

std::string trace_csv(const SimTrace& trace) {
  std::ostringstream out;
  out << "epoch,agent_id,level,event_type,outcome,reject_reason,"
         "heartbeat_age_epochs\n";
  for (const TraceRecord& rec : trace.records) {
    out << rec.epoch << ',' << rec.agent_id << ',' << rec.level << ','
        << event_name(rec.event) << ',';
    switch (rec.event) {
      case SimEvent::Heartbeat:
        out << (rec.sentinel_frame ? "sentinel" : "generated");
        break;
      case SimEvent::Delivery:
        out << (rec.ok ? "delivered" : "missed");
        break;
      case SimEvent::Auth:
        out << (rec.ok ? "accept" : "reject");
        break;
    }
    out << ',';
    if (rec.event == SimEvent::Auth && !rec.ok)
      out << to_string(rec.reject_reason);
    out << ',';
    if (rec.event == SimEvent::Auth && rec.age_epochs) out << *rec.age_epochs;
    out << '\n';
  }
  return out.str();
}

void write_csv(const SimTrace& trace, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open " + path);
  file << trace_csv(trace);
}

std::optional<std::uint64_t> last_accept_ms(const SimTrace& trace,
                                            const AgentId& agent) {
  for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it)
    if (it->event == SimEvent::Auth && it->ok && it->agent_id == agent)
      return it->t_ms;
  return std::nullopt;
}

void revoke_parent(SimConfig& config, const AgentId& parent_id,
                   std::uint64_t at_epoch, RevocationMode mode) {
  config.revocations.push_back({parent_id, at_epoch, mode});
}

void partition(SimConfig& config, std::vector<AgentId> entities,
               std::uint64_t from_epoch, std::uint64_t to_epoch) {
  config.partitions.push_back({std::move(entities), from_epoch, to_epoch});
}

}  // namespace hbhc
