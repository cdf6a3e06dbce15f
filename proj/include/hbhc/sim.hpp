#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hbhc/verify.hpp"

namespace hbhc {

// Branching factors per level under a single root, e.g. {3, 5, 2} gives
// 1 + 3 + 15 + 30 = 49 agents. Ids: "root", then "<parent>.<i>" with i >= 1.
struct HierarchySpec {
  std::vector<std::uint32_t> branching;
  std::array<std::uint8_t, 32> root_seed{};
};

struct PushDelivery {
  double drop_rate = 0.0;
};

// Two independent channels per delivery; the frame arrives unless both drop.
struct DualPathDelivery {
  double drop_rate_per_path = 0.0;
};

// Bundle of the next buffer_epochs frames each epoch. The provisioning
// handoff at epoch 0 is reliable; later bundles drop as a unit.
struct PrecomputeDelivery {
  std::uint32_t buffer_epochs = 3;
  double drop_rate = 0.0;
};

// Child fetches the latest frame immediately before each auth attempt.
struct PullDelivery {
  double drop_rate = 0.0;
};

// Static overlay per run among each parent's children: every child picks
// `fanout` distinct out-neighbors. Each epoch the parent sends the frame to a
// fixed seed set; holders then forward to their out-neighbors once per round,
// every forward dropped independently, until all hold or max_rounds is spent.
struct GossipDelivery {
  std::uint32_t fanout = 3;
  std::uint32_t seed_set_size = 5;
  double per_hop_drop = 0.0;
  std::uint32_t max_rounds = 0;  // 0 = ceil(log2(group size)) + 3
};

using DeliveryModel = std::variant<PushDelivery, DualPathDelivery,
                                   PrecomputeDelivery, PullDelivery,
                                   GossipDelivery>;

enum class RevocationMode { Implicit, Sentinel };

// The parent performs its at_epoch emission (the sentinel frame in Sentinel
// mode, the normal frame otherwise) and then ceases. Revocation time is
// at_epoch * interval_ms.
struct RevocationEvent {
  AgentId parent_id;
  std::uint64_t at_epoch = 0;
  RevocationMode mode = RevocationMode::Implicit;
};

// Selective revocation: the parent stops distributing to one child from
// from_epoch onward. Gossip forwarding between siblings is not affected.
struct ExclusionEvent {
  AgentId parent_id;
  AgentId child_id;
  std::uint64_t from_epoch = 0;
};

// No deliveries to or from the named entities during [from_epoch, to_epoch).
// "verifier" is a valid entity name; verification is local, so partitioning
// the verifier changes nothing, which is the property under test.
struct PartitionEvent {
  std::vector<AgentId> entities;
  std::uint64_t from_epoch = 0;
  std::uint64_t to_epoch = 0;
};

struct SimConfig {
  HierarchySpec spec;
  DeliveryModel delivery = PushDelivery{};
  FreshnessPolicy policy;
  std::uint64_t duration_epochs = 100;
  std::uint64_t auth_cadence_ms = 0;  // 0 = one attempt per agent per epoch
  std::uint64_t auth_phase_ms = 0;    // offset of attempt times within cadence
  std::vector<RevocationEvent> revocations;
  std::vector<ExclusionEvent> exclusions;
  std::vector<PartitionEvent> partitions;
  std::map<AgentId, std::int64_t> clock_offsets_ms;
  std::int64_t verifier_offset_ms = 0;
  bool verifier_cold_cache = false;  // skip trust establishment entirely
  bool full_crypto = false;  // sign and check every proof, not just samples
  std::uint64_t rng_seed = 0;
};

enum class SimEvent { Heartbeat, Delivery, Auth };

struct TraceRecord {
  std::uint64_t epoch = 0;  // wall-clock epoch of the event
  AgentId agent_id;
  std::uint32_t level = 0;
  SimEvent event = SimEvent::Auth;
  bool ok = false;
  bool sentinel_frame = false;  // heartbeat events: revocation broadcast
  RejectReason reject_reason = RejectReason::None;
  // Verifier-view age of the presented heartbeat; absent for non-auth events
  // and for attempts where the agent held no heartbeat at all.
  std::optional<std::int64_t> age_epochs;
  std::uint64_t t_ms = 0;
};

struct SimTrace {
  std::vector<TraceRecord> records;
  std::uint64_t heartbeats_generated = 0;  // individual frames, buffers included
  std::uint64_t deliveries_attempted = 0;
  std::uint64_t deliveries_succeeded = 0;
  std::uint64_t bytes_delivered = 0;
  std::uint64_t auth_attempts = 0;
  std::uint64_t auth_accepted = 0;
  std::uint64_t verifier_network_ops = 0;  // stays 0: verification is local

  double fprr() const;  // rejected attempts / all attempts
};

inline constexpr std::uint32_t kNoParent = ~0u;

struct SwarmAgent {
  AgentIdentity identity;
  std::optional<Credential> credential;  // absent for the root
  std::uint32_t parent = kNoParent;
  std::vector<std::uint32_t> children;
};

// Agents in breadth-first order, root at index 0. Credentials are issued per
// edge at epoch 0 and every parent's heartbeat key is what verifiers cache.
struct Swarm {
  std::vector<SwarmAgent> agents;
  std::map<AgentId, std::uint32_t> index;
};

Swarm build_swarm(const HierarchySpec& spec);

// Deterministic run: fixed 100 ms ticks, per tick heartbeat generation, then
// revocations and deliveries, then auth attempts. Authentication walks the
// whole credential chain root-down; the first failing link decides the
// outcome. Throws std::invalid_argument on malformed configs or events.
SimTrace run(const SimConfig& config);

// Columns: epoch, agent_id, level, event_type, outcome, reject_reason,
// heartbeat_age_epochs.
std::string trace_csv(const SimTrace& trace);
void write_csv(const SimTrace& trace, const std::string& path);

std::optional<std::uint64_t> last_accept_ms(const SimTrace& trace,
                                            const AgentId& agent);

// Config-building conveniences for the two common interventions.
void revoke_parent(SimConfig& config, const AgentId& parent_id,
                   std::uint64_t at_epoch,
                   RevocationMode mode = RevocationMode::Implicit);
void partition(SimConfig& config, std::vector<AgentId> entities,
               std::uint64_t from_epoch, std::uint64_t to_epoch);

}  // namespace hbhc
