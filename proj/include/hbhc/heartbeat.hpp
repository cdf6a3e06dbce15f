#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hbhc/hierarchy.hpp"

namespace hbhc {

// Epoch value reserved for explicit revocation.
inline constexpr std::uint64_t kSentinelEpoch = ~0ull;

enum class FreshnessMode { TimeEpoch, Sequence };

struct HeartbeatConfig {
  std::uint64_t interval_ms = 10'000;  // heartbeat interval Δ_h
  FreshnessMode mode = FreshnessMode::TimeEpoch;
  std::uint32_t precompute_cap = 3;  // max pre-generated epochs per buffer
};

// Signed liveness commitment. The epoch field carries a time epoch, a
// sequence number, or the revocation sentinel depending on mode.
struct Heartbeat {
  std::uint64_t epoch = 0;
  Digest commitment{};
  Signature sig;
  PublicPoint hpk;
  bool operator==(const Heartbeat&) const = default;
};

inline constexpr std::size_t kHeartbeatFrameSize = 168;

std::uint64_t epoch_for(std::uint64_t now_ms, std::uint64_t interval_ms);

Digest heartbeat_commitment(const PublicPoint& hpk, std::uint64_t epoch);

Heartbeat heartbeat_gen(const AgentIdentity& parent, std::uint64_t now_ms,
                        const HeartbeatConfig& config);

// Sequence-counter variant: epoch field carries seq. Caller keeps seq
// strictly increasing; the sentinel value is refused.
Heartbeat sequence_heartbeat_gen(const AgentIdentity& parent, std::uint64_t seq);

Heartbeat revocation_heartbeat(const AgentIdentity& parent);

struct PrecomputeBuffer {
  std::vector<Heartbeat> heartbeats;  // contiguous, strictly increasing epochs
  std::uint32_t horizon_epochs = 0;
};

PrecomputeBuffer precompute(const AgentIdentity& parent,
                            std::uint64_t start_epoch, std::uint32_t n,
                            const HeartbeatConfig& config);

// Wire layout: commitment(32) || sig(64) || epoch(8, big-endian) || hpk(64).
std::array<std::uint8_t, kHeartbeatFrameSize> serialize_heartbeat(
    const Heartbeat& hb);

// Re-checks length, the commitment recomputation, and the signature; any
// failure yields nullopt with a reason in *error.
std::optional<Heartbeat> deserialize_heartbeat(
    std::span<const std::uint8_t> frame, std::string* error = nullptr);

}  // namespace hbhc
