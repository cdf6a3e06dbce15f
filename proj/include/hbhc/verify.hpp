#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>

#include "hbhc/heartbeat.hpp"

namespace hbhc {

struct FreshnessPolicy {
  std::uint64_t interval_ms = 10'000;   // heartbeat interval Δ_h
  std::uint64_t max_age_epochs = 3;     // oldest accepted heartbeat age
  std::uint64_t grace_epochs = 0;       // extra epochs tolerated past max age
  FreshnessMode mode = FreshnessMode::TimeEpoch;
  std::uint64_t max_sequence_gap = 3;   // sequence mode: largest forward jump
};

struct Challenge {
  std::array<std::uint8_t, 32> nonce{};
  std::uint64_t issued_at_ms = 0;
  std::uint64_t ttl_ms = 30'000;
  bool used = false;
};

inline bool challenge_expired(const Challenge& c, std::uint64_t now_ms) {
  return now_ms > c.issued_at_ms + c.ttl_ms;
}

struct AuthProof {
  Credential credential;
  std::uint64_t epoch = 0;
  Signature heartbeat_sig;
  Signature child_sig;
};

// Everything a verifier consults besides the proof, the challenge, and its
// local clock. network_ops counts transport performed on behalf of
// verification; no code path here ever increments it.
struct VerifierState {
  std::map<AgentId, PublicPoint> cached_parent_keys;
  std::map<AgentId, std::uint64_t> last_sequence;
  std::set<AgentId> sentinel_revoked;
  std::uint64_t network_ops = 0;
};

enum class RejectReason {
  None,
  UnknownParent,
  SentinelRevoked,
  HeartbeatExpired,
  FutureHeartbeat,
  SequenceRegression,
  SequenceGapExceeded,
  InvalidHeartbeatSig,
  BindingMismatch,
  InvalidChildSig,
  ChallengeInvalid,
  BelowMinEpoch,
};

std::string_view to_string(RejectReason reason);

struct VerifyResult {
  bool accepted = false;
  RejectReason reason = RejectReason::None;
  // current_epoch − proof.epoch under the verifier clock; 0 in sequence mode
  // and for sentinel proofs.
  std::int64_t heartbeat_age_epochs = 0;
};

Challenge issue_challenge(std::uint64_t now_ms, std::mt19937_64& rng,
                          std::uint64_t ttl_ms = 30'000);

// nonce(32) || epoch(8, big-endian) || heartbeat_sig(64); what the child signs.
Bytes proof_data(const std::array<std::uint8_t, 32>& nonce, std::uint64_t epoch,
                 const Signature& heartbeat_sig);

AuthProof create_auth_proof(const SecretScalar& child_sk,
                            const Credential& credential,
                            const Heartbeat& heartbeat,
                            const std::array<std::uint8_t, 32>& challenge_nonce);

// Local decision from (proof, state, challenge, now_ms, policy) alone.
// Checks run in a fixed order and the first failure is reported: unknown
// parent, sentinel latch, sentinel proof, freshness, heartbeat signature,
// credential binding, child signature, challenge. On accept the challenge is
// consumed and, in sequence mode, the parent's last counter is advanced;
// rejects leave all state untouched except the sentinel latch.
//
// check_signatures=false skips the two signature checks (5 and 7) for callers
// that construct proofs themselves and have verified a sample; every other
// check still runs.
VerifyResult verify_auth(const AuthProof& proof, VerifierState& state,
                         Challenge& challenge, std::uint64_t now_ms,
                         const FreshnessPolicy& policy,
                         bool check_signatures = true);

// verify_auth plus the token-bridge constraint proof.epoch ≥ min_epoch,
// reported as BelowMinEpoch before any state is touched.
VerifyResult verify_auth_with_min_epoch(const AuthProof& proof,
                                        VerifierState& state,
                                        Challenge& challenge,
                                        std::uint64_t now_ms,
                                        const FreshnessPolicy& policy,
                                        std::uint64_t min_epoch);

enum class AgentLifecycleState { Active, Zombie, Terminated };

std::string_view to_string(AgentLifecycleState s);

// Time-epoch classification: Active while the held heartbeat is fresh and the
// parent unrevoked, Zombie while revoked but still fresh, Terminated once
// freshness lapses. Terminated can only revert via a newer valid heartbeat
// (which raises last_heartbeat_epoch).
AgentLifecycleState classify_state(std::uint64_t last_heartbeat_epoch,
                                   std::optional<std::uint64_t> parent_revoked_at_ms,
                                   std::uint64_t now_ms,
                                   const FreshnessPolicy& policy);

// Token-claim bridge. The map carries the credential fields plus the three
// verification claims hb_binding, hpk_parent, hb_epoch_min (hex values).
using ClaimMap = std::map<std::string, std::string>;

ClaimMap embed_claims(const Credential& credential, const PublicPoint& parent_hpk,
                      std::uint64_t min_epoch);

struct ExtractedClaims {
  Credential credential;
  PublicPoint parent_hpk;
  std::uint64_t min_epoch = 0;
};

std::optional<ExtractedClaims> extract_claims(const ClaimMap& claims,
                                              std::string* error = nullptr);

}  // namespace hbhc
