#include "hbhc/verify.hpp"

#include <charconv>
#include <cstring>

namespace hbhc {

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::None: return "None";
    case RejectReason::UnknownParent: return "UnknownParent";
    case RejectReason::SentinelRevoked: return "SentinelRevoked";
    case RejectReason::HeartbeatExpired: return "HeartbeatExpired";
    case RejectReason::FutureHeartbeat: return "FutureHeartbeat";
    case RejectReason::SequenceRegression: return "SequenceRegression";
    case RejectReason::SequenceGapExceeded: return "SequenceGapExceeded";
    case RejectReason::InvalidHeartbeatSig: return "InvalidHeartbeatSig";
    case RejectReason::BindingMismatch: return "BindingMismatch";
    case RejectReason::InvalidChildSig: return "InvalidChildSig";
    case RejectReason::ChallengeInvalid: return "ChallengeInvalid";
    case RejectReason::BelowMinEpoch: return "BelowMinEpoch";
  }
  return "Unknown";
}

std::string_view to_string(AgentLifecycleState s) {
  switch (s) {
    case AgentLifecycleState::Active: return "Active";
    case AgentLifecycleState::Zombie: return "Zombie";
    case AgentLifecycleState::Terminated: return "Terminated";
  }
  return "Unknown";
}

Challenge issue_challenge(std::uint64_t now_ms, std::mt19937_64& rng,
                          std::uint64_t ttl_ms) {
  Challenge c;
  for (int i = 0; i < 4; ++i) {
    std::uint64_t word = rng();
    put_be64(c.nonce.data() + 8 * i, word);
  }
  c.issued_at_ms = now_ms;
  c.ttl_ms = ttl_ms;
  c.used = false;
  return c;
}

Bytes proof_data(const std::array<std::uint8_t, 32>& nonce, std::uint64_t epoch,
                 const Signature& heartbeat_sig) {
  Bytes data(104);
  std::memcpy(data.data(), nonce.data(), 32);
  put_be64(data.data() + 32, epoch);
  auto sig = heartbeat_sig.serialize();
  std::memcpy(data.data() + 40, sig.data(), 64);
  return data;
}

AuthProof create_auth_proof(const SecretScalar& child_sk,
                            const Credential& credential,
                            const Heartbeat& heartbeat,
                            const std::array<std::uint8_t, 32>& challenge_nonce) {
  AuthProof proof;
  proof.credential = credential;
  proof.epoch = heartbeat.epoch;
  proof.heartbeat_sig = heartbeat.sig;
  proof.child_sig = sign(
      child_sk, proof_data(challenge_nonce, heartbeat.epoch, heartbeat.sig));
  return proof;
}

VerifyResult verify_auth(const AuthProof& proof, VerifierState& state,
                         Challenge& challenge, std::uint64_t now_ms,
                         const FreshnessPolicy& policy, bool check_signatures) {
  VerifyResult res;
  if (policy.mode == FreshnessMode::TimeEpoch &&
      proof.epoch != kSentinelEpoch) {
    std::uint64_t current = now_ms / policy.interval_ms;
    res.heartbeat_age_epochs = static_cast<std::int64_t>(current) -
                               static_cast<std::int64_t>(proof.epoch);
  }
  auto reject = [&](RejectReason r) {
    res.accepted = false;
    res.reason = r;
    return res;
  };

  const AgentId& parent = proof.credential.parent_id;
  auto key_it = state.cached_parent_keys.find(parent);
  if (key_it == state.cached_parent_keys.end())
    return reject(RejectReason::UnknownParent);
  const PublicPoint& hpk = key_it->second;

  if (state.sentinel_revoked.count(parent))
    return reject(RejectReason::SentinelRevoked);

  if (proof.epoch == kSentinelEpoch) {
    state.sentinel_revoked.insert(parent);
    return reject(RejectReason::SentinelRevoked);
  }

  if (policy.mode == FreshnessMode::TimeEpoch) {
    std::uint64_t current = now_ms / policy.interval_ms;
    if (proof.epoch > current) return reject(RejectReason::FutureHeartbeat);
    if (current - proof.epoch > policy.max_age_epochs + policy.grace_epochs)
      return reject(RejectReason::HeartbeatExpired);
  } else {
    std::uint64_t s_last = 0;
    auto seq_it = state.last_sequence.find(parent);
    if (seq_it != state.last_sequence.end()) s_last = seq_it->second;
    if (proof.epoch <= s_last) return reject(RejectReason::SequenceRegression);
    if (proof.epoch - s_last > policy.max_sequence_gap)
      return reject(RejectReason::SequenceGapExceeded);
  }

  if (check_signatures) {
    Digest commitment = heartbeat_commitment(hpk, proof.epoch);
    if (!verify(hpk, commitment, proof.heartbeat_sig))
      return reject(RejectReason::InvalidHeartbeatSig);
  }

  if (proof.credential.hb_binding !=
      compute_hb_binding(hpk, proof.credential.child_id))
    return reject(RejectReason::BindingMismatch);

  if (check_signatures) {
    Bytes data = proof_data(challenge.nonce, proof.epoch, proof.heartbeat_sig);
    if (!verify(proof.credential.child_pk, data, proof.child_sig))
      return reject(RejectReason::InvalidChildSig);
  }

  if (challenge.used || challenge_expired(challenge, now_ms))
    return reject(RejectReason::ChallengeInvalid);

  challenge.used = true;
  if (policy.mode == FreshnessMode::Sequence)
    state.last_sequence[parent] = proof.epoch;
  res.accepted = true;
  res.reason = RejectReason::None;
  return res;
}

VerifyResult verify_auth_with_min_epoch(const AuthProof& proof,
                                        VerifierState& state,
                                        Challenge& challenge,
                                        std::uint64_t now_ms,
                                        const FreshnessPolicy& policy,
                                        std::uint64_t min_epoch) {
  if (proof.epoch < min_epoch) {
    VerifyResult res;
    res.accepted = false;
    res.reason = RejectReason::BelowMinEpoch;
    if (policy.mode == FreshnessMode::TimeEpoch) {
      std::uint64_t current = now_ms / policy.interval_ms;
      res.heartbeat_age_epochs = static_cast<std::int64_t>(current) -
                                 static_cast<std::int64_t>(proof.epoch);
    }
    return res;
  }
  return verify_auth(proof, state, challenge, now_ms, policy);
}

AgentLifecycleState classify_state(
    std::uint64_t last_heartbeat_epoch,
    std::optional<std::uint64_t> parent_revoked_at_ms, std::uint64_t now_ms,
    const FreshnessPolicy& policy) {
  std::uint64_t current = now_ms / policy.interval_ms;
  bool fresh = last_heartbeat_epoch <= current &&
               current - last_heartbeat_epoch <=
                   policy.max_age_epochs + policy.grace_epochs;
  if (!fresh) return AgentLifecycleState::Terminated;
  if (parent_revoked_at_ms && *parent_revoked_at_ms <= now_ms)
    return AgentLifecycleState::Zombie;
  return AgentLifecycleState::Active;
}

ClaimMap embed_claims(const Credential& credential, const PublicPoint& parent_hpk,
                      std::uint64_t min_epoch) {
  ClaimMap claims;
  claims["child_id"] = credential.child_id;
  claims["child_pk"] = to_hex(credential.child_pk.serialize());
  claims["parent_id"] = credential.parent_id;
  claims["issued_at_epoch"] = std::to_string(credential.issued_at_epoch);
  claims["hb_binding"] = to_hex(credential.hb_binding);
  claims["hpk_parent"] = to_hex(parent_hpk.serialize());
  std::uint8_t min_be[8];
  put_be64(min_be, min_epoch);
  claims["hb_epoch_min"] = to_hex(min_be);
  return claims;
}

std::optional<ExtractedClaims> extract_claims(const ClaimMap& claims,
                                              std::string* error) {
  auto fail = [&](std::string msg) -> std::optional<ExtractedClaims> {
    if (error) *error = std::move(msg);
    return std::nullopt;
  };
  auto get = [&](const char* key) -> const std::string* {
    auto it = claims.find(key);
    return it == claims.end() ? nullptr : &it->second;
  };
  auto fixed_hex = [&](const std::string& value, std::size_t bytes) {
    auto raw = from_hex(value);
    if (!raw || raw->size() != bytes) return std::optional<Bytes>{};
    return raw;
  };

  for (const char* key : {"child_id", "child_pk", "parent_id",
                          "issued_at_epoch", "hb_binding", "hpk_parent",
                          "hb_epoch_min"}) {
    if (!get(key)) return fail(std::string("missing claim: ") + key);
  }

  ExtractedClaims out;
  out.credential.child_id = *get("child_id");
  out.credential.parent_id = *get("parent_id");

  auto pk = fixed_hex(*get("child_pk"), 64);
  if (!pk) return fail("malformed claim: child_pk");
  out.credential.child_pk =
      PublicPoint::from_bytes(std::span<const std::uint8_t, 64>(pk->data(), 64));

  auto binding = fixed_hex(*get("hb_binding"), 32);
  if (!binding) return fail("malformed claim: hb_binding");
  std::memcpy(out.credential.hb_binding.data(), binding->data(), 32);

  const std::string& issued = *get("issued_at_epoch");
  auto [ptr, ec] = std::from_chars(issued.data(), issued.data() + issued.size(),
                                   out.credential.issued_at_epoch);
  if (ec != std::errc{} || ptr != issued.data() + issued.size())
    return fail("malformed claim: issued_at_epoch");

  auto hpk = fixed_hex(*get("hpk_parent"), 64);
  if (!hpk) return fail("malformed claim: hpk_parent");
  out.parent_hpk =
      PublicPoint::from_bytes(std::span<const std::uint8_t, 64>(hpk->data(), 64));

  auto min_raw = fixed_hex(*get("hb_epoch_min"), 8);
  if (!min_raw) return fail("malformed claim: hb_epoch_min");
  out.min_epoch = get_be64(min_raw->data());
  return out;
}

}  // namespace hbhc
