#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>

#include "hbhc/bytes.hpp"
#include "hbhc/verify.hpp"

using namespace hbhc;

namespace {

// Plain parse, no assertion machinery: used in static initializers. A bad
// literal shows up as a golden-vector mismatch instead.
std::array<std::uint8_t, 32> arr32(std::string_view hex) {
  std::array<std::uint8_t, 32> out{};
  auto b = from_hex(hex);
  if (b && b->size() == 32) std::copy(b->begin(), b->end(), out.begin());
  return out;
}

const std::array<std::uint8_t, 32> kSeed =
    arr32("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f");

// One parent/child pair shared by most cases; constructing it costs a few
// signatures so it is built once.
struct Fixture {
  AgentIdentity root = create_root("root", kSeed);
  Credential cred;
  AgentIdentity child;
  FreshnessPolicy policy;  // 10 s epochs, max age 3
  HeartbeatConfig hc;
  std::mt19937_64 rng{12345};

  Fixture() {
    auto issued = issue_credential(root, "worker-1", 0);
    cred = issued.first;
    child = issued.second;
  }

  VerifierState fresh_state() const {
    VerifierState s;
    s.cached_parent_keys["root"] = root.heartbeat_pk;
    return s;
  }

  // Proof over the heartbeat for `hb_now_ms`, challenge issued at `now_ms`.
  struct Prepared {
    AuthProof proof;
    Challenge challenge;
  };

  Prepared prepare(std::uint64_t hb_now_ms, std::uint64_t now_ms) {
    Challenge ch = issue_challenge(now_ms, rng);
    Heartbeat hb = heartbeat_gen(root, hb_now_ms, hc);
    return {create_auth_proof(child.identity_sk, cred, hb, ch.nonce), ch};
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("accepts a fresh heartbeat and reports its age") {
  auto& f = fx();
  for (std::uint64_t age = 0; age <= 3; ++age) {
    VerifierState state = f.fresh_state();
    std::uint64_t now = 50'000 + age * 10'000;  // heartbeat epoch 5
    auto p = f.prepare(55'000, now);
    VerifyResult r = verify_auth(p.proof, state, p.challenge, now, f.policy);
    CHECK(r.accepted);
    CHECK(r.reason == RejectReason::None);
    CHECK(r.heartbeat_age_epochs == static_cast<std::int64_t>(age));
    CHECK(p.challenge.used);
  }
}

TEST_CASE("rejects one epoch past max age and accepts under grace") {
  auto& f = fx();
  auto p = f.prepare(55'000, 95'000);  // age 4
  {
    VerifierState state = f.fresh_state();
    auto ch = p.challenge;
    VerifyResult r = verify_auth(p.proof, state, ch, 95'000, f.policy);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == RejectReason::HeartbeatExpired);
    CHECK(r.heartbeat_age_epochs == 4);
    CHECK_FALSE(ch.used);
  }
  {
    FreshnessPolicy lenient = f.policy;
    lenient.grace_epochs = 2;
    VerifierState state = f.fresh_state();
    auto ch = p.challenge;
    CHECK(verify_auth(p.proof, state, ch, 95'000, lenient).accepted);

    // age 5 still inside grace, age 6 out
    auto p5 = f.prepare(55'000, 105'000);
    CHECK(verify_auth(p5.proof, state, p5.challenge, 105'000, lenient).accepted);
    auto p6 = f.prepare(55'000, 115'000);
    VerifyResult r = verify_auth(p6.proof, state, p6.challenge, 115'000, lenient);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == RejectReason::HeartbeatExpired);
  }
}

TEST_CASE("rejects heartbeats from the verifier's future") {
  auto& f = fx();
  VerifierState state = f.fresh_state();
  auto p = f.prepare(65'000, 55'000);  // heartbeat epoch 6, verifier at 5
  VerifyResult r = verify_auth(p.proof, state, p.challenge, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::FutureHeartbeat);
  CHECK(r.heartbeat_age_epochs == -1);
}

TEST_CASE("unknown parent fails closed before anything else") {
  auto& f = fx();
  VerifierState state;  // cold cache
  auto p = f.prepare(55'000, 55'000);
  VerifyResult r = verify_auth(p.proof, state, p.challenge, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::UnknownParent);

  // Even a stale heartbeat reports UnknownParent on a cold cache: rule order.
  VerifierState cold;
  auto stale = f.prepare(5'000, 95'000);
  CHECK(verify_auth(stale.proof, cold, stale.challenge, 95'000, f.policy).reason ==
        RejectReason::UnknownParent);
}

TEST_CASE("sentinel revokes immediately and latches") {
  auto& f = fx();
  VerifierState state = f.fresh_state();
  Challenge ch = issue_challenge(55'000, f.rng);
  Heartbeat sentinel = revocation_heartbeat(f.root);
  AuthProof proof = create_auth_proof(f.child.identity_sk, f.cred, sentinel, ch.nonce);
  VerifyResult r = verify_auth(proof, state, ch, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::SentinelRevoked);
  CHECK(state.sentinel_revoked.count("root") == 1);

  // Latched: a perfectly fresh heartbeat is now rejected, and stays rejected.
  for (int i = 0; i < 3; ++i) {
    auto p = f.prepare(55'000, 55'000);
    VerifyResult again = verify_auth(p.proof, state, p.challenge, 55'000, f.policy);
    CHECK_FALSE(again.accepted);
    CHECK(again.reason == RejectReason::SentinelRevoked);
  }
}

TEST_CASE("forged heartbeat signature is rejected") {
  auto& f = fx();
  VerifierState state = f.fresh_state();
  auto p = f.prepare(55'000, 55'000);
  p.proof.heartbeat_sig.r[0] ^= 1;
  // The child signs over the (now broken) heartbeat signature so the proof
  // stays internally consistent; only rule 5 should fire.
  Bytes pd = proof_data(p.challenge.nonce, p.proof.epoch, p.proof.heartbeat_sig);
  p.proof.child_sig = sign(f.child.identity_sk, pd);
  VerifyResult r = verify_auth(p.proof, state, p.challenge, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::InvalidHeartbeatSig);
}

TEST_CASE("heartbeat signed by the wrong parent key is rejected") {
  auto& f = fx();
  auto other = create_root("other", arr32(
      "1111111111111111111111111111111111111111111111111111111111111111"));
  VerifierState state = f.fresh_state();
  Challenge ch = issue_challenge(55'000, f.rng);
  Heartbeat hb = heartbeat_gen(other, 55'000, f.hc);  // other's hpk inside
  AuthProof proof = create_auth_proof(f.child.identity_sk, f.cred, hb, ch.nonce);
  VerifyResult r = verify_auth(proof, state, ch, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  // The verifier checks against its cached key for "root", not the frame's.
  CHECK(r.reason == RejectReason::InvalidHeartbeatSig);
}

TEST_CASE("credential transplanted under another parent hits the binding") {
  auto& f = fx();
  auto other = create_root("other", arr32(
      "2222222222222222222222222222222222222222222222222222222222222222"));
  auto [other_cred, other_child] = issue_credential(other, "worker-1", 0);

  // Verifier knows "root" and caches the attacker's key under it: the binding
  // in other_cred refers to other's hpk, so rule 6 fires.
  VerifierState state;
  state.cached_parent_keys["root"] = f.root.heartbeat_pk;
  Challenge ch = issue_challenge(55'000, f.rng);
  Heartbeat hb = heartbeat_gen(f.root, 55'000, f.hc);
  Credential forged = other_cred;
  forged.parent_id = "root";
  AuthProof proof = create_auth_proof(other_child.identity_sk, forged, hb, ch.nonce);
  VerifyResult r = verify_auth(proof, state, ch, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::BindingMismatch);
}

TEST_CASE("proof signed by a key other than the credential's is rejected") {
  auto& f = fx();
  AgentIdentity impostor = derive_child(f.root, "worker-2");
  VerifierState state = f.fresh_state();
  Challenge ch = issue_challenge(55'000, f.rng);
  Heartbeat hb = heartbeat_gen(f.root, 55'000, f.hc);
  AuthProof proof = create_auth_proof(impostor.identity_sk, f.cred, hb, ch.nonce);
  VerifyResult r = verify_auth(proof, state, ch, 55'000, f.policy);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::InvalidChildSig);
}

TEST_CASE("challenge misuse is the last check") {
  auto& f = fx();

  SUBCASE("response to a different challenge") {
    // The nonce is bound through the child signature, so presenting the proof
    // against another challenge breaks that signature.
    VerifierState state = f.fresh_state();
    auto p = f.prepare(55'000, 55'000);
    Challenge other = issue_challenge(55'000, f.rng);
    VerifyResult r = verify_auth(p.proof, state, other, 55'000, f.policy);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == RejectReason::InvalidChildSig);
  }

  SUBCASE("single use") {
    VerifierState state = f.fresh_state();
    auto p = f.prepare(55'000, 55'000);
    CHECK(verify_auth(p.proof, state, p.challenge, 55'000, f.policy).accepted);
    VerifyResult r = verify_auth(p.proof, state, p.challenge, 55'000, f.policy);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == RejectReason::ChallengeInvalid);
  }

  SUBCASE("ttl boundary") {
    VerifierState state = f.fresh_state();
    auto p = f.prepare(55'000, 55'000);
    // Exactly at issued_at + ttl the challenge still lives; one ms later not.
    CHECK_FALSE(challenge_expired(p.challenge, 85'000));
    CHECK(challenge_expired(p.challenge, 85'001));
    Challenge stale = p.challenge;
    Heartbeat hb = heartbeat_gen(f.root, 85'000, f.hc);
    AuthProof late = create_auth_proof(f.child.identity_sk, f.cred, hb, stale.nonce);
    VerifyResult r = verify_auth(late, state, stale, 85'001, f.policy);
    CHECK_FALSE(r.accepted);
    CHECK(r.reason == RejectReason::ChallengeInvalid);
  }
}

TEST_CASE("rejects leave state untouched; accepts consume atomically") {
  auto& f = fx();
  VerifierState state = f.fresh_state();
  auto stale = f.prepare(5'000, 95'000);
  verify_auth(stale.proof, state, stale.challenge, 95'000, f.policy);
  CHECK_FALSE(stale.challenge.used);
  CHECK(state.last_sequence.empty());

  auto good = f.prepare(95'000, 95'000);
  CHECK(verify_auth(good.proof, state, good.challenge, 95'000, f.policy).accepted);
  CHECK(good.challenge.used);
}

TEST_CASE("verification is deterministic") {
  auto& f = fx();
  auto p = f.prepare(55'000, 55'000);
  for (int i = 0; i < 5; ++i) {
    VerifierState state = f.fresh_state();
    Challenge ch = p.challenge;
    VerifyResult r = verify_auth(p.proof, state, ch, 55'000, f.policy);
    CHECK(r.accepted);
  }
}

TEST_CASE("check_signatures=false skips only the signature rules") {
  auto& f = fx();
  // Garbage signatures pass when skipped...
  VerifierState state = f.fresh_state();
  Challenge ch = issue_challenge(55'000, f.rng);
  AuthProof proof;
  proof.credential = f.cred;
  proof.epoch = 5;
  VerifyResult r = verify_auth(proof, state, ch, 55'000, f.policy, false);
  CHECK(r.accepted);

  // ...but freshness, binding and challenge rules still fire.
  VerifierState s2 = f.fresh_state();
  Challenge ch2 = issue_challenge(95'000, f.rng);
  AuthProof old = proof;
  old.epoch = 0;
  CHECK(verify_auth(old, s2, ch2, 95'000, f.policy, false).reason ==
        RejectReason::HeartbeatExpired);

  AuthProof wrong_binding = proof;
  wrong_binding.credential.hb_binding[0] ^= 1;
  Challenge ch3 = issue_challenge(55'000, f.rng);
  CHECK(verify_auth(wrong_binding, s2, ch3, 55'000, f.policy, false).reason ==
        RejectReason::BindingMismatch);

  Challenge used = issue_challenge(55'000, f.rng);
  used.used = true;
  CHECK(verify_auth(proof, s2, used, 55'000, f.policy, false).reason ==
        RejectReason::ChallengeInvalid);
}

TEST_CASE("sequence mode enforces monotonicity with a bounded gap") {
  auto& f = fx();
  FreshnessPolicy pol = f.policy;
  pol.mode = FreshnessMode::Sequence;
  VerifierState state = f.fresh_state();

  auto attempt = [&](std::uint64_t seq) {
    Challenge ch = issue_challenge(1'000, f.rng);
    Heartbeat hb = sequence_heartbeat_gen(f.root, seq);
    AuthProof proof = create_auth_proof(f.child.identity_sk, f.cred, hb, ch.nonce);
    return verify_auth(proof, state, ch, 1'000, pol);
  };

  CHECK(attempt(1).accepted);
  CHECK(attempt(4).accepted);  // gap 3 = max allowed
  CHECK(attempt(8).reason == RejectReason::SequenceGapExceeded);
  CHECK(attempt(3).reason == RejectReason::SequenceRegression);
  CHECK(attempt(4).reason == RejectReason::SequenceRegression);  // replay
  CHECK(attempt(5).accepted);
  CHECK(state.last_sequence["root"] == 5);

  // Sequence acceptance is clock independent.
  VerifierState s2 = f.fresh_state();
  Challenge ch = issue_challenge(999'000'000, f.rng);
  Heartbeat hb = sequence_heartbeat_gen(f.root, 1);
  AuthProof proof = create_auth_proof(f.child.identity_sk, f.cred, hb, ch.nonce);
  CHECK(verify_auth(proof, s2, ch, 999'000'000, pol).accepted);
}

TEST_CASE("min-epoch bridge rejects older heartbeats than the claim allows") {
  auto& f = fx();
  VerifierState state = f.fresh_state();
  auto p = f.prepare(55'000, 55'000);
  Challenge ch = p.challenge;
  VerifyResult r = verify_auth_with_min_epoch(p.proof, state, ch, 55'000,
                                              f.policy, 6);
  CHECK_FALSE(r.accepted);
  CHECK(r.reason == RejectReason::BelowMinEpoch);
  CHECK_FALSE(ch.used);

  VerifyResult ok = verify_auth_with_min_epoch(p.proof, state, ch, 55'000,
                                               f.policy, 5);
  CHECK(ok.accepted);
}

TEST_CASE("lifecycle classification walks active, zombie, terminated") {
  auto& f = fx();
  // Heartbeat epoch 5, revocation at 60 s.
  CHECK(classify_state(5, std::nullopt, 55'000, f.policy) ==
        AgentLifecycleState::Active);
  CHECK(classify_state(5, std::nullopt, 85'000, f.policy) ==
        AgentLifecycleState::Active);  // age 3, still fresh
  CHECK(classify_state(5, std::nullopt, 95'000, f.policy) ==
        AgentLifecycleState::Terminated);
  CHECK(classify_state(5, 60'000, 65'000, f.policy) ==
        AgentLifecycleState::Zombie);
  CHECK(classify_state(5, 60'000, 95'000, f.policy) ==
        AgentLifecycleState::Terminated);
  // A newer heartbeat after expiry reactivates (if the parent is unrevoked).
  CHECK(classify_state(9, std::nullopt, 95'000, f.policy) ==
        AgentLifecycleState::Active);
  CHECK(to_string(AgentLifecycleState::Zombie) == "Zombie");
}

TEST_CASE("claim embedding roundtrips and surfaces tampering") {
  auto& f = fx();
  ClaimMap claims = embed_claims(f.cred, f.root.heartbeat_pk, 7);
  auto extracted = extract_claims(claims);
  REQUIRE(extracted.has_value());
  CHECK(extracted->credential == f.cred);
  CHECK(extracted->parent_hpk == f.root.heartbeat_pk);
  CHECK(extracted->min_epoch == 7);

  std::string error;
  ClaimMap missing = claims;
  missing.erase("hb_binding");
  CHECK_FALSE(extract_claims(missing, &error).has_value());
  CHECK_FALSE(error.empty());

  ClaimMap bad_hex = claims;
  bad_hex["hpk_parent"] = "zz";
  CHECK_FALSE(extract_claims(bad_hex, &error).has_value());

  ClaimMap bad_num = claims;
  bad_num["hb_epoch_min"] = "not-a-number";
  CHECK_FALSE(extract_claims(bad_num, &error).has_value());
}

TEST_CASE("issued challenges differ and respect the requested ttl") {
  std::mt19937_64 rng(7);
  Challenge a = issue_challenge(1'000, rng);
  Challenge b = issue_challenge(1'000, rng);
  CHECK(a.nonce != b.nonce);
  CHECK(a.ttl_ms == 30'000);
  Challenge c = issue_challenge(1'000, rng, 5'000);
  CHECK(c.ttl_ms == 5'000);
  CHECK_FALSE(challenge_expired(c, 6'000));
  CHECK(challenge_expired(c, 6'001));
}

TEST_CASE("reject reasons have stable names") {
  CHECK(to_string(RejectReason::None) == "None");
  CHECK(to_string(RejectReason::UnknownParent) == "UnknownParent");
  CHECK(to_string(RejectReason::SentinelRevoked) == "SentinelRevoked");
  CHECK(to_string(RejectReason::HeartbeatExpired) == "HeartbeatExpired");
  CHECK(to_string(RejectReason::FutureHeartbeat) == "FutureHeartbeat");
  CHECK(to_string(RejectReason::SequenceRegression) == "SequenceRegression");
  CHECK(to_string(RejectReason::SequenceGapExceeded) == "SequenceGapExceeded");
  CHECK(to_string(RejectReason::InvalidHeartbeatSig) == "InvalidHeartbeatSig");
  CHECK(to_string(RejectReason::BindingMismatch) == "BindingMismatch");
  CHECK(to_string(RejectReason::InvalidChildSig) == "InvalidChildSig");
  CHECK(to_string(RejectReason::ChallengeInvalid) == "ChallengeInvalid");
  CHECK(to_string(RejectReason::BelowMinEpoch) == "BelowMinEpoch");
}

// Freshness window edges across randomized policies: a heartbeat is accepted
// iff 0 <= age <= max_age + grace under the verifier clock.
TEST_CASE("freshness window boundary sweep") {
  auto& f = fx();
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    FreshnessPolicy pol;
    pol.interval_ms = 1'000 * (1 + rng() % 10);
    pol.max_age_epochs = 1 + rng() % 5;
    pol.grace_epochs = rng() % 3;
    std::uint64_t hb_epoch = 5 + rng() % 20;
    HeartbeatConfig hc;
    hc.interval_ms = pol.interval_ms;
    Heartbeat hb = heartbeat_gen(f.root, hb_epoch * pol.interval_ms, hc);

    std::uint64_t limit = pol.max_age_epochs + pol.grace_epochs;
    for (std::int64_t age : {std::int64_t{-1}, std::int64_t{0},
                             static_cast<std::int64_t>(limit),
                             static_cast<std::int64_t>(limit) + 1}) {
      std::uint64_t now = (hb_epoch + age) * pol.interval_ms;
      VerifierState state = f.fresh_state();
      Challenge ch = issue_challenge(now, f.rng);
      AuthProof proof = create_auth_proof(f.child.identity_sk, f.cred, hb, ch.nonce);
      VerifyResult r = verify_auth(proof, state, ch, now, pol);
      bool expect = age >= 0 && age <= static_cast<std::int64_t>(limit);
      CHECK(r.accepted == expect);
      if (!expect)
        CHECK(r.reason == (age < 0 ? RejectReason::FutureHeartbeat
                                   : RejectReason::HeartbeatExpired));
    }
  }
}
