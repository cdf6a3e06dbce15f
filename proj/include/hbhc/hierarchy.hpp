#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "hbhc/crypto.hpp"

namespace hbhc {

// UTF-8, non-empty, at most 256 bytes, unique within one hierarchy.
using AgentId = std::string;

void validate_agent_id(const AgentId& id);  // throws std::invalid_argument

// An agent's three key components. The heartbeat keys sign liveness
// commitments exclusively; the child derivation key seeds child identities.
struct AgentIdentity {
  AgentId agent_id;
  SecretScalar identity_sk;
  PublicPoint identity_pk;
  SecretScalar heartbeat_sk;
  PublicPoint heartbeat_pk;
  std::array<std::uint8_t, 32> child_derivation_key{};
  std::uint32_t level = 0;
};

struct Credential {
  AgentId child_id;
  PublicPoint child_pk;
  Digest hb_binding{};
  AgentId parent_id;
  std::uint64_t issued_at_epoch = 0;
  bool operator==(const Credential&) const = default;
};

AgentIdentity create_root(const AgentId& agent_id,
                          const std::array<std::uint8_t, 32>& seed);

// (hsk, hpk) with hsk = scalar_from_bytes(kdf(identity_sk, "heartbeat")).
std::pair<SecretScalar, PublicPoint> derive_heartbeat_keys(
    const SecretScalar& identity_sk);

// Child identity from kdf(cdk_p, "child:" || child_id); the child gets its
// own heartbeat keys and derivation key, so derivation recurses uniformly.
AgentIdentity derive_child(const AgentIdentity& parent, const AgentId& child_id);

Digest compute_hb_binding(const PublicPoint& parent_hpk, const AgentId& child_id);

// Tracks ids a parent has issued, to refuse duplicate credentials.
using ChildRegistry = std::set<AgentId>;

std::pair<Credential, AgentIdentity> issue_credential(
    const AgentIdentity& parent, const AgentId& child_id,
    std::uint64_t now_epoch, ChildRegistry* registry = nullptr);

// key=value text lines, binary fields hex, field order
// (child_id, child_pk, hb_binding, parent_id, issued_at_epoch).
std::string serialize_credential(const Credential& cred);
std::optional<Credential> parse_credential(std::string_view text,
                                           std::string* error = nullptr);

}  // namespace hbhc
