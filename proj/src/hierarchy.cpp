#include "hbhc/hierarchy.hpp"

#include <charconv>
#include <stdexcept>

namespace hbhc {

void validate_agent_id(const AgentId& id) {
  if (id.empty()) throw std::invalid_argument("agent id must be non-empty");
  if (id.size() > 256) throw std::invalid_argument("agent id exceeds 256 bytes");
  if (id.find('\n') != std::string::npos || id.find('=') != std::string::npos)
    throw std::invalid_argument("agent id may not contain '=' or newline");
}

static AgentIdentity identity_from_sk(AgentId id, SecretScalar sk,
                                      std::uint32_t level) {
  AgentIdentity a;
  a.agent_id = std::move(id);
  a.identity_sk = sk;
  a.identity_pk = keypair(sk);
  auto [hsk, hpk] = derive_heartbeat_keys(sk);
  a.heartbeat_sk = hsk;
  a.heartbeat_pk = hpk;
  a.child_derivation_key = kdf(sk.bytes, "children");
  a.level = level;
  return a;
}

AgentIdentity create_root(const AgentId& agent_id,
                          const std::array<std::uint8_t, 32>& seed) {
  validate_agent_id(agent_id);
  return identity_from_sk(agent_id, scalar_from_bytes(seed, "seed"), 0);
}

std::pair<SecretScalar, PublicPoint> derive_heartbeat_keys(
    const SecretScalar& identity_sk) {
  auto hsk = scalar_from_bytes(kdf(identity_sk.bytes, "heartbeat"), "heartbeat");
  return {hsk, keypair(hsk)};
}

AgentIdentity derive_child(const AgentIdentity& parent, const AgentId& child_id) {
  validate_agent_id(child_id);
  std::string label = "child:" + child_id;
  auto sk = scalar_from_bytes(kdf(parent.child_derivation_key, label), label);
  return identity_from_sk(child_id, sk, parent.level + 1);
}

Digest compute_hb_binding(const PublicPoint& parent_hpk, const AgentId& child_id) {
  auto hpk = parent_hpk.serialize();
  Bytes data(hpk.begin(), hpk.end());
  data.insert(data.end(), child_id.begin(), child_id.end());
  return hash(data);
}

std::pair<Credential, AgentIdentity> issue_credential(
    const AgentIdentity& parent, const AgentId& child_id,
    std::uint64_t now_epoch, ChildRegistry* registry) {
  validate_agent_id(child_id);
  if (registry && !registry->insert(child_id).second)
    throw std::invalid_argument("duplicate child id: " + child_id);
  AgentIdentity child = derive_child(parent, child_id);
  Credential cred;
  cred.child_id = child_id;
  cred.child_pk = child.identity_pk;
  cred.hb_binding = compute_hb_binding(parent.heartbeat_pk, child_id);
  cred.parent_id = parent.agent_id;
  cred.issued_at_epoch = now_epoch;
  return {cred, child};
}

std::string serialize_credential(const Credential& cred) {
  std::string out;
  out += "child_id=" + cred.child_id + "\n";
  out += "child_pk=" + to_hex(cred.child_pk.serialize()) + "\n";
  out += "hb_binding=" + to_hex(cred.hb_binding) + "\n";
  out += "parent_id=" + cred.parent_id + "\n";
  out += "issued_at_epoch=" + std::to_string(cred.issued_at_epoch) + "\n";
  return out;
}

static bool take_line(std::string_view& text, std::string_view key,
                      std::string_view& value) {
  if (text.substr(0, key.size()) != key) return false;
  text.remove_prefix(key.size());
  if (text.empty() || text.front() != '=') return false;
  text.remove_prefix(1);
  auto nl = text.find('\n');
  if (nl == std::string_view::npos) return false;
  value = text.substr(0, nl);
  text.remove_prefix(nl + 1);
  return true;
}

std::optional<Credential> parse_credential(std::string_view text,
                                           std::string* error) {
  auto fail = [&](const char* msg) -> std::optional<Credential> {
    if (error) *error = msg;
    return std::nullopt;
  };
  Credential cred;
  std::string_view v;
  if (!take_line(text, "child_id", v) || v.empty()) return fail("bad child_id");
  cred.child_id = std::string(v);
  if (!take_line(text, "child_pk", v)) return fail("bad child_pk");
  auto pk = from_hex(v);
  if (!pk || pk->size() != 64) return fail("child_pk must be 64 bytes hex");
  cred.child_pk =
      PublicPoint::from_bytes(std::span<const std::uint8_t, 64>(pk->data(), 64));
  if (!take_line(text, "hb_binding", v)) return fail("bad hb_binding");
  auto bind = from_hex(v);
  if (!bind || bind->size() != 32) return fail("hb_binding must be 32 bytes hex");
  std::copy(bind->begin(), bind->end(), cred.hb_binding.begin());
  if (!take_line(text, "parent_id", v) || v.empty()) return fail("bad parent_id");
  cred.parent_id = std::string(v);
  if (!take_line(text, "issued_at_epoch", v)) return fail("bad issued_at_epoch");
  auto res = std::from_chars(v.data(), v.data() + v.size(), cred.issued_at_epoch);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    return fail("issued_at_epoch must be an unsigned integer");
  return cred;
}

}  // namespace hbhc
