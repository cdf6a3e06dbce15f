#include "hbhc/heartbeat.hpp"

#include <cstring>
#include <stdexcept>

namespace hbhc {

std::uint64_t epoch_for(std::uint64_t now_ms, std::uint64_t interval_ms) {
  if (interval_ms == 0) throw std::invalid_argument("interval_ms must be > 0");
  return now_ms / interval_ms;
}

Digest heartbeat_commitment(const PublicPoint& hpk, std::uint64_t epoch) {
  std::array<std::uint8_t, 72> data;
  auto raw = hpk.serialize();
  std::memcpy(data.data(), raw.data(), 64);
  put_be64(data.data() + 64, epoch);
  return hash(data);
}

static Heartbeat make_heartbeat(const AgentIdentity& parent, std::uint64_t epoch) {
  Heartbeat hb;
  hb.epoch = epoch;
  hb.hpk = parent.heartbeat_pk;
  hb.commitment = heartbeat_commitment(parent.heartbeat_pk, epoch);
  hb.sig = sign(parent.heartbeat_sk, hb.commitment);
  return hb;
}

Heartbeat heartbeat_gen(const AgentIdentity& parent, std::uint64_t now_ms,
                        const HeartbeatConfig& config) {
  return make_heartbeat(parent, epoch_for(now_ms, config.interval_ms));
}

Heartbeat sequence_heartbeat_gen(const AgentIdentity& parent, std::uint64_t seq) {
  if (seq == kSentinelEpoch)
    throw std::invalid_argument("sequence number collides with the sentinel");
  return make_heartbeat(parent, seq);
}

Heartbeat revocation_heartbeat(const AgentIdentity& parent) {
  return make_heartbeat(parent, kSentinelEpoch);
}

PrecomputeBuffer precompute(const AgentIdentity& parent,
                            std::uint64_t start_epoch, std::uint32_t n,
                            const HeartbeatConfig& config) {
  if (n == 0) throw std::invalid_argument("precompute: n must be positive");
  if (n > config.precompute_cap)
    throw std::invalid_argument("precompute: n exceeds the horizon cap");
  PrecomputeBuffer buf;
  buf.horizon_epochs = n;
  buf.heartbeats.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i)
    buf.heartbeats.push_back(make_heartbeat(parent, start_epoch + i));
  return buf;
}

std::array<std::uint8_t, kHeartbeatFrameSize> serialize_heartbeat(
    const Heartbeat& hb) {
  std::array<std::uint8_t, kHeartbeatFrameSize> frame;
  std::memcpy(frame.data(), hb.commitment.data(), 32);
  auto sig = hb.sig.serialize();
  std::memcpy(frame.data() + 32, sig.data(), 64);
  put_be64(frame.data() + 96, hb.epoch);
  auto hpk = hb.hpk.serialize();
  std::memcpy(frame.data() + 104, hpk.data(), 64);
  return frame;
}

std::optional<Heartbeat> deserialize_heartbeat(
    std::span<const std::uint8_t> frame, std::string* error) {
  auto fail = [&](const char* msg) -> std::optional<Heartbeat> {
    if (error) *error = msg;
    return std::nullopt;
  };
  if (frame.size() != kHeartbeatFrameSize) return fail("frame must be 168 bytes");

  Heartbeat hb;
  std::memcpy(hb.commitment.data(), frame.data(), 32);
  hb.sig = Signature::from_bytes(
      std::span<const std::uint8_t, 64>(frame.data() + 32, 64));
  hb.epoch = get_be64(frame.data() + 96);
  hb.hpk = PublicPoint::from_bytes(
      std::span<const std::uint8_t, 64>(frame.data() + 104, 64));

  if (heartbeat_commitment(hb.hpk, hb.epoch) != hb.commitment)
    return fail("commitment mismatch");
  if (!verify(hb.hpk, hb.commitment, hb.sig)) return fail("bad signature");
  return hb;
}

}  // namespace hbhc
