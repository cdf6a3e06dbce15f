#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "hbhc/verify.hpp"

namespace hbhc {

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0 picks a free port, readable via port() after start()
  std::uint64_t challenge_ttl_ms = 30'000;
  FreshnessPolicy policy;
  // Connections serviced concurrently (worker pool size); excess connections
  // wait in the accept backlog.
  int max_connections = 128;
};

// HTTP front end over the offline verifier. The service adds transport and a
// challenge store; the accept/reject decision for a request is exactly what
// verify_auth returns for the same inputs at the server clock, and no
// verification path performs outbound I/O.
//
// Endpoints:
//   POST /parents   {parent_id, hpk_hex}           -> {status}
//   POST /challenge {}                             -> {challenge_hex, ttl_ms}
//   POST /verify    {child_id, child_pk_hex, hb_binding_hex, parent_id,
//                    issued_at_epoch, epoch, heartbeat_sig_hex, child_sig_hex,
//                    challenge_hex}
//                   -> {result, reason, heartbeat_age_epochs, now_ms}
//   GET  /health                                   -> {status, uptime_ms,
//                                                      verifications_total}
//
// Protocol rejections are 200 responses with result "reject"; only malformed
// requests (400), unknown challenges (404), consumed challenges (409), and
// expired challenges (410) use error codes.
class VerifierService {
 public:
  explicit VerifierService(ServiceConfig config);
  ~VerifierService();
  VerifierService(const VerifierService&) = delete;
  VerifierService& operator=(const VerifierService&) = delete;

  void start();  // returns once the listener accepts connections
  void stop();
  int port() const;
  std::uint64_t verifications_total() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct BenchReport {
  std::uint64_t requests = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;         // protocol rejects (all count as errors)
  std::uint64_t transport_errors = 0;
  double mean_ms = 0.0;
  double p99_ms = 0.0;
  double rps = 0.0;
  std::string error;  // non-empty when the bench could not run at all
};

// Drives the full flow (challenge, client-side proof, verify) with valid
// proofs against a running service and reports per-flow latency.
BenchReport bench_service(const std::string& host, int port, int concurrency,
                          std::uint64_t total_requests,
                          std::uint64_t interval_ms = 10'000);

}  // namespace hbhc
