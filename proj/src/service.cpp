#include "hbhc/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hbhc/bytes.hpp"
#include "hbhc/crypto.hpp"
#include "hbhc/heartbeat.hpp"
#include "hbhc/hierarchy.hpp"

namespace hbhc {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::uint64_t wall_ms() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
}

template <std::size_t N>
bool hex_field(const json& j, const char* key, std::array<std::uint8_t, N>& out) {
  if (!j.contains(key) || !j[key].is_string()) return false;
  auto bytes = from_hex(j[key].get<std::string>());
  if (!bytes || bytes->size() != N) return false;
  std::copy(bytes->begin(), bytes->end(), out.begin());
  return true;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& msg) {
  reply(res, status, json{{"error", msg}});
}

}  // namespace

struct VerifierService::Impl {
  ServiceConfig cfg;
  httplib::Server server;
  std::thread listener;
  int resolved_port = 0;

  std::mutex mu;  // guards state, challenges, rng
  VerifierState state;
  std::map<std::string, Challenge> challenges;
  std::mt19937_64 rng{std::random_device{}()};
  std::uint64_t challenges_issued = 0;

  std::atomic<std::uint64_t> verifications{0};
  std::uint64_t wall_anchor_ms = 0;
  Clock::time_point steady_anchor{};

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {}

  // Wall clock sampled once, advanced by the monotonic clock thereafter.
  std::uint64_t now_ms() const {
    auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
                  Clock::now() - steady_anchor)
                  .count();
    return wall_anchor_ms + static_cast<std::uint64_t>(dt);
  }

  void route_parents(const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("parent_id") ||
        !body["parent_id"].is_string())
      return reply_error(res, 400, "body must carry parent_id and hpk_hex");
    std::string parent_id = body["parent_id"].get<std::string>();
    try {
      validate_agent_id(parent_id);
    } catch (const std::invalid_argument& e) {
      return reply_error(res, 400, e.what());
    }
    std::array<std::uint8_t, 64> raw{};
    if (!hex_field<64>(body, "hpk_hex", raw))
      return reply_error(res, 400, "hpk_hex must be 128 hex characters");
    PublicPoint hpk = PublicPoint::from_bytes(raw);
    if (!is_valid_point(hpk))
      return reply_error(res, 400, "hpk is not a point on the curve");

    std::lock_guard<std::mutex> lk(mu);
    auto it = state.cached_parent_keys.find(parent_id);
    if (it != state.cached_parent_keys.end() && !(it->second == hpk))
      return reply_error(res, 409,
                         "parent already registered with a different key");
    state.cached_parent_keys[parent_id] = hpk;
    reply(res, 200, json{{"status", "ok"}});
  }

  void route_challenge(const httplib::Request&, httplib::Response& res) {
    std::lock_guard<std::mutex> lk(mu);
    std::uint64_t now = now_ms();
    if (++challenges_issued % 4'096 == 0) {
      // Drop entries long past their ttl so the store stays bounded.
      for (auto it = challenges.begin(); it != challenges.end();) {
        if (now > it->second.issued_at_ms + it->second.ttl_ms + 60'000)
          it = challenges.erase(it);
        else
          ++it;
      }
    }
    Challenge ch = issue_challenge(now, rng, cfg.challenge_ttl_ms);
    std::string key = to_hex(ch.nonce);
    challenges[key] = ch;
    reply(res, 200, json{{"challenge_hex", key}, {"ttl_ms", ch.ttl_ms}});
  }

  void route_verify(const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, 400, "body is not JSON");
    for (const char* key : {"child_id", "parent_id"})
      if (!body.contains(key) || !body[key].is_string())
        return reply_error(res, 400, std::string(key) + " must be a string");
    for (const char* key : {"issued_at_epoch", "epoch"})
      if (!body.contains(key) || !body[key].is_number_unsigned())
        return reply_error(res, 400,
                           std::string(key) + " must be an unsigned number");

    AuthProof proof;
    proof.credential.child_id = body["child_id"].get<std::string>();
    proof.credential.parent_id = body["parent_id"].get<std::string>();
    proof.credential.issued_at_epoch = body["issued_at_epoch"].get<std::uint64_t>();
    proof.epoch = body["epoch"].get<std::uint64_t>();

    std::array<std::uint8_t, 64> child_pk_raw{}, hb_sig_raw{}, child_sig_raw{};
    Digest binding{};
    std::array<std::uint8_t, 32> nonce{};
    if (!hex_field<64>(body, "child_pk_hex", child_pk_raw))
      return reply_error(res, 400, "child_pk_hex must be 128 hex characters");
    if (!hex_field<32>(body, "hb_binding_hex", binding))
      return reply_error(res, 400, "hb_binding_hex must be 64 hex characters");
    if (!hex_field<64>(body, "heartbeat_sig_hex", hb_sig_raw))
      return reply_error(res, 400, "heartbeat_sig_hex must be 128 hex characters");
    if (!hex_field<64>(body, "child_sig_hex", child_sig_raw))
      return reply_error(res, 400, "child_sig_hex must be 128 hex characters");
    if (!hex_field<32>(body, "challenge_hex", nonce))
      return reply_error(res, 400, "challenge_hex must be 64 hex characters");
    proof.credential.child_pk = PublicPoint::from_bytes(child_pk_raw);
    proof.credential.hb_binding = binding;
    proof.heartbeat_sig = Signature::from_bytes(hb_sig_raw);
    proof.child_sig = Signature::from_bytes(child_sig_raw);

    std::unique_lock<std::mutex> lk(mu);
    std::uint64_t now = now_ms();
    auto it = challenges.find(to_hex(nonce));
    if (it == challenges.end())
      return reply(res, 404,
                   json{{"result", "reject"},
                        {"reason", std::string(to_string(RejectReason::ChallengeInvalid))},
                        {"error", "unknown challenge"},
                        {"now_ms", now}});
    bool was_used = it->second.used;
    bool was_expired = challenge_expired(it->second, now);
    VerifyResult vr = verify_auth(proof, state, it->second, now, cfg.policy);
    lk.unlock();
    verifications.fetch_add(1, std::memory_order_relaxed);

    int status = 200;
    if (!vr.accepted && vr.reason == RejectReason::ChallengeInvalid)
      status = was_used ? 409 : (was_expired ? 410 : 409);
    reply(res, status,
          json{{"result", vr.accepted ? "accept" : "reject"},
               {"reason", std::string(to_string(vr.reason))},
               {"heartbeat_age_epochs", vr.heartbeat_age_epochs},
               {"now_ms", now}});
  }

  void route_health(const httplib::Request&, httplib::Response& res) {
    auto uptime = std::chrono::duration_cast<std::chrono::milliseconds>(
                      Clock::now() - steady_anchor)
                      .count();
    reply(res, 200,
          json{{"status", "ok"},
               {"uptime_ms", static_cast<std::uint64_t>(uptime)},
               {"verifications_total",
                verifications.load(std::memory_order_relaxed)}});
  }
};

VerifierService::VerifierService(ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {
  Impl& im = *impl_;
  int pool = std::clamp(im.cfg.max_connections, 1, 512);
  im.server.new_task_queue = [pool] {
    return new httplib::ThreadPool(static_cast<std::size_t>(pool));
  };
  im.server.Post("/parents", [&im](const httplib::Request& req,
                                   httplib::Response& res) {
    im.route_parents(req, res);
  });
  im.server.Post("/challenge", [&im](const httplib::Request& req,
                                     httplib::Response& res) {
    im.route_challenge(req, res);
  });
  im.server.Post("/verify", [&im](const httplib::Request& req,
                                  httplib::Response& res) {
    im.route_verify(req, res);
  });
  im.server.Get("/health", [&im](const httplib::Request& req,
                                 httplib::Response& res) {
    im.route_health(req, res);
  });
}

VerifierService::~VerifierService() {
  try {
    stop();
  } catch (...) {
  }
}

void VerifierService::start() {
  Impl& im = *impl_;
  im.wall_anchor_ms = wall_ms();
  im.steady_anchor = Clock::now();
  if (im.cfg.port == 0) {
    im.resolved_port = im.server.bind_to_any_port(im.cfg.bind);
    if (im.resolved_port <= 0)
      throw std::runtime_error("could not bind " + im.cfg.bind);
  } else {
    if (!im.server.bind_to_port(im.cfg.bind, im.cfg.port))
      throw std::runtime_error("could not bind " + im.cfg.bind + ":" +
                               std::to_string(im.cfg.port));
    im.resolved_port = im.cfg.port;
  }
  im.listener = std::thread([&im] { im.server.listen_after_bind(); });
  for (int i = 0; i < 2'000 && !im.server.is_running(); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  if (!im.server.is_running()) {
    if (im.listener.joinable()) im.listener.join();
    throw std::runtime_error("service failed to start");
  }
}

void VerifierService::stop() {
  Impl& im = *impl_;
  if (im.listener.joinable()) {
    im.server.stop();
    im.listener.join();
  }
}

int VerifierService::port() const { return impl_->resolved_port; }

std::uint64_t VerifierService::verifications_total() const {
  return impl_->verifications.load(std::memory_order_relaxed);
}

BenchReport bench_service(const std::string& host, int port, int concurrency,
                          std::uint64_t total_requests,
                          std::uint64_t interval_ms) {
  BenchReport rep;
  if (concurrency <= 0 || total_requests == 0) {
    rep.error = "concurrency and request count must be positive";
    return rep;
  }

  std::array<std::uint8_t, 32> seed{};
  for (std::size_t i = 0; i < seed.size(); ++i)
    seed[i] = static_cast<std::uint8_t>(i * 17 + 3);
  AgentIdentity root = create_root("bench-root", seed);
  auto [cred, child] = issue_credential(root, "bench-child", 0);
  HeartbeatConfig hc;
  hc.interval_ms = interval_ms;

  {
    httplib::Client cli(host, port);
    json reg{{"parent_id", root.agent_id},
             {"hpk_hex", to_hex(root.heartbeat_pk.serialize())}};
    auto res = cli.Post("/parents", reg.dump(), "application/json");
    if (!res || res->status != 200) {
      rep.error = "parent registration failed";
      return rep;
    }
  }

  std::atomic<std::int64_t> remaining{static_cast<std::int64_t>(total_requests)};
  std::atomic<std::uint64_t> accepted{0}, rejected{0}, transport_errors{0};
  std::vector<std::vector<double>> latencies(static_cast<std::size_t>(concurrency));

  auto worker = [&](std::size_t w) {
    httplib::Client cli(host, port);
    cli.set_keep_alive(true);
    auto& lats = latencies[w];
    const SecretScalar& child_sk = child.identity_sk;
    while (remaining.fetch_sub(1, std::memory_order_relaxed) > 0) {
      auto f0 = Clock::now();
      auto ch_res = cli.Post("/challenge", "{}", "application/json");
      if (!ch_res || ch_res->status != 200) {
        ++transport_errors;
        continue;
      }
      json ch_body = json::parse(ch_res->body, nullptr, false);
      if (ch_body.is_discarded() || !ch_body.contains("challenge_hex")) {
        ++transport_errors;
        continue;
      }
      std::string challenge_hex = ch_body["challenge_hex"].get<std::string>();
      auto nonce_bytes = from_hex(challenge_hex);
      if (!nonce_bytes || nonce_bytes->size() != 32) {
        ++transport_errors;
        continue;
      }
      std::array<std::uint8_t, 32> nonce{};
      std::copy(nonce_bytes->begin(), nonce_bytes->end(), nonce.begin());

      Heartbeat hb = heartbeat_gen(root, wall_ms(), hc);
      AuthProof proof = create_auth_proof(child_sk, cred, hb, nonce);
      json body{{"child_id", cred.child_id},
                {"child_pk_hex", to_hex(cred.child_pk.serialize())},
                {"hb_binding_hex", to_hex(cred.hb_binding)},
                {"parent_id", cred.parent_id},
                {"issued_at_epoch", cred.issued_at_epoch},
                {"epoch", proof.epoch},
                {"heartbeat_sig_hex", to_hex(proof.heartbeat_sig.serialize())},
                {"child_sig_hex", to_hex(proof.child_sig.serialize())},
                {"challenge_hex", challenge_hex}};
      auto v_res = cli.Post("/verify", body.dump(), "application/json");
      double ms =
          std::chrono::duration<double, std::milli>(Clock::now() - f0).count();
      if (!v_res) {
        ++transport_errors;
        continue;
      }
      json v_body = json::parse(v_res->body, nullptr, false);
      if (v_body.is_discarded() || !v_body.contains("result")) {
        ++transport_errors;
        continue;
      }
      if (v_body["result"] == "accept")
        ++accepted;
      else
        ++rejected;
      lats.push_back(ms);
    }
  };

  auto t0 = Clock::now();
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(concurrency));
  for (int w = 0; w < concurrency; ++w)
    threads.emplace_back(worker, static_cast<std::size_t>(w));
  for (auto& t : threads) t.join();
  double elapsed_s = std::chrono::duration<double>(Clock::now() - t0).count();

  std::vector<double> all;
  for (auto& ls : latencies) all.insert(all.end(), ls.begin(), ls.end());
  std::sort(all.begin(), all.end());
  rep.requests = total_requests;
  rep.accepted = accepted.load();
  rep.rejected = rejected.load();
  rep.transport_errors = transport_errors.load();
  if (!all.empty()) {
    rep.mean_ms = std::accumulate(all.begin(), all.end(), 0.0) /
                  static_cast<double>(all.size());
    auto rank = static_cast<std::size_t>(
        std::ceil(0.99 * static_cast<double>(all.size())));
    rep.p99_ms = all[std::max<std::size_t>(rank, 1) - 1];
    rep.rps = static_cast<double>(all.size()) / elapsed_s;
  }
  return rep;
}

}  // namespace hbhc
