#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hbhc/bytes.hpp"
#include "hbhc/service.hpp"
#include "hbhc/verify.hpp"

using namespace hbhc;
using nlohmann::json;

namespace {

std::uint64_t wall_ms() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
}

struct TestSetup {
  AgentIdentity root;
  Credential cred;
  AgentIdentity child;

  TestSetup() {
    std::array<std::uint8_t, 32> seed{};
    for (std::size_t i = 0; i < 32; ++i)
      seed[i] = static_cast<std::uint8_t>(i + 101);
    root = create_root("root", seed);
    auto issued = issue_credential(root, "worker-1", 0);
    cred = issued.first;
    child = issued.second;
  }
};

TestSetup& setup() {
  static TestSetup s;
  return s;
}

json proof_body(const AuthProof& proof, const std::string& challenge_hex) {
  return json{{"child_id", proof.credential.child_id},
              {"child_pk_hex", to_hex(proof.credential.child_pk.serialize())},
              {"hb_binding_hex", to_hex(proof.credential.hb_binding)},
              {"parent_id", proof.credential.parent_id},
              {"issued_at_epoch", proof.credential.issued_at_epoch},
              {"epoch", proof.epoch},
              {"heartbeat_sig_hex", to_hex(proof.heartbeat_sig.serialize())},
              {"child_sig_hex", to_hex(proof.child_sig.serialize())},
              {"challenge_hex", challenge_hex}};
}

json post(httplib::Client& cli, const std::string& path, const json& body,
          int expect_status) {
  auto res = cli.Post(path, body.dump(), "application/json");
  REQUIRE(res != nullptr);
  CHECK(res->status == expect_status);
  json parsed = json::parse(res->body, nullptr, false);
  REQUIRE_FALSE(parsed.is_discarded());
  return parsed;
}

std::string get_challenge(httplib::Client& cli) {
  json ch = post(cli, "/challenge", json::object(), 200);
  REQUIRE(ch.contains("challenge_hex"));
  std::string hex = ch["challenge_hex"].get<std::string>();
  REQUIRE(hex.size() == 64);
  return hex;
}

std::array<std::uint8_t, 32> nonce_of(const std::string& hex) {
  auto bytes = from_hex(hex);
  REQUIRE(bytes.has_value());
  REQUIRE(bytes->size() == 32);
  std::array<std::uint8_t, 32> nonce{};
  std::copy(bytes->begin(), bytes->end(), nonce.begin());
  return nonce;
}

// Proof over a heartbeat `age_epochs` old at the current wall clock.
AuthProof make_proof(const std::string& challenge_hex, int age_epochs = 0) {
  auto& s = setup();
  HeartbeatConfig hc;
  std::uint64_t hb_time = wall_ms() - static_cast<std::uint64_t>(age_epochs) *
                                          hc.interval_ms;
  Heartbeat hb = heartbeat_gen(s.root, hb_time, hc);
  return create_auth_proof(s.child.identity_sk, s.cred, hb,
                           nonce_of(challenge_hex));
}

}  // namespace

TEST_CASE("verifier service end to end") {
  auto& s = setup();
  ServiceConfig cfg;
  cfg.port = 0;
  VerifierService service(cfg);
  service.start();
  REQUIRE(service.port() > 0);
  httplib::Client cli("127.0.0.1", service.port());

  SUBCASE("health reports ok with counters") {
    auto res = cli.Get("/health");
    REQUIRE(res != nullptr);
    CHECK(res->status == 200);
    json body = json::parse(res->body);
    CHECK(body["status"] == "ok");
    CHECK(body.contains("uptime_ms"));
    CHECK(body.contains("verifications_total"));
  }

  SUBCASE("parent registration is idempotent and conflict-checked") {
    json reg{{"parent_id", "root"},
             {"hpk_hex", to_hex(s.root.heartbeat_pk.serialize())}};
    CHECK(post(cli, "/parents", reg, 200)["status"] == "ok");
    CHECK(post(cli, "/parents", reg, 200)["status"] == "ok");

    json conflict = reg;
    conflict["hpk_hex"] = to_hex(s.root.identity_pk.serialize());
    json err = post(cli, "/parents", conflict, 409);
    CHECK(err.contains("error"));

    post(cli, "/parents", json{{"parent_id", "root"}}, 400);
    post(cli, "/parents", json{{"parent_id", "a=b"}, {"hpk_hex", reg["hpk_hex"]}},
         400);
    post(cli, "/parents", json{{"parent_id", "p"}, {"hpk_hex", "zz"}}, 400);
    post(cli, "/parents",
         json{{"parent_id", "p"}, {"hpk_hex", std::string(128, 'f')}}, 400);
  }

  SUBCASE("accepts a live proof and rejects protocol failures with 200") {
    post(cli, "/parents",
         json{{"parent_id", "root"},
              {"hpk_hex", to_hex(s.root.heartbeat_pk.serialize())}},
         200);

    std::string ch = get_challenge(cli);
    json ok = post(cli, "/verify", proof_body(make_proof(ch), ch), 200);
    CHECK(ok["result"] == "accept");
    CHECK(ok["reason"] == "None");
    CHECK(ok["heartbeat_age_epochs"].get<std::int64_t>() <= 1);

    // Stale heartbeat: protocol reject, not a transport error.
    std::string ch2 = get_challenge(cli);
    json stale = post(cli, "/verify", proof_body(make_proof(ch2, 5), ch2), 200);
    CHECK(stale["result"] == "reject");
    CHECK(stale["reason"] == "HeartbeatExpired");
    CHECK(stale["heartbeat_age_epochs"].get<std::int64_t>() >= 5);

    // Unknown parent: same story.
    std::string ch3 = get_challenge(cli);
    AuthProof ghost = make_proof(ch3);
    ghost.credential.parent_id = "ghost";
    json unknown = post(cli, "/verify", proof_body(ghost, ch3), 200);
    CHECK(unknown["result"] == "reject");
    CHECK(unknown["reason"] == "UnknownParent");
    CHECK(unknown.contains("now_ms"));
  }

  SUBCASE("challenge misuse maps to 404, 409 and reruns match offline") {
    post(cli, "/parents",
         json{{"parent_id", "root"},
              {"hpk_hex", to_hex(s.root.heartbeat_pk.serialize())}},
         200);

    // Unknown nonce.
    std::string fake(64, 'a');
    json missing = post(cli, "/verify", proof_body(make_proof(fake), fake), 404);
    CHECK(missing["reason"] == "ChallengeInvalid");

    // Consumed nonce.
    std::string ch = get_challenge(cli);
    post(cli, "/verify", proof_body(make_proof(ch), ch), 200);
    json reused = post(cli, "/verify", proof_body(make_proof(ch), ch), 409);
    CHECK(reused["result"] == "reject");
    CHECK(reused["reason"] == "ChallengeInvalid");
  }

  SUBCASE("malformed verify bodies are 400s") {
    auto bad = [&](const json& body) {
      auto res = cli.Post("/verify", body.dump(), "application/json");
      REQUIRE(res != nullptr);
      CHECK(res->status == 400);
    };
    std::string ch = get_challenge(cli);
    json good = proof_body(make_proof(ch), ch);

    json j = good;
    j.erase("child_id");
    bad(j);
    j = good;
    j["epoch"] = "five";
    bad(j);
    j = good;
    j["child_pk_hex"] = "abcd";
    bad(j);
    j = good;
    j["challenge_hex"] = std::string(63, 'a');
    bad(j);

    auto res = cli.Post("/verify", "not json", "application/json");
    REQUIRE(res != nullptr);
    CHECK(res->status == 400);
  }

  SUBCASE("server decisions replay offline from the reported clock") {
    post(cli, "/parents",
         json{{"parent_id", "root"},
              {"hpk_hex", to_hex(s.root.heartbeat_pk.serialize())}},
         200);
    for (int age : {0, 2, 4, 7}) {
      std::string ch = get_challenge(cli);
      AuthProof proof = make_proof(ch, age);
      auto res = cli.Post("/verify", proof_body(proof, ch).dump(),
                          "application/json");
      REQUIRE(res != nullptr);
      json body = json::parse(res->body);

      VerifierState state;
      state.cached_parent_keys["root"] = s.root.heartbeat_pk;
      Challenge offline;
      offline.nonce = nonce_of(ch);
      offline.issued_at_ms = body["now_ms"].get<std::uint64_t>();
      FreshnessPolicy policy;
      VerifyResult expect =
          verify_auth(proof, state, offline, offline.issued_at_ms, policy);
      CHECK(body["result"] == (expect.accepted ? "accept" : "reject"));
      CHECK(body["reason"] == std::string(to_string(expect.reason)));
      CHECK(body["heartbeat_age_epochs"].get<std::int64_t>() ==
            expect.heartbeat_age_epochs);
    }
  }

  SUBCASE("one challenge accepts exactly once under concurrency") {
    post(cli, "/parents",
         json{{"parent_id", "root"},
              {"hpk_hex", to_hex(s.root.heartbeat_pk.serialize())}},
         200);
    std::uint64_t before = service.verifications_total();

    std::string ch = get_challenge(cli);
    json body = proof_body(make_proof(ch), ch);
    constexpr int kThreads = 8;
    std::atomic<int> accepts{0}, conflicts{0}, other{0};
    std::vector<std::thread> workers;
    for (int i = 0; i < kThreads; ++i) {
      workers.emplace_back([&] {
        httplib::Client worker_cli("127.0.0.1", service.port());
        auto res = worker_cli.Post("/verify", body.dump(), "application/json");
        if (!res) {
          other.fetch_add(1);
          return;
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (res->status == 200 && parsed["result"] == "accept")
          accepts.fetch_add(1);
        else if (res->status == 409 && parsed["reason"] == "ChallengeInvalid")
          conflicts.fetch_add(1);
        else
          other.fetch_add(1);
      });
    }
    for (auto& w : workers) w.join();
    CHECK(accepts.load() == 1);
    CHECK(conflicts.load() == kThreads - 1);
    CHECK(other.load() == 0);
    CHECK(service.verifications_total() == before + kThreads);
  }
}

TEST_CASE("expired challenges answer 410") {
  auto& s = setup();
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.challenge_ttl_ms = 0;  // expires one clock step after issuance
  VerifierService service(cfg);
  service.start();
  httplib::Client cli("127.0.0.1", service.port());
  post(cli, "/parents",
       json{{"parent_id", "root"},
            {"hpk_hex", to_hex(s.root.heartbeat_pk.serialize())}},
       200);

  json ch_body = post(cli, "/challenge", json::object(), 200);
  CHECK(ch_body["ttl_ms"].get<std::uint64_t>() == 0);
  std::string ch = ch_body["challenge_hex"].get<std::string>();
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  json expired = post(cli, "/verify", proof_body(make_proof(ch), ch), 410);
  CHECK(expired["result"] == "reject");
  CHECK(expired["reason"] == "ChallengeInvalid");
}

TEST_CASE("bench driver completes a clean run") {
  ServiceConfig cfg;
  cfg.port = 0;
  VerifierService service(cfg);
  service.start();

  BenchReport rep = bench_service("127.0.0.1", service.port(), 4, 40);
  CHECK(rep.error.empty());
  CHECK(rep.requests == 40);
  CHECK(rep.accepted == 40);
  CHECK(rep.rejected == 0);
  CHECK(rep.transport_errors == 0);
  CHECK(rep.mean_ms > 0.0);
  CHECK(rep.p99_ms >= rep.mean_ms * 0.5);
  CHECK(rep.rps > 0.0);
}

TEST_CASE("invalid bench arguments fail without touching the network") {
  BenchReport rep = bench_service("127.0.0.1", 1, 0, 10);
  CHECK_FALSE(rep.error.empty());
}
