#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hbhc/bytes.hpp"
#include "hbhc/crypto.hpp"
#include "hbhc/experiments.hpp"
#include "hbhc/heartbeat.hpp"
#include "hbhc/hierarchy.hpp"
#include "hbhc/service.hpp"
#include "hbhc/sim.hpp"
#include "hbhc/verify.hpp"

namespace {

using nlohmann::json;

[[noreturn]] void die(const std::string& msg) {
  std::cerr << "error: " << msg << '\n';
  std::exit(2);
}

template <std::size_t N>
std::array<std::uint8_t, N> parse_hex(const std::string& hex,
                                      const std::string& what) {
  auto bytes = hbhc::from_hex(hex);
  if (!bytes || bytes->size() != N)
    die(what + " must be " + std::to_string(2 * N) + " hex characters");
  std::array<std::uint8_t, N> out{};
  std::copy(bytes->begin(), bytes->end(), out.begin());
  return out;
}

std::string read_text(const std::string& path) {
  if (path == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    return buf.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) die("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) die("cannot write " + path);
  out << text;
}

// Identity files: key=value lines. The secret file is sufficient to rebuild
// the whole identity; the public file carries only what a verifier needs.
void write_identity(const std::string& prefix, const hbhc::AgentIdentity& id) {
  std::ostringstream secret;
  secret << "agent_id=" << id.agent_id << '\n'
         << "level=" << id.level << '\n'
         << "identity_sk=" << hbhc::to_hex(id.identity_sk.bytes) << '\n'
         << "heartbeat_sk=" << hbhc::to_hex(id.heartbeat_sk.bytes) << '\n'
         << "child_derivation_key=" << hbhc::to_hex(id.child_derivation_key)
         << '\n';
  write_text(prefix + ".secret", secret.str());

  std::ostringstream pub;
  pub << "agent_id=" << id.agent_id << '\n'
      << "level=" << id.level << '\n'
      << "identity_pk=" << hbhc::to_hex(id.identity_pk.serialize()) << '\n'
      << "heartbeat_pk=" << hbhc::to_hex(id.heartbeat_pk.serialize()) << '\n';
  write_text(prefix + ".public", pub.str());
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) die("malformed identity line: " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

hbhc::AgentIdentity load_identity(const std::string& path) {
  auto kv = parse_kv(read_text(path));
  for (const char* key :
       {"agent_id", "level", "identity_sk", "heartbeat_sk", "child_derivation_key"})
    if (!kv.count(key)) die(path + " is missing " + key);
  hbhc::AgentIdentity id;
  id.agent_id = kv["agent_id"];
  id.level = static_cast<std::uint32_t>(std::stoul(kv["level"]));
  id.identity_sk.bytes = parse_hex<32>(kv["identity_sk"], "identity_sk");
  id.heartbeat_sk.bytes = parse_hex<32>(kv["heartbeat_sk"], "heartbeat_sk");
  id.child_derivation_key =
      parse_hex<32>(kv["child_derivation_key"], "child_derivation_key");
  id.identity_pk = hbhc::keypair(id.identity_sk);
  id.heartbeat_pk = hbhc::keypair(id.heartbeat_sk);
  return id;
}

json proof_to_json(const hbhc::AuthProof& proof,
                   const std::array<std::uint8_t, 32>& nonce) {
  return json{{"child_id", proof.credential.child_id},
              {"child_pk_hex", hbhc::to_hex(proof.credential.child_pk.serialize())},
              {"hb_binding_hex", hbhc::to_hex(proof.credential.hb_binding)},
              {"parent_id", proof.credential.parent_id},
              {"issued_at_epoch", proof.credential.issued_at_epoch},
              {"epoch", proof.epoch},
              {"heartbeat_sig_hex", hbhc::to_hex(proof.heartbeat_sig.serialize())},
              {"child_sig_hex", hbhc::to_hex(proof.child_sig.serialize())},
              {"challenge_hex", hbhc::to_hex(nonce)}};
}

hbhc::AuthProof proof_from_json(const json& j, std::string* challenge_hex) {
  for (const char* key : {"child_id", "parent_id", "child_pk_hex",
                          "hb_binding_hex", "heartbeat_sig_hex", "child_sig_hex"})
    if (!j.contains(key) || !j[key].is_string())
      die(std::string("proof JSON needs string field ") + key);
  for (const char* key : {"issued_at_epoch", "epoch"})
    if (!j.contains(key) || !j[key].is_number_unsigned())
      die(std::string("proof JSON needs unsigned field ") + key);
  hbhc::AuthProof proof;
  proof.credential.child_id = j["child_id"].get<std::string>();
  proof.credential.parent_id = j["parent_id"].get<std::string>();
  proof.credential.issued_at_epoch = j["issued_at_epoch"].get<std::uint64_t>();
  proof.epoch = j["epoch"].get<std::uint64_t>();
  proof.credential.child_pk = hbhc::PublicPoint::from_bytes(
      parse_hex<64>(j["child_pk_hex"].get<std::string>(), "child_pk_hex"));
  proof.credential.hb_binding =
      parse_hex<32>(j["hb_binding_hex"].get<std::string>(), "hb_binding_hex");
  proof.heartbeat_sig = hbhc::Signature::from_bytes(
      parse_hex<64>(j["heartbeat_sig_hex"].get<std::string>(), "heartbeat_sig_hex"));
  proof.child_sig = hbhc::Signature::from_bytes(
      parse_hex<64>(j["child_sig_hex"].get<std::string>(), "child_sig_hex"));
  if (challenge_hex && j.contains("challenge_hex") && j["challenge_hex"].is_string())
    *challenge_hex = j["challenge_hex"].get<std::string>();
  return proof;
}

hbhc::FreshnessMode parse_mode(const std::string& mode) {
  if (mode == "time") return hbhc::FreshnessMode::TimeEpoch;
  if (mode == "sequence") return hbhc::FreshnessMode::Sequence;
  die("mode must be 'time' or 'sequence'");
}

hbhc::SimConfig sim_config_from_json(const json& j, std::uint64_t seed) {
  hbhc::SimConfig cfg;
  cfg.rng_seed = seed;
  if (!j.contains("branching") || !j["branching"].is_array())
    die("config needs a branching array");
  for (const auto& b : j["branching"])
    cfg.spec.branching.push_back(b.get<std::uint32_t>());
  if (j.contains("root_seed_hex"))
    cfg.spec.root_seed =
        parse_hex<32>(j["root_seed_hex"].get<std::string>(), "root_seed_hex");
  else
    for (std::size_t i = 0; i < 32; i += 8)
      hbhc::put_be64(cfg.spec.root_seed.data() + i, seed + i);

  cfg.policy.interval_ms = j.value("interval_ms", std::uint64_t{10'000});
  cfg.policy.max_age_epochs = j.value("max_age_epochs", std::uint64_t{3});
  cfg.policy.grace_epochs = j.value("grace_epochs", std::uint64_t{0});
  cfg.policy.max_sequence_gap = j.value("max_sequence_gap", std::uint64_t{3});
  cfg.policy.mode = parse_mode(j.value("mode", std::string("time")));
  cfg.duration_epochs = j.value("duration_epochs", std::uint64_t{100});
  cfg.auth_cadence_ms = j.value("auth_cadence_ms", std::uint64_t{0});
  cfg.auth_phase_ms = j.value("auth_phase_ms", std::uint64_t{0});
  cfg.verifier_offset_ms = j.value("verifier_offset_ms", std::int64_t{0});
  cfg.verifier_cold_cache = j.value("verifier_cold_cache", false);
  cfg.full_crypto = j.value("full_crypto", false);

  if (j.contains("delivery")) {
    const auto& d = j["delivery"];
    std::string model = d.value("model", std::string("push"));
    if (model == "push")
      cfg.delivery = hbhc::PushDelivery{d.value("drop_rate", 0.0)};
    else if (model == "dual_path")
      cfg.delivery = hbhc::DualPathDelivery{d.value("drop_rate_per_path", 0.0)};
    else if (model == "precompute")
      cfg.delivery = hbhc::PrecomputeDelivery{
          d.value("buffer_epochs", std::uint32_t{3}), d.value("drop_rate", 0.0)};
    else if (model == "pull")
      cfg.delivery = hbhc::PullDelivery{d.value("drop_rate", 0.0)};
    else if (model == "gossip")
      cfg.delivery = hbhc::GossipDelivery{
          d.value("fanout", std::uint32_t{3}),
          d.value("seed_set_size", std::uint32_t{5}),
          d.value("per_hop_drop", 0.0), d.value("max_rounds", std::uint32_t{0})};
    else
      die("unknown delivery model: " + model);
  }
  for (const auto& r : j.value("revocations", json::array())) {
    hbhc::RevocationEvent ev;
    ev.parent_id = r.at("parent_id").get<std::string>();
    ev.at_epoch = r.at("at_epoch").get<std::uint64_t>();
    ev.mode = r.value("mode", std::string("implicit")) == "sentinel"
                  ? hbhc::RevocationMode::Sentinel
                  : hbhc::RevocationMode::Implicit;
    cfg.revocations.push_back(std::move(ev));
  }
  for (const auto& x : j.value("exclusions", json::array())) {
    hbhc::ExclusionEvent ev;
    ev.parent_id = x.at("parent_id").get<std::string>();
    ev.child_id = x.at("child_id").get<std::string>();
    ev.from_epoch = x.at("from_epoch").get<std::uint64_t>();
    cfg.exclusions.push_back(std::move(ev));
  }
  for (const auto& p : j.value("partitions", json::array())) {
    hbhc::PartitionEvent ev;
    for (const auto& e : p.at("entities")) ev.entities.push_back(e.get<std::string>());
    ev.from_epoch = p.at("from_epoch").get<std::uint64_t>();
    ev.to_epoch = p.at("to_epoch").get<std::uint64_t>();
    cfg.partitions.push_back(std::move(ev));
  }
  if (j.contains("clock_offsets_ms"))
    for (const auto& [agent, off] : j["clock_offsets_ms"].items())
      cfg.clock_offsets_ms[agent] = off.get<std::int64_t>();
  return cfg;
}

std::uint64_t effective_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("HBHC_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      die("HBHC_SEED must be an unsigned integer");
    }
  }
  return flag_seed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heartbeat-bound hierarchical credentials"};
  app.require_subcommand(1);

  // keygen
  auto* keygen = app.add_subcommand("keygen", "create a root identity");
  std::string kg_seed_hex, kg_out = "root", kg_agent_id = "root";
  keygen->add_option("--seed-hex", kg_seed_hex, "32-byte seed, hex")->required();
  keygen->add_option("--out", kg_out, "output file prefix");
  keygen->add_option("--agent-id", kg_agent_id, "root agent id");

  // derive-child
  auto* derive = app.add_subcommand("derive-child", "derive a child identity and credential");
  std::string dc_parent, dc_child_id, dc_out;
  std::uint64_t dc_epoch = 0;
  derive->add_option("--parent-file", dc_parent, "parent .secret file")->required();
  derive->add_option("--child-id", dc_child_id)->required();
  derive->add_option("--out", dc_out, "output file prefix")->required();
  derive->add_option("--now-epoch", dc_epoch, "credential issuance epoch");

  // heartbeat
  auto* heartbeat = app.add_subcommand("heartbeat", "emit signed heartbeat frames, hex");
  std::string hb_identity;
  std::uint64_t hb_now = 0, hb_interval = 10'000, hb_seq = 0;
  std::uint32_t hb_precompute = 0;
  bool hb_sentinel = false;
  heartbeat->add_option("--identity-file", hb_identity, "parent .secret file")->required();
  heartbeat->add_option("--now-ms", hb_now);
  heartbeat->add_option("--interval-ms", hb_interval);
  heartbeat->add_flag("--sentinel", hb_sentinel, "revocation broadcast frame");
  heartbeat->add_option("--seq", hb_seq, "sequence counter value");
  heartbeat->add_option("--precompute", hb_precompute, "emit N consecutive frames");

  // prove
  auto* prove = app.add_subcommand("prove", "create an authentication proof");
  std::string pr_child, pr_credential, pr_heartbeat_hex, pr_challenge_hex;
  prove->add_option("--child-file", pr_child, "child .secret file")->required();
  prove->add_option("--credential-file", pr_credential)->required();
  prove->add_option("--heartbeat-hex", pr_heartbeat_hex)->required();
  prove->add_option("--challenge-hex", pr_challenge_hex)->required();

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "verify a proof offline");
  std::string vf_proof, vf_hpk_hex, vf_challenge_hex, vf_mode = "time";
  std::uint64_t vf_now = 0, vf_interval = 10'000, vf_max_age = 3, vf_grace = 0,
                vf_max_gap = 3;
  verify_cmd->add_option("--proof-json", vf_proof, "proof file, or - for stdin")->required();
  verify_cmd->add_option("--parent-hpk-hex", vf_hpk_hex)->required();
  verify_cmd->add_option("--challenge-hex", vf_challenge_hex,
                         "defaults to the proof's challenge field");
  verify_cmd->add_option("--now-ms", vf_now)->required();
  verify_cmd->add_option("--interval-ms", vf_interval);
  verify_cmd->add_option("--max-age", vf_max_age);
  verify_cmd->add_option("--grace", vf_grace);
  verify_cmd->add_option("--mode", vf_mode, "time or sequence");
  verify_cmd->add_option("--max-gap", vf_max_gap);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run the swarm simulator");
  std::string sm_config, sm_csv;
  std::uint64_t sm_seed = 42;
  simulate->add_option("--config-file", sm_config, "JSON config")->required();
  simulate->add_option("--seed", sm_seed);
  simulate->add_option("--csv-out", sm_csv, "trace CSV path");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run reproduction experiments");
  std::string ex_name;
  std::string ex_out_dir;
  std::uint64_t ex_seed = 42;
  experiment->add_option("name", ex_name, "experiment name or 'all'")->required();
  experiment->add_option("--seed", ex_seed);
  experiment->add_option("--out-dir", ex_out_dir, "write <name>.csv and <name>.txt here");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP verifier");
  hbhc::ServiceConfig svc;
  std::uint64_t sv_interval = 10'000, sv_max_age = 3, sv_grace = 0;
  std::string sv_mode = "time";
  serve->add_option("--bind", svc.bind)->envname("HBHC_BIND");
  serve->add_option("--port", svc.port)->envname("HBHC_PORT");
  serve->add_option("--ttl-ms", svc.challenge_ttl_ms);
  serve->add_option("--interval-ms", sv_interval);
  serve->add_option("--max-age", sv_max_age);
  serve->add_option("--grace", sv_grace);
  serve->add_option("--mode", sv_mode);
  serve->add_option("--max-connections", svc.max_connections);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "load-test a running verifier");
  std::string bn_url = "http://127.0.0.1:8080";
  int bn_concurrency = 100;
  std::uint64_t bn_requests = 1'000;
  bench_cmd->add_option("--url", bn_url);
  bench_cmd->add_option("--concurrency", bn_concurrency);
  bench_cmd->add_option("--requests", bn_requests);

  CLI11_PARSE(app, argc, argv);

  try {
    if (keygen->parsed()) {
      auto seed = parse_hex<32>(kg_seed_hex, "--seed-hex");
      hbhc::AgentIdentity id = hbhc::create_root(kg_agent_id, seed);
      write_identity(kg_out, id);
      std::cout << "wrote " << kg_out << ".secret and " << kg_out << ".public\n";
      return 0;
    }

    if (derive->parsed()) {
      hbhc::AgentIdentity parent = load_identity(dc_parent);
      auto [cred, child] = hbhc::issue_credential(parent, dc_child_id, dc_epoch);
      write_identity(dc_out, child);
      write_text(dc_out + ".credential", hbhc::serialize_credential(cred));
      std::cout << "wrote " << dc_out << ".secret, " << dc_out << ".public and "
                << dc_out << ".credential\n";
      return 0;
    }

    if (heartbeat->parsed()) {
      hbhc::AgentIdentity id = load_identity(hb_identity);
      hbhc::HeartbeatConfig hc;
      hc.interval_ms = hb_interval;
      const bool hb_seq_set = heartbeat->count("--seq") > 0;
      if (hb_sentinel && (hb_seq_set || hb_precompute))
        die("--sentinel excludes --seq and --precompute");
      if (hb_seq_set && hb_precompute) die("--seq excludes --precompute");
      std::vector<hbhc::Heartbeat> frames;
      if (hb_sentinel) {
        frames.push_back(hbhc::revocation_heartbeat(id));
      } else if (hb_seq_set) {
        frames.push_back(hbhc::sequence_heartbeat_gen(id, hb_seq));
      } else if (hb_precompute > 0) {
        hc.precompute_cap = hb_precompute;
        auto buf = hbhc::precompute(id, hbhc::epoch_for(hb_now, hb_interval),
                                    hb_precompute, hc);
        frames = buf.heartbeats;
      } else {
        frames.push_back(hbhc::heartbeat_gen(id, hb_now, hc));
      }
      for (const auto& f : frames)
        std::cout << hbhc::to_hex(hbhc::serialize_heartbeat(f)) << '\n';
      return 0;
    }

    if (prove->parsed()) {
      hbhc::AgentIdentity child = load_identity(pr_child);
      std::string err;
      auto cred = hbhc::parse_credential(read_text(pr_credential), &err);
      if (!cred) die("bad credential: " + err);
      auto frame_bytes = hbhc::from_hex(pr_heartbeat_hex);
      if (!frame_bytes) die("--heartbeat-hex is not hex");
      auto hb = hbhc::deserialize_heartbeat(*frame_bytes, &err);
      if (!hb) die("bad heartbeat frame: " + err);
      auto nonce = parse_hex<32>(pr_challenge_hex, "--challenge-hex");
      hbhc::AuthProof proof =
          hbhc::create_auth_proof(child.identity_sk, *cred, *hb, nonce);
      std::cout << proof_to_json(proof, nonce).dump(2) << '\n';
      return 0;
    }

    if (verify_cmd->parsed()) {
      json j = json::parse(read_text(vf_proof), nullptr, false);
      if (j.is_discarded()) die("proof is not valid JSON");
      std::string embedded_challenge;
      hbhc::AuthProof proof = proof_from_json(j, &embedded_challenge);
      std::string challenge_hex =
          vf_challenge_hex.empty() ? embedded_challenge : vf_challenge_hex;
      if (challenge_hex.empty()) die("no challenge: pass --challenge-hex");
      hbhc::FreshnessPolicy pol;
      pol.interval_ms = vf_interval;
      pol.max_age_epochs = vf_max_age;
      pol.grace_epochs = vf_grace;
      pol.mode = parse_mode(vf_mode);
      pol.max_sequence_gap = vf_max_gap;
      hbhc::VerifierState state;
      state.cached_parent_keys[proof.credential.parent_id] =
          hbhc::PublicPoint::from_bytes(parse_hex<64>(vf_hpk_hex, "--parent-hpk-hex"));
      hbhc::Challenge ch;
      ch.nonce = parse_hex<32>(challenge_hex, "challenge");
      ch.issued_at_ms = vf_now;
      hbhc::VerifyResult res = hbhc::verify_auth(proof, state, ch, vf_now, pol);
      if (res.accepted) {
        std::cout << "accept (heartbeat age " << res.heartbeat_age_epochs
                  << " epochs)\n";
        return 0;
      }
      std::cout << "reject " << hbhc::to_string(res.reason) << " (heartbeat age "
                << res.heartbeat_age_epochs << " epochs)\n";
      return 1;
    }

    if (simulate->parsed()) {
      json j = json::parse(read_text(sm_config), nullptr, false);
      if (j.is_discarded()) die("config is not valid JSON");
      hbhc::SimConfig cfg = sim_config_from_json(j, effective_seed(sm_seed));
      hbhc::SimTrace trace = hbhc::run(cfg);
      if (!sm_csv.empty()) hbhc::write_csv(trace, sm_csv);
      std::cout << "heartbeats_generated=" << trace.heartbeats_generated << '\n'
                << "deliveries=" << trace.deliveries_succeeded << '/'
                << trace.deliveries_attempted << '\n'
                << "auth=" << trace.auth_accepted << '/' << trace.auth_attempts
                << '\n'
                << "fprr=" << trace.fprr() << '\n'
                << "verifier_network_ops=" << trace.verifier_network_ops << '\n';
      if (!sm_csv.empty()) std::cout << "trace written to " << sm_csv << '\n';
      return 0;
    }

    if (experiment->parsed()) {
      std::uint64_t seed = effective_seed(ex_seed);
      std::vector<std::string> names;
      if (ex_name == "all")
        names = hbhc::experiment_names();
      else
        names.push_back(ex_name);
      bool all_passed = true;
      for (const auto& name : names) {
        hbhc::ExperimentReport rep = hbhc::run_experiment(name, seed);
        std::cout << rep.summary() << '\n';
        if (!ex_out_dir.empty()) {
          std::filesystem::create_directories(ex_out_dir);
          write_text(ex_out_dir + "/" + name + ".csv", rep.csv());
          write_text(ex_out_dir + "/" + name + ".txt", rep.summary());
        }
        all_passed = all_passed && rep.passed();
      }
      return all_passed ? 0 : 1;
    }

    if (serve->parsed()) {
      svc.policy.interval_ms = sv_interval;
      svc.policy.max_age_epochs = sv_max_age;
      svc.policy.grace_epochs = sv_grace;
      svc.policy.mode = parse_mode(sv_mode);
      hbhc::VerifierService service(svc);
      service.start();
      std::cout << "listening on " << svc.bind << ":" << service.port() << '\n';
      for (;;) std::this_thread::sleep_for(std::chrono::seconds(3'600));
    }

    if (bench_cmd->parsed()) {
      std::string rest = bn_url;
      if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
      auto colon = rest.rfind(':');
      if (colon == std::string::npos) die("--url must look like http://host:port");
      std::string host = rest.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(rest.substr(colon + 1));
      } catch (...) {
        die("--url must end in a numeric port");
      }
      hbhc::BenchReport rep = hbhc::bench_service(host, port, bn_concurrency,
                                                  bn_requests);
      if (!rep.error.empty()) die(rep.error);
      std::cout << "requests=" << rep.requests << " accepted=" << rep.accepted
                << " rejected=" << rep.rejected
                << " transport_errors=" << rep.transport_errors << '\n'
                << "mean_ms=" << rep.mean_ms << " p99_ms=" << rep.p99_ms
                << " rps=" << rep.rps << '\n';
      return (rep.rejected || rep.transport_errors) ? 1 : 0;
    }
  } catch (const std::exception& e) {
    die(e.what());
  }
  return 0;
}
