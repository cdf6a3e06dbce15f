#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hbhc {

struct VerdictRow {
  std::string check;
  std::string detail;  // measured value and the tolerance it was held to
  bool pass = false;
};

// One experiment run: a CSV-able table plus pass/fail verdicts. Everything
// except wall-clock latency columns regenerates bit-identically from
// (name, seed).
struct ExperimentReport {
  std::string name;
  std::string parameters;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<VerdictRow> verdicts;
  double runtime_seconds = 0.0;

  bool passed() const;
  std::string csv() const;
  std::string summary() const;
};

ExperimentReport exp_revocation_latency(std::uint64_t seed = 42);
ExperimentReport exp_fprr(std::uint64_t seed = 42);
ExperimentReport exp_clock_skew(std::uint64_t seed = 42);
ExperimentReport exp_gossip(std::uint64_t seed = 42);
ExperimentReport exp_scalability(std::uint64_t seed = 42);
ExperimentReport exp_edge_cases(std::uint64_t seed = 42);
ExperimentReport exp_sequence_mode(std::uint64_t seed = 42);
ExperimentReport exp_bandwidth(std::uint64_t seed = 42);
ExperimentReport exp_crypto_bench(std::uint64_t seed = 42);

std::vector<std::string> experiment_names();

// Dispatch by name ("revocation_latency", "fprr", ...). Throws
// std::invalid_argument for unknown names.
ExperimentReport run_experiment(const std::string& name, std::uint64_t seed = 42);

}  // namespace hbhc
