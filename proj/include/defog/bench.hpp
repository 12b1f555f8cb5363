#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "defog/context.hpp"
#include "defog/sim.hpp"

namespace defog {

// ---------------------------------------------------------------- cost model

enum class CostScheme { kParameterServer, kRingAllreduce, kBytePS, kPartialAverage };

struct CostModelInput {
  double n = 1;          // nodes
  double message = 1;    // bytes per message (M)
  double bandwidth = 1;  // bytes per second (B)
  double latency = 0;    // seconds per message (L)
};

// Seconds for one round:
//   ps        n M / B + n L
//   ring      2 M / B + 2 n L
//   byteps    M / B + n L
//   partial   M / B + L
// Throws InvalidArgument unless n, M and B are positive and L >= 0.
double comm_cost(CostScheme scheme, const CostModelInput& input);

// Names: ps, ring_allreduce, byteps, partial_avg.
CostScheme cost_scheme_from_name(const std::string& name);
const char* to_string(CostScheme scheme);
const std::vector<std::string>& cost_scheme_names();

// ---------------------------------------------------------------- microbench

enum class BenchOp { kAllreduce, kNeighborAllreduce, kDynamicNeighborAllreduce };

// Names: allreduce, neighbor_allreduce, dynamic_neighbor_allreduce.
BenchOp bench_op_from_name(const std::string& name);
const char* to_string(BenchOp op);

struct RunRecord {
  std::string scheme;
  int n = 0;
  int iters = 0;                 // timed repetitions
  std::size_t payload_bytes = 0;
  double wall_time = 0;          // seconds over the timed repetitions
  std::vector<double> samples;   // seconds per repetition
  double mean = 0;
  double lo = 0;                 // 5th percentile
  double hi = 0;                 // 95th percentile
  std::uint64_t messages = 0;    // payload messages sent by this rank while timed
  std::uint64_t bytes = 0;       // payload bytes sent by this rank while timed
  std::uint64_t control_messages = 0;
};

// Times `repeats` executions of `op` on a tensor of payload_bytes / 8
// doubles after `warmup` untimed ones. Every repetition starts after a
// barrier, so samples measure the operation alone. The static neighbor op
// uses the context's current topology; the dynamic op
// uses the one-peer exponential-2 schedule. Times come from the runtime
// clock (virtual on sim). Throws InvalidArgument for a payload below 8
// bytes or repeats < 1.
RunRecord microbench(Context& ctx, BenchOp op, std::size_t payload_bytes, int repeats, int warmup = 1);

// Linear-interpolated percentile (q in [0, 1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

// ---------------------------------------------------------------- config

// Line-oriented "key = value" file with optional [section] headers. '#' and
// ';' start comments. Keys before any header belong to section "".
class Config {
 public:
  static Config parse(const std::string& text);  // ConfigError "line N: ..."
  static Config load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return data_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
  std::map<std::string, std::map<std::string, int>> lines_;
};

// ---------------------------------------------------------------- experiments

struct ExperimentSummary {
  std::string algorithm;
  int n = 0;
  int iters = 0;
  double final_residual = 0;    // max_i ||x_i - x*||
  double final_consensus = 0;   // max_i ||x_i - mean||
  double wall_ms = 0;
  std::uint64_t messages = 0;   // tensor-carrying messages, all ranks (logging excluded)
  std::uint64_t bytes = 0;      // tensor payload bytes, all ranks
  std::string csv;              // iter,rank,residual_to_opt,consensus_residual,wall_ms
  std::string trajectory_csv;   // fish runs: per-iteration positions and estimates
};

// Algorithm names accepted in [experiment] algorithm.
const std::vector<std::string>& experiment_algorithms();

// Runs the configured experiment on this rank. All ranks must call it;
// rank 0's summary covers every rank (the others get partial summaries).
// Throws ConfigError for unknown algorithms (listing the valid ones) and
// invalid settings.
ExperimentSummary run_experiment(Context& ctx, const Config& config);

// Simulator settings from the [sim] section (latency, control_latency,
// bandwidth, jitter, seed, local_size, fusion_bytes, topology_check).
SimConfig sim_config_from(const Config& config);

}  // namespace defog
