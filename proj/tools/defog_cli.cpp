// defog: experiment, benchmark and cost-model front end over the C API.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "defog/defog.h"

namespace {

struct Failure {
  defog_status status;
  std::string message;
};

void check(defog_status st) {
  if (st != DEFOG_OK) throw Failure{st, defog_last_error()};
}

// DEFOG_BACKEND or DEFOG_PEERS in the environment means a launcher owns the ranks.
bool launched() { return std::getenv("DEFOG_BACKEND") || std::getenv("DEFOG_PEERS"); }

template <class State>
void run_ranks(int n, const defog_sim_options& sim, State& state, defog_rank_fn fn) {
  if (launched()) {
    check(defog_run_env(fn, &state));
  } else {
    if (n < 1) throw Failure{DEFOG_E_INVALID_ARGUMENT, "--n must be at least 1"};
    check(defog_run_sim(n, &sim, fn, &state));
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Failure{DEFOG_E_CONFIG, "cannot write '" + path + "'"};
  f << text;
}

// ---------------------------------------------------------------- run

struct ExperimentState {
  defog_config* config = nullptr;
  std::string csv;
  std::string trajectory;
  std::string summary;
};

defog_status experiment_rank(defog_ctx* ctx, void* user) {
  auto* s = static_cast<ExperimentState*>(user);
  defog_summary* out = nullptr;
  const defog_status st = defog_run_experiment(ctx, s->config, &out);
  if (st != DEFOG_OK) return st;
  if (defog_rank(ctx) == 0) {
    s->csv = defog_summary_csv(out);
    s->trajectory = defog_summary_trajectory_csv(out);
    char line[512];
    std::snprintf(line, sizeof line,
                  "algorithm=%s n=%d iters=%d final_residual=%.6e final_consensus=%.6e wall_ms=%.3f messages=%llu "
                  "bytes=%llu\n",
                  defog_summary_algorithm(out), defog_size(ctx), defog_summary_iters(out),
                  defog_summary_final_residual(out), defog_summary_final_consensus(out), defog_summary_wall_ms(out),
                  static_cast<unsigned long long>(defog_summary_messages(out)),
                  static_cast<unsigned long long>(defog_summary_bytes(out)));
    s->summary = line;
  }
  defog_summary_destroy(out);
  return DEFOG_OK;
}

struct Outputs {
  std::string csv;
  std::string trajectory;
};

int run_config(defog_config* config, int n_override, const Outputs& out) {
  ExperimentState state;
  state.config = config;
  char buf[64];
  check(defog_config_get(config, "experiment", "size", "4", buf, sizeof buf));
  int n = std::atoi(buf);
  if (n_override > 0) {
    n = n_override;
    check(defog_config_set(config, "experiment", "size", std::to_string(n).c_str()));
  }
  defog_sim_options sim;
  check(defog_config_sim_options(config, &sim));
  run_ranks(n, sim, state, experiment_rank);
  if (state.summary.empty()) return 0;  // not rank 0 of a multi-process run
  std::cerr << state.summary;
  write_text(out.csv, state.csv);
  if (!state.trajectory.empty() && !out.trajectory.empty()) write_text(out.trajectory, state.trajectory);
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchState {
  std::string op;
  std::string topology;
  std::size_t payload = 0;
  int repeats = 10;
  int warmup = 1;
  std::string line;
};

defog_status bench_rank(defog_ctx* ctx, void* user) {
  auto* s = static_cast<BenchState*>(user);
  const int n = defog_size(ctx);
  if (n > 1) {
    defog_topology* topo = nullptr;
    defog_status st = defog_topology_create(s->topology.c_str(), n, &topo);
    if (st != DEFOG_OK) return st;
    st = defog_set_topology(ctx, topo);
    defog_topology_destroy(topo);
    if (st != DEFOG_OK) return st;
  }
  defog_bench_record rec;
  defog_status st = defog_microbench(ctx, s->op.c_str(), s->payload, s->repeats, s->warmup, &rec, nullptr, 0);
  if (st != DEFOG_OK) return st;
  double local[3] = {static_cast<double>(rec.messages), static_cast<double>(rec.bytes),
                     static_cast<double>(rec.control_messages)};
  double total[3];
  st = defog_allreduce(ctx, local, total, 3, "cli.bench.totals");
  if (st != DEFOG_OK) return st;
  if (defog_rank(ctx) == 0) {
    char line[512];
    std::snprintf(line, sizeof line, "%s,%s,%d,%zu,%d,%.9e,%.9e,%.9e,%.0f,%.0f,%.0f\n", s->op.c_str(),
                  defog_backend(ctx), n, rec.payload_bytes, rec.iters, rec.mean, rec.lo, rec.hi, total[0] * n,
                  total[1] * n, total[2] * n);
    s->line = line;
  }
  return DEFOG_OK;
}

// ---------------------------------------------------------------- demos

std::string fish_config(int n, int iters, double gamma, double threshold, const std::string& motion, double noise,
                        unsigned long long seed) {
  std::ostringstream c;
  c << "[experiment]\nalgorithm = fish\nsize = " << n << "\niters = " << iters << "\nlog_every = 1\ngamma = "
    << gamma << "\nseed = " << seed << "\n[fish]\nthreshold = " << threshold << "\nmotion = " << motion
    << "\ndistance_noise = " << noise << "\nangle_noise = " << noise / 10 << "\npredator_x = 1\npredator_y = -1\n";
  return c.str();
}

std::string consensus_config(int n, int iters, double jitter, double compute, unsigned long long seed) {
  std::ostringstream c;
  c << "[experiment]\nalgorithm = async_push_sum\nsize = " << n << "\niters = " << iters
    << "\nlog_every = 10\ntopology = exp2\nseed = " << seed << "\n[problem]\ndim = 4\n[consensus]\ncompute = "
    << compute << "\n[sim]\njitter = " << jitter << "\nseed = " << seed << "\n";
  return c.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized communication runtime: experiments, benchmarks and cost model"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
  std::string config_path, csv_out, traj_out;
  int run_n = 0;
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("-o,--csv", csv_out, "Write the iteration CSV here (default stdout)");
  run->add_option("--trajectory", traj_out, "Write the fish trajectory CSV here");
  run->add_option("-n,--size", run_n, "Override [experiment] size");

  // bench
  auto* bench = app.add_subcommand("bench", "Time a collective on the simulator or under dfrun");
  BenchState bs;
  bs.op = "neighbor_allreduce";
  bs.topology = "exp2";
  bs.payload = 1 << 20;
  int bench_n = 8;
  defog_sim_options bench_sim;
  defog_sim_options_init(&bench_sim);
  bool header = false;
  bench->add_option("--op", bs.op, "allreduce | neighbor_allreduce | dynamic_neighbor_allreduce");
  bench->add_option("-n,--size", bench_n, "Ranks (simulator)")->check(CLI::PositiveNumber);
  bench->add_option("--payload", bs.payload, "Payload bytes")->check(CLI::PositiveNumber);
  bench->add_option("--repeats", bs.repeats, "Timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bs.warmup, "Untimed repetitions")->check(CLI::NonNegativeNumber);
  bench->add_option("--topology", bs.topology, "Static topology for neighbor_allreduce");
  bench->add_option("--latency", bench_sim.latency, "Simulated seconds per message");
  bench->add_option("--bandwidth", bench_sim.bandwidth, "Simulated bytes per second (0 = unlimited)");
  bench->add_flag("--header", header, "Print the CSV header");

  // cost
  auto* cost = app.add_subcommand("cost", "Evaluate the analytic communication cost model");
  std::string scheme = "all";
  std::vector<double> nodes{4, 8, 16, 32};
  double message = 1e6, bandwidth = 1e9, latency = 1e-3;
  cost->add_option("--scheme", scheme, "ps | ring_allreduce | byteps | partial_avg | all");
  cost->add_option("-n,--nodes", nodes, "Node counts")->delimiter(',');
  cost->add_option("-M,--message", message, "Message bytes");
  cost->add_option("-B,--bandwidth", bandwidth, "Bytes per second");
  cost->add_option("-L,--latency", latency, "Seconds per message");

  // demo-fish
  auto* fish = app.add_subcommand("demo-fish", "Fish school locating a predator; writes the trajectory CSV");
  int fish_n = 8, fish_iters = 300;
  double fish_gamma = 0.3, fish_threshold = 4.0, fish_noise = 0.0;
  std::string fish_motion = "stationary", fish_out = "-";
  unsigned long long fish_seed = 7;
  fish->add_option("-n,--size", fish_n, "Fish")->check(CLI::PositiveNumber);
  fish->add_option("--iters", fish_iters, "Iterations")->check(CLI::PositiveNumber);
  fish->add_option("--gamma", fish_gamma, "Step size");
  fish->add_option("--threshold", fish_threshold, "Neighbor radius (<= 0 connects all)");
  fish->add_option("--motion", fish_motion, "stationary | escape | encircle");
  fish->add_option("--noise", fish_noise, "Distance observation noise");
  fish->add_option("--seed", fish_seed, "Seed");
  fish->add_option("-o,--out", fish_out, "Trajectory CSV (default stdout)");

  // demo-consensus
  auto* cons = app.add_subcommand("demo-consensus", "Asynchronous push-sum averaging under random delays");
  int cons_n = 8, cons_iters = 300;
  double cons_jitter = 5e-4, cons_compute = 1e-4;
  unsigned long long cons_seed = 1;
  std::string cons_out = "-";
  cons->add_option("-n,--size", cons_n, "Ranks")->check(CLI::PositiveNumber);
  cons->add_option("--iters", cons_iters, "Minimum iterations per rank")->check(CLI::PositiveNumber);
  cons->add_option("--jitter", cons_jitter, "Random extra delay per message (seconds)");
  cons->add_option("--compute", cons_compute, "Local work per iteration (seconds)");
  cons->add_option("--seed", cons_seed, "Seed");
  cons->add_option("-o,--csv", cons_out, "Iteration CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      defog_config* config = nullptr;
      check(defog_config_load(config_path.c_str(), &config));
      int rc = 0;
      try {
        rc = run_config(config, run_n, {csv_out, traj_out});
      } catch (...) {
        defog_config_destroy(config);
        throw;
      }
      defog_config_destroy(config);
      return rc;
    }
    if (*bench) {
      run_ranks(bench_n, bench_sim, bs, bench_rank);
      if (header) std::cout << "op,backend,n,payload_bytes,repeats,mean_s,p5_s,p95_s,messages,bytes,control_messages\n";
      std::cout << bs.line;
      return 0;
    }
    if (*cost) {
      std::vector<std::string> schemes;
      if (scheme == "all")
        schemes = {"ps", "ring_allreduce", "byteps", "partial_avg"};
      else
        schemes = {scheme};
      std::cout << "scheme,n,message_bytes,bandwidth,latency,seconds\n";
      for (const auto& s : schemes)
        for (double n : nodes) {
          double seconds = 0;
          check(defog_comm_cost(s.c_str(), n, message, bandwidth, latency, &seconds));
          std::printf("%s,%g,%g,%g,%g,%.9g\n", s.c_str(), n, message, bandwidth, latency, seconds);
        }
      return 0;
    }
    if (*fish) {
      defog_config* config = nullptr;
      check(defog_config_parse(
          fish_config(fish_n, fish_iters, fish_gamma, fish_threshold, fish_motion, fish_noise, fish_seed).c_str(),
          &config));
      const int rc = run_config(config, 0, {"/dev/null", fish_out});
      defog_config_destroy(config);
      return rc;
    }
    if (*cons) {
      defog_config* config = nullptr;
      check(defog_config_parse(consensus_config(cons_n, cons_iters, cons_jitter, cons_compute, cons_seed).c_str(),
                               &config));
      const int rc = run_config(config, 0, {cons_out, ""});
      defog_config_destroy(config);
      return rc;
    }
  } catch (const Failure& f) {
    std::cerr << "defog: " << defog_status_name(f.status) << ": " << f.message << "\n";
    return 2;
  }
  return 0;
}
