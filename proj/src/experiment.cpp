#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "defog/algorithms.hpp"
#include "defog/bench.hpp"
#include "defog/error.hpp"
#include "defog/topology.hpp"

namespace defog {

namespace {

constexpr std::uint32_t kRowsTag = 0x6c6f67;  // async row gather

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string fmt(double v, const char* spec = "%.9e") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void append_row(std::string& csv, int iter, int rank, double residual, double consensus, double wall_ms) {
  csv += std::to_string(iter) + "," + std::to_string(rank) + "," + fmt(residual) + "," + fmt(consensus) + "," +
         fmt(wall_ms, "%.6f") + "\n";
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(item, &pos);
      if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("'" + key + "' expects a comma-separated list of integers, got '" + text + "'");
    }
  }
  return out;
}

FishMotion fish_motion_from_name(const std::string& name) {
  if (name == "stationary") return FishMotion::kStationary;
  if (name == "escape") return FishMotion::kEscape;
  if (name == "encircle") return FishMotion::kEncircle;
  throw ConfigError("unknown fish motion '" + name + "' (valid: stationary, escape, encircle)");
}

CommType comm_from_name(const std::string& name) {
  if (name == "neighbor_allreduce") return CommType::kNeighborAllreduce;
  if (name == "allreduce") return CommType::kAllreduce;
  if (name == "hierarchical") return CommType::kHierarchical;
  throw ConfigError("unknown comm type '" + name + "' (valid: neighbor_allreduce, allreduce, hierarchical)");
}

// Shared state of one experiment run on one rank.
class Recorder {
 public:
  Recorder(Context& ctx, std::vector<double> target, int log_every)
      : ctx_(ctx), target_(std::move(target)), log_every_(log_every), start_(ctx.now()) {}

  double elapsed_ms() const { return (ctx_.now() - start_ - excluded_time_) * 1000.0; }

  // Collective: every rank calls with the same iteration.
  void log(int iter, std::span<const double> x, bool force = false) {
    if (!force && iter % log_every_ != 0) return;
    std::vector<double> payload(x.begin(), x.end());
    payload.push_back(elapsed_ms());
    const auto rows = gather(payload, "experiment.log");
    if (ctx_.rank() != 0) return;
    const std::size_t d = x.size();
    const auto mean = mean_of(rows, d);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      std::span<const double> xr(rows[r].data(), d);
      append_row(csv_, iter, r, distance(xr, target_), distance(xr, mean), rows[r][d]);
    }
  }

  // Collective; payload traffic and time are excluded from the reported figures.
  std::vector<std::vector<double>> gather(const std::vector<double>& payload, const std::string& name) {
    const auto c0 = ctx_.counters();
    const double t0 = ctx_.now();
    auto all = ctx_.allgather(Tensor::vector(payload), name);
    excluded_time_ += ctx_.now() - t0;
    const auto c1 = ctx_.counters();
    excluded_messages_ += c1.tensor_messages - c0.tensor_messages;
    excluded_bytes_ += c1.tensor_bytes - c0.tensor_bytes;
    std::vector<std::vector<double>> out;
    for (auto& t : all) out.push_back(t.values());
    return out;
  }

  static std::vector<double> mean_of(const std::vector<std::vector<double>>& rows, std::size_t d) {
    std::vector<double> mean(d, 0.0);
    for (const auto& r : rows)
      for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    for (double& m : mean) m /= static_cast<double>(rows.size());
    return mean;
  }

  void finish(ExperimentSummary& s, std::span<const double> x) {
    const double wall = elapsed_ms();
    const auto c = ctx_.counters();
    const double messages = static_cast<double>(c.tensor_messages - excluded_messages_);
    const double bytes = static_cast<double>(c.tensor_bytes - excluded_bytes_);
    std::vector<double> payload(x.begin(), x.end());
    payload.insert(payload.end(), {messages, bytes, wall});
    const auto rows = ctx_.allgather(Tensor::vector(payload), "experiment.final");
    const std::size_t d = x.size();
    std::vector<std::vector<double>> xs;
    for (const auto& t : rows) xs.push_back(t.values());
    const auto mean = mean_of(xs, d);
    s.n = ctx_.size();
    s.final_residual = 0;
    s.final_consensus = 0;
    s.messages = 0;
    s.bytes = 0;
    s.wall_ms = 0;
    for (const auto& r : xs) {
      std::span<const double> xr(r.data(), d);
      s.final_residual = std::max(s.final_residual, distance(xr, target_));
      s.final_consensus = std::max(s.final_consensus, distance(xr, mean));
      s.messages += static_cast<std::uint64_t>(r[d]);
      s.bytes += static_cast<std::uint64_t>(r[d + 1]);
      s.wall_ms = std::max(s.wall_ms, r[d + 2]);
    }
    if (ctx_.rank() == 0) s.csv = header() + csv_;
  }

  std::string& csv() { return csv_; }
  static std::string header() { return "iter,rank,residual_to_opt,consensus_residual,wall_ms\n"; }

 private:
  Context& ctx_;
  std::vector<double> target_;
  int log_every_;
  double start_;
  double excluded_time_ = 0;
  std::uint64_t excluded_messages_ = 0;
  std::uint64_t excluded_bytes_ = 0;
  std::string csv_;
};

struct Common {
  int iters = 200;
  int log_every = 10;
  std::uint64_t seed = 1;
  std::string topology = "exp2";
};

Common read_common(const Config& cfg) {
  Common c;
  const auto iters = cfg.get_int("experiment", "iters", 200);
  const auto log_every = cfg.get_int("experiment", "log_every", 10);
  const auto seed = cfg.get_int("experiment", "seed", 1);
  if (iters < 1 || iters > 100'000'000) throw ConfigError("'iters' must be in [1, 1e8], got " + std::to_string(iters));
  if (log_every < 1) throw ConfigError("'log_every' must be at least 1, got " + std::to_string(log_every));
  if (seed < 0) throw ConfigError("'seed' must be nonnegative");
  c.iters = static_cast<int>(iters);
  c.log_every = static_cast<int>(std::min<long long>(log_every, iters));
  c.seed = static_cast<std::uint64_t>(seed);
  c.topology = cfg.get("experiment", "topology", "exp2");
  if (!is_static_topology_name(c.topology))
    throw ConfigError("unknown topology '" + c.topology + "' (valid: ring, star, mesh2d, full, exp2)");
  return c;
}

LeastSquaresProblem read_problem(const Config& cfg, int n, std::uint64_t seed) {
  const auto rows = cfg.get_int("problem", "rows", 50);
  const auto dim = cfg.get_int("problem", "dim", 10);
  const double noise = cfg.get_double("problem", "noise", 0.1);
  if (rows < 1 || dim < 1 || rows > 1'000'000 || dim > 100'000)
    throw ConfigError("'rows' and 'dim' must be positive");
  if (!(noise >= 0)) throw ConfigError("'noise' must be nonnegative");
  return cfg.get_bool("problem", "homogeneous", false)
             ? make_homogeneous_least_squares(n, static_cast<int>(rows), static_cast<int>(dim), noise, seed)
             : make_least_squares(n, static_cast<int>(rows), static_cast<int>(dim), noise, seed);
}

double read_gamma(const Config& cfg, const LeastSquaresProblem& p) {
  if (cfg.has("experiment", "gamma")) {
    const double g = cfg.get_double("experiment", "gamma", 0);
    if (!(g > 0)) throw ConfigError("'gamma' must be positive");
    return g;
  }
  const double gl = cfg.get_double("experiment", "gamma_l", 0.5);
  if (!(gl > 0)) throw ConfigError("'gamma_l' must be positive");
  return gl / p.lipschitz();
}

Topology static_topology(const Common& c, int n) {
  return n > 1 ? make_static_topology(c.topology, n) : Topology();
}

ExperimentSummary run_least_squares(Context& ctx, const Config& cfg, const std::string& algo) {
  const Common c = read_common(cfg);
  const auto problem = read_problem(cfg, ctx.size(), c.seed);
  const double gamma = read_gamma(cfg, problem);
  const Topology topo = static_topology(c, ctx.size());
  Recorder rec(ctx, solve_least_squares(problem), c.log_every);
  const std::vector<double> x0(problem.dim(), 0.0);
  rec.log(0, x0);

  SolverOptions o;
  o.gamma = gamma;
  o.iters = c.iters;
  o.name = "experiment." + algo;
  o.observer = [&](const IterateInfo& info) { rec.log(info.iter, info.x, info.iter == c.iters); };

  std::vector<double> x;
  if (algo == "dgd") {
    x = dgd(ctx, problem, topo, o);
  } else if (algo == "exact_diffusion") {
    x = exact_diffusion(ctx, problem, topo, o);
  } else if (algo == "gradient_tracking") {
    const bool one_peer = cfg.get_bool("experiment", "one_peer", true);
    x = ctx.size() > 1 ? push_sum_gradient_tracking(ctx, problem, topo, o, one_peer)
                       : dgd(ctx, problem, topo, o);
  } else {
    // atc / awc over consecutive layers of the parameter vector
    std::vector<int> sizes{problem.dim()};
    if (cfg.has("layers", "sizes")) sizes = parse_int_list(cfg.get("layers", "sizes", ""), "sizes");
    long long total = 0;
    for (int s : sizes) {
      if (s < 1) throw ConfigError("layer sizes must be positive");
      total += s;
    }
    if (total != problem.dim())
      throw ConfigError("layer sizes sum to " + std::to_string(total) + " but the problem has dim " +
                        std::to_string(problem.dim()));
    const double compute = cfg.get_double("layers", "compute", 0.0);
    if (!(compute >= 0)) throw ConfigError("'compute' must be nonnegative");
    const auto every = cfg.get_int("layers", "allreduce_every", 0);
    if (every < 0) throw ConfigError("'allreduce_every' must be nonnegative");
    const CommType comm = comm_from_name(cfg.get("layers", "comm", "neighbor_allreduce"));
    if (ctx.size() > 1) ctx.set_topology(topo);
    const auto oracle = layered_least_squares_oracle(problem, ctx.rank(), sizes, compute);
    auto layers = split_layers(x0, sizes);
    for (int k = 0; k < c.iters; ++k) {
      const CommType ck = (every > 0 && (k + 1) % every == 0) ? CommType::kAllreduce : comm;
      layers = algo == "atc" ? atc_step(ctx, layers, oracle, gamma, ck, std::nullopt, o.name)
                             : awc_step(ctx, layers, oracle, gamma, ck, std::nullopt, o.name);
      const auto joined = join_layers(layers);
      rec.log(k + 1, joined, k + 1 == c.iters);
    }
    x = join_layers(layers);
  }

  ExperimentSummary s;
  s.algorithm = algo;
  s.iters = c.iters;
  rec.finish(s, x);
  return s;
}

ExperimentSummary run_async(Context& ctx, const Config& cfg) {
  const Common c = read_common(cfg);
  const auto dim = cfg.get_int("problem", "dim", 10);
  if (dim < 1 || dim > 100'000) throw ConfigError("'dim' must be positive");
  const double compute = cfg.get_double("consensus", "compute", 0.0);
  if (!(compute >= 0)) throw ConfigError("'compute' must be nonnegative");
  const int n = ctx.size();
  const auto d = static_cast<std::size_t>(dim);

  // Every rank regenerates all initial values to know the average.
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> all(n, std::vector<double>(d));
  for (auto& v : all)
    for (double& e : v) e = normal(rng);
  const auto target = Recorder::mean_of(all, d);
  Recorder rec(ctx, target, c.log_every);

  // (iter, residual, wall_ms) triples logged locally; no collectives mid-run.
  std::vector<double> local;
  local.insert(local.end(), {0.0, distance(all[ctx.rank()], target), 0.0});
  AsyncPushSumOptions o;
  o.iters = c.iters;
  o.compute_seconds = compute;
  o.window = "experiment.push_sum";
  o.observer = [&](int k, std::span<const double> x, double p) {
    if (k % c.log_every != 0) return;
    std::vector<double> y(x.begin(), x.end());
    for (double& v : y) v /= p;
    local.insert(local.end(), {static_cast<double>(k), distance(y, target), rec.elapsed_ms()});
  };
  const Topology topo = static_topology(c, n);
  const auto y = n > 1 ? async_push_sum_consensus(ctx, all[ctx.rank()], topo, o) : all[0];

  ExperimentSummary s;
  s.algorithm = "async_push_sum";
  s.iters = c.iters;
  rec.finish(s, y);
  // Per-rank logs reach rank 0 point to point after the run.
  std::vector<std::vector<double>> logs(n);
  if (ctx.rank() == 0) {
    logs[0] = local;
    for (int r = 1; r < n; ++r) logs[r] = ctx.recv(r, kRowsTag).payload;
  } else {
    ctx.send(0, kRowsTag, "experiment.rows", Tensor::vector(local));
  }
  if (ctx.rank() == 0) {
    std::string body;
    for (int r = 0; r < n; ++r)
      for (std::size_t i = 0; i + 2 < logs[r].size(); i += 3)
        append_row(body, static_cast<int>(logs[r][i]), r, logs[r][i + 1], std::nan(""), logs[r][i + 2]);
    s.csv = Recorder::header() + body;
  }
  return s;
}

ExperimentSummary run_fish(Context& ctx, const Config& cfg) {
  const Common c = read_common(cfg);
  FishConfig f;
  f.iters = c.iters;
  f.seed = c.seed;
  f.predator = {cfg.get_double("fish", "predator_x", 0.0), cfg.get_double("fish", "predator_y", 0.0)};
  f.gamma = cfg.get_double("experiment", "gamma", f.gamma);
  f.threshold = cfg.get_double("fish", "threshold", f.threshold);
  f.distance_noise = cfg.get_double("fish", "distance_noise", 0.0);
  f.angle_noise = cfg.get_double("fish", "angle_noise", 0.0);
  f.motion = fish_motion_from_name(cfg.get("fish", "motion", "stationary"));
  f.speed = cfg.get_double("fish", "speed", f.speed);
  f.orbit_radius = cfg.get_double("fish", "orbit_radius", f.orbit_radius);
  f.spread = cfg.get_double("fish", "spread", f.spread);
  if (!(f.gamma > 0) || !(f.distance_noise >= 0) || !(f.angle_noise >= 0) || !(f.speed >= 0) ||
      !(f.spread > 0))
    throw ConfigError("fish settings need gamma, spread > 0 and nonnegative noise and speed");

  const std::vector<double> target{f.predator.x, f.predator.y};
  Recorder rec(ctx, target, c.log_every);
  std::string trajectory = "iter,rank,pos_x,pos_y,est_x,est_y\n";
  auto log_state = [&](int iter, const FishState& st, bool force) {
    if (!force && iter % c.log_every != 0) return;
    const std::vector<double> est{st.estimate.x, st.estimate.y};
    rec.log(iter, est, true);
    const auto rows = rec.gather({st.position.x, st.position.y, st.estimate.x, st.estimate.y}, "experiment.fish");
    if (ctx.rank() != 0) return;
    for (int r = 0; r < static_cast<int>(rows.size()); ++r)
      trajectory += std::to_string(iter) + "," + std::to_string(r) + "," + fmt(rows[r][0]) + "," +
                    fmt(rows[r][1]) + "," + fmt(rows[r][2]) + "," + fmt(rows[r][3]) + "\n";
  };
  FishState initial;
  initial.position = fish_initial_position(f, ctx.rank());
  initial.estimate = {f.estimate_offset, f.estimate_offset};
  log_state(0, initial, true);
  const auto final_state =
      dsgd_time_varying(ctx, f, [&](int k, const FishState& st) { log_state(k, st, k == c.iters); });

  ExperimentSummary s;
  s.algorithm = "fish";
  s.iters = c.iters;
  rec.finish(s, std::vector<double>{final_state.estimate.x, final_state.estimate.y});
  if (ctx.rank() == 0) s.trajectory_csv = trajectory;
  return s;
}

}  // namespace

const std::vector<std::string>& experiment_algorithms() {
  static const std::vector<std::string> names{"dgd", "exact_diffusion", "gradient_tracking", "atc",
                                              "awc", "async_push_sum",  "fish"};
  return names;
}

ExperimentSummary run_experiment(Context& ctx, const Config& config) {
  const std::string algo = config.get("experiment", "algorithm", "");
  if (config.has("experiment", "size") && config.get_int("experiment", "size", 0) != ctx.size())
    throw ConfigError("config asks for " + config.get("experiment", "size", "") + " ranks but the run has " +
                      std::to_string(ctx.size()));
  if (algo == "async_push_sum") return run_async(ctx, config);
  if (algo == "fish") return run_fish(ctx, config);
  const auto& names = experiment_algorithms();
  if (std::find(names.begin(), names.end(), algo) == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown algorithm '" + algo + "' (valid: " + valid + ")");
  }
  return run_least_squares(ctx, config, algo);
}

SimConfig sim_config_from(const Config& config) {
  SimConfig s;
  s.latency = config.get_double("sim", "latency", s.latency);
  s.control_latency = config.get_double("sim", "control_latency", s.control_latency);
  s.bandwidth = config.get_double("sim", "bandwidth", s.bandwidth);
  s.jitter = config.get_double("sim", "jitter", s.jitter);
  const auto seed = config.get_int("sim", "seed", 1);
  const auto local = config.get_int("sim", "local_size", 0);
  const auto fusion = config.get_int("sim", "fusion_bytes", static_cast<long long>(s.fusion_bytes));
  if (!(s.latency >= 0) || !(s.bandwidth >= 0) || !(s.jitter >= 0) || seed < 0 || local < 0 || fusion < 0)
    throw ConfigError("[sim] values must be nonnegative");
  s.seed = static_cast<std::uint64_t>(seed);
  s.local_size = static_cast<int>(local);
  s.fusion_bytes = static_cast<std::size_t>(fusion);
  s.topology_check = config.get_bool("sim", "topology_check", true);
  return s;
}

}  // namespace defog
