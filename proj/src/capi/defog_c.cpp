#include "defog/defog.h"

#include <algorithm>
#include <cstring>
#include <map>
#include <new>
#include <string>

#include "defog/bench.hpp"
#include "defog/error.hpp"
#include "defog/launch.hpp"
#include "defog/sim.hpp"
#include "defog/topology.hpp"

using namespace defog;

struct defog_ctx {
  Context* ctx;
  std::map<defog_handle, CommHandle> handles;
};

struct defog_topology {
  Topology topology;
};

struct defog_scheme {
  WeightScheme scheme;
};

struct defog_config {
  Config config;
};

struct defog_summary {
  ExperimentSummary summary;
};

namespace {

thread_local std::string g_last_error;

defog_status fail(ErrorCode code, const std::string& what) {
  g_last_error = what;
  return static_cast<defog_status>(code);
}

template <class F>
defog_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return DEFOG_OK;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::bad_alloc&) {
    return fail(ErrorCode::kInternal, "out of memory");
  } catch (const std::exception& e) {
    return fail(ErrorCode::kInternal, e.what());
  } catch (...) {
    return fail(ErrorCode::kInternal, "unknown error");
  }
}

template <class T>
void need(const T* p, const char* what) {
  if (!p) throw InvalidArgument(std::string(what) + " must not be null");
}

Tensor vec(const double* in, std::size_t count) {
  need(in, "input buffer");
  if (count == 0) throw InvalidArgument("tensor length must be positive");
  return Tensor(Shape{static_cast<std::int64_t>(count)}, std::vector<double>(in, in + count));
}

void copy_out(const Tensor& t, double* out, std::size_t count) {
  need(out, "output buffer");
  if (t.size() != count)
    throw DimensionError("output holds " + std::to_string(count) + " values but the result has " +
                         std::to_string(t.size()));
  std::copy(t.values().begin(), t.values().end(), out);
}

std::optional<WeightScheme> opt_scheme(const defog_scheme* s) {
  if (!s) return std::nullopt;
  return s->scheme;
}

SimConfig to_sim(const defog_sim_options* o) {
  SimConfig c;
  if (!o) return c;
  c.latency = o->latency;
  c.control_latency = o->control_latency;
  c.bandwidth = o->bandwidth;
  c.jitter = o->jitter;
  c.seed = o->seed;
  c.local_size = o->local_size;
  c.fusion_bytes = o->fusion_bytes;
  c.topology_check = o->topology_check != 0;
  return c;
}

void from_sim(const SimConfig& c, defog_sim_options* o) {
  o->latency = c.latency;
  o->control_latency = c.control_latency;
  o->bandwidth = c.bandwidth;
  o->jitter = c.jitter;
  o->seed = c.seed;
  o->local_size = c.local_size;
  o->fusion_bytes = c.fusion_bytes;
  o->topology_check = c.topology_check ? 1 : 0;
}

void call_rank(defog_rank_fn fn, void* user, Context& ctx) {
  defog_ctx handle{&ctx, {}};
  const defog_status st = fn(&handle, user);
  if (st != DEFOG_OK) {
    const std::string msg = g_last_error.empty() ? "rank callback failed" : g_last_error;
    throw_error(static_cast<ErrorCode>(st), "rank " + std::to_string(ctx.rank()) + ": " + msg);
  }
}

}  // namespace

extern "C" {

const char* defog_last_error(void) { return g_last_error.c_str(); }

const char* defog_status_name(defog_status status) { return to_string(static_cast<ErrorCode>(status)); }

const char* defog_version(void) { return "0.1.0"; }

void defog_sim_options_init(defog_sim_options* options) {
  if (options) from_sim(SimConfig{}, options);
}

defog_status defog_run_sim(int size, const defog_sim_options* options, defog_rank_fn fn, void* user) {
  return guard([&] {
    if (!fn) throw InvalidArgument("rank callback must not be null");
    if (size < 1) throw InvalidArgument("world size must be at least 1");
    SimWorld world(size, to_sim(options));
    world.run([&](Context& ctx) { call_rank(fn, user, ctx); });
  });
}

defog_status defog_run_env(defog_rank_fn fn, void* user) {
  return guard([&] {
    if (!fn) throw InvalidArgument("rank callback must not be null");
    launch(read_launch_env(), [&](Context& ctx) { call_rank(fn, user, ctx); });
  });
}

int defog_rank(const defog_ctx* ctx) { return ctx ? ctx->ctx->rank() : -1; }
int defog_size(const defog_ctx* ctx) { return ctx ? ctx->ctx->size() : -1; }
int defog_local_size(const defog_ctx* ctx) { return ctx ? ctx->ctx->local_size() : -1; }
const char* defog_backend(const defog_ctx* ctx) { return ctx ? ctx->ctx->backend() : ""; }
double defog_now(const defog_ctx* ctx) { return ctx ? ctx->ctx->now() : 0.0; }

defog_status defog_compute(defog_ctx* ctx, double seconds) {
  return guard([&] {
    need(ctx, "context");
    if (!(seconds >= 0)) throw InvalidArgument("compute time must be nonnegative");
    ctx->ctx->compute(seconds);
  });
}

defog_status defog_set_topology(defog_ctx* ctx, const defog_topology* topology) {
  return guard([&] {
    need(ctx, "context");
    need(topology, "topology");
    if (!ctx->ctx->set_topology(topology->topology))
      throw TopologyError("topology has " + std::to_string(topology->topology.size()) + " nodes but the run has " +
                          std::to_string(ctx->ctx->size()) + " ranks");
  });
}

defog_status defog_allreduce(defog_ctx* ctx, const double* in, double* out, size_t count, const char* name) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    copy_out(ctx->ctx->allreduce(vec(in, count), name), out, count);
  });
}

defog_status defog_neighbor_allreduce(defog_ctx* ctx, const double* in, double* out, size_t count, const char* name,
                                      const defog_scheme* scheme) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    copy_out(ctx->ctx->neighbor_allreduce(vec(in, count), name, opt_scheme(scheme)), out, count);
  });
}

defog_status defog_hierarchical_neighbor_allreduce(defog_ctx* ctx, const double* in, double* out, size_t count,
                                                   const char* name) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    copy_out(ctx->ctx->hierarchical_neighbor_allreduce(vec(in, count), name), out, count);
  });
}

defog_status defog_allgather(defog_ctx* ctx, const double* in, double* out, size_t count, const char* name) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    need(out, "output buffer");
    const auto parts = ctx->ctx->allgather(vec(in, count), name);
    for (std::size_t r = 0; r < parts.size(); ++r) copy_out(parts[r], out + r * count, count);
  });
}

defog_status defog_barrier(defog_ctx* ctx) {
  return guard([&] {
    need(ctx, "context");
    ctx->ctx->barrier();
  });
}

defog_status defog_allreduce_nonblocking(defog_ctx* ctx, const double* in, size_t count, const char* name,
                                         defog_handle* handle) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    need(handle, "handle");
    auto h = ctx->ctx->allreduce_nonblocking(vec(in, count), name);
    *handle = h.id;
    ctx->handles[h.id] = std::move(h);
  });
}

defog_status defog_neighbor_allreduce_nonblocking(defog_ctx* ctx, const double* in, size_t count, const char* name,
                                                  const defog_scheme* scheme, defog_handle* handle) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    need(handle, "handle");
    auto h = ctx->ctx->neighbor_allreduce_nonblocking(vec(in, count), name, opt_scheme(scheme));
    *handle = h.id;
    ctx->handles[h.id] = std::move(h);
  });
}

defog_status defog_wait(defog_ctx* ctx, defog_handle handle, double* out, size_t count) {
  return guard([&] {
    need(ctx, "context");
    auto it = ctx->handles.find(handle);
    if (it == ctx->handles.end()) throw UsageError("unknown or already waited handle " + std::to_string(handle));
    const CommHandle h = it->second;
    ctx->handles.erase(it);
    copy_out(ctx->ctx->wait(h), out, count);
  });
}

defog_status defog_poll(defog_ctx* ctx, defog_handle handle, int* done) {
  return guard([&] {
    need(ctx, "context");
    need(done, "done flag");
    auto it = ctx->handles.find(handle);
    if (it == ctx->handles.end()) throw UsageError("unknown or already waited handle " + std::to_string(handle));
    *done = ctx->ctx->poll(it->second) ? 1 : 0;
  });
}

defog_status defog_win_create(defog_ctx* ctx, const double* x, size_t count, const char* name, int zero_init) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    if (!ctx->ctx->win_create(vec(x, count), name, zero_init != 0))
      throw UsageError(std::string("window '") + name + "' already exists");
  });
}

defog_status defog_win_free(defog_ctx* ctx, const char* name) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    if (!ctx->ctx->win_free(name)) throw UsageError(std::string("no window named '") + name + "'");
  });
}

defog_status defog_win_put(defog_ctx* ctx, const double* x, size_t count, const char* name,
                           const defog_scheme* scheme) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    const auto s = opt_scheme(scheme);
    if (!ctx->ctx->win_put(vec(x, count), name, s ? s->self_weight : std::nullopt,
                           s ? s->dst_weights : std::nullopt))
      throw UsageError(std::string("no window named '") + name + "'");
  });
}

defog_status defog_win_accumulate(defog_ctx* ctx, const double* x, size_t count, const char* name,
                                  const defog_scheme* scheme, int require_mutex) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    const auto s = opt_scheme(scheme);
    if (!ctx->ctx->win_accumulate(vec(x, count), name, s ? s->self_weight : std::nullopt,
                                  s ? s->dst_weights : std::nullopt, require_mutex != 0))
      throw UsageError(std::string("no window named '") + name + "'");
  });
}

defog_status defog_win_update(defog_ctx* ctx, const char* name, double* out, size_t count) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    copy_out(ctx->ctx->win_update(name), out, count);
  });
}

defog_status defog_win_update_then_collect(defog_ctx* ctx, const char* name, double* out, size_t count) {
  return guard([&] {
    need(ctx, "context");
    need(name, "name");
    copy_out(ctx->ctx->win_update_then_collect(name), out, count);
  });
}

defog_status defog_get_counters(defog_ctx* ctx, defog_counters* out) {
  return guard([&] {
    need(ctx, "context");
    need(out, "counters");
    const auto c = ctx->ctx->counters();
    *out = {c.messages_sent, c.data_messages, c.data_bytes, c.tensor_messages, c.tensor_bytes};
  });
}

defog_status defog_topology_create(const char* name, int n, defog_topology** out) {
  return guard([&] {
    need(name, "name");
    need(out, "output");
    *out = nullptr;
    if (!is_static_topology_name(name))
      throw InvalidArgument(std::string("unknown topology '") + name + "' (valid: ring, star, mesh2d, full, exp2)");
    *out = new defog_topology{make_static_topology(name, n)};
  });
}

defog_status defog_topology_from_weights(const double* weights, int n, defog_topology** out) {
  return guard([&] {
    need(weights, "weights");
    need(out, "output");
    *out = nullptr;
    if (n < 1) throw InvalidArgument("topology size must be positive");
    Matrix w(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) w(i, j) = weights[static_cast<std::size_t>(i) * n + j];
    *out = new defog_topology{Topology::from_weights(std::move(w))};
  });
}

void defog_topology_destroy(defog_topology* topology) { delete topology; }

int defog_topology_size(const defog_topology* topology) { return topology ? topology->topology.size() : 0; }

defog_status defog_topology_weights(const defog_topology* topology, double* out) {
  return guard([&] {
    need(topology, "topology");
    need(out, "output");
    const auto& w = topology->topology.weights();
    const auto n = static_cast<std::size_t>(topology->topology.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = w(i, j);
  });
}

defog_status defog_scheme_create(defog_scheme** out) {
  return guard([&] {
    need(out, "output");
    *out = new defog_scheme{};
  });
}

defog_status defog_scheme_one_peer_exponential(int n, int rank, int64_t round, defog_scheme** out) {
  return guard([&] {
    need(out, "output");
    *out = nullptr;
    if (n < 2 || rank < 0 || rank >= n) throw InvalidArgument("one-peer schedule needs n >= 2 and 0 <= rank < n");
    *out = new defog_scheme{one_peer_exponential_scheme(n, rank, round)};
  });
}

void defog_scheme_destroy(defog_scheme* scheme) { delete scheme; }

defog_status defog_scheme_set_self(defog_scheme* scheme, double weight) {
  return guard([&] {
    need(scheme, "scheme");
    scheme->scheme.self_weight = weight;
  });
}

defog_status defog_scheme_add_src(defog_scheme* scheme, int rank, double weight) {
  return guard([&] {
    need(scheme, "scheme");
    if (!scheme->scheme.src_weights) scheme->scheme.src_weights.emplace();
    (*scheme->scheme.src_weights)[rank] = weight;
  });
}

defog_status defog_scheme_add_dst(defog_scheme* scheme, int rank, double weight) {
  return guard([&] {
    need(scheme, "scheme");
    if (!scheme->scheme.dst_weights) scheme->scheme.dst_weights.emplace();
    (*scheme->scheme.dst_weights)[rank] = weight;
  });
}

defog_status defog_comm_cost(const char* scheme, double n, double message_bytes, double bandwidth, double latency,
                             double* seconds) {
  return guard([&] {
    need(scheme, "scheme");
    need(seconds, "output");
    *seconds = comm_cost(cost_scheme_from_name(scheme), {n, message_bytes, bandwidth, latency});
  });
}

defog_status defog_microbench(defog_ctx* ctx, const char* op, size_t payload_bytes, int repeats, int warmup,
                              defog_bench_record* out, double* samples, size_t samples_cap) {
  return guard([&] {
    need(ctx, "context");
    need(op, "op");
    need(out, "record");
    const auto r = microbench(*ctx->ctx, bench_op_from_name(op), payload_bytes, repeats, warmup);
    *out = {r.n, r.iters, r.payload_bytes, r.wall_time, r.mean, r.lo, r.hi, r.messages, r.bytes, r.control_messages};
    if (samples) std::copy_n(r.samples.begin(), std::min(samples_cap, r.samples.size()), samples);
  });
}

defog_status defog_config_parse(const char* text, defog_config** out) {
  return guard([&] {
    need(text, "text");
    need(out, "output");
    *out = nullptr;
    *out = new defog_config{Config::parse(text)};
  });
}

defog_status defog_config_load(const char* path, defog_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "output");
    *out = nullptr;
    *out = new defog_config{Config::load(path)};
  });
}

void defog_config_destroy(defog_config* config) { delete config; }

defog_status defog_config_set(defog_config* config, const char* section, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(section, "section");
    need(key, "key");
    need(value, "value");
    config->config.set(section, key, value);
  });
}

defog_status defog_config_get(const defog_config* config, const char* section, const char* key, const char* fallback,
                              char* buf, size_t cap) {
  return guard([&] {
    need(config, "config");
    need(section, "section");
    need(key, "key");
    need(buf, "buffer");
    if (cap == 0) throw InvalidArgument("buffer capacity must be positive");
    const std::string v = config->config.get(section, key, fallback ? fallback : "");
    const std::size_t len = std::min(cap - 1, v.size());
    std::memcpy(buf, v.data(), len);
    buf[len] = '\0';
  });
}

defog_status defog_config_sim_options(const defog_config* config, defog_sim_options* out) {
  return guard([&] {
    need(config, "config");
    need(out, "output");
    from_sim(sim_config_from(config->config), out);
  });
}

defog_status defog_run_experiment(defog_ctx* ctx, const defog_config* config, defog_summary** out) {
  return guard([&] {
    need(ctx, "context");
    need(config, "config");
    need(out, "output");
    *out = nullptr;
    *out = new defog_summary{run_experiment(*ctx->ctx, config->config)};
  });
}

void defog_summary_destroy(defog_summary* summary) { delete summary; }
const char* defog_summary_algorithm(const defog_summary* s) { return s ? s->summary.algorithm.c_str() : ""; }
const char* defog_summary_csv(const defog_summary* s) { return s ? s->summary.csv.c_str() : ""; }
const char* defog_summary_trajectory_csv(const defog_summary* s) { return s ? s->summary.trajectory_csv.c_str() : ""; }
int defog_summary_iters(const defog_summary* s) { return s ? s->summary.iters : 0; }
double defog_summary_final_residual(const defog_summary* s) { return s ? s->summary.final_residual : 0.0; }
double defog_summary_final_consensus(const defog_summary* s) { return s ? s->summary.final_consensus : 0.0; }
double defog_summary_wall_ms(const defog_summary* s) { return s ? s->summary.wall_ms : 0.0; }
uint64_t defog_summary_messages(const defog_summary* s) { return s ? s->summary.messages : 0; }
uint64_t defog_summary_bytes(const defog_summary* s) { return s ? s->summary.bytes : 0; }

const char* defog_experiment_algorithms(void) {
  static const std::string joined = [] {
    std::string out;
    for (const auto& n : experiment_algorithms()) out += (out.empty() ? "" : ",") + n;
    return out;
  }();
  return joined.c_str();
}

}  // extern "C"
