/* C interface to the defog runtime. Every function returns a defog_status;
 * on failure defog_last_error() holds a message for the calling thread. */
#ifndef DEFOG_DEFOG_H
#define DEFOG_DEFOG_H

#include <stddef.h>
#include <stdint.h>

#if defined(__GNUC__)
#define DEFOG_API __attribute__((visibility("default")))
#else
#define DEFOG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum defog_status {
  DEFOG_OK = 0,
  DEFOG_E_INVALID_ARGUMENT = 1,
  DEFOG_E_DIMENSION = 2,
  DEFOG_E_SHAPE = 3,
  DEFOG_E_TOPOLOGY = 4,
  DEFOG_E_CANCELLED = 5,
  DEFOG_E_TRANSPORT = 6,
  DEFOG_E_DEGENERATE = 7,
  DEFOG_E_CONFIG = 8,
  DEFOG_E_USAGE = 9,
  DEFOG_E_INTERNAL = 10
} defog_status;

typedef struct defog_ctx defog_ctx;           /* one rank; borrowed inside callbacks */
typedef struct defog_topology defog_topology; /* owned by the caller */
typedef struct defog_scheme defog_scheme;     /* per-round weight scheme */
typedef struct defog_config defog_config;
typedef struct defog_summary defog_summary;
typedef uint64_t defog_handle;                /* nonblocking collective ticket */

DEFOG_API const char* defog_last_error(void);
DEFOG_API const char* defog_status_name(defog_status status);
DEFOG_API const char* defog_version(void);

/* ---- launching */

typedef struct defog_sim_options {
  double latency;         /* seconds per message */
  double control_latency; /* negative: same as latency */
  double bandwidth;       /* bytes per second, 0 = unlimited */
  double jitter;          /* extra uniform delay per message */
  uint64_t seed;
  int local_size;         /* ranks per machine, 0 = one machine */
  size_t fusion_bytes;
  int topology_check;
} defog_sim_options;

DEFOG_API void defog_sim_options_init(defog_sim_options* options);

/* Called once per rank. A non-OK return fails the run with that status. */
typedef defog_status (*defog_rank_fn)(defog_ctx* ctx, void* user);

/* In-process simulated world with `size` ranks. options may be NULL. */
DEFOG_API defog_status defog_run_sim(int size, const defog_sim_options* options, defog_rank_fn fn, void* user);
/* Backend and rank from the DEFOG_* environment (as set by dfrun). */
DEFOG_API defog_status defog_run_env(defog_rank_fn fn, void* user);

/* ---- context */

DEFOG_API int defog_rank(const defog_ctx* ctx);
DEFOG_API int defog_size(const defog_ctx* ctx);
DEFOG_API int defog_local_size(const defog_ctx* ctx);
DEFOG_API const char* defog_backend(const defog_ctx* ctx);
DEFOG_API double defog_now(const defog_ctx* ctx);
DEFOG_API defog_status defog_compute(defog_ctx* ctx, double seconds);
DEFOG_API defog_status defog_set_topology(defog_ctx* ctx, const defog_topology* topology);

/* Vectors of `count` doubles. out may alias in. */
DEFOG_API defog_status defog_allreduce(defog_ctx* ctx, const double* in, double* out, size_t count, const char* name);
/* scheme NULL: static weights of the current topology. */
DEFOG_API defog_status defog_neighbor_allreduce(defog_ctx* ctx, const double* in, double* out, size_t count,
                                                const char* name, const defog_scheme* scheme);
DEFOG_API defog_status defog_hierarchical_neighbor_allreduce(defog_ctx* ctx, const double* in, double* out,
                                                             size_t count, const char* name);
/* out holds size * count values in rank order. */
DEFOG_API defog_status defog_allgather(defog_ctx* ctx, const double* in, double* out, size_t count, const char* name);
DEFOG_API defog_status defog_barrier(defog_ctx* ctx);

DEFOG_API defog_status defog_allreduce_nonblocking(defog_ctx* ctx, const double* in, size_t count, const char* name,
                                                   defog_handle* handle);
DEFOG_API defog_status defog_neighbor_allreduce_nonblocking(defog_ctx* ctx, const double* in, size_t count,
                                                            const char* name, const defog_scheme* scheme,
                                                            defog_handle* handle);
DEFOG_API defog_status defog_wait(defog_ctx* ctx, defog_handle handle, double* out, size_t count);
DEFOG_API defog_status defog_poll(defog_ctx* ctx, defog_handle handle, int* done);

/* Windows. For put/accumulate the scheme's self and dst weights apply. */
DEFOG_API defog_status defog_win_create(defog_ctx* ctx, const double* x, size_t count, const char* name,
                                        int zero_init);
DEFOG_API defog_status defog_win_free(defog_ctx* ctx, const char* name);
DEFOG_API defog_status defog_win_put(defog_ctx* ctx, const double* x, size_t count, const char* name,
                                     const defog_scheme* scheme);
DEFOG_API defog_status defog_win_accumulate(defog_ctx* ctx, const double* x, size_t count, const char* name,
                                            const defog_scheme* scheme, int require_mutex);
DEFOG_API defog_status defog_win_update(defog_ctx* ctx, const char* name, double* out, size_t count);
DEFOG_API defog_status defog_win_update_then_collect(defog_ctx* ctx, const char* name, double* out, size_t count);

typedef struct defog_counters {
  uint64_t messages_sent;
  uint64_t data_messages;
  uint64_t data_bytes;
  uint64_t tensor_messages;
  uint64_t tensor_bytes;
} defog_counters;

DEFOG_API defog_status defog_get_counters(defog_ctx* ctx, defog_counters* out);

/* ---- topologies and schemes */

/* name: ring, star, mesh2d, full, exp2 */
DEFOG_API defog_status defog_topology_create(const char* name, int n, defog_topology** out);
/* Row-major n x n mixing matrix; edges are its nonzero off-diagonal entries. */
DEFOG_API defog_status defog_topology_from_weights(const double* weights, int n, defog_topology** out);
DEFOG_API void defog_topology_destroy(defog_topology* topology);
DEFOG_API int defog_topology_size(const defog_topology* topology);
DEFOG_API defog_status defog_topology_weights(const defog_topology* topology, double* out);

DEFOG_API defog_status defog_scheme_create(defog_scheme** out);
DEFOG_API defog_status defog_scheme_one_peer_exponential(int n, int rank, int64_t round, defog_scheme** out);
DEFOG_API void defog_scheme_destroy(defog_scheme* scheme);
DEFOG_API defog_status defog_scheme_set_self(defog_scheme* scheme, double weight);
DEFOG_API defog_status defog_scheme_add_src(defog_scheme* scheme, int rank, double weight);
DEFOG_API defog_status defog_scheme_add_dst(defog_scheme* scheme, int rank, double weight);

/* ---- cost model and microbenchmarks */

/* scheme: ps, ring_allreduce, byteps, partial_avg */
DEFOG_API defog_status defog_comm_cost(const char* scheme, double n, double message_bytes, double bandwidth,
                                       double latency, double* seconds);

typedef struct defog_bench_record {
  int n;
  int iters;
  size_t payload_bytes;
  double wall_time;
  double mean;
  double lo; /* 5th percentile */
  double hi; /* 95th percentile */
  uint64_t messages;
  uint64_t bytes;
  uint64_t control_messages;
} defog_bench_record;

/* op: allreduce, neighbor_allreduce, dynamic_neighbor_allreduce. samples
 * (may be NULL) receives min(repeats, samples_cap) per-repetition times. */
DEFOG_API defog_status defog_microbench(defog_ctx* ctx, const char* op, size_t payload_bytes, int repeats,
                                        int warmup, defog_bench_record* out, double* samples, size_t samples_cap);

/* ---- configs and experiments */

DEFOG_API defog_status defog_config_parse(const char* text, defog_config** out);
DEFOG_API defog_status defog_config_load(const char* path, defog_config** out);
DEFOG_API void defog_config_destroy(defog_config* config);
DEFOG_API defog_status defog_config_set(defog_config* config, const char* section, const char* key,
                                        const char* value);
/* Copies the value (or fallback) into buf, truncating to cap - 1 bytes. */
DEFOG_API defog_status defog_config_get(const defog_config* config, const char* section, const char* key,
                                        const char* fallback, char* buf, size_t cap);
DEFOG_API defog_status defog_config_sim_options(const defog_config* config, defog_sim_options* out);

/* Collective over all ranks; rank 0's summary covers the whole run. */
DEFOG_API defog_status defog_run_experiment(defog_ctx* ctx, const defog_config* config, defog_summary** out);
DEFOG_API void defog_summary_destroy(defog_summary* summary);
DEFOG_API const char* defog_summary_algorithm(const defog_summary* summary);
DEFOG_API const char* defog_summary_csv(const defog_summary* summary);
DEFOG_API const char* defog_summary_trajectory_csv(const defog_summary* summary);
DEFOG_API int defog_summary_iters(const defog_summary* summary);
DEFOG_API double defog_summary_final_residual(const defog_summary* summary);
DEFOG_API double defog_summary_final_consensus(const defog_summary* summary);
DEFOG_API double defog_summary_wall_ms(const defog_summary* summary);
DEFOG_API uint64_t defog_summary_messages(const defog_summary* summary);
DEFOG_API uint64_t defog_summary_bytes(const defog_summary* summary);

/* Comma-separated list of experiment algorithm names. */
DEFOG_API const char* defog_experiment_algorithms(void);

#ifdef __cplusplus
}
#endif

#endif /* DEFOG_DEFOG_H */
