// Exercises the shared library through its C header only.
#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "defog/defog.h"

namespace {

template <class F>
defog_status run_sim(int n, F&& body, const defog_sim_options* opts = nullptr) {
  auto trampoline = [](defog_ctx* ctx, void* user) -> defog_status { return (*static_cast<F*>(user))(ctx); };
  return defog_run_sim(n, opts, trampoline, &body);
}

#define CHECK_OK(expr)                    \
  do {                                    \
    defog_status st_ = (expr);            \
    if (st_ != DEFOG_OK) return st_;      \
  } while (0)

}  // namespace

TEST(CApi, AllreduceIsTheMean) {
  std::vector<std::vector<double>> got(5);
  ASSERT_EQ(run_sim(5, [&](defog_ctx* ctx) {
              const int r = defog_rank(ctx);
              double in[2] = {static_cast<double>(r), r * r + 1.0};
              double out[2];
              CHECK_OK(defog_allreduce(ctx, in, out, 2, "x"));
              got[r] = {out[0], out[1]};
              return DEFOG_OK;
            }),
            DEFOG_OK)
      << defog_last_error();
  for (const auto& g : got) {
    EXPECT_DOUBLE_EQ(g[0], 2.0);
    EXPECT_DOUBLE_EQ(g[1], (1 + 2 + 5 + 10 + 17) / 5.0);
  }
}

TEST(CApi, NeighborAllreduceMatchesTheWeightMatrix) {
  const int n = 8;
  defog_topology* topo = nullptr;
  ASSERT_EQ(defog_topology_create("exp2", n, &topo), DEFOG_OK);
  ASSERT_EQ(defog_topology_size(topo), n);
  std::vector<double> w(n * n);
  ASSERT_EQ(defog_topology_weights(topo, w.data()), DEFOG_OK);
  std::vector<double> got(n);
  ASSERT_EQ(run_sim(n, [&](defog_ctx* ctx) {
              CHECK_OK(defog_set_topology(ctx, topo));
              const double x = std::sin(defog_rank(ctx) + 1.0);
              double y = 0;
              CHECK_OK(defog_neighbor_allreduce(ctx, &x, &y, 1, "x", nullptr));
              got[defog_rank(ctx)] = y;
              return DEFOG_OK;
            }),
            DEFOG_OK)
      << defog_last_error();
  for (int i = 0; i < n; ++i) {
    double expect = 0;
    for (int j = 0; j < n; ++j) expect += w[i * n + j] * std::sin(j + 1.0);
    EXPECT_NEAR(got[i], expect, 1e-12);
  }
  defog_topology_destroy(topo);
}

TEST(CApi, OnePeerSchemeAndNonblockingWait) {
  const int n = 4;
  std::vector<double> blocking(n), nonblocking(n);
  ASSERT_EQ(run_sim(n, [&](defog_ctx* ctx) {
              const int r = defog_rank(ctx);
              defog_scheme* s = nullptr;
              CHECK_OK(defog_scheme_one_peer_exponential(n, r, 1, &s));
              const double x = r * 10.0;
              CHECK_OK(defog_neighbor_allreduce(ctx, &x, &blocking[r], 1, "b", s));
              defog_handle h = 0;
              CHECK_OK(defog_neighbor_allreduce_nonblocking(ctx, &x, 1, "nb", s, &h));
              CHECK_OK(defog_wait(ctx, h, &nonblocking[r], 1));
              defog_scheme_destroy(s);
              double dummy;
              if (defog_wait(ctx, h, &dummy, 1) != DEFOG_E_USAGE) return DEFOG_E_INTERNAL;
              return DEFOG_OK;
            }),
            DEFOG_OK)
      << defog_last_error();
  for (int r = 0; r < n; ++r) {
    EXPECT_EQ(blocking[r], nonblocking[r]);
    // self 1/2; rank - 2 pushes with weight 1/2 and is received with weight 1
    EXPECT_DOUBLE_EQ(blocking[r], 0.5 * r * 10.0 + 0.5 * ((r + n - 2) % n) * 10.0);
  }
}

TEST(CApi, HandBuiltSchemeAndAllgather) {
  std::vector<double> gathered(3 * 3);
  ASSERT_EQ(run_sim(3, [&](defog_ctx* ctx) {
              const int r = defog_rank(ctx);
              defog_scheme* s = nullptr;
              CHECK_OK(defog_scheme_create(&s));
              CHECK_OK(defog_scheme_set_self(s, 0.5));
              CHECK_OK(defog_scheme_add_src(s, (r + 2) % 3, 0.5));
              CHECK_OK(defog_scheme_add_dst(s, (r + 1) % 3, 1.0));
              const double x = r + 1.0;
              double y = 0;
              CHECK_OK(defog_neighbor_allreduce(ctx, &x, &y, 1, "pp", s));
              defog_scheme_destroy(s);
              double in[3] = {y, x, static_cast<double>(r)};
              std::vector<double> all(9);
              CHECK_OK(defog_allgather(ctx, in, all.data(), 3, "g"));
              if (r == 0) gathered = all;
              return DEFOG_OK;
            }),
            DEFOG_OK)
      << defog_last_error();
  EXPECT_DOUBLE_EQ(gathered[0], 0.5 * 1 + 0.5 * 3);
  EXPECT_DOUBLE_EQ(gathered[3], 0.5 * 2 + 0.5 * 1);
  EXPECT_DOUBLE_EQ(gathered[6], 0.5 * 3 + 0.5 * 2);
  EXPECT_DOUBLE_EQ(gathered[7], 3.0);
  EXPECT_DOUBLE_EQ(gathered[8], 2.0);
}

TEST(CApi, WindowsConserveMass) {
  std::vector<double> after(4);
  ASSERT_EQ(run_sim(4, [&](defog_ctx* ctx) {
              const int r = defog_rank(ctx);
              defog_topology* t = nullptr;
              CHECK_OK(defog_topology_create("ring", 4, &t));
              CHECK_OK(defog_set_topology(ctx, t));
              defog_topology_destroy(t);
              const double x = r + 1.0;
              CHECK_OK(defog_win_create(ctx, &x, 1, "w", 1));
              defog_scheme* s = nullptr;
              CHECK_OK(defog_scheme_create(&s));
              CHECK_OK(defog_scheme_set_self(s, 0.5));
              CHECK_OK(defog_scheme_add_dst(s, (r + 1) % 4, 0.5));
              CHECK_OK(defog_win_accumulate(ctx, &x, 1, "w", s, 1));
              defog_scheme_destroy(s);
              CHECK_OK(defog_barrier(ctx));
              CHECK_OK(defog_win_update_then_collect(ctx, "w", &after[r], 1));
              CHECK_OK(defog_win_free(ctx, "w"));
              return DEFOG_OK;
            }),
            DEFOG_OK)
      << defog_last_error();
  EXPECT_DOUBLE_EQ(after[0] + after[1] + after[2] + after[3], 10.0);
  EXPECT_DOUBLE_EQ(after[1], 0.5 * 2 + 0.5 * 1);
}

TEST(CApi, CountersSeePayloadTraffic) {
  defog_counters c{};
  ASSERT_EQ(run_sim(3, [&](defog_ctx* ctx) {
              const double x = 1;
              double y;
              CHECK_OK(defog_allreduce(ctx, &x, &y, 1, "x"));
              if (defog_rank(ctx) == 1) CHECK_OK(defog_get_counters(ctx, &c));
              return DEFOG_OK;
            }),
            DEFOG_OK);
  EXPECT_EQ(c.data_messages, 2u);
  EXPECT_EQ(c.data_bytes, 16u);
  EXPECT_GE(c.messages_sent, c.data_messages);
}

TEST(CApi, ErrorCodesAndMessages) {
  defog_topology* t = nullptr;
  EXPECT_EQ(defog_topology_create("torus", 4, &t), DEFOG_E_INVALID_ARGUMENT);
  EXPECT_EQ(t, nullptr);
  EXPECT_NE(std::string(defog_last_error()).find("torus"), std::string::npos);
  EXPECT_EQ(defog_topology_create("ring", 4, nullptr), DEFOG_E_INVALID_ARGUMENT);
  defog_config* cfg = nullptr;
  EXPECT_EQ(defog_config_parse("[a]\nnot a pair\n", &cfg), DEFOG_E_CONFIG);
  EXPECT_NE(std::string(defog_last_error()).find("line 2"), std::string::npos);
  double s = 0;
  EXPECT_EQ(defog_comm_cost("partial_avg", 16, 1e6, 1e9, 1e-3, &s), DEFOG_OK);
  EXPECT_STREQ(defog_last_error(), "");
  EXPECT_NEAR(s, 0.002, 1e-15);
  EXPECT_EQ(defog_comm_cost("ring_allreduce", 16, 1e6, 1e9, 1e-3, &s), DEFOG_OK);
  EXPECT_NEAR(s, 0.034, 1e-15);
  EXPECT_EQ(defog_comm_cost("ring_allreduce", 0, 1e6, 1e9, 1e-3, &s), DEFOG_E_INVALID_ARGUMENT);
  EXPECT_STREQ(defog_status_name(DEFOG_E_TOPOLOGY), "topology error");
}

TEST(CApi, RankFailureStopsTheRun) {
  const defog_status st = run_sim(3, [&](defog_ctx* ctx) {
    if (defog_rank(ctx) == 1) return defog_compute(ctx, -1.0);
    return defog_barrier(ctx);
  });
  EXPECT_EQ(st, DEFOG_E_INVALID_ARGUMENT);
  EXPECT_NE(std::string(defog_last_error()).find("rank 1"), std::string::npos) << defog_last_error();
}

TEST(CApi, ShapeMismatchAcrossRanks) {
  const defog_status st = run_sim(3, [&](defog_ctx* ctx) {
    const double x[2] = {1, 2};
    double y[2];
    const std::size_t count = defog_rank(ctx) == 1 ? 2 : 1;
    return defog_allreduce(ctx, x, y, count, "x");
  });
  EXPECT_EQ(st, DEFOG_E_SHAPE);
}

TEST(CApi, OutputLengthIsChecked) {
  const defog_status st = run_sim(2, [&](defog_ctx* ctx) {
    const double x = 1;
    double y[2];
    CHECK_OK(defog_win_create(ctx, &x, 1, "w", 0));
    return defog_win_update(ctx, "w", y, 2);
  });
  EXPECT_EQ(st, DEFOG_E_DIMENSION);
}

TEST(CApi, MismatchedTopologyIsATopologyError) {
  const defog_status st = run_sim(4, [&](defog_ctx* ctx) {
    defog_topology* t = nullptr;
    CHECK_OK(defog_topology_create("ring", 5, &t));
    const defog_status s = defog_set_topology(ctx, t);
    defog_topology_destroy(t);
    return s;
  });
  EXPECT_EQ(st, DEFOG_E_TOPOLOGY);
}

TEST(CApi, MicrobenchSamples) {
  defog_bench_record rec{};
  std::vector<double> samples(16, -1.0);
  ASSERT_EQ(run_sim(4, [&](defog_ctx* ctx) {
              defog_bench_record local;
              CHECK_OK(defog_microbench(ctx, "dynamic_neighbor_allreduce", 4096, 10, 1, &local, samples.data(),
                                        samples.size()));
              if (defog_rank(ctx) == 0) rec = local;
              return DEFOG_OK;
            }),
            DEFOG_OK)
      << defog_last_error();
  EXPECT_EQ(rec.iters, 10);
  EXPECT_EQ(rec.messages, 10u);
  EXPECT_EQ(rec.bytes, 10u * 4096u);
  EXPECT_GT(samples[9], 0.0);
  EXPECT_EQ(samples[10], -1.0);
}

TEST(CApi, ExperimentFromConfigText) {
  const char* text =
      "[experiment]\nalgorithm = exact_diffusion\niters = 2000\nlog_every = 100\ntopology = ring\n"
      "[problem]\nrows = 20\ndim = 4\n[sim]\nlatency = 0.001\n";
  defog_config* cfg = nullptr;
  ASSERT_EQ(defog_config_parse(text, &cfg), DEFOG_OK);
  defog_sim_options opts;
  ASSERT_EQ(defog_config_sim_options(cfg, &opts), DEFOG_OK);
  EXPECT_DOUBLE_EQ(opts.latency, 0.001);
  char buf[8];
  ASSERT_EQ(defog_config_get(cfg, "experiment", "algorithm", "", buf, sizeof buf), DEFOG_OK);
  EXPECT_STREQ(buf, "exact_d");
  std::string csv[2];
  double residual = 1;
  for (auto& out : csv) {
    ASSERT_EQ(run_sim(
                  4,
                  [&](defog_ctx* ctx) {
                    defog_summary* s = nullptr;
                    CHECK_OK(defog_run_experiment(ctx, cfg, &s));
                    if (defog_rank(ctx) == 0) {
                      out = defog_summary_csv(s);
                      residual = defog_summary_final_residual(s);
                    }
                    defog_summary_destroy(s);
                    return DEFOG_OK;
                  },
                  &opts),
              DEFOG_OK)
        << defog_last_error();
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_LT(residual, 1e-8);
  EXPECT_NE(std::string(defog_experiment_algorithms()).find("gradient_tracking"), std::string::npos);
  defog_config_destroy(cfg);
}
