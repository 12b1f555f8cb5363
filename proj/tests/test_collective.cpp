#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "defog/context.hpp"
#include "defog/error.hpp"
#include "defog/sim.hpp"
#include "defog/topology.hpp"
#include "support.hpp"

using namespace defog;
using namespace defog::test;

namespace {

const char* kStatic[] = {"ring", "star", "mesh2d", "full", "exp2"};

std::vector<std::vector<double>> run_static(const Topology& topo, const Rows& x, SimConfig cfg = {}) {
  return per_rank<std::vector<double>>(topo.size(), cfg, [&](Context& ctx) {
    EXPECT_TRUE(ctx.set_topology(topo));
    return ctx.neighbor_allreduce(Tensor::vector(x[ctx.rank()]), "x").values();
  });
}

std::vector<std::vector<double>> run_schemes(const std::vector<WeightScheme>& schemes, const Rows& x,
                                             SimConfig cfg = {}) {
  return per_rank<std::vector<double>>(static_cast<int>(schemes.size()), cfg, [&](Context& ctx) {
    return ctx.neighbor_allreduce(Tensor::vector(x[ctx.rank()]), "x", schemes[ctx.rank()]).values();
  });
}

}  // namespace

TEST(SetTopology, RingRowAtRankZero) {
  SimWorld w(4);
  w.run([](Context& ctx) {
    ASSERT_TRUE(ctx.set_topology(ring_graph(4)));
    if (ctx.rank() != 0) return;
    auto s = ctx.static_scheme();
    EXPECT_NEAR(*s.self_weight, 1.0 / 3, 1e-15);
    ASSERT_EQ(s.src_weights->size(), 2u);
    EXPECT_NEAR(s.src_weights->at(1), 1.0 / 3, 1e-15);
    EXPECT_NEAR(s.src_weights->at(3), 1.0 / 3, 1e-15);
  });
}

TEST(SetTopology, WrongSizeRejectedWithDiagnostic) {
  SimWorld w(4);
  w.run([](Context& ctx) {
    EXPECT_FALSE(ctx.set_topology(ring_graph(5)));
    EXPECT_NE(ctx.last_diagnostic().find("5"), std::string::npos);
    EXPECT_EQ(ctx.topology().size(), 4);
  });
}

TEST(SetTopology, DefaultIsUniformFullGraph) {
  auto out = per_rank<double>(4, {}, [](Context& ctx) {
    return ctx.neighbor_allreduce(Tensor::scalar(ctx.rank() + 1.0), "x")[0];
  });
  for (double v : out) EXPECT_NEAR(v, 2.5, 1e-15);
}

TEST(Allreduce, MeanOfScalars) {
  auto out = per_rank<double>(4, {}, [](Context& ctx) {
    return ctx.allreduce(Tensor::scalar(ctx.rank() + 1.0), "s")[0];
  });
  for (double v : out) EXPECT_EQ(v, 2.5);
}

TEST(Allreduce, MatchesUniformOracleAndIsIdenticalOnAllRanks) {
  std::mt19937_64 rng(5);
  for (int n : {2, 3, 5, 8}) {
    auto x = random_rows(rng, n, 7);
    auto expect = naive_mix(std::vector<std::vector<double>>(n, std::vector<double>(n, 1.0 / n)), x);
    auto out = per_rank<std::vector<double>>(n, {}, [&](Context& ctx) {
      return ctx.allreduce(Tensor::vector(x[ctx.rank()]), "a").values();
    });
    for (int i = 0; i < n; ++i) {
      EXPECT_LT(max_abs_diff(out[i], expect[i]), 1e-10);
      EXPECT_EQ(out[i], out[0]);
    }
  }
}

TEST(Allreduce, ShapeMismatchNamesRanks) {
  SimWorld w(3);
  try {
    w.run([](Context& ctx) {
      ctx.allreduce(Tensor(Shape{ctx.rank() == 2 ? 3 : 2}, 1.0), "bad");
    });
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("rank(s) 2"), std::string::npos) << e.what();
  }
}

TEST(Allreduce, PreservesShape) {
  SimWorld w(2);
  w.run([](Context& ctx) {
    auto y = ctx.allreduce(Tensor(Shape{2, 3}, ctx.rank()), "m");
    EXPECT_EQ(y.shape(), (Shape{2, 3}));
    EXPECT_EQ(y[5], 0.5);
  });
}

TEST(Allgather, CollectsInRankOrder) {
  auto out = per_rank<std::vector<Tensor>>(4, {}, [](Context& ctx) {
    return ctx.allgather(Tensor::scalar(10.0 * ctx.rank()), "g");
  });
  for (const auto& g : out) {
    ASSERT_EQ(g.size(), 4u);
    for (int r = 0; r < 4; ++r) EXPECT_EQ(g[r][0], 10.0 * r);
  }
}

TEST(NeighborAllreduce, StaticTopologiesMatchOracle) {
  std::mt19937_64 rng(21);
  for (const char* name : kStatic) {
    for (int n = 2; n <= 9; ++n) {
      auto topo = make_static_topology(name, n);
      auto x = random_rows(rng, n, 3);
      auto expect = naive_mix(to_rows(topo.weights()), x);
      auto out = run_static(topo, x);
      for (int i = 0; i < n; ++i) EXPECT_LT(max_abs_diff(out[i], expect[i]), 1e-10) << name << " n=" << n;
    }
  }
}

TEST(NeighborAllreduce, DoublyStochasticPreservesMean) {
  std::mt19937_64 rng(22);
  for (const char* name : kStatic) {
    auto topo = make_static_topology(name, 6);
    auto x = random_rows(rng, 6, 4);
    auto out = run_static(topo, x);
    for (int k = 0; k < 4; ++k) {
      double before = 0, after = 0;
      for (int i = 0; i < 6; ++i) {
        before += x[i][k];
        after += out[i][k];
      }
      EXPECT_NEAR(before / 6, after / 6, 1e-10) << name;
    }
  }
}

TEST(NeighborAllreduce, FullGraphEqualsAllreduce) {
  auto out = per_rank<double>(4, {}, [](Context& ctx) {
    ctx.set_topology(full_graph(4));
    return ctx.neighbor_allreduce(Tensor::scalar(ctx.rank() + 1.0), "x")[0];
  });
  for (double v : out) EXPECT_NEAR(v, 2.5, 1e-15);
}

TEST(NeighborAllreduce, IsolatedNodeUnchanged) {
  WeightScheme iso;
  iso.self_weight = 1.0;
  iso.src_weights = std::map<int, double>{};
  auto out = per_rank<double>(3, {}, [&](Context& ctx) {
    return ctx.neighbor_allreduce(Tensor::scalar(ctx.rank() + 0.5), "iso", iso)[0];
  });
  for (int r = 0; r < 3; ++r) EXPECT_EQ(out[r], r + 0.5);
}

TEST(NeighborAllreduce, DynamicStylesMatchAssembledOracle) {
  std::mt19937_64 rng(23);
  for (auto style : {SchemeStyle::kPush, SchemeStyle::kPull, SchemeStyle::kPushPull}) {
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 2 + trial % 6;
      auto rs = random_schemes(rng, n, style);
      auto x = random_rows(rng, n, 2);
      auto expect = naive_mix(rs.w, x);
      auto out = run_schemes(rs.schemes, x);
      for (int i = 0; i < n; ++i) EXPECT_LT(max_abs_diff(out[i], expect[i]), 1e-10);
    }
  }
}

TEST(NeighborAllreduce, OnePeerMovesOneTensorPerRank) {
  const int n = 8;
  SimWorld w(n);
  w.run([](Context& ctx) {
    auto before = ctx.counters();
    ctx.neighbor_allreduce(Tensor(Shape{16}, 1.0), "x", one_peer_exponential_scheme(8, ctx.rank(), 2));
    auto after = ctx.counters();
    EXPECT_EQ(after.data_messages - before.data_messages, 1u);
    EXPECT_EQ(after.data_bytes - before.data_bytes, 16u * 8);
  });
}

TEST(NeighborAllreduce, StaticExp2SendsLogNMessagesPerRank) {
  SimWorld w(8);
  w.run([](Context& ctx) {
    ctx.set_topology(exponential_two_graph(8));
    ctx.neighbor_allreduce(Tensor::scalar(1), "x");
    EXPECT_EQ(ctx.counters().data_messages, 3u);
  });
}

TEST(NeighborAllreduce, NonFiniteInputRejected) {
  SimWorld w(1);
  EXPECT_THROW(w.run([](Context& ctx) { ctx.neighbor_allreduce(Tensor::scalar(NAN), "x"); }),
               InvalidArgument);
}

TEST(NeighborAllreduce, InvalidSchemeConfigurationRejected) {
  WeightScheme only_src;
  only_src.src_weights = std::map<int, double>{{1, 0.5}};
  SimWorld w(2);
  EXPECT_THROW(w.run([&](Context& ctx) { ctx.neighbor_allreduce(Tensor::scalar(1), "x", only_src); }),
               UsageError);
}

TEST(NeighborAllreduce, AdversarialDelaysStillComplete) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> lat(1e-6, 5e-3);
  for (const char* name : kStatic) {
    for (int n : {3, 7, 12, 16}) {
      SimConfig cfg;
      cfg.jitter = 1e-3;
      cfg.seed = rng();
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          if (a != b) cfg.edge_latency[{a, b}] = lat(rng);
      auto topo = make_static_topology(name, n);
      auto x = random_rows(rng, n, 2);
      auto expect = naive_mix(to_rows(topo.weights()), x);
      auto out = per_rank<std::vector<double>>(n, cfg, [&](Context& ctx) {
        ctx.set_topology(topo);
        std::vector<double> last;
        for (int k = 0; k < 3; ++k) last = ctx.neighbor_allreduce(Tensor::vector(x[ctx.rank()]), "x").values();
        return last;
      });
      for (int i = 0; i < n; ++i) EXPECT_LT(max_abs_diff(out[i], expect[i]), 1e-10) << name << n;
    }
  }
}

TEST(Nonblocking, WaitEqualsBlockingBitwise) {
  std::mt19937_64 rng(31);
  auto x = random_rows(rng, 5, 4);
  auto topo = exponential_two_graph(5);
  auto blocking = run_static(topo, x);
  auto nb = per_rank<std::vector<double>>(5, {}, [&](Context& ctx) {
    ctx.set_topology(topo);
    auto h = ctx.neighbor_allreduce_nonblocking(Tensor::vector(x[ctx.rank()]), "x");
    return ctx.wait(h).values();
  });
  EXPECT_EQ(nb, blocking);
}

TEST(Nonblocking, InputIsSnapshotted) {
  auto out = per_rank<double>(2, {}, [](Context& ctx) {
    Tensor x = Tensor::scalar(ctx.rank() + 1.0);
    auto h = ctx.allreduce_nonblocking(x, "s");
    x[0] = 100.0;
    return ctx.wait(h)[0];
  });
  EXPECT_EQ(out[0], 1.5);
  EXPECT_EQ(out[1], 1.5);
}

TEST(Nonblocking, IndependentHandlesResolveInAnyOrder) {
  auto out = per_rank<std::vector<double>>(3, {}, [](Context& ctx) {
    auto a = ctx.allreduce_nonblocking(Tensor::scalar(ctx.rank()), "a");
    auto b = ctx.neighbor_allreduce_nonblocking(Tensor::scalar(10.0 * ctx.rank()), "b");
    const double vb = ctx.wait(b)[0];
    const double va = ctx.wait(a)[0];
    return std::vector<double>{va, vb};
  });
  for (const auto& v : out) {
    EXPECT_NEAR(v[0], 1.0, 1e-15);
    EXPECT_NEAR(v[1], 10.0, 1e-14);
  }
}

TEST(Nonblocking, HandleIsSingleUse) {
  SimWorld w(2);
  w.run([](Context& ctx) {
    auto h = ctx.allreduce_nonblocking(Tensor::scalar(1), "s");
    ctx.wait(h);
    EXPECT_THROW(ctx.wait(h), UsageError);
    EXPECT_THROW(ctx.wait(CommHandle{999, "nope"}), UsageError);
  });
}

TEST(Nonblocking, PollEventuallyTrue) {
  SimWorld w(2);
  w.run([](Context& ctx) {
    auto h = ctx.allreduce_nonblocking(Tensor::scalar(1), "s");
    EXPECT_FALSE(ctx.poll(h));
    ctx.compute(1.0);
    EXPECT_TRUE(ctx.poll(h));
    ctx.wait(h);
  });
}

TEST(Hierarchical, TwoMachinesOfTwo) {
  SimConfig cfg;
  cfg.local_size = 2;
  auto out = per_rank<double>(4, cfg, [](Context& ctx) {
    ctx.set_machine_topology(full_graph(2));
    const double x[] = {1, 3, 5, 7};
    return ctx.hierarchical_neighbor_allreduce(Tensor::scalar(x[ctx.rank()]), "h")[0];
  });
  for (double v : out) EXPECT_NEAR(v, 4.0, 1e-15);
}

TEST(Hierarchical, OneMachineIsLocalAverage) {
  SimConfig cfg;
  cfg.local_size = 3;
  auto out = per_rank<double>(3, cfg, [](Context& ctx) {
    return ctx.hierarchical_neighbor_allreduce(Tensor::scalar(ctx.rank()), "h")[0];
  });
  for (double v : out) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Hierarchical, MatchesKroneckerOracle) {
  std::mt19937_64 rng(41);
  for (auto [machines, local] : {std::pair{4, 2}, std::pair{3, 3}, std::pair{5, 1}}) {
    const int n = machines * local;
    SimConfig cfg;
    cfg.local_size = local;
    auto mt = machines >= 2 ? ring_graph(machines) : Topology();
    auto mw = to_rows(mt.weights());
    std::vector<std::vector<double>> w(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) w[i][j] = mw[i / local][j / local] / local;
    auto x = random_rows(rng, n, 3);
    auto expect = naive_mix(w, x);
    auto out = per_rank<std::vector<double>>(n, cfg, [&](Context& ctx) {
      EXPECT_EQ(ctx.machine_rank(), ctx.rank() / local);
      EXPECT_EQ(ctx.local_rank(), ctx.rank() % local);
      ctx.set_machine_topology(mt);
      return ctx.hierarchical_neighbor_allreduce(Tensor::vector(x[ctx.rank()]), "h").values();
    });
    for (int i = 0; i < n; ++i) EXPECT_LT(max_abs_diff(out[i], expect[i]), 1e-10);
  }
}

TEST(Hierarchical, HeterogeneousLocalSizeIsConfigError) {
  SimConfig cfg;
  cfg.local_size = 2;
  cfg.rank_local_size[3] = 4;
  SimWorld w(4, cfg);
  EXPECT_THROW(w.run([](Context& ctx) { ctx.hierarchical_neighbor_allreduce(Tensor::scalar(1), "h"); }),
               ConfigError);
}

TEST(Negotiation, PairsRequestsByNameAcrossOrders) {
  auto out = per_rank<std::vector<double>>(2, {}, [](Context& ctx) {
    CommHandle a, b;
    if (ctx.rank() == 0) {
      a = ctx.allreduce_nonblocking(Tensor::scalar(1 + ctx.rank()), "A");
      b = ctx.allreduce_nonblocking(Tensor::scalar(10 + ctx.rank()), "B");
    } else {
      b = ctx.allreduce_nonblocking(Tensor::scalar(10 + ctx.rank()), "B");
      a = ctx.allreduce_nonblocking(Tensor::scalar(1 + ctx.rank()), "A");
    }
    return std::vector<double>{ctx.wait(a)[0], ctx.wait(b)[0]};
  });
  for (const auto& v : out) EXPECT_EQ(v, (std::vector<double>{1.5, 10.5}));
}

TEST(Negotiation, UnmatchedDynamicSchemeIsTopologyError) {
  SimWorld w(2);
  try {
    w.run([](Context& ctx) {
      WeightScheme s;
      s.self_weight = 0.5;
      if (ctx.rank() == 0) {
        s.src_weights = std::map<int, double>{};
        s.dst_weights = std::map<int, double>{{1, 0.5}};
      } else {
        s.src_weights = std::map<int, double>{};
        s.dst_weights = std::map<int, double>{};
      }
      ctx.neighbor_allreduce(Tensor::scalar(1), "dyn", s);
    });
    FAIL() << "expected TopologyError";
  } catch (const TopologyError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("0"), std::string::npos);
    EXPECT_NE(msg.find("1"), std::string::npos);
    EXPECT_NE(msg.find("dyn"), std::string::npos);
  }
  EXPECT_EQ(w.deadlocks(), 0);
}

TEST(Negotiation, OpKindMismatchIsUsageError) {
  SimWorld w(2);
  EXPECT_THROW(w.run([](Context& ctx) {
                 if (ctx.rank() == 0) ctx.allreduce(Tensor::scalar(1), "k");
                 else ctx.neighbor_allreduce(Tensor::scalar(1), "k");
               }),
               UsageError);
}

TEST(Negotiation, CheckDisabledGivesIdenticalResults) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    auto rs = random_schemes(rng, 6, SchemeStyle::kPushPull);
    auto x = random_rows(rng, 6, 3);
    SimConfig off;
    off.topology_check = false;
    EXPECT_EQ(run_schemes(rs.schemes, x), run_schemes(rs.schemes, x, off));
  }
}

TEST(Negotiation, ErrorsDoNotPoisonLaterOps) {
  auto out = per_rank<double>(2, {}, [](Context& ctx) {
    try {
      ctx.allreduce(Tensor(Shape{1 + ctx.rank()}, 1.0), "bad");
    } catch (const ShapeError&) {
    }
    return ctx.allreduce(Tensor::scalar(ctx.rank()), "good")[0];
  });
  EXPECT_EQ(out[0], 0.5);
}

TEST(Fusion, FusedEqualsUnfusedBitwise) {
  std::mt19937_64 rng(61);
  auto x = random_rows(rng, 4, 6);
  auto job = [&](Context& ctx) {
    std::vector<CommHandle> hs;
    for (int k = 0; k < 6; ++k) hs.push_back(ctx.allreduce_nonblocking(Tensor::scalar(x[ctx.rank()][k]), "t" + std::to_string(k)));
    std::vector<double> r;
    for (auto& h : hs) r.push_back(ctx.wait(h)[0]);
    r.push_back(static_cast<double>(ctx.counters().batches_executed));
    return r;
  };
  SimConfig unfused;
  unfused.fusion_bytes = 0;
  auto a = per_rank<std::vector<double>>(4, {}, job);
  auto b = per_rank<std::vector<double>>(4, unfused, job);
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(a[r].back(), 1);
    EXPECT_EQ(b[r].back(), 6);
    a[r].pop_back();
    b[r].pop_back();
  }
  EXPECT_EQ(a, b);
}

TEST(Fusion, CapacitySplitsBatches) {
  SimConfig cfg;
  cfg.fusion_bytes = 64;
  auto out = per_rank<std::vector<double>>(3, cfg, [](Context& ctx) {
    std::vector<CommHandle> hs;
    for (int k = 0; k < 3; ++k) hs.push_back(ctx.allreduce_nonblocking(Tensor(Shape{4}, ctx.rank() + k), "f" + std::to_string(k)));
    std::vector<double> r;
    for (auto& h : hs) r.push_back(ctx.wait(h)[0]);
    r.push_back(static_cast<double>(ctx.counters().batches_executed));
    return r;
  });
  for (const auto& r : out) EXPECT_EQ(r, (std::vector<double>{1, 2, 3, 2}));
}

TEST(Fusion, SingleRequestPassesThrough) {
  auto out = per_rank<double>(2, {}, [](Context& ctx) {
    ctx.allreduce(Tensor::scalar(1), "one");
    return static_cast<double>(ctx.counters().requests_executed);
  });
  EXPECT_EQ(out[0], 1);
}

TEST(Fusion, NeighborOpsFuseOnlyWithIdenticalSchemes) {
  auto out = per_rank<double>(4, {}, [](Context& ctx) {
    ctx.set_topology(ring_graph(4));
    auto a = ctx.neighbor_allreduce_nonblocking(Tensor::scalar(1), "a");
    auto b = ctx.neighbor_allreduce_nonblocking(Tensor::scalar(2), "b");
    auto c = ctx.neighbor_allreduce_nonblocking(Tensor::scalar(3), "c", one_peer_exponential_scheme(4, ctx.rank(), 0));
    ctx.wait(a);
    ctx.wait(b);
    ctx.wait(c);
    return static_cast<double>(ctx.counters().batches_executed);
  });
  for (double v : out) EXPECT_EQ(v, 2);
}
