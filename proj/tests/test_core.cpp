#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

#include "defog/error.hpp"
#include "defog/graph.hpp"
#include "defog/tensor.hpp"

using namespace defog;

namespace {

// Independent row/column-sum check used as the classification oracle.
Stochasticity brute_classify(const Matrix& w) {
  bool rows = true, cols = true;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double r = 0, c = 0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      r += w(i, j);
      c += w(j, i);
    }
    rows = rows && std::fabs(r - 1) <= 1e-12;
    cols = cols && std::fabs(c - 1) <= 1e-12;
  }
  if (rows && cols) return Stochasticity::kDoubly;
  if (rows) return Stochasticity::kPull;
  if (cols) return Stochasticity::kPush;
  return Stochasticity::kNone;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

// Random doubly-stochastic matrix as a convex combination of permutations.
Matrix random_doubly(std::mt19937_64& rng, int n) {
  Matrix w(n, n);
  std::vector<int> perm(n);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> coef(4);
  double total = 0;
  for (auto& c : coef) total += (c = u(rng));
  for (double c : coef) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) w(i, perm[i]) += c / total;
  }
  return w;
}

}  // namespace

TEST(Tensor, ShapeAndVolume) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.bytes(), 48u);
  EXPECT_TRUE(t.all_finite());
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, FiniteAndIdentical) {
  Tensor a = Tensor::vector({1.0, 2.0});
  Tensor b = Tensor::vector({1.0, 2.0});
  EXPECT_TRUE(a.identical(b));
  b[1] = std::nextafter(2.0, 3.0);
  EXPECT_FALSE(a.identical(b));
  a[0] = std::nan("");
  EXPECT_FALSE(a.all_finite());
}

TEST(Classify, IdentityIsDoubly) {
  EXPECT_EQ(classify_weight_matrix(Matrix::identity(3)), Stochasticity::kDoubly);
}

TEST(Classify, UniformIsDoubly) {
  EXPECT_EQ(classify_weight_matrix(Matrix::uniform(4)), Stochasticity::kDoubly);
}

TEST(Classify, RowStochasticWithHeavyColumnIsPull) {
  Matrix w(5, 5);
  // Rows 0..3 put 0.35 on column 0, row 4 puts 0.0: column 0 sums to 1.4.
  for (int i = 0; i < 4; ++i) {
    w(i, 0) = 0.35;
    w(i, i + 1) = 0.65;
  }
  w(4, 4) = 1.0;
  EXPECT_NEAR(w.col_sum(0), 1.4, 1e-15);
  EXPECT_EQ(brute_classify(w), Stochasticity::kPull);
  EXPECT_EQ(classify_weight_matrix(w), Stochasticity::kPull);
}

TEST(Classify, NonSquareThrows) {
  EXPECT_THROW(classify_weight_matrix(Matrix(2, 3)), DimensionError);
}

TEST(Classify, TransposeSwapsPullAndPush) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + trial % 6;
    Matrix w(n, n);
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += (w(i, j) = u(rng));
      for (int j = 0; j < n; ++j) w(i, j) /= s;
    }
    auto c = classify_weight_matrix(w);
    auto ct = classify_weight_matrix(w.transpose());
    EXPECT_EQ(c, brute_classify(w));
    EXPECT_EQ(c == Stochasticity::kPull, ct == Stochasticity::kPush);
    EXPECT_EQ(c == Stochasticity::kDoubly, ct == Stochasticity::kDoubly);
  }
}

TEST(NeighborSets, FanInExampleGraph) {
  // Nodes 1..5 mapped to ranks 0..4; edges into node 5 from {1,2,3,4}, out of 5 to {1,3}.
  std::set<Edge> edges = {{0, 4}, {1, 4}, {2, 4}, {3, 4}, {4, 0}, {4, 2}};
  Matrix w = Matrix::identity(5);
  Topology t(5, edges, w);
  auto ns = neighbor_sets(t, 4);
  EXPECT_EQ(ns.in_neighbors, (std::set<int>{0, 1, 2, 3}));
  EXPECT_EQ(ns.out_neighbors, (std::set<int>{0, 2}));
}

TEST(NeighborSets, EmptyEdges) {
  Topology t(4, {}, Matrix::identity(4));
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(t.neighbors(i).in_neighbors.empty());
    EXPECT_TRUE(t.neighbors(i).out_neighbors.empty());
  }
}

TEST(NeighborSets, DirectedRing) {
  std::set<Edge> edges;
  for (int i = 0; i < 4; ++i) edges.insert({i, (i + 1) % 4});
  Topology t(4, edges, Matrix::identity(4));
  EXPECT_EQ(t.neighbors(2).in_neighbors, (std::set<int>{1}));
  EXPECT_EQ(t.neighbors(2).out_neighbors, (std::set<int>{3}));
  EXPECT_THROW(t.neighbors(4), UsageError);
  EXPECT_THROW(t.neighbors(-1), UsageError);
}

TEST(NeighborSets, ReversalSwapsSets) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + trial % 7;
    std::set<Edge> edges;
    std::bernoulli_distribution b(0.4);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && b(rng)) edges.insert({i, j});
    Topology t(n, edges, Matrix::identity(n));
    Topology r = t.reversed();
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(t.neighbors(i).in_neighbors, r.neighbors(i).out_neighbors);
      EXPECT_EQ(t.neighbors(i).out_neighbors, r.neighbors(i).in_neighbors);
    }
    Topology rr = r.reversed();
    EXPECT_EQ(rr.edges(), t.edges());
  }
}

TEST(Topology, RejectsWeightOffEdge) {
  Matrix w = Matrix::identity(3);
  w(0, 1) = 0.5;
  EXPECT_THROW(Topology(3, {}, w), InvalidArgument);
  EXPECT_NO_THROW(Topology(3, {{1, 0}}, w));
  EXPECT_THROW(Topology(3, {{1, 1}}, Matrix::identity(3)), InvalidArgument);
}

TEST(DenseOracle, IdentityLeavesXUnchanged) {
  std::mt19937_64 rng(5);
  Matrix x = random_matrix(rng, 4, 3);
  Matrix y = dense_partial_average(Matrix::identity(4), x);
  EXPECT_EQ(y.data(), x.data());
}

TEST(DenseOracle, UniformGivesMean) {
  Matrix x(3, 1, std::vector<double>{0, 3, 6});
  Matrix y = dense_partial_average(Matrix::uniform(3), x);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y(i, 0), 3.0, 1e-15);
}

TEST(DenseOracle, DimensionMismatchThrows) {
  EXPECT_THROW(dense_partial_average(Matrix::identity(3), Matrix(2, 1)), DimensionError);
  EXPECT_THROW(dense_partial_average(Matrix(2, 3), Matrix(3, 1)), DimensionError);
}

TEST(DenseOracle, DoublyStochasticPreservesColumnSums) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + trial % 9;
    Matrix w = random_doubly(rng, n);
    ASSERT_EQ(classify_weight_matrix(w, 1e-12), Stochasticity::kDoubly);
    Matrix x = random_matrix(rng, n, 4);
    Matrix y = dense_partial_average(w, x);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(y.col_sum(c), x.col_sum(c), 1e-10);
  }
}

TEST(WeightScheme, ConfigurationsAndValidation) {
  WeightScheme s;
  EXPECT_EQ(s.config(), WeightScheme::Config::kStatic);
  s.self_weight = 0.5;
  EXPECT_EQ(s.config(), WeightScheme::Config::kInvalid);
  s.dst_weights = std::map<int, double>{{1, 0.5}};
  EXPECT_EQ(s.config(), WeightScheme::Config::kPush);
  s.src_weights = std::map<int, double>{{2, 1.0}};
  EXPECT_EQ(s.config(), WeightScheme::Config::kPushPull);
  s.dst_weights.reset();
  EXPECT_EQ(s.config(), WeightScheme::Config::kPull);
  EXPECT_NO_THROW(s.validate(4, 0, true));
  s.src_weights = std::map<int, double>{{0, 1.0}};
  EXPECT_THROW(s.validate(4, 0), UsageError);
  s.src_weights = std::map<int, double>{{7, 1.0}};
  EXPECT_THROW(s.validate(4, 0), UsageError);
  s.src_weights = std::map<int, double>{{1, 1.5}};
  EXPECT_NO_THROW(s.validate(4, 0, false));
  EXPECT_THROW(s.validate(4, 0, true), UsageError);
  WeightScheme only_src;
  only_src.src_weights = std::map<int, double>{{1, 1.0}};
  EXPECT_THROW(only_src.validate(4, 0), UsageError);
}

TEST(WeightScheme, AssembleUsesProductOfSides) {
  std::vector<WeightScheme> s(2);
  s[0].self_weight = 0.25;
  s[0].dst_weights = std::map<int, double>{{1, 0.75}};
  s[0].src_weights = std::map<int, double>{{1, 0.5}};
  s[1].self_weight = 0.5;
  s[1].src_weights = std::map<int, double>{{0, 2.0}};
  s[1].dst_weights = std::map<int, double>{{0, 0.4}};
  Matrix w = assemble_weight_matrix(s);
  EXPECT_DOUBLE_EQ(w(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(w(1, 0), 2.0 * 0.75);
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5 * 0.4);
  EXPECT_DOUBLE_EQ(w(1, 1), 0.5);
}

TEST(Matrix, KroneckerShape) {
  Matrix a = Matrix::uniform(2);
  Matrix b = Matrix::uniform(3);
  Matrix k = kron(a, b);
  ASSERT_EQ(k.rows(), 6u);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(k(i, j), 1.0 / 6.0);
}
