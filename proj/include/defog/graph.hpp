#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "defog/matrix.hpp"

namespace defog {

inline constexpr double kStochasticTol = 1e-12;

// Directed edge (src -> dst).
using Edge = std::pair<int, int>;

enum class Stochasticity { kNone, kPull, kPush, kDoubly };

const char* to_string(Stochasticity s);

// Strongest class satisfied by W: pull when every row sums to one, push when
// every column does, doubly when both. Throws DimensionError for non-square W.
Stochasticity classify_weight_matrix(const Matrix& w, double tol = kStochasticTol);

struct NeighborSets {
  std::set<int> in_neighbors;   // N(i): ranks j with (j, i) in E
  std::set<int> out_neighbors;  // M(i): ranks j with (i, j) in E
};

// Directed graph with its weight matrix. W(i, j) is the weight rank i applies
// to the copy of x_j it receives, so it may be nonzero only for an edge
// (j, i) or on the diagonal. Self loops are never edges.
class Topology {
 public:
  Topology() = default;
  Topology(int size, std::set<Edge> edges, Matrix weights, std::string name = "custom");

  // Edges are derived from the nonzero off-diagonal entries of W.
  static Topology from_weights(Matrix weights, std::string name = "custom");

  int size() const { return size_; }
  const std::set<Edge>& edges() const { return edges_; }
  const Matrix& weights() const { return weights_; }
  const std::string& name() const { return name_; }
  bool empty() const { return size_ == 0; }

  NeighborSets neighbors(int rank) const;
  Stochasticity classify(double tol = kStochasticTol) const {
    return classify_weight_matrix(weights_, tol);
  }

  // Same graph with every edge reversed and W transposed.
  Topology reversed() const;

 private:
  int size_ = 0;
  std::set<Edge> edges_;
  Matrix weights_;
  std::string name_;
};

NeighborSets neighbor_sets(const Topology& topology, int rank);

// Local, per-round view of one rank's partial averaging:
//   x_i <- self * x_i + sum_j src[j] * dst_j[i] * x_j
// Only four argument combinations are meaningful: nothing (static topology),
// self + dst (push), self + src (pull) and self + src + dst (push-pull).
struct WeightScheme {
  enum class Config { kStatic, kPush, kPull, kPushPull, kInvalid };

  std::optional<double> self_weight;
  std::optional<std::map<int, double>> src_weights;
  std::optional<std::map<int, double>> dst_weights;

  Config config() const;

  // Throws UsageError on an invalid combination, ranks outside [0, size),
  // the own rank inside src/dst, non-finite weights, or (when
  // stochastic_range is set) weights outside [0, 1].
  void validate(int size, int rank, bool stochastic_range = false) const;

  bool operator==(const WeightScheme&) const = default;
};

const char* to_string(WeightScheme::Config c);

// Assembles the global matrix W(i, j) = r_ij * s_ij, W(i, i) = self_i from the
// per-rank schemes of one round. Sides that a scheme leaves undeclared count
// as weight 1 on edges declared by the other endpoint.
Matrix assemble_weight_matrix(const std::vector<WeightScheme>& schemes);

// Reference oracle: dense W * X, rows of X are stacked per-rank iterates.
Matrix dense_partial_average(const Matrix& w, const Matrix& x);

}  // namespace defog
