#include "defog/graph.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "defog/error.hpp"

namespace defog {

const char* to_string(Stochasticity s) {
  switch (s) {
    case Stochasticity::kNone: return "none";
    case Stochasticity::kPull: return "pull";
    case Stochasticity::kPush: return "push";
    case Stochasticity::kDoubly: return "doubly";
  }
  return "?";
}

Stochasticity classify_weight_matrix(const Matrix& w, double tol) {
  if (!w.square()) {
    throw DimensionError("weight matrix must be square, got " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()));
  }
  bool rows = true;
  bool cols = true;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    if (std::abs(w.row_sum(i) - 1.0) > tol) rows = false;
    if (std::abs(w.col_sum(i) - 1.0) > tol) cols = false;
  }
  if (rows && cols) return Stochasticity::kDoubly;
  if (rows) return Stochasticity::kPull;
  if (cols) return Stochasticity::kPush;
  return Stochasticity::kNone;
}

Topology::Topology(int size, std::set<Edge> edges, Matrix weights, std::string name)
    : size_(size), edges_(std::move(edges)), weights_(std::move(weights)), name_(std::move(name)) {
  if (size_ < 1) throw InvalidArgument("topology size must be positive");
  if (weights_.rows() != static_cast<std::size_t>(size_) || !weights_.square()) {
    throw DimensionError("weight matrix must be " + std::to_string(size_) + "x" +
                         std::to_string(size_));
  }
  for (const auto& [src, dst] : edges_) {
    if (src < 0 || src >= size_ || dst < 0 || dst >= size_) {
      throw InvalidArgument("edge (" + std::to_string(src) + "," + std::to_string(dst) +
                            ") out of range for size " + std::to_string(size_));
    }
    if (src == dst) throw InvalidArgument("self loops are not edges; use the diagonal of W");
  }
  for (int i = 0; i < size_; ++i) {
    for (int j = 0; j < size_; ++j) {
      if (i != j && weights_(i, j) != 0.0 && !edges_.count({j, i})) {
        throw InvalidArgument("W(" + std::to_string(i) + "," + std::to_string(j) +
                              ") is nonzero but edge " + std::to_string(j) + "->" +
                              std::to_string(i) + " is missing");
      }
    }
  }
}

Topology Topology::from_weights(Matrix weights, std::string name) {
  if (!weights.square()) throw DimensionError("weight matrix must be square");
  std::set<Edge> edges;
  const int n = static_cast<int>(weights.rows());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && weights(i, j) != 0.0) edges.insert({j, i});
  return Topology(n, std::move(edges), std::move(weights), std::move(name));
}

NeighborSets Topology::neighbors(int rank) const {
  if (rank < 0 || rank >= size_) {
    throw UsageError("rank " + std::to_string(rank) + " out of range for size " +
                     std::to_string(size_));
  }
  NeighborSets ns;
  for (const auto& [src, dst] : edges_) {
    if (dst == rank) ns.in_neighbors.insert(src);
    if (src == rank) ns.out_neighbors.insert(dst);
  }
  return ns;
}

Topology Topology::reversed() const {
  std::set<Edge> rev;
  for (const auto& [src, dst] : edges_) rev.insert({dst, src});
  return Topology(size_, std::move(rev), weights_.transpose(), name_ + "-reversed");
}

NeighborSets neighbor_sets(const Topology& topology, int rank) {
  return topology.neighbors(rank);
}

WeightScheme::Config WeightScheme::config() const {
  const bool s = self_weight.has_value();
  const bool r = src_weights.has_value();
  const bool d = dst_weights.has_value();
  if (!s && !r && !d) return Config::kStatic;
  if (!s) return Config::kInvalid;
  if (r && d) return Config::kPushPull;
  if (r) return Config::kPull;
  if (d) return Config::kPush;
  return Config::kInvalid;
}

const char* to_string(WeightScheme::Config c) {
  switch (c) {
    case WeightScheme::Config::kStatic: return "static";
    case WeightScheme::Config::kPush: return "push";
    case WeightScheme::Config::kPull: return "pull";
    case WeightScheme::Config::kPushPull: return "push-pull";
    case WeightScheme::Config::kInvalid: return "invalid";
  }
  return "?";
}

namespace {

void check_weight(double w, bool stochastic_range, const std::string& what) {
  if (!std::isfinite(w)) throw UsageError(what + " weight is not finite");
  if (stochastic_range && (w < 0.0 || w > 1.0)) {
    throw UsageError(what + " weight " + std::to_string(w) + " outside [0, 1]");
  }
}

void check_map(const std::map<int, double>& m, int size, int rank, bool stochastic_range,
               const char* label) {
  for (const auto& [r, w] : m) {
    if (r < 0 || r >= size) {
      throw UsageError(std::string(label) + " rank " + std::to_string(r) + " out of range for size " +
                       std::to_string(size));
    }
    if (r == rank) {
      throw UsageError(std::string(label) + " must not contain the own rank " +
                       std::to_string(rank) + "; use self_weight");
    }
    check_weight(w, stochastic_range, std::string(label) + "[" + std::to_string(r) + "]");
  }
}

}  // namespace

void WeightScheme::validate(int size, int rank, bool stochastic_range) const {
  if (config() == Config::kInvalid) {
    throw UsageError(
        "invalid weight arguments: use none, self+dst (push), self+src (pull) or self+src+dst");
  }
  if (self_weight) check_weight(*self_weight, stochastic_range, "self");
  if (src_weights) check_map(*src_weights, size, rank, stochastic_range, "src_weights");
  if (dst_weights) check_map(*dst_weights, size, rank, stochastic_range, "dst_weights");
}

Matrix assemble_weight_matrix(const std::vector<WeightScheme>& schemes) {
  const std::size_t n = schemes.size();
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!schemes[i].self_weight) throw UsageError("assembly requires explicit self weights");
    w(i, i) = *schemes[i].self_weight;
  }
  // Edge j -> i exists when either endpoint declares it.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      const auto& sender = schemes[j];
      const auto& receiver = schemes[i];
      const int ii = static_cast<int>(i);
      const int jj = static_cast<int>(j);
      bool declared_by_sender = sender.dst_weights && sender.dst_weights->count(ii);
      bool declared_by_receiver = receiver.src_weights && receiver.src_weights->count(jj);
      if (!declared_by_sender && !declared_by_receiver) continue;
      double s = sender.dst_weights ? (declared_by_sender ? sender.dst_weights->at(ii) : 0.0) : 1.0;
      double r = receiver.src_weights ? (declared_by_receiver ? receiver.src_weights->at(jj) : 0.0)
                                      : 1.0;
      w(i, j) = r * s;
    }
  }
  return w;
}

Matrix dense_partial_average(const Matrix& w, const Matrix& x) {
  if (!w.square()) throw DimensionError("weight matrix must be square");
  if (w.cols() != x.rows()) {
    throw DimensionError("weight matrix is " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " but X has " + std::to_string(x.rows()) +
                         " rows");
  }
  return w * x;
}

}  // namespace defog
