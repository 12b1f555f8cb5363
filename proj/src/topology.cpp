#include "defog/topology.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "defog/error.hpp"

namespace defog {

namespace {

void require_size(int n, const char* what) {
  if (n < 2) throw InvalidArgument(std::string(what) + " requires n >= 2, got " + std::to_string(n));
}

std::set<Edge> bidirect(const std::set<Edge>& undirected) {
  std::set<Edge> out;
  for (const auto& [a, b] : undirected) {
    out.insert({a, b});
    out.insert({b, a});
  }
  return out;
}

Topology undirected_mh(int n, std::set<Edge> undirected, std::string name) {
  auto edges = bidirect(undirected);
  Matrix w = metropolis_hastings_matrix(n, edges);
  return Topology(n, std::move(edges), std::move(w), std::move(name));
}

// Smallest t with 2^t >= n.
int ceil_log2(int n) {
  int t = 0;
  while ((std::int64_t{1} << t) < n) ++t;
  return t;
}

int mod(std::int64_t a, int n) {
  auto r = static_cast<int>(a % n);
  return r < 0 ? r + n : r;
}

WeightScheme one_peer(int rank, int dst, const std::set<int>& srcs) {
  WeightScheme s;
  s.self_weight = 0.5;
  s.dst_weights = std::map<int, double>{};
  if (dst != rank) (*s.dst_weights)[dst] = 0.5;
  else s.self_weight = 1.0;
  s.src_weights = std::map<int, double>{};
  for (int r : srcs) {
    if (r != rank) (*s.src_weights)[r] = 1.0;
  }
  return s;
}

}  // namespace

Matrix metropolis_hastings_matrix(int n, const std::set<Edge>& edges) {
  std::vector<std::set<int>> nbrs(n);
  for (const auto& [a, b] : edges) {
    nbrs[a].insert(b);
    nbrs[b].insert(a);
  }
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j : nbrs[i]) {
      double wij = 1.0 / (1.0 + static_cast<double>(std::max(nbrs[i].size(), nbrs[j].size())));
      w(i, j) = wij;
      off += wij;
    }
    w(i, i) = 1.0 - off;
  }
  return w;
}

Topology ring_graph(int n) {
  require_size(n, "ring_graph");
  std::set<Edge> und;
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    und.insert({std::min(i, j), std::max(i, j)});
  }
  return undirected_mh(n, std::move(und), "ring");
}

// Static exponential-2 graph: i -> (i + 2^j) mod n for 2^j <= n - 1. The
// offsets are distinct and nonzero mod n, so the graph is circulant with
// equal in/out degree and uniform weights 1/(deg + 1) are doubly stochastic.
Topology exponential_two_graph(int n) {
  require_size(n, "exponential_two_graph");
  std::vector<int> offsets;
  for (std::int64_t o = 1; o <= n - 1; o *= 2) offsets.push_back(static_cast<int>(o));
  std::set<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int o : offsets) edges.insert({i, (i + o) % n});
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    int indeg = 0;
    for (const auto& e : edges)
      if (e.second == i) ++indeg;
    double u = 1.0 / (indeg + 1);
    w(i, i) = u;
    for (const auto& [src, dst] : edges)
      if (dst == i) w(i, src) = u;
  }
  return Topology(n, std::move(edges), std::move(w), "exp2");
}

Topology mesh_grid_2d(int n) {
  require_size(n, "mesh_grid_2d");
  int rows = 1;
  for (int r = 1; r * r <= n; ++r)
    if (n % r == 0) rows = r;
  const int cols = n / rows;
  std::set<Edge> und;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int id = r * cols + c;
      if (c + 1 < cols) und.insert({id, id + 1});
      if (r + 1 < rows) und.insert({id, id + cols});
    }
  }
  return undirected_mh(n, std::move(und), "mesh2d");
}

Topology star_graph(int n) {
  require_size(n, "star_graph");
  std::set<Edge> und;
  for (int i = 1; i < n; ++i) und.insert({0, i});
  return undirected_mh(n, std::move(und), "star");
}

Topology full_graph(int n) {
  require_size(n, "full_graph");
  std::set<Edge> und;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) und.insert({i, j});
  return undirected_mh(n, std::move(und), "full");
}

bool is_static_topology_name(const std::string& name) {
  return name == "ring" || name == "star" || name == "mesh2d" || name == "full" || name == "exp2";
}

Topology make_static_topology(const std::string& name, int n) {
  if (name == "ring") return ring_graph(n);
  if (name == "star") return star_graph(n);
  if (name == "mesh2d") return mesh_grid_2d(n);
  if (name == "full") return full_graph(n);
  if (name == "exp2") return exponential_two_graph(n);
  throw ConfigError("unknown topology '" + name + "' (valid: ring, star, mesh2d, full, exp2)");
}

WeightScheme metropolis_hastings_weights(const std::set<int>& nb_ranks,
                                         const std::map<int, int>& nb_degrees, int self_degree) {
  if (self_degree < static_cast<int>(nb_ranks.size())) {
    throw InvalidArgument("self degree " + std::to_string(self_degree) + " is smaller than " +
                          std::to_string(nb_ranks.size()) + " neighbors");
  }
  WeightScheme s;
  s.src_weights = std::map<int, double>{};
  double off = 0.0;
  for (int r : nb_ranks) {
    auto it = nb_degrees.find(r);
    if (it == nb_degrees.end()) {
      throw InvalidArgument("missing degree for neighbor " + std::to_string(r));
    }
    if (it->second < 1) {
      throw InvalidArgument("neighbor " + std::to_string(r) + " reports degree " +
                            std::to_string(it->second));
    }
    double w = 1.0 / (1.0 + std::max(self_degree, it->second));
    (*s.src_weights)[r] = w;
    off += w;
  }
  double self = 1.0 - off;
  if (self < 0.0) {
    throw InvalidArgument("inconsistent degrees: Metropolis-Hastings self weight is negative");
  }
  s.self_weight = self;
  return s;
}

WeightScheme one_peer_exponential_scheme(int n, int rank, std::int64_t round) {
  require_size(n, "one_peer_exponential_scheme");
  if (rank < 0 || rank >= n) throw UsageError("rank out of range");
  if (round < 0) throw InvalidArgument("round must be nonnegative");
  const int tau = ceil_log2(n);
  const int offset = 1 << static_cast<int>(round % tau);
  const int dst = mod(std::int64_t{rank} + offset, n);
  const int src = mod(std::int64_t{rank} - offset, n);
  return one_peer(rank, dst, {src});
}

WeightScheme one_peer_scheme_of_graph(const Topology& topology, int rank, std::int64_t round) {
  const int n = topology.size();
  if (rank < 0 || rank >= n) throw UsageError("rank out of range");
  if (round < 0) throw InvalidArgument("round must be nonnegative");
  // Every rank's round-k target, from the same pure rule everyone applies.
  std::vector<int> target(n);
  for (int r = 0; r < n; ++r) {
    auto out = topology.neighbors(r).out_neighbors;
    if (out.empty()) {
      throw TopologyError("rank " + std::to_string(r) +
                          " has no out-neighbors; one-peer schedule needs a connected graph");
    }
    std::vector<int> sorted(out.begin(), out.end());
    target[r] = sorted[static_cast<std::size_t>(round % static_cast<std::int64_t>(sorted.size()))];
  }
  std::set<int> srcs;
  for (int r = 0; r < n; ++r)
    if (target[r] == rank) srcs.insert(r);
  return one_peer(rank, target[rank], srcs);
}

WeightScheme inner_outer_exponential_scheme(int n, int rank, std::int64_t round) {
  require_size(n, "inner_outer_exponential_scheme");
  if (n % 2 != 0) throw InvalidArgument("inner-outer exponential-2 requires an even size");
  if (rank < 0 || rank >= n) throw UsageError("rank out of range");
  if (round < 0) throw InvalidArgument("round must be nonnegative");
  const int half = n / 2;
  if (round % 2 == 1 || half < 2) {
    int peer = (rank + half) % n;
    return one_peer(rank, peer, {peer});
  }
  const int base = rank < half ? 0 : half;
  const int local = rank - base;
  const int tau = ceil_log2(half);
  const int offset = 1 << static_cast<int>((round / 2) % tau);
  const int dst = base + mod(std::int64_t{local} + offset, half);
  const int src = base + mod(std::int64_t{local} - offset, half);
  return one_peer(rank, dst, {src});
}

DynamicTopologyGenerator::DynamicTopologyGenerator(Topology base, int rank, ScheduleKind kind)
    : base_(std::move(base)), rank_(rank), kind_(kind) {
  if (rank_ < 0 || rank_ >= base_.size()) throw UsageError("rank out of range for generator");
}

WeightScheme DynamicTopologyGenerator::scheme_at(std::int64_t round) const {
  switch (kind_) {
    case ScheduleKind::kOnePeerExponential:
      return one_peer_exponential_scheme(base_.size(), rank_, round);
    case ScheduleKind::kOnePeerOfGraph:
      return one_peer_scheme_of_graph(base_, rank_, round);
    case ScheduleKind::kInnerOuterExponential:
      return inner_outer_exponential_scheme(base_.size(), rank_, round);
  }
  throw Error(ErrorCode::kInternal, "unknown schedule kind");
}

bool is_dynamic_topology_name(const std::string& name) {
  return name == "one-peer-exp2" || name == "one-peer-graph" || name == "inner-outer-exp2";
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
  if (name == "one-peer-exp2") return ScheduleKind::kOnePeerExponential;
  if (name == "one-peer-graph") return ScheduleKind::kOnePeerOfGraph;
  if (name == "inner-outer-exp2") return ScheduleKind::kInnerOuterExponential;
  throw ConfigError("unknown dynamic topology '" + name + "'");
}

}  // namespace defog
