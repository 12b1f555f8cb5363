#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "defog/graph.hpp"

namespace defog {

// Static constructors. All require n >= 2 and produce doubly-stochastic W.
Topology ring_graph(int n);
Topology exponential_two_graph(int n);
Topology mesh_grid_2d(int n);
Topology star_graph(int n);
Topology full_graph(int n);

// Builds a named static topology: ring, star, mesh2d, full, exp2.
Topology make_static_topology(const std::string& name, int n);

// Returns true for the names accepted by make_static_topology.
bool is_static_topology_name(const std::string& name);

// Metropolis-Hastings weights on the undirected graph underlying `edges`:
// w_ij = 1 / (1 + max(deg_i, deg_j)), w_ii = 1 - sum_j w_ij.
Matrix metropolis_hastings_matrix(int n, const std::set<Edge>& undirected_edges);

// Local Metropolis-Hastings rule. Produces a pull scheme (self + src).
WeightScheme metropolis_hastings_weights(const std::set<int>& nb_ranks,
                                         const std::map<int, int>& nb_degrees, int self_degree);

// One-peer exponential-2 schedule: in round k every rank sends to
// rank + 2^(k mod ceil(log2 n)) and receives from rank - 2^(k mod ceil(log2 n)).
// Weights follow the push-sum convention self = dst = 1/2, src = 1.
WeightScheme one_peer_exponential_scheme(int n, int rank, std::int64_t round);

// One-peer schedule over an arbitrary topology: rank sends to its sorted
// out-neighbors round-robin and receives from every rank whose round-k
// target it is. Throws TopologyError for a node without out-neighbors.
WeightScheme one_peer_scheme_of_graph(const Topology& topology, int rank, std::int64_t round);

// Experimental: even rounds run one-peer exponential-2 inside each half of
// the ranks, odd rounds pair rank i with i + n/2. Requires even n.
WeightScheme inner_outer_exponential_scheme(int n, int rank, std::int64_t round);

enum class ScheduleKind { kOnePeerExponential, kOnePeerOfGraph, kInnerOuterExponential };

// Per-rank round counter over a pure (n, rank, k) schedule. Every rank derives
// the same global schedule without coordination.
class DynamicTopologyGenerator {
 public:
  DynamicTopologyGenerator(Topology base, int rank, ScheduleKind kind);

  WeightScheme scheme_at(std::int64_t round) const;
  WeightScheme next() { return scheme_at(round_++); }

  std::int64_t round() const { return round_; }
  const Topology& base() const { return base_; }
  ScheduleKind kind() const { return kind_; }
  int rank() const { return rank_; }

 private:
  Topology base_;
  int rank_;
  ScheduleKind kind_;
  std::int64_t round_ = 0;
};

// Names accepted for dynamic schedules: one-peer-exp2, one-peer-graph, inner-outer-exp2.
bool is_dynamic_topology_name(const std::string& name);
ScheduleKind schedule_kind_from_name(const std::string& name);

}  // namespace defog
