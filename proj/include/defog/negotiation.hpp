#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "defog/envelope.hpp"
#include "defog/error.hpp"
#include "defog/graph.hpp"

namespace defog {

enum class OpKind : int { kAllreduce = 0, kNeighbor = 1, kHierarchical = 2, kAllgather = 3 };

const char* to_string(OpKind kind);

// Flat f64 encoding of a WeightScheme: [has_self, self, nsrc|-1, (rank, w)*, ndst|-1, (rank, w)*].
void encode_scheme(std::vector<double>& out, const WeightScheme& s);
WeightScheme decode_scheme(const std::vector<double>& in, std::size_t& pos);

// What one rank asks the coordinator for.
struct NegotiationRequest {
  std::uint32_t req_id = 0;
  OpKind kind = OpKind::kAllreduce;
  Shape shape;
  int local_size = 1;
  WeightScheme scheme;          // neighbor ops (rank indices)
  WeightScheme machine_scheme;  // hierarchical ops (machine indices)
};

std::vector<double> encode_request(const NegotiationRequest& r);
NegotiationRequest decode_request(std::uint32_t req_id, const std::vector<double>& payload);

// Per-rank execution plan returned by the coordinator.
struct ExecutionPlan {
  ErrorCode status = ErrorCode::kOk;
  std::string message;
  std::uint32_t exec_id = 0;
  OpKind kind = OpKind::kAllreduce;
  std::vector<std::uint32_t> req_ids;
  std::vector<int> sends;          // ranks, or machines for hierarchical
  std::vector<int> recvs;
  int local_size = 1;
};

std::vector<double> encode_plan(const ExecutionPlan& p);
ExecutionPlan decode_plan(std::uint32_t exec_id, const std::string& message,
                          const std::vector<double>& payload);

// Resolved send/receive sets of one neighbor exchange among `n` participants.
struct ResolvedExchange {
  std::vector<std::vector<int>> sends;
  std::vector<std::vector<int>> recvs;
};

// Fills undeclared sides from the peers' declarations. When `check` is set,
// edges declared on both ends must agree; a disagreement throws TopologyError
// naming the ranks involved.
ResolvedExchange resolve_exchange(const std::vector<WeightScheme>& schemes, bool check,
                                  const char* unit = "rank");

// Rank-0 negotiation service. Requests are matched by name in per-rank FIFO
// order, validated, grouped into fused batches and answered with one plan per
// rank and batch.
class Coordinator {
 public:
  using Reply = std::function<void(int rank, const ExecutionPlan& plan)>;

  Coordinator(int size, std::size_t fusion_bytes, bool topology_check);

  void submit(int rank, const std::string& name, NegotiationRequest req);
  bool has_ready() const { return !ready_.empty(); }
  void flush(const Reply& reply);

  std::uint64_t batches() const { return batches_; }

 private:
  struct ReadyOp {
    std::string name;
    std::vector<NegotiationRequest> reqs;  // indexed by rank
  };
  struct Batch {
    OpKind kind;
    std::vector<ReadyOp> ops;
    std::size_t bytes = 0;
  };

  void validate(const ReadyOp& op, ResolvedExchange& ex) const;
  bool fusable(const Batch& b, const ReadyOp& op, std::size_t bytes) const;

  int size_;
  std::size_t fusion_bytes_;
  bool check_;
  std::map<std::string, std::vector<std::deque<NegotiationRequest>>> table_;
  std::vector<ReadyOp> ready_;
  std::uint32_t next_exec_ = 1;
  std::uint64_t batches_ = 0;
};

}  // namespace defog
