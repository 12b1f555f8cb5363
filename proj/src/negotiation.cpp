#include "defog/negotiation.hpp"

#include <algorithm>
#include <sstream>

namespace defog {

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kAllreduce: return "allreduce";
    case OpKind::kNeighbor: return "neighbor_allreduce";
    case OpKind::kHierarchical: return "hierarchical_neighbor_allreduce";
    case OpKind::kAllgather: return "allgather";
  }
  return "?";
}

namespace {

double at(const std::vector<double>& in, std::size_t& pos) {
  if (pos >= in.size()) throw TransportError("truncated control message");
  return in[pos++];
}

int as_int(double v) { return static_cast<int>(v); }

void encode_map(std::vector<double>& out, const std::optional<std::map<int, double>>& m) {
  if (!m) {
    out.push_back(-1);
    return;
  }
  out.push_back(static_cast<double>(m->size()));
  for (const auto& [r, w] : *m) {
    out.push_back(r);
    out.push_back(w);
  }
}

std::optional<std::map<int, double>> decode_map(const std::vector<double>& in, std::size_t& pos) {
  int count = as_int(at(in, pos));
  if (count < 0) return std::nullopt;
  std::map<int, double> m;
  for (int i = 0; i < count; ++i) {
    int r = as_int(at(in, pos));
    m[r] = at(in, pos);
  }
  return m;
}

void encode_list(std::vector<double>& out, const std::vector<int>& v) {
  out.push_back(static_cast<double>(v.size()));
  for (int x : v) out.push_back(x);
}

std::vector<int> decode_list(const std::vector<double>& in, std::size_t& pos) {
  int count = as_int(at(in, pos));
  std::vector<int> v(count);
  for (auto& x : v) x = as_int(at(in, pos));
  return v;
}

std::string join_ranks(const std::vector<int>& ranks) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ranks.size(); ++i) os << (i ? ", " : "") << ranks[i];
  return os.str();
}

}  // namespace

void encode_scheme(std::vector<double>& out, const WeightScheme& s) {
  out.push_back(s.self_weight ? 1.0 : 0.0);
  out.push_back(s.self_weight.value_or(0.0));
  encode_map(out, s.src_weights);
  encode_map(out, s.dst_weights);
}

WeightScheme decode_scheme(const std::vector<double>& in, std::size_t& pos) {
  WeightScheme s;
  bool has_self = at(in, pos) != 0.0;
  double self = at(in, pos);
  if (has_self) s.self_weight = self;
  s.src_weights = decode_map(in, pos);
  s.dst_weights = decode_map(in, pos);
  return s;
}

std::vector<double> encode_request(const NegotiationRequest& r) {
  std::vector<double> out;
  out.push_back(static_cast<double>(r.kind));
  out.push_back(static_cast<double>(r.shape.size()));
  for (auto d : r.shape) out.push_back(static_cast<double>(d));
  out.push_back(r.local_size);
  encode_scheme(out, r.scheme);
  encode_scheme(out, r.machine_scheme);
  return out;
}

NegotiationRequest decode_request(std::uint32_t req_id, const std::vector<double>& in) {
  NegotiationRequest r;
  std::size_t pos = 0;
  r.req_id = req_id;
  r.kind = static_cast<OpKind>(as_int(at(in, pos)));
  int ndim = as_int(at(in, pos));
  r.shape.resize(ndim);
  for (auto& d : r.shape) d = static_cast<std::int64_t>(at(in, pos));
  r.local_size = as_int(at(in, pos));
  r.scheme = decode_scheme(in, pos);
  r.machine_scheme = decode_scheme(in, pos);
  return r;
}

std::vector<double> encode_plan(const ExecutionPlan& p) {
  std::vector<double> out;
  out.push_back(static_cast<double>(p.status));
  out.push_back(static_cast<double>(p.kind));
  out.push_back(static_cast<double>(p.req_ids.size()));
  for (auto id : p.req_ids) out.push_back(id);
  encode_list(out, p.sends);
  encode_list(out, p.recvs);
  out.push_back(p.local_size);
  return out;
}

ExecutionPlan decode_plan(std::uint32_t exec_id, const std::string& message,
                          const std::vector<double>& in) {
  ExecutionPlan p;
  std::size_t pos = 0;
  p.exec_id = exec_id;
  p.message = message;
  p.status = static_cast<ErrorCode>(as_int(at(in, pos)));
  p.kind = static_cast<OpKind>(as_int(at(in, pos)));
  int count = as_int(at(in, pos));
  p.req_ids.resize(count);
  for (auto& id : p.req_ids) id = static_cast<std::uint32_t>(at(in, pos));
  p.sends = decode_list(in, pos);
  p.recvs = decode_list(in, pos);
  p.local_size = as_int(at(in, pos));
  return p;
}

ResolvedExchange resolve_exchange(const std::vector<WeightScheme>& schemes, bool check,
                                  const char* unit) {
  const int n = static_cast<int>(schemes.size());
  ResolvedExchange ex;
  ex.sends.resize(n);
  ex.recvs.resize(n);
  auto in_range = [&](const std::optional<std::map<int, double>>& m, int owner) {
    if (!m) return;
    for (const auto& [r, w] : *m)
      if (r < 0 || r >= n || r == owner)
        throw UsageError(std::string(unit) + " " + std::to_string(owner) +
                         " declares invalid peer " + std::to_string(r));
  };
  for (int i = 0; i < n; ++i) {
    in_range(schemes[i].src_weights, i);
    in_range(schemes[i].dst_weights, i);
  }
  std::vector<std::string> problems;
  for (int i = 0; i < n; ++i) {
    const auto& si = schemes[i];
    if (si.dst_weights) {
      for (const auto& [k, w] : *si.dst_weights) {
        ex.sends[i].push_back(k);
        const auto& sk = schemes[k].src_weights;
        if (check && sk && !sk->count(i)) {
          problems.push_back(std::string(unit) + " " + std::to_string(i) + " sends to " + unit +
                             " " + std::to_string(k) + " but " + unit + " " + std::to_string(k) +
                             " does not receive from it");
        }
      }
    } else {
      for (int k = 0; k < n; ++k)
        if (k != i && schemes[k].src_weights && schemes[k].src_weights->count(i))
          ex.sends[i].push_back(k);
    }
    if (si.src_weights) {
      for (const auto& [j, w] : *si.src_weights) {
        ex.recvs[i].push_back(j);
        const auto& dj = schemes[j].dst_weights;
        if (check && dj && !dj->count(i)) {
          problems.push_back(std::string(unit) + " " + std::to_string(i) + " receives from " +
                             unit + " " + std::to_string(j) + " but " + unit + " " +
                             std::to_string(j) + " does not send to it");
        }
      }
    } else {
      for (int j = 0; j < n; ++j)
        if (j != i && schemes[j].dst_weights && schemes[j].dst_weights->count(i))
          ex.recvs[i].push_back(j);
    }
  }
  if (!problems.empty()) {
    std::string msg = "topology check failed: ";
    for (std::size_t p = 0; p < problems.size() && p < 8; ++p) msg += (p ? "; " : "") + problems[p];
    if (problems.size() > 8) msg += "; ... (" + std::to_string(problems.size()) + " mismatches)";
    throw TopologyError(msg);
  }
  return ex;
}

Coordinator::Coordinator(int size, std::size_t fusion_bytes, bool topology_check)
    : size_(size), fusion_bytes_(fusion_bytes), check_(topology_check) {}

void Coordinator::submit(int rank, const std::string& name, NegotiationRequest req) {
  auto& queues = table_[name];
  if (queues.empty()) queues.resize(size_);
  queues[rank].push_back(std::move(req));
  for (const auto& q : queues)
    if (q.empty()) return;
  ReadyOp op;
  op.name = name;
  op.reqs.reserve(size_);
  for (auto& q : queues) {
    op.reqs.push_back(std::move(q.front()));
    q.pop_front();
  }
  ready_.push_back(std::move(op));
}

void Coordinator::validate(const ReadyOp& op, ResolvedExchange& ex) const {
  const auto& ref = op.reqs[0];
  std::vector<int> odd;
  for (int r = 1; r < size_; ++r)
    if (op.reqs[r].kind != ref.kind) odd.push_back(r);
  if (!odd.empty()) {
    throw UsageError("op kind mismatch for '" + op.name + "': rank 0 submitted " +
                     to_string(ref.kind) + " but rank(s) " + join_ranks(odd) + " submitted " +
                     to_string(op.reqs[odd[0]].kind));
  }
  for (int r = 1; r < size_; ++r)
    if (op.reqs[r].shape != ref.shape) odd.push_back(r);
  if (!odd.empty()) {
    throw ShapeError("shape mismatch for '" + op.name + "': rank 0 has " +
                     shape_to_string(ref.shape) + " but rank(s) " + join_ranks(odd) + " have " +
                     shape_to_string(op.reqs[odd[0]].shape));
  }
  if (ref.kind == OpKind::kNeighbor) {
    std::vector<WeightScheme> schemes;
    for (const auto& r : op.reqs) schemes.push_back(r.scheme);
    try {
      ex = resolve_exchange(schemes, check_);
    } catch (const TopologyError& e) {
      throw TopologyError(std::string(e.what()) + " (op '" + op.name + "')");
    }
  } else if (ref.kind == OpKind::kHierarchical) {
    for (int r = 1; r < size_; ++r)
      if (op.reqs[r].local_size != ref.local_size) odd.push_back(r);
    if (!odd.empty() || ref.local_size < 1 || size_ % ref.local_size != 0) {
      throw ConfigError("hierarchical_neighbor_allreduce '" + op.name +
                        "' needs the same number of processes on every machine (size " +
                        std::to_string(size_) + ", local size " + std::to_string(ref.local_size) +
                        (odd.empty() ? "" : ", differing on rank(s) " + join_ranks(odd)) + ")");
    }
    const int machines = size_ / ref.local_size;
    std::vector<WeightScheme> schemes;
    for (int m = 0; m < machines; ++m) schemes.push_back(op.reqs[m * ref.local_size].machine_scheme);
    try {
      ex = resolve_exchange(schemes, check_, "machine");
    } catch (const TopologyError& e) {
      throw TopologyError(std::string(e.what()) + " (op '" + op.name + "')");
    }
  }
}

bool Coordinator::fusable(const Batch& b, const ReadyOp& op, std::size_t bytes) const {
  if (fusion_bytes_ == 0) return false;
  const auto kind = op.reqs[0].kind;
  if (b.kind != kind) return false;
  if (kind != OpKind::kAllreduce && kind != OpKind::kNeighbor) return false;
  if (b.bytes + bytes > fusion_bytes_) return false;
  if (kind == OpKind::kNeighbor) {
    const auto& first = b.ops.front();
    for (int r = 0; r < size_; ++r)
      if (!(first.reqs[r].scheme == op.reqs[r].scheme)) return false;
  }
  return true;
}

void Coordinator::flush(const Reply& reply) {
  std::vector<Batch> batches;
  std::vector<ResolvedExchange> exchanges;
  for (auto& op : ready_) {
    ResolvedExchange ex;
    try {
      validate(op, ex);
    } catch (const Error& e) {
      for (int r = 0; r < size_; ++r) {
        ExecutionPlan p;
        p.status = e.code();
        p.message = e.what();
        p.kind = op.reqs[r].kind;
        p.req_ids = {op.reqs[r].req_id};
        reply(r, p);
      }
      continue;
    }
    const std::size_t bytes = static_cast<std::size_t>(shape_volume(op.reqs[0].shape)) * sizeof(double);
    if (!batches.empty() && fusable(batches.back(), op, bytes)) {
      batches.back().bytes += bytes;
      batches.back().ops.push_back(std::move(op));
      continue;
    }
    Batch b;
    b.kind = op.reqs[0].kind;
    b.bytes = bytes;
    b.ops.push_back(std::move(op));
    batches.push_back(std::move(b));
    exchanges.push_back(std::move(ex));
  }
  ready_.clear();
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const auto& b = batches[bi];
    const auto& ex = exchanges[bi];
    const std::uint32_t exec_id = next_exec_++;
    ++batches_;
    const int local_size = b.ops[0].reqs[0].local_size;
    for (int r = 0; r < size_; ++r) {
      ExecutionPlan p;
      p.exec_id = exec_id;
      p.kind = b.kind;
      p.local_size = local_size;
      for (const auto& op : b.ops) p.req_ids.push_back(op.reqs[r].req_id);
      if (b.kind == OpKind::kNeighbor) {
        p.sends = ex.sends[r];
        p.recvs = ex.recvs[r];
      } else if (b.kind == OpKind::kHierarchical) {
        const int m = r / local_size;
        p.sends = ex.sends[m];
        p.recvs = ex.recvs[m];
      }
      reply(r, p);
    }
  }
}

}  // namespace defog
