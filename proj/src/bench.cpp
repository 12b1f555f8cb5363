#include "defog/bench.hpp"

#include <algorithm>
#include <cmath>

#include "defog/error.hpp"
#include "defog/topology.hpp"

namespace defog {

double comm_cost(CostScheme scheme, const CostModelInput& in) {
  if (!(in.n > 0) || !(in.message > 0) || !(in.bandwidth > 0) || !(in.latency >= 0) ||
      !std::isfinite(in.n + in.message + in.bandwidth + in.latency)) {
    throw InvalidArgument("cost model needs n, message size and bandwidth > 0 and latency >= 0");
  }
  const double transfer = in.message / in.bandwidth;
  switch (scheme) {
    case CostScheme::kParameterServer: return in.n * transfer + in.n * in.latency;
    case CostScheme::kRingAllreduce: return 2.0 * transfer + 2.0 * in.n * in.latency;
    case CostScheme::kBytePS: return transfer + in.n * in.latency;
    case CostScheme::kPartialAverage: return transfer + in.latency;
  }
  throw InvalidArgument("unknown cost scheme");
}

const std::vector<std::string>& cost_scheme_names() {
  static const std::vector<std::string> names{"ps", "ring_allreduce", "byteps", "partial_avg"};
  return names;
}

CostScheme cost_scheme_from_name(const std::string& name) {
  if (name == "ps") return CostScheme::kParameterServer;
  if (name == "ring_allreduce" || name == "ring") return CostScheme::kRingAllreduce;
  if (name == "byteps") return CostScheme::kBytePS;
  if (name == "partial_avg") return CostScheme::kPartialAverage;
  throw ConfigError("unknown cost scheme '" + name + "' (valid: ps, ring_allreduce, byteps, partial_avg)");
}

const char* to_string(CostScheme scheme) {
  switch (scheme) {
    case CostScheme::kParameterServer: return "ps";
    case CostScheme::kRingAllreduce: return "ring_allreduce";
    case CostScheme::kBytePS: return "byteps";
    case CostScheme::kPartialAverage: return "partial_avg";
  }
  return "unknown";
}

BenchOp bench_op_from_name(const std::string& name) {
  if (name == "allreduce") return BenchOp::kAllreduce;
  if (name == "neighbor_allreduce") return BenchOp::kNeighborAllreduce;
  if (name == "dynamic_neighbor_allreduce") return BenchOp::kDynamicNeighborAllreduce;
  throw ConfigError("unknown benchmark op '" + name +
                    "' (valid: allreduce, neighbor_allreduce, dynamic_neighbor_allreduce)");
}

const char* to_string(BenchOp op) {
  switch (op) {
    case BenchOp::kAllreduce: return "allreduce";
    case BenchOp::kNeighborAllreduce: return "neighbor_allreduce";
    case BenchOp::kDynamicNeighborAllreduce: return "dynamic_neighbor_allreduce";
  }
  return "unknown";
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw InvalidArgument("percentile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

RunRecord microbench(Context& ctx, BenchOp op, std::size_t payload_bytes, int repeats, int warmup) {
  if (payload_bytes < sizeof(double))
    throw InvalidArgument("benchmark payload must be at least 8 bytes, got " + std::to_string(payload_bytes));
  if (repeats < 1) throw InvalidArgument("benchmark needs at least one repetition");
  if (warmup < 0) throw InvalidArgument("warm-up count must be nonnegative");
  const int n = ctx.size();

  const Tensor x(Shape{static_cast<std::int64_t>(payload_bytes / sizeof(double))}, ctx.rank() + 1.0);
  std::int64_t round = 0;
  auto once = [&] {
    switch (op) {
      case BenchOp::kAllreduce:
        ctx.allreduce(x, "bench.allreduce");
        break;
      case BenchOp::kNeighborAllreduce:
        ctx.neighbor_allreduce(x, "bench.neighbor_allreduce");
        break;
      case BenchOp::kDynamicNeighborAllreduce:
        ctx.neighbor_allreduce(x, "bench.dynamic_neighbor_allreduce",
                               n > 1 ? std::optional(one_peer_exponential_scheme(n, ctx.rank(), round))
                                     : std::nullopt);
        break;
    }
    ++round;
  };

  for (int i = 0; i < warmup; ++i) once();
  RunRecord rec;
  rec.scheme = to_string(op);
  rec.n = n;
  rec.iters = repeats;
  rec.payload_bytes = x.bytes();
  for (int i = 0; i < repeats; ++i) {
    ctx.barrier();
    const auto c0 = ctx.counters();
    const double t0 = ctx.now();
    once();
    const double t1 = ctx.now();
    const auto c1 = ctx.counters();
    rec.samples.push_back(t1 - t0);
    rec.messages += c1.data_messages - c0.data_messages;
    rec.bytes += c1.data_bytes - c0.data_bytes;
    rec.control_messages += (c1.messages_sent - c1.data_messages) - (c0.messages_sent - c0.data_messages);
  }
  for (double s : rec.samples) rec.wall_time += s;
  rec.mean = rec.wall_time / repeats;
  rec.lo = percentile(rec.samples, 0.05);
  rec.hi = percentile(rec.samples, 0.95);
  return rec;
}

}  // namespace defog
