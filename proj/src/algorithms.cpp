#include "defog/algorithms.hpp"

#include <cmath>

#include "defog/error.hpp"
#include "defog/topology.hpp"

namespace defog {

namespace {

constexpr double kDivergence = 1e12;
constexpr double kMinMass = 1e-12;

void check_common(Context& ctx, const LeastSquaresProblem& problem, const SolverOptions& o,
                  const char* method) {
  if (problem.size() != ctx.size())
    throw DimensionError(std::string(method) + ": problem has " + std::to_string(problem.size()) +
                         " ranks, runtime has " + std::to_string(ctx.size()));
  if (!(o.gamma >= 0.0) || !std::isfinite(o.gamma))
    throw InvalidArgument(std::string(method) + ": step size must be finite and nonnegative");
  if (o.iters < 0) throw InvalidArgument(std::string(method) + ": iteration count must be nonnegative");
  if (o.x0 && static_cast<int>(o.x0->size()) != problem.dim())
    throw DimensionError(std::string(method) + ": x0 has " + std::to_string(o.x0->size()) +
                         " entries, expected " + std::to_string(problem.dim()));
}

std::vector<double> initial(const LeastSquaresProblem& problem, const SolverOptions& o) {
  return o.x0 ? *o.x0 : std::vector<double>(problem.dim(), 0.0);
}

void check_divergence(std::span<const double> x, int iter, double gamma, const char* method) {
  double s = 0.0;
  for (double v : x) s += v * v;
  const double norm = std::sqrt(s);
  if (!std::isfinite(norm) || norm > kDivergence) {
    throw DegeneracyError(std::string(method) + " diverged at iteration " + std::to_string(iter) +
                          " (|x| = " + std::to_string(norm) + "); try a step size below " +
                          std::to_string(gamma));
  }
}

void set_static(Context& ctx, const Topology& topology, const char* method) {
  if (!ctx.set_topology(topology))
    throw DimensionError(std::string(method) + ": topology has " + std::to_string(topology.size()) +
                         " nodes, runtime has " + std::to_string(ctx.size()));
}

void notify(const IterateObserver& obs, int iter, const std::vector<double>& x, double mass = 1.0) {
  if (obs) obs(IterateInfo{iter, x, mass});
}

}  // namespace

std::vector<double> dgd(Context& ctx, const LeastSquaresProblem& problem, const Topology& topology,
                        const SolverOptions& o) {
  check_common(ctx, problem, o, "dgd");
  if (ctx.size() > 1) set_static(ctx, topology, "dgd");
  auto x = initial(problem, o);
  for (int k = 0; k < o.iters; ++k) {
    auto g = problem.gradient(ctx.rank(), x);
    for (std::size_t c = 0; c < x.size(); ++c) x[c] -= o.gamma * g[c];
    check_divergence(x, k, o.gamma, "dgd");
    x = ctx.neighbor_allreduce(Tensor::vector(std::move(x)), o.name).values();
    notify(o.observer, k + 1, x);
  }
  return x;
}

std::vector<double> exact_diffusion(Context& ctx, const LeastSquaresProblem& problem,
                                    const Topology& topology, const SolverOptions& o) {
  check_common(ctx, problem, o, "exact_diffusion");
  if (ctx.size() > 1) set_static(ctx, topology, "exact_diffusion");
  auto x = initial(problem, o);
  auto psi_prev = x;
  std::vector<double> psi(x.size()), phi(x.size());
  for (int k = 0; k < o.iters; ++k) {
    auto g = problem.gradient(ctx.rank(), x);
    for (std::size_t c = 0; c < x.size(); ++c) {
      psi[c] = x[c] - o.gamma * g[c];
      phi[c] = psi[c] + x[c] - psi_prev[c];
    }
    check_divergence(phi, k, o.gamma, "exact_diffusion");
    x = ctx.neighbor_allreduce(Tensor::vector(phi), o.name).values();
    psi_prev = psi;
    notify(o.observer, k + 1, x);
  }
  return x;
}

std::vector<double> push_sum_gradient_tracking(Context& ctx, const LeastSquaresProblem& problem,
                                               const Topology& base, const SolverOptions& o,
                                               bool one_peer) {
  check_common(ctx, problem, o, "push_sum_gradient_tracking");
  const int rank = ctx.rank();
  if (!one_peer && ctx.size() > 1) set_static(ctx, base, "push_sum_gradient_tracking");
  auto x = initial(problem, o);
  auto u = x;
  double v = 1.0;
  auto g = problem.gradient(rank, x);
  auto y = g;
  const std::size_t d = x.size();
  std::vector<double> w(d), q(d);
  for (int k = 0; k < o.iters; ++k) {
    std::optional<WeightScheme> scheme;
    if (one_peer && ctx.size() > 1) scheme = one_peer_scheme_of_graph(base, rank, k);
    for (std::size_t c = 0; c < d; ++c) w[c] = u[c] - o.gamma * y[c];
    check_divergence(w, k, o.gamma, "push_sum_gradient_tracking");
    auto hu = ctx.neighbor_allreduce_nonblocking(Tensor::vector(w), o.name + ".u", scheme);
    auto hv = ctx.neighbor_allreduce_nonblocking(Tensor::scalar(v), o.name + ".v", scheme);
    u = ctx.wait(hu).values();
    v = ctx.wait(hv)[0];
    if (!(v > kMinMass))
      throw DegeneracyError("push_sum_gradient_tracking: weight v = " + std::to_string(v) +
                            " at iteration " + std::to_string(k) + " on rank " + std::to_string(rank));
    for (std::size_t c = 0; c < d; ++c) x[c] = u[c] / v;
    auto g_new = problem.gradient(rank, x);
    for (std::size_t c = 0; c < d; ++c) q[c] = y[c] + g_new[c] - g[c];
    y = ctx.neighbor_allreduce(Tensor::vector(q), o.name + ".y", scheme).values();
    g = std::move(g_new);
    notify(o.observer, k + 1, x, v);
  }
  return x;
}

std::vector<double> async_push_sum_consensus(Context& ctx, const std::vector<double>& x0,
                                             const Topology& base, const AsyncPushSumOptions& o) {
  if (x0.empty()) throw InvalidArgument("async_push_sum_consensus: empty x0");
  if (o.iters < 0) throw InvalidArgument("async_push_sum_consensus: iteration count must be nonnegative");
  const std::size_t d = x0.size();
  auto ratio = [&](const std::vector<double>& ext, int iter) {
    const double p = ext[d];
    if (!(p > kMinMass))
      throw DegeneracyError("async_push_sum_consensus: p = " + std::to_string(p) + " at iteration " +
                            std::to_string(iter) + " on rank " + std::to_string(ctx.rank()));
    std::vector<double> y(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(d));
    for (double& v : y) v /= p;
    return y;
  };
  std::vector<double> ext = x0;
  ext.push_back(1.0);
  if (ctx.size() == 1) return ratio(ext, 0);

  set_static(ctx, base, "async_push_sum_consensus");
  const auto out = base.neighbors(ctx.rank()).out_neighbors;
  const double weight = 1.0 / (static_cast<double>(out.size()) + 1.0);
  std::map<int, double> dst;
  for (int r : out) dst[r] = weight;

  ctx.win_create(Tensor::vector(ext), o.window, true);
  std::optional<CommHandle> all_done;
  for (int k = 0;; ++k) {
    if (k == o.iters) all_done = ctx.allreduce_nonblocking(Tensor::scalar(1.0), o.window + ".done");
    if (all_done && ctx.poll(*all_done)) break;
    ctx.win_accumulate(Tensor::vector(ext), o.window, weight, dst, true);
    ext = ctx.win_update_then_collect(o.window).values();
    ratio(ext, k);
    if (o.compute_seconds > 0) ctx.compute(o.compute_seconds);
    if (o.observer) o.observer(k + 1, std::span<const double>(ext.data(), d), ext[d]);
  }
  ctx.wait(*all_done);
  ctx.barrier();
  ext = ctx.win_update_then_collect(o.window).values();
  ctx.win_free(o.window);
  return ratio(ext, o.iters);
}

// ---------------------------------------------------------------- ATC / AWC

const char* to_string(CommType type) {
  switch (type) {
    case CommType::kNeighborAllreduce: return "neighbor_allreduce";
    case CommType::kAllreduce: return "allreduce";
    case CommType::kHierarchical: return "hierarchical_neighbor_allreduce";
  }
  return "unknown";
}

namespace {

CommHandle launch(Context& ctx, CommType comm, const Tensor& t, const std::string& name,
                  const std::optional<WeightScheme>& scheme) {
  switch (comm) {
    case CommType::kNeighborAllreduce: return ctx.neighbor_allreduce_nonblocking(t, name, scheme);
    case CommType::kAllreduce: return ctx.allreduce_nonblocking(t, name);
    case CommType::kHierarchical: return ctx.hierarchical_neighbor_allreduce_nonblocking(t, name, scheme);
  }
  throw InvalidArgument("unknown communication type");
}

void check_step(const std::vector<Tensor>& x, const LayeredOracle& oracle, double gamma, const char* m) {
  if (x.empty()) throw InvalidArgument(std::string(m) + ": no layers");
  if (!oracle.gradient) throw InvalidArgument(std::string(m) + ": oracle has no gradient function");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw InvalidArgument(std::string(m) + ": step size must be finite and nonnegative");
}

Tensor layer_gradient(Context& ctx, const LayeredOracle& oracle, int l, const std::vector<Tensor>& x) {
  Tensor g = oracle.gradient(l, x);
  if (g.shape() != x[l].shape())
    throw ShapeError("layer " + std::to_string(l) + " gradient has shape " + shape_to_string(g.shape()) +
                     ", layer has " + shape_to_string(x[l].shape()));
  if (oracle.compute_seconds > 0) ctx.compute(oracle.compute_seconds);
  return g;
}

}  // namespace

std::vector<Tensor> atc_step(Context& ctx, const std::vector<Tensor>& x, const LayeredOracle& oracle,
                             double gamma, CommType comm, const std::optional<WeightScheme>& scheme,
                             const std::string& name) {
  check_step(x, oracle, gamma, "atc_step");
  const int layers = static_cast<int>(x.size());
  std::vector<CommHandle> handles(layers);
  for (int l = layers - 1; l >= 0; --l) {
    Tensor g = layer_gradient(ctx, oracle, l, x);
    Tensor t = x[l];
    for (std::size_t c = 0; c < t.size(); ++c) t[c] -= gamma * g[c];
    check_divergence(t.values(), l, gamma, "atc_step");
    handles[l] = launch(ctx, comm, t, name + "." + std::to_string(l), scheme);
  }
  std::vector<Tensor> out(layers);
  for (int l = layers - 1; l >= 0; --l) out[l] = ctx.wait(handles[l]);
  return out;
}

std::vector<Tensor> awc_step(Context& ctx, const std::vector<Tensor>& x, const LayeredOracle& oracle,
                             double gamma, CommType comm, const std::optional<WeightScheme>& scheme,
                             const std::string& name) {
  check_step(x, oracle, gamma, "awc_step");
  const int layers = static_cast<int>(x.size());
  std::vector<CommHandle> handles(layers);
  for (int l = 0; l < layers; ++l) handles[l] = launch(ctx, comm, x[l], name + "." + std::to_string(l), scheme);
  std::vector<Tensor> grads(layers);
  for (int l = layers - 1; l >= 0; --l) grads[l] = layer_gradient(ctx, oracle, l, x);
  std::vector<Tensor> out(layers);
  for (int l = 0; l < layers; ++l) {
    out[l] = ctx.wait(handles[l]);
    for (std::size_t c = 0; c < out[l].size(); ++c) out[l][c] -= gamma * grads[l][c];
    check_divergence(out[l].values(), l, gamma, "awc_step");
  }
  return out;
}

std::vector<Tensor> split_layers(std::span<const double> x, const std::vector<int>& layer_sizes) {
  std::size_t total = 0;
  for (int s : layer_sizes) {
    if (s < 1) throw InvalidArgument("layer sizes must be positive");
    total += static_cast<std::size_t>(s);
  }
  if (total != x.size())
    throw DimensionError("layer sizes add up to " + std::to_string(total) + ", vector has " +
                         std::to_string(x.size()) + " entries");
  std::vector<Tensor> out;
  std::size_t at = 0;
  for (int s : layer_sizes) {
    out.push_back(Tensor::vector(std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(at),
                                                     x.begin() + static_cast<std::ptrdiff_t>(at + s))));
    at += static_cast<std::size_t>(s);
  }
  return out;
}

std::vector<double> join_layers(const std::vector<Tensor>& layers) {
  std::vector<double> out;
  for (const auto& t : layers) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

LayeredOracle layered_least_squares_oracle(const LeastSquaresProblem& problem, int rank,
                                           std::vector<int> layer_sizes, double compute_seconds) {
  split_layers(std::vector<double>(problem.dim()), layer_sizes);
  LayeredOracle oracle;
  oracle.compute_seconds = compute_seconds;
  oracle.gradient = [&problem, rank, sizes = std::move(layer_sizes)](int layer, const std::vector<Tensor>& x) {
    auto g = problem.gradient(rank, join_layers(x));
    return split_layers(g, sizes).at(layer);
  };
  return oracle;
}

}  // namespace defog
