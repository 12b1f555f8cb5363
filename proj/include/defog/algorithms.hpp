#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defog/context.hpp"
#include "defog/graph.hpp"
#include "defog/matrix.hpp"

namespace defog {

// ---------------------------------------------------------------- problems

// Distributed least squares: minimize (1/2n) sum_i ||A_i x - b_i||^2.
struct LeastSquaresProblem {
  std::vector<Matrix> a;               // per rank, m x d
  std::vector<std::vector<double>> b;  // per rank, length m

  int size() const { return static_cast<int>(a.size()); }
  int dim() const { return a.empty() ? 0 : static_cast<int>(a[0].cols()); }

  // Local gradient A_i^T (A_i x - b_i).
  std::vector<double> gradient(int rank, std::span<const double> x) const;
  // max_i lambda_max(A_i^T A_i): every local gradient is L-Lipschitz.
  double lipschitz() const;
};

// A_i entries standard normal, b_i = A_i x_true + noise * N(0, 1), with
// x_true standard normal. Identical seeds give identical problems.
LeastSquaresProblem make_least_squares(int n, int rows, int dim, double noise, std::uint64_t seed);

// Same local data on every rank.
LeastSquaresProblem make_homogeneous_least_squares(int n, int rows, int dim, double noise,
                                                   std::uint64_t seed);

// Global minimizer from the normal equations (sum A_i^T A_i) x = sum A_i^T b_i.
// Throws DegeneracyError when the system is not positive definite.
std::vector<double> solve_least_squares(const LeastSquaresProblem& problem);

// ---------------------------------------------------------------- drivers

struct IterateInfo {
  int iter = 0;                  // 1-based count of completed iterations
  std::span<const double> x;     // this rank's iterate after the iteration
  double mass = 1.0;             // push-sum weight v_i (1 for other methods)
};
using IterateObserver = std::function<void(const IterateInfo&)>;

struct SolverOptions {
  double gamma = 1e-2;
  int iters = 100;
  std::optional<std::vector<double>> x0;  // initial iterate; zeros when absent
  IterateObserver observer;
  std::string name = "x";                 // collective name prefix
};

// Decentralized gradient descent over a static topology:
//   x <- neighbor_allreduce(x - gamma * grad_i(x)).
// Throws DegeneracyError when ||x|| exceeds 1e12 or becomes non-finite.
std::vector<double> dgd(Context& ctx, const LeastSquaresProblem& problem, const Topology& topology,
                        const SolverOptions& options);

// Exact diffusion: psi = x - gamma grad(x); phi = psi + x - psi_prev;
// x <- neighbor_allreduce(phi). psi_prev starts at x0.
std::vector<double> exact_diffusion(Context& ctx, const LeastSquaresProblem& problem,
                                    const Topology& topology, const SolverOptions& options);

// Push-sum gradient tracking. W_k comes from the one-peer schedule of
// `base` (one_peer = true) or from base's static W:
//   u <- W_k (u - gamma y), v <- W_k v, x = u / v,
//   y <- W_k (y + g(x_new) - g(x_old)),  v0 = 1, y0 = g(x0).
// The observer's mass field carries v_i. Throws DegeneracyError when v_i <= 1e-12.
std::vector<double> push_sum_gradient_tracking(Context& ctx, const LeastSquaresProblem& problem,
                                               const Topology& base, const SolverOptions& options,
                                               bool one_peer = true);

// ---------------------------------------------------------------- fish school

struct Vec2 {
  double x = 0;
  double y = 0;
};

struct FishState {
  Vec2 position;
  Vec2 velocity;
  Vec2 estimate;     // predator location estimate
  double distance = 0;  // observed distance to the predator
  double angle = 0;     // observed azimuth, direction u = [cos, sin]
};

enum class FishMotion { kStationary, kEscape, kEncircle };

struct FishConfig {
  Vec2 predator{0.0, 0.0};
  double gamma = 0.1;
  int iters = 200;
  double threshold = 3.0;       // neighbor radius; <= 0 connects every pair
  double distance_noise = 0.0;  // std of the distance observation
  double angle_noise = 0.0;     // std of the azimuth observation (radians)
  FishMotion motion = FishMotion::kStationary;
  double speed = 0.05;          // distance per iteration
  double orbit_radius = 2.0;    // encircle target radius
  double spread = 5.0;          // initial positions uniform in [-spread, spread]^2
  double estimate_offset = 5.0; // initial estimate offset from the origin
  std::uint64_t seed = 7;
};

// Deterministic initial position of one fish.
Vec2 fish_initial_position(const FishConfig& config, int rank);

// Noisy (distance, azimuth) observation of the predator by fish `rank` at
// iteration `iter`; the noise stream depends only on (seed, rank, iter).
std::pair<double, double> fish_observation(const FishConfig& config, int rank, int iter, Vec2 position);

// Per-iteration hook: (iteration, this fish after the step).
using FishObserver = std::function<void(int, const FishState&)>;

// Decentralized SGD over a time-varying neighborhood graph. Each round the
// fish exchange positions (allgather), pick neighbors within `threshold`,
// take a local gradient step on f_i(w) = 1/2 [d_i - u_i^T (x_i - w)]^2,
// pull-average the estimates with Metropolis-Hastings weights, then move.
// Escape moves straight away from the estimate; encircle orbits it
// tangentially while correcting towards orbit_radius.
FishState dsgd_time_varying(Context& ctx, const FishConfig& config, const FishObserver& observer = {});

// ---------------------------------------------------------------- async push-sum

struct AsyncPushSumOptions {
  int iters = 200;               // minimum iterations per rank
  double compute_seconds = 0.0;  // local work per iteration (virtual on sim)
  std::string window = "push_sum";
  // Called after every iteration with (iteration, local x, local p).
  std::function<void(int, std::span<const double>, double)> observer;
};

// Asynchronous push-sum consensus over the out-neighbors of `base`. Every
// rank repeatedly accumulates (1/(outdeg+1)) [x; p] into its out-neighbors'
// windows under the owner's mutex and folds received mass in with
// win_update_then_collect. `iters` is a per-rank minimum: a rank that is
// done keeps gossiping until a nonblocking allreduce reports that every rank
// is done, so no rank drains its mass into idle peers. Finishes with
// barrier, one collect and win_free. Returns y = x / p. Throws
// DegeneracyError when p <= 1e-12.
std::vector<double> async_push_sum_consensus(Context& ctx, const std::vector<double>& x0,
                                             const Topology& base, const AsyncPushSumOptions& options);

// ---------------------------------------------------------------- ATC / AWC

// Per-layer gradient oracle standing in for backpropagation. gradient(l, x)
// returns the gradient block of layer l given all layers. Gradients are
// produced from the last layer to the first, each costing
// compute_seconds of (virtual) time.
struct LayeredOracle {
  std::function<Tensor(int layer, const std::vector<Tensor>& x)> gradient;
  double compute_seconds = 0.0;
};

enum class CommType { kNeighborAllreduce, kAllreduce, kHierarchical };

const char* to_string(CommType type);

// Adapt-then-combine: layer l's communication of x_l - gamma g_l starts as
// soon as g_l is ready (reverse layer order); waits happen at step end.
std::vector<Tensor> atc_step(Context& ctx, const std::vector<Tensor>& x, const LayeredOracle& oracle,
                             double gamma, CommType comm, const std::optional<WeightScheme>& scheme = std::nullopt,
                             const std::string& name = "atc");

// Adapt-while-combine: every layer's communication of x_l starts before the
// gradients are computed; result is combine(x_l) - gamma g_l(x).
std::vector<Tensor> awc_step(Context& ctx, const std::vector<Tensor>& x, const LayeredOracle& oracle,
                             double gamma, CommType comm, const std::optional<WeightScheme>& scheme = std::nullopt,
                             const std::string& name = "awc");

// Layered least-squares oracle (keeps a reference to `problem`): splits the d coordinates of the problem's
// gradient into consecutive blocks of the given sizes.
LayeredOracle layered_least_squares_oracle(const LeastSquaresProblem& problem, int rank,
                                           std::vector<int> layer_sizes, double compute_seconds);

// Splits x into consecutive layers / joins them back.
std::vector<Tensor> split_layers(std::span<const double> x, const std::vector<int>& layer_sizes);
std::vector<double> join_layers(const std::vector<Tensor>& layers);

}  // namespace defog
