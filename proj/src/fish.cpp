#include <cmath>
#include <numbers>
#include <random>

#include "defog/algorithms.hpp"
#include "defog/error.hpp"
#include "defog/topology.hpp"

namespace defog {

namespace {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

Vec2 unit(Vec2 v) {
  const double n = norm(v);
  return n > 0 ? Vec2{v.x / n, v.y / n} : Vec2{1.0, 0.0};
}

std::mt19937_64 stream(std::uint64_t seed, int rank, int iter, int purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rank), static_cast<std::uint32_t>(iter),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

Vec2 move(const FishConfig& c, Vec2 pos, Vec2 estimate, Vec2* velocity) {
  const Vec2 away = unit(Vec2{pos.x - estimate.x, pos.y - estimate.y});
  Vec2 v{0.0, 0.0};
  switch (c.motion) {
    case FishMotion::kStationary:
      break;
    case FishMotion::kEscape:
      v = {c.speed * away.x, c.speed * away.y};
      break;
    case FishMotion::kEncircle: {
      const double gap = c.orbit_radius - norm(Vec2{pos.x - estimate.x, pos.y - estimate.y});
      const Vec2 dir = unit(Vec2{-away.y + gap * away.x, away.x + gap * away.y});
      v = {c.speed * dir.x, c.speed * dir.y};
      break;
    }
  }
  *velocity = v;
  return {pos.x + v.x, pos.y + v.y};
}

}  // namespace

Vec2 fish_initial_position(const FishConfig& config, int rank) {
  auto rng = stream(config.seed, rank, -1, 0);
  std::uniform_real_distribution<double> u(-config.spread, config.spread);
  Vec2 p;
  p.x = u(rng);
  p.y = u(rng);
  return p;
}

std::pair<double, double> fish_observation(const FishConfig& config, int rank, int iter, Vec2 position) {
  const Vec2 rel{position.x - config.predator.x, position.y - config.predator.y};
  double d = norm(rel);
  double theta = d > 0 ? std::atan2(rel.y, rel.x) : 0.0;
  if (config.distance_noise > 0 || config.angle_noise > 0) {
    auto rng = stream(config.seed, rank, iter, 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    d += config.distance_noise * normal(rng);
    theta += config.angle_noise * normal(rng);
  }
  return {d, theta};
}

FishState dsgd_time_varying(Context& ctx, const FishConfig& c, const FishObserver& observer) {
  if (!(c.gamma >= 0) || c.iters < 0) throw InvalidArgument("dsgd_time_varying: invalid step size or iterations");
  const int n = ctx.size();
  const int rank = ctx.rank();
  FishState s;
  s.position = fish_initial_position(c, rank);
  s.estimate = {c.estimate_offset, c.estimate_offset};

  for (int k = 0; k < c.iters; ++k) {
    // Neighbor discovery from everyone's current position.
    std::vector<Vec2> loc(n);
    if (n > 1) {
      auto all = ctx.allgather(Tensor::vector({s.position.x, s.position.y}), "fish.loc");
      for (int r = 0; r < n; ++r) loc[r] = {all[r][0], all[r][1]};
    } else {
      loc[0] = s.position;
    }
    auto linked = [&](int i, int j) {
      return i != j && (c.threshold <= 0 ||
                        norm(Vec2{loc[i].x - loc[j].x, loc[i].y - loc[j].y}) <= c.threshold);
    };
    std::vector<int> degree(n, 0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) degree[i] += linked(i, j) ? 1 : 0;
    std::set<int> nb;
    std::map<int, int> nb_degree;
    for (int j = 0; j < n; ++j)
      if (linked(rank, j)) {
        nb.insert(j);
        nb_degree[j] = degree[j];
      }
    WeightScheme scheme = metropolis_hastings_weights(nb, nb_degree, degree[rank]);

    auto [d, theta] = fish_observation(c, rank, k, s.position);
    s.distance = d;
    s.angle = theta;
    const Vec2 u{std::cos(theta), std::sin(theta)};
    const double residual = d - (u.x * (s.position.x - s.estimate.x) + u.y * (s.position.y - s.estimate.y));
    s.estimate.x -= c.gamma * residual * u.x;
    s.estimate.y -= c.gamma * residual * u.y;

    if (n > 1) {
      auto w = ctx.neighbor_allreduce(Tensor::vector({s.estimate.x, s.estimate.y}), "fish.w", scheme);
      s.estimate = {w[0], w[1]};
    }
    if (!std::isfinite(s.estimate.x) || !std::isfinite(s.estimate.y) || norm(s.estimate) > 1e12)
      throw DegeneracyError("dsgd_time_varying diverged at iteration " + std::to_string(k) +
                            "; try a smaller step size");
    s.position = move(c, s.position, s.estimate, &s.velocity);
    if (observer) observer(k + 1, s);
  }
  return s;
}

}  // namespace defog
