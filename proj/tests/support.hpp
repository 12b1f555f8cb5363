#pragma once

// Test-side oracles and helpers. Deliberately independent of the library's
// own matrix code so that tests do not check the runtime against itself.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "defog/context.hpp"
#include "defog/graph.hpp"
#include "defog/sim.hpp"
#include "defog/tensor.hpp"

namespace defog::test {

using Rows = std::vector<std::vector<double>>;

// out[i] = sum_j w[i][j] * x[j]
inline Rows naive_mix(const std::vector<std::vector<double>>& w, const Rows& x) {
  const std::size_t n = w.size();
  Rows out(n, std::vector<double>(x[0].size(), 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < x[j].size(); ++k) out[i][k] += w[i][j] * x[j][k];
  return out;
}

inline std::vector<std::vector<double>> to_rows(const Matrix& m) {
  std::vector<std::vector<double>> r(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

inline Rows random_rows(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> nd;
  Rows x(n, std::vector<double>(d));
  for (auto& row : x)
    for (auto& v : row) v = nd(rng);
  return x;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline double norm2(const std::vector<double>& a) {
  double s = 0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

// Runs fn on every rank of a fresh simulated world and collects one result per rank.
template <class T>
std::vector<T> per_rank(int n, const SimConfig& cfg, const std::function<T(Context&)>& fn) {
  std::vector<T> out(n);
  SimWorld w(n, cfg);
  w.run([&](Context& ctx) { out[ctx.rank()] = fn(ctx); });
  return out;
}

enum class SchemeStyle { kPush, kPull, kPushPull };

// A random directed graph plus per-rank schemes in the requested style, and
// the dense matrix those schemes describe: W[i][i] = self_i and
// W[i][j] = r_ij * s_ji with an undeclared side counting as 1.
struct RandomSchemes {
  std::vector<WeightScheme> schemes;
  std::vector<std::vector<double>> w;
};

inline RandomSchemes random_schemes(std::mt19937_64& rng, int n, SchemeStyle style) {
  std::bernoulli_distribution edge(0.4);
  std::uniform_real_distribution<double> weight(0.0, 1.0);
  RandomSchemes out;
  out.schemes.resize(n);
  out.w.assign(n, std::vector<double>(n, 0.0));
  std::vector<std::set<int>> in(n), outn(n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i != j && edge(rng)) {
        outn[j].insert(i);
        in[i].insert(j);
      }
  std::vector<std::map<int, double>> s(n), r(n);
  for (int i = 0; i < n; ++i) {
    auto& sc = out.schemes[i];
    sc.self_weight = weight(rng);
    out.w[i][i] = *sc.self_weight;
    if (style != SchemeStyle::kPull) {
      for (int k : outn[i]) s[i][k] = weight(rng);
      sc.dst_weights = s[i];
    }
    if (style != SchemeStyle::kPush) {
      for (int j : in[i]) r[i][j] = weight(rng);
      sc.src_weights = r[i];
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j : in[i]) {
      const double rij = style == SchemeStyle::kPush ? 1.0 : r[i].at(j);
      const double sji = style == SchemeStyle::kPull ? 1.0 : s[j].at(i);
      out.w[i][j] = rij * sji;
    }
  return out;
}

// Window mass of `name` summed over local tensors, buffers, accumulates
// queued behind a mutex and accumulates in flight.
inline std::vector<double> system_mass(const SimWorld& w, const std::string& name, std::size_t d) {
  std::vector<double> m(d, 0.0);
  auto add = [&](std::span<const double> v) {
    for (std::size_t k = 0; k < d; ++k) m[k] += v[k];
  };
  for (int r = 0; r < w.size(); ++r) {
    const auto& wins = w.engine(r).windows();
    auto it = wins.find(name);
    if (it == wins.end()) continue;
    add(it->second.local.data());
    for (const auto& [j, b] : it->second.buffers) add(b.data());
    for (const auto& [j, t] : it->second.unsent) add(t.data());
  }
  for (const Envelope* e : w.in_flight())
    if (e->name == name && e->kind == MsgKind::kWindowAccumulate) add(e->payload);
  return m;
}

}  // namespace defog::test
