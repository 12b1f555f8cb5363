#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "defog/algorithms.hpp"
#include "defog/error.hpp"

namespace defog {

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

void check_shape(int n, int rows, int dim) {
  if (n < 1 || rows < 1 || dim < 1)
    throw InvalidArgument("least squares problem needs n, rows and dim >= 1");
}

}  // namespace

std::vector<double> LeastSquaresProblem::gradient(int rank, std::span<const double> x) const {
  const Matrix& m = a.at(rank);
  if (x.size() != m.cols())
    throw DimensionError("gradient: x has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(m.cols()));
  const auto& bi = b[rank];
  std::vector<double> g(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double res = -bi[r];
    for (std::size_t c = 0; c < m.cols(); ++c) res += m(r, c) * x[c];
    for (std::size_t c = 0; c < m.cols(); ++c) g[c] += m(r, c) * res;
  }
  return g;
}

double LeastSquaresProblem::lipschitz() const {
  double l = 0.0;
  for (const auto& m : a) {
    Eigen::MatrixXd e = to_eigen(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e.transpose() * e, Eigen::EigenvaluesOnly);
    l = std::max(l, solver.eigenvalues().maxCoeff());
  }
  return l;
}

LeastSquaresProblem make_least_squares(int n, int rows, int dim, double noise, std::uint64_t seed) {
  check_shape(n, rows, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> truth(dim);
  for (auto& v : truth) v = normal(rng);
  LeastSquaresProblem p;
  for (int i = 0; i < n; ++i) {
    Matrix m(rows, dim);
    std::vector<double> b(rows);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < dim; ++c) m(r, c) = normal(rng);
    for (int r = 0; r < rows; ++r) {
      double v = 0.0;
      for (int c = 0; c < dim; ++c) v += m(r, c) * truth[c];
      b[r] = v + noise * normal(rng);
    }
    p.a.push_back(std::move(m));
    p.b.push_back(std::move(b));
  }
  return p;
}

LeastSquaresProblem make_homogeneous_least_squares(int n, int rows, int dim, double noise,
                                                   std::uint64_t seed) {
  check_shape(n, rows, dim);
  auto one = make_least_squares(1, rows, dim, noise, seed);
  LeastSquaresProblem p;
  for (int i = 0; i < n; ++i) {
    p.a.push_back(one.a[0]);
    p.b.push_back(one.b[0]);
  }
  return p;
}

std::vector<double> solve_least_squares(const LeastSquaresProblem& problem) {
  const int d = problem.dim();
  if (d == 0) throw InvalidArgument("empty least squares problem");
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < problem.size(); ++i) {
    Eigen::MatrixXd a = to_eigen(problem.a[i]);
    Eigen::Map<const Eigen::VectorXd> b(problem.b[i].data(), static_cast<Eigen::Index>(problem.b[i].size()));
    h += a.transpose() * a;
    c += a.transpose() * b;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success)
    throw DegeneracyError("normal equations are not positive definite; add rows or ranks");
  Eigen::VectorXd x = llt.solve(c);
  return {x.data(), x.data() + x.size()};
}

}  // namespace defog
