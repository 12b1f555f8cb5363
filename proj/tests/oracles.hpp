#pragma once

// Dense reference computations for the optimization tests, written against
// Eigen directly rather than the library's own helpers.

#include <Eigen/Dense>
#include <vector>

#include "defog/algorithms.hpp"

namespace defog::test {

struct DenseProblem {
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::VectorXd> b;
  int n() const { return static_cast<int>(a.size()); }
  int d() const { return static_cast<int>(a[0].cols()); }
  Eigen::VectorXd grad(int i, const Eigen::VectorXd& x) const { return a[i].transpose() * (a[i] * x - b[i]); }
};

inline DenseProblem dense(const LeastSquaresProblem& p) {
  DenseProblem out;
  for (int i = 0; i < p.size(); ++i) {
    const auto& m = p.a[i];
    Eigen::MatrixXd a(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) a(r, c) = m(r, c);
    out.a.push_back(a);
    out.b.push_back(Eigen::Map<const Eigen::VectorXd>(p.b[i].data(), static_cast<Eigen::Index>(p.b[i].size())));
  }
  return out;
}

inline Eigen::MatrixXd dense(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Global least squares solution from a QR factorization of the stacked data.
inline Eigen::VectorXd qr_solution(const DenseProblem& p) {
  Eigen::Index rows = 0;
  for (const auto& a : p.a) rows += a.rows();
  Eigen::MatrixXd a(rows, p.d());
  Eigen::VectorXd b(rows);
  Eigen::Index at = 0;
  for (int i = 0; i < p.n(); ++i) {
    a.middleRows(at, p.a[i].rows()) = p.a[i];
    b.segment(at, p.b[i].size()) = p.b[i];
    at += p.a[i].rows();
  }
  return a.colPivHouseholderQr().solve(b);
}

// Fixed point of X = W (X - gamma G(X)), one row per rank.
inline Eigen::MatrixXd dgd_fixed_point(const DenseProblem& p, const Eigen::MatrixXd& w, double gamma) {
  const int n = p.n(), d = p.d();
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(n * d, n * d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Eigen::MatrixXd h = p.a[j].transpose() * p.a[j];
      k.block(i * d, j * d, d, d) -= w(i, j) * (Eigen::MatrixXd::Identity(d, d) - gamma * h);
      rhs.segment(i * d, d) += gamma * w(i, j) * (p.a[j].transpose() * p.b[j]);
    }
  Eigen::VectorXd x = k.fullPivLu().solve(rhs);
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) out.row(i) = x.segment(i * d, d).transpose();
  return out;
}

// Rows of X after `iters` dense DGD / exact diffusion iterations from zero.
inline Eigen::MatrixXd dgd_dense(const DenseProblem& p, const Eigen::MatrixXd& w, double gamma, int iters) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(p.n(), p.d());
  for (int k = 0; k < iters; ++k) {
    Eigen::MatrixXd half(p.n(), p.d());
    for (int i = 0; i < p.n(); ++i) half.row(i) = (x.row(i).transpose() - gamma * p.grad(i, x.row(i).transpose())).transpose();
    x = w * half;
  }
  return x;
}

inline Eigen::MatrixXd ed_dense(const DenseProblem& p, const Eigen::MatrixXd& w, double gamma, int iters) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(p.n(), p.d());
  Eigen::MatrixXd psi_prev = x;
  for (int k = 0; k < iters; ++k) {
    Eigen::MatrixXd psi(p.n(), p.d());
    for (int i = 0; i < p.n(); ++i) psi.row(i) = (x.row(i).transpose() - gamma * p.grad(i, x.row(i).transpose())).transpose();
    x = w * (psi + x - psi_prev);
    psi_prev = psi;
  }
  return x;
}

}  // namespace defog::test
