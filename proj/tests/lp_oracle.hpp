#pragma once
// Independent LP ground truth: enumerate basic solutions of A x <= b and keep
// the feasible vertex minimizing c'x. Exponential in n, fine for n <= 3.

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <sagin/conic.hpp>

struct DenseLp {
  Eigen::MatrixXd A;  // m x n, rows A_i x <= b_i
  Eigen::VectorXd b;
  Eigen::VectorXd c;  // minimize c'x
};

// Random bounded LP: box 0 <= x <= ub plus a few random halfspaces kept only
// when they leave the box center feasible (so the program is never empty).
inline DenseLp random_lp(std::mt19937& gen, int n, int extra_rows) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> ub(0.5, 2.0);
  DenseLp lp;
  const int m = 2 * n + extra_rows;
  lp.A.setZero(m, n);
  lp.b.setZero(m);
  lp.c.setZero(n);
  Eigen::VectorXd hi(n), center(n);
  for (int j = 0; j < n; ++j) {
    hi(j) = ub(gen);
    lp.A(2 * j, j) = 1.0;
    lp.b(2 * j) = hi(j);
    lp.A(2 * j + 1, j) = -1.0;
    lp.b(2 * j + 1) = 0.0;
    lp.c(j) = u(gen);
    center(j) = hi(j) / 2.0;
  }
  for (int r = 0; r < extra_rows; ++r) {
    Eigen::VectorXd a(n);
    for (int j = 0; j < n; ++j) a(j) = u(gen);
    double rhs = a.dot(center) + std::abs(u(gen)) + 0.05;  // strictly feasible at center
    lp.A.row(2 * n + r) = a.transpose();
    lp.b(2 * n + r) = rhs;
  }
  return lp;
}

inline std::optional<double> vertex_enumeration_min(const DenseLp& lp, double feas_tol = 1e-9) {
  const int m = static_cast<int>(lp.A.rows());
  const int n = static_cast<int>(lp.A.cols());
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<int> idx(n);
  // iterate all n-subsets of the m rows
  std::vector<int> comb(n);
  for (int i = 0; i < n; ++i) comb[i] = i;
  while (true) {
    Eigen::MatrixXd As(n, n);
    Eigen::VectorXd bs(n);
    for (int i = 0; i < n; ++i) {
      As.row(i) = lp.A.row(comb[i]);
      bs(i) = lp.b(comb[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(As);
    if (lu.isInvertible()) {
      const Eigen::VectorXd x = lu.solve(bs);
      if (((lp.A * x - lp.b).array() <= feas_tol).all()) {
        best = std::min(best, lp.c.dot(x));
        found = true;
      }
    }
    // next combination
    int i = n - 1;
    while (i >= 0 && comb[i] == m - n + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < n; ++j) comb[j] = comb[j - 1] + 1;
  }
  if (!found) return std::nullopt;
  return best;
}

inline sagin::conic::ConeProgram to_cone_program(const DenseLp& lp) {
  using namespace sagin::conic;
  const int m = static_cast<int>(lp.A.rows());
  const int n = static_cast<int>(lp.A.cols());
  ConeProgram prog(n);
  const int row0 = prog.add_nonneg(m);  // b - A x >= 0
  for (int i = 0; i < m; ++i) {
    prog.add_offset(row0 + i, lp.b(i));
    for (int j = 0; j < n; ++j)
      if (lp.A(i, j) != 0.0) prog.add_entry(row0 + i, j, -lp.A(i, j));
  }
  for (int j = 0; j < n; ++j) prog.add_objective(j, lp.c(j));
  return prog;
}
