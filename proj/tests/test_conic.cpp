#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <sagin/conic.hpp>

#include "lp_oracle.hpp"

using namespace sagin::conic;

namespace {

ConeSolution solve_ok(const ConeProgram& p, double eps = 1e-8) {
  SolveSettings st;
  st.eps = eps;
  st.max_iters = 200000;
  const ConeSolution s = solve(p, st);
  REQUIRE(s.status == SolveStatus::Optimal);
  return s;
}

}  // namespace

TEST_CASE("bounded LP with hand optimum") {
  // max x + y  s.t. x <= 1, y <= 2, x,y >= 0  -> 3 at (1, 2)
  ConeProgram p(2);
  const int r = p.add_nonneg(4);
  p.add_offset(r + 0, 1.0);
  p.add_entry(r + 0, 0, -1.0);
  p.add_offset(r + 1, 2.0);
  p.add_entry(r + 1, 1, -1.0);
  p.add_entry(r + 2, 0, 1.0);
  p.add_entry(r + 3, 1, 1.0);
  p.add_objective(0, -1.0);
  p.add_objective(1, -1.0);
  const auto s = solve_ok(p);
  CHECK(-s.objective == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(s.v(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(s.v(1) == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("equality rows restrict the feasible set") {
  // max x  s.t. x + y = 2, x <= 1.5, y >= 0 -> x = 1.5
  ConeProgram p(2);
  const int z = p.add_zero(1);
  p.add_offset(z, -2.0);
  p.add_entry(z, 0, 1.0);
  p.add_entry(z, 1, 1.0);
  const int r = p.add_nonneg(2);
  p.add_offset(r, 1.5);
  p.add_entry(r, 0, -1.0);
  p.add_entry(r + 1, 1, 1.0);
  p.add_objective(0, -1.0);
  const auto s = solve_ok(p);
  CHECK(s.v(0) == doctest::Approx(1.5).epsilon(1e-5));
  CHECK(s.v(1) == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("second-order cone epigraph of a norm") {
  // min t s.t. t >= ||(3,4)|| -> 5; SOC rows [t; 3; 4]
  ConeProgram p(1);
  const int r = p.add_soc(3);
  p.add_entry(r, 0, 1.0);
  p.add_offset(r + 1, 3.0);
  p.add_offset(r + 2, 4.0);
  p.add_objective(0, 1.0);
  const auto s = solve_ok(p);
  CHECK(s.v(0) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("rotated cone epigraph of a squared norm") {
  // min u s.t. 2 u * 1 >= 3^2 + 4^2 -> 12.5; rows [u; 1; 3; 4]
  ConeProgram p(1);
  const int r = p.add_rsoc(4);
  p.add_entry(r, 0, 1.0);
  p.add_offset(r + 1, 1.0);
  p.add_offset(r + 2, 3.0);
  p.add_offset(r + 3, 4.0);
  p.add_objective(0, 1.0);
  const auto s = solve_ok(p);
  CHECK(s.v(0) == doctest::Approx(12.5).epsilon(1e-6));
}

TEST_CASE("exponential cone recovers the logarithm") {
  // max r s.t. e^r <= x, x <= e  ->  r* = 1
  ConeProgram p(2);  // vars: r, x
  const int e = p.add_exp();
  p.add_entry(e + 0, 0, 1.0);   // r
  p.add_offset(e + 1, 1.0);     // 1
  p.add_entry(e + 2, 1, 1.0);   // x
  const int r = p.add_nonneg(1);
  p.add_offset(r, std::exp(1.0));
  p.add_entry(r, 1, -1.0);
  p.add_objective(0, -1.0);
  const auto s = solve_ok(p);
  CHECK(s.v(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(s.v(1) == doctest::Approx(std::exp(1.0)).epsilon(1e-5));
}

TEST_CASE("infeasibility and unboundedness certificates") {
  {
    // x >= 1 and -x >= 0 cannot hold together
    ConeProgram p(1);
    const int r = p.add_nonneg(2);
    p.add_entry(r, 0, 1.0);
    p.add_offset(r, -1.0);
    p.add_entry(r + 1, 0, -1.0);
    p.add_objective(0, 1.0);
    const auto s = solve(p, {});
    CHECK(s.status == SolveStatus::Infeasible);
  }
  {
    // min -x s.t. x >= 0 runs away
    ConeProgram p(1);
    const int r = p.add_nonneg(1);
    p.add_entry(r, 0, 1.0);
    p.add_objective(0, -1.0);
    const auto s = solve(p, {});
    CHECK(s.status == SolveStatus::Unbounded);
  }
}

TEST_CASE("quadratic projection against an independent simplex algorithm") {
  // min ||x - a||^2 over the probability simplex, via the rotated cone
  const Eigen::Vector3d a(0.9, 0.9, -0.3);
  ConeProgram p(4);  // x0 x1 x2 q
  const int z = p.add_zero(1);
  p.add_offset(z, -1.0);
  for (int j = 0; j < 3; ++j) p.add_entry(z, j, 1.0);
  const int nn = p.add_nonneg(3);
  for (int j = 0; j < 3; ++j) p.add_entry(nn + j, j, 1.0);
  const int r = p.add_rsoc(5);  // [q; 1; x - a]
  p.add_entry(r, 3, 1.0);
  p.add_offset(r + 1, 1.0);
  for (int j = 0; j < 3; ++j) {
    p.add_entry(r + 2 + j, j, 1.0);
    p.add_offset(r + 2 + j, -a(j));
  }
  p.add_objective(3, 1.0);
  const auto s = solve_ok(p);

  // sort-based simplex projection (independent oracle)
  Eigen::Vector3d u = a;
  std::sort(u.data(), u.data() + 3, std::greater<double>());
  double css = 0.0, theta = 0.0;
  for (int i = 0; i < 3; ++i) {
    css += u(i);
    if (u(i) - (css - 1.0) / (i + 1) > 0) theta = (css - 1.0) / (i + 1);
  }
  const Eigen::Vector3d want = (a.array() - theta).max(0.0);
  for (int j = 0; j < 3; ++j) CHECK(s.v(j) == doctest::Approx(want(j)).epsilon(1e-5));
}

TEST_CASE("optimality conditions hold at the reported solution") {
  std::mt19937 gen(123);
  for (int trial = 0; trial < 5; ++trial) {
    const DenseLp lp = random_lp(gen, 3, 3);
    const ConeProgram p = to_cone_program(lp);
    const auto s = solve_ok(p);
    const KktResiduals k = kkt_residuals(p, s);
    CHECK(k.primal <= 1e-6);
    CHECK(k.dual_cone <= 1e-6);
    CHECK(k.stationarity <= 1e-6);
    CHECK(k.gap <= 1e-6);
    // hand stationarity cross-check: c == F' y
    const Eigen::VectorXd ft_y = Eigen::VectorXd(p.matrix().transpose() * s.y);
    CHECK((p.objective() - ft_y).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("matches vertex enumeration on random LPs") {
  std::mt19937 gen(2024);
  int solved = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + (trial % 2);
    const DenseLp lp = random_lp(gen, n, 2 + (trial % 3));
    const auto truth = vertex_enumeration_min(lp);
    REQUIRE(truth.has_value());
    const auto s = solve_ok(to_cone_program(lp));
    CHECK(s.objective == doctest::Approx(*truth).epsilon(1e-5).scale(1.0));
    ++solved;
  }
  CHECK(solved == 10);
}

TEST_CASE("warm start reproduces the cold optimum") {
  std::mt19937 gen(5);
  const DenseLp lp = random_lp(gen, 3, 4);
  const ConeProgram p = to_cone_program(lp);
  const auto cold = solve_ok(p);
  SolveSettings st;
  st.eps = 1e-8;
  st.warm_v = cold.v;
  st.warm_y = cold.y;
  st.warm_slack = cold.slack;
  const auto warm = solve(p, st);
  REQUIRE(warm.status == SolveStatus::Optimal);
  CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-6));
  CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("cone membership and projections") {
  CHECK(in_exp(0.0, 1.0, 1.0));           // 1*e^0 <= 1
  CHECK(in_exp(1.0, 1.0, std::exp(1.0), 1e-12));
  CHECK_FALSE(in_exp(1.0, 1.0, 2.0));     // e > 2
  CHECK(in_exp_dual(-1.0, 1.0, 1.0));

  // projecting a member returns it
  const auto q = project_exp({0.5, 1.0, 2.0});
  CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(q[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(q[2] == doctest::Approx(2.0).epsilon(1e-9));
  // projecting an outsider lands on the cone
  const auto o = project_exp({2.0, 1.0, 2.0});
  CHECK(in_exp(o[0], o[1], o[2], 1e-7));

  Eigen::VectorXd v(3);
  v << 1.0, 3.0, 4.0;  // ||z|| = 5 > 1 -> projected onto the boundary
  project_soc(v);
  const double zn = std::hypot(v(1), v(2));
  CHECK(v(0) == doctest::Approx(zn).epsilon(1e-9));
  CHECK(v(0) == doctest::Approx(3.0).epsilon(1e-9));

  Eigen::VectorXd inside(3);
  inside << 6.0, 3.0, 4.0;
  project_soc(inside);
  CHECK(inside(0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("program dump round-trips") {
  std::mt19937 gen(77);
  const DenseLp lp = random_lp(gen, 2, 3);
  const ConeProgram p = to_cone_program(lp);
  const ConeProgram q = parse_dump(dump(p));
  CHECK(q.nvar() == p.nvar());
  CHECK(q.rows() == p.rows());
  const auto sp = solve_ok(p);
  const auto sq = solve_ok(q);
  CHECK(sp.objective == doctest::Approx(sq.objective).epsilon(1e-8));
}
