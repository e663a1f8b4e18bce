#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include <sagin/centralized.hpp>
#include <sagin/sca.hpp>

#include "test_util.hpp"

using namespace sagin;

namespace {

SolutionState base_state(const ScenarioInstance& s, const ChannelRealization& c) {
  const Eigen::MatrixXd x = closest_node_association(s, false);
  SolutionState st = matched_filter_state(s, c, x, -1);
  return st;
}

Eigen::VectorXcd random_w(int n, double scale, RngStream& rng) {
  Eigen::VectorXcd w(n);
  for (int i = 0; i < n; ++i) w(i) = scale * rng.cgauss();
  return w;
}

}  // namespace

TEST_CASE("expansion point reproduces tight auxiliaries") {
  const auto [s, c] = micro_instance(1);
  SolutionState st = base_state(s, c);
  tighten_aux(s, c, st);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  const auto idx = st.flat(0, 0, 0);
  CHECK(pt.beta_prev(idx) == doctest::Approx(st.beta(idx)).epsilon(1e-12));
  CHECK(pt.phi_prev(idx) == doctest::Approx(st.phi(idx)).epsilon(1e-12));
  CHECK(pt.p_prev == st.p);
  CHECK(pt.x_prev == st.x);
  CHECK((pt.w_prev[idx] - st.w[idx]).norm() == 0.0);
}

TEST_CASE("quadratic-over-linear minorant") {
  const auto [s, c] = micro_instance(2);
  SolutionState st = base_state(s, c);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  RngStream rng(100, 0);
  const int stream = static_cast<int>(st.flat(0, 0, 0));
  const Eigen::VectorXcd h = c.hv(0, 0, 0);
  const RateLowerSurrogate g1 = g1_surrogate(pt, h, stream);

  // tight at the expansion point
  const double beta_hat = pt.beta_prev(stream);
  const double truth_hat = std::norm(chan_dot(h, pt.w_prev[stream])) / beta_hat;
  CHECK(g1.eval(pt.w_prev[stream], beta_hat) == doctest::Approx(truth_hat).epsilon(1e-9));

  // global lower bound over random probes
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXcd w =
        random_w(s.network.n_antennas, std::sqrt(s.network.bs_power_w / 4.0), rng);
    const double beta = beta_hat * std::pow(10.0, 2.0 * rng.uniform() - 1.0);
    const double truth = std::norm(chan_dot(h, w)) / beta;
    worst = std::max(worst, g1.eval(w, beta) - truth);
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("received-power minorant") {
  const auto [s, c] = micro_instance(3);
  SolutionState st = base_state(s, c);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  RngStream rng(200, 0);
  const int stream = static_cast<int>(st.flat(1, 1, 1));
  const Eigen::VectorXcd h = c.hv(1, 1, 0);  // victim channel differs from the served user
  const AffineW g2 = g2_surrogate(pt, h, stream);

  const double truth_hat = std::norm(chan_dot(h, pt.w_prev[stream]));
  CHECK(g2.eval(pt.w_prev[stream]) == doctest::Approx(truth_hat).epsilon(1e-9).scale(1e-12));

  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXcd w =
        random_w(s.network.n_antennas, std::sqrt(s.network.st_power_w / 4.0), rng);
    const double truth = std::norm(chan_dot(h, w));
    worst = std::max(worst, g2.eval(w) - truth);
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("log majorant") {
  const auto [s, c] = micro_instance(4);
  SolutionState st = base_state(s, c);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  RngStream rng(300, 0);
  const int stream = static_cast<int>(st.flat(0, 1, 1));
  const LogUpperSurrogate g3 = g3_surrogate(pt, stream);

  const double phi_hat = pt.phi_prev(stream);
  CHECK(g3.eval(phi_hat) == doctest::Approx(std::log2(1.0 + phi_hat)).epsilon(1e-9));

  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double phi = std::pow(10.0, 6.0 * rng.uniform() - 3.0) * std::max(phi_hat, 1e-6);
    worst = std::max(worst, std::log2(1.0 + phi) - g3.eval(phi));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("binariness penalty minorant") {
  RngStream rng(400, 0);
  for (double x_hat : {0.0, 0.2, 0.5, 0.9, 1.0}) {
    const PenaltyLowerSurrogate ps = penalty_surrogate(x_hat);
    CHECK(ps.eval(x_hat) == doctest::Approx(x_hat * x_hat - x_hat).epsilon(1e-12));
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const double x = 2.0 * rng.uniform() - 0.5;
      worst = std::max(worst, ps.eval(x) - (x * x - x));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("feeder-link surrogate: minorant, tight at the expansion power") {
  const auto [s, c] = desk_instance(5);
  SolutionState st = base_state(s, c);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  RngStream rng(500, 0);
  const double bw = s.bands.b_c_hz;  // rate-normalization used across residuals

  for (int t_i = 0; t_i < s.network.n_st; ++t_i) {
    const BackhaulLowerSurrogate bs = backhaul_surrogate(s, c, pt, t_i);

    // matches the exact capacity metric at the expansion point
    SolutionState probe = st;
    CHECK(bs.exact_bps(st.p, st.t(t_i)) ==
          doctest::Approx(backhaul_capacity(s, c, probe, t_i)).epsilon(1e-12));

    double worst = 0.0, tight = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      Eigen::VectorXd p(s.satellite.n_beams);
      for (int l = 0; l < p.size(); ++l)
        p(l) = s.satellite.max_power_w * rng.uniform();
      const double t = rng.uniform();
      worst = std::max(worst, (bs.eval_bps(p, t) - bs.exact_bps(p, t)) / bw);
      tight = std::max(tight, std::fabs(bs.eval_bps(pt.p_prev, t) - bs.exact_bps(pt.p_prev, t)) / bw);
    }
    CHECK(worst <= 1e-9);
    CHECK(tight <= 1e-9);
  }
}

TEST_CASE("feeder-link surrogate is exact with a single beam") {
  const auto [s, c] = micro_instance(6);
  REQUIRE(s.satellite.n_beams == 1);
  SolutionState st = base_state(s, c);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  const BackhaulLowerSurrogate bs = backhaul_surrogate(s, c, pt, 0);
  RngStream rng(600, 0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd p(1);
    p(0) = 50.0 * rng.uniform() + 1e-6;
    const double t = rng.uniform();
    CHECK(bs.eval_bps(p, t) ==
          doctest::Approx(bs.exact_bps(p, t)).epsilon(1e-9).scale(s.bands.b_c_hz));
  }
}

TEST_CASE("association projection") {
  std::vector<char> allowed{1, 1};
  Eigen::VectorXd v(2);
  v << 0.9, 0.9;
  Eigen::VectorXd got = project_association(v, allowed);
  CHECK(got(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(got(1) == doctest::Approx(0.5).epsilon(1e-12));

  v << 0.2, 0.3;  // already inside: unchanged
  got = project_association(v, allowed);
  CHECK(got(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(got(1) == doctest::Approx(0.3).epsilon(1e-12));

  v << -0.5, 0.4;
  got = project_association(v, allowed);
  CHECK(got(0) == doctest::Approx(0.0));
  CHECK(got(1) == doctest::Approx(0.4).epsilon(1e-12));

  // masked coordinates are forced to zero before projecting
  std::vector<char> mask{0, 1};
  v << 5.0, 0.25;
  got = project_association(v, mask);
  CHECK(got(0) == 0.0);
  CHECK(got(1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("joint association/slack projection respects its constraint set") {
  const auto [s, c] = micro_instance(7);
  std::array<Eigen::MatrixXd, 2> coef;
  coef[0] = Eigen::MatrixXd::Ones(2, 2);
  coef[1] = Eigen::MatrixXd::Ones(2, 2) * 0.5;
  std::array<double, 2> u_ref{0.4, 0.2};
  std::vector<char> allowed(4, 1);

  Eigen::MatrixXd vx(2, 2);
  vx << 1.4, -0.2, 0.6, 0.9;
  const XSProjection out =
      project_association_with_slack(vx, {-0.3, 0.1}, coef, u_ref, allowed);
  for (int k = 0; k < 2; ++k) {
    CHECK(out.x.col(k).minCoeff() >= -1e-7);
    CHECK(out.x.col(k).sum() <= 1.0 + 1e-7);
  }
  for (int z = 0; z < 2; ++z) {
    CHECK(out.s[z] >= -1e-7);
    double rev = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k) rev += coef[z](i, k) * out.x(i, k);
    CHECK(rev + out.s[z] >= u_ref[z] - 1e-6);
  }

  // a point already satisfying everything projects to itself
  Eigen::MatrixXd good(2, 2);
  good << 0.5, 0.2, 0.3, 0.4;
  const XSProjection same =
      project_association_with_slack(good, {0.2, 0.3}, coef, {0.1, 0.05}, allowed);
  CHECK((same.x - good).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(same.s[0] == doctest::Approx(0.2).epsilon(1e-4));
  CHECK(same.s[1] == doctest::Approx(0.3).epsilon(1e-4));
}

TEST_CASE("power-step program solves and extracts a consistent state") {
  const auto [s, c] = micro_instance(8);
  SolutionState st = base_state(s, c);
  tighten_aux(s, c, st);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  MbcSpec mbc;
  mbc.enabled = false;
  const SurrogateProblem prob = build_p_step(s, c, pt, st.t, st.x, mbc);
  REQUIRE(prob.program.nvar() > 0);
  SolveSettings settings;
  settings.eps = 1e-7;
  const ConeSolution sol = conic::solve(prob.program, settings);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const SolutionState out = extract_state(s, c, prob, sol.v, st);
  CHECK(out.x == st.x);            // fixed in this block
  CHECK(out.t == st.t);            // fixed in this block
  CHECK(out.p.minCoeff() >= -1e-7);
  CHECK(out.p.sum() <= s.satellite.max_power_w + 1e-5);
  CHECK_NOTHROW(out.validate_shape(s, 1e-5));
  // the block never reduces the surrogate objective below the expansion value
  SolutionState polished = out;
  clamp_budgets(s, polished);
  tighten_aux(s, c, polished);
  CHECK(wsr(s, c, polished) >= wsr(s, c, st) * (1.0 - 1e-6) - 1e-9);
}

TEST_CASE("time-step program solves on the desk instance") {
  const auto [s, c] = desk_instance(9);
  SolutionState st = base_state(s, c);
  backoff_feeder_overflow(s, c, st);
  tighten_aux(s, c, st);
  const IteratePoint pt = IteratePoint::from_state(s, c, st);
  MbcSpec mbc;
  mbc.enabled = false;
  const SurrogateProblem prob = build_t_step(s, c, pt, st.p, st.x, mbc);
  SolveSettings settings;
  settings.eps = 1e-7;
  const ConeSolution sol = conic::solve(prob.program, settings);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const SolutionState out = extract_state(s, c, prob, sol.v, st);
  CHECK(out.p == st.p);
  CHECK(out.t.minCoeff() >= -1e-7);
  Eigen::VectorXd beam_time = Eigen::VectorXd::Zero(s.satellite.n_beams);
  for (int i = 0; i < s.network.n_st; ++i) beam_time(s.st_beam[i]) += out.t(i);
  CHECK(beam_time.maxCoeff() <= 1.0 + 1e-5);
}

TEST_CASE("domain guards reject malformed expansion points") {
  const auto [s, c] = micro_instance(1);
  SolutionState st = base_state(s, c);
  IteratePoint pt = IteratePoint::from_state(s, c, st);
  pt.beta_prev.setConstant(-1.0);
  CHECK_THROWS_AS(g1_surrogate(pt, c.hv(0, 0, 0), 0), DomainError);

  // negative SINR expansion values clamp to the tangent at zero
  IteratePoint pt2 = IteratePoint::from_state(s, c, st);
  pt2.phi_prev.setConstant(-2.0);
  const LogUpperSurrogate g3 = g3_surrogate(pt2, 0);
  CHECK(g3.constant == doctest::Approx(0.0));
  CHECK(g3.slope == doctest::Approx(1.0 / std::log(2.0)).epsilon(1e-12));

  // the association builder rejects a nonpositive penalty weight
  Eigen::MatrixXd rates = Eigen::MatrixXd::Ones(s.n_nodes(), s.n_users());
  MbcSpec mbc;
  mbc.enabled = false;
  IteratePoint pt3 = IteratePoint::from_state(s, c, st);
  Eigen::VectorXd cap = Eigen::VectorXd::Constant(s.network.n_st, 1e9);
  CHECK_THROWS_AS(build_x_step(s, rates, pt3, mbc, 0.0, cap), DomainError);
}
