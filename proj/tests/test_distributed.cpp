#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <complex>

#include <sagin/distributed.hpp>

#include "test_util.hpp"

using namespace sagin;

TEST_CASE("envelope codec round-trips and pins the wire layout") {
  Envelope e;
  e.kind = MsgKind::GlobalBroadcast;
  e.sender = 1;
  e.iteration = 0x01020304u;
  e.payload = {1.5, -2.25, 0.0};
  const std::string bytes = encode_envelope(e);
  REQUIRE(bytes.size() == 10 + 8 * 3);

  // header bytes: kind, sender, iteration u32 LE, count u32 LE
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  CHECK(p[0] == 2);
  CHECK(p[1] == 1);
  CHECK(p[2] == 0x04);
  CHECK(p[3] == 0x03);
  CHECK(p[4] == 0x02);
  CHECK(p[5] == 0x01);
  CHECK(p[6] == 3);
  CHECK(p[7] == 0);

  const Envelope d = decode_envelope(bytes);
  CHECK(d.kind == e.kind);
  CHECK(d.sender == e.sender);
  CHECK(d.iteration == e.iteration);
  REQUIRE(d.payload.size() == 3);
  for (int j = 0; j < 3; ++j) CHECK(d.payload[j] == e.payload[j]);

  CHECK_THROWS_AS(decode_envelope(bytes.substr(0, 9)), std::runtime_error);   // short header
  CHECK_THROWS_AS(decode_envelope(bytes.substr(0, 12)), std::runtime_error);  // size mismatch
  std::string bad = bytes;
  bad[0] = 9;  // unknown kind
  CHECK_THROWS_AS(decode_envelope(bad), std::runtime_error);
}

TEST_CASE("framed transport delivers messages in order and signals EOF") {
  int fds[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  Envelope a;
  a.kind = MsgKind::LocalShare;
  a.sender = 0;
  a.payload = {3.5};
  Envelope b;
  b.kind = MsgKind::Barrier;
  b.sender = kOrchestratorSender;
  b.iteration = 7;
  REQUIRE(send_framed(fds[0], encode_envelope(a)));
  REQUIRE(send_framed(fds[0], encode_envelope(b)));
  ::close(fds[0]);

  const Envelope ra = decode_envelope(recv_framed(fds[1]));
  CHECK(ra.kind == MsgKind::LocalShare);
  REQUIRE(ra.payload.size() == 1);
  CHECK(ra.payload[0] == 3.5);
  const Envelope rb = decode_envelope(recv_framed(fds[1]));
  CHECK(rb.kind == MsgKind::Barrier);
  CHECK(rb.sender == kOrchestratorSender);
  CHECK(rb.iteration == 7);
  CHECK(recv_framed(fds[1]).empty());  // clean EOF
  ::close(fds[1]);
}

TEST_CASE("message log tags every sender with its own strictly increasing counter") {
  MessageLog log;
  log.append(MsgKind::LocalShare, 0, {1.0});
  log.append(MsgKind::LocalShare, 1, {2.0});
  log.append(MsgKind::GlobalBroadcast, kOrchestratorSender, {});
  log.append(MsgKind::LocalShare, 0, {3.0});

  std::map<std::uint8_t, std::uint32_t> last;
  std::size_t off = 0;
  int count = 0;
  while (off < log.transcript.size()) {
    const auto* p = reinterpret_cast<const unsigned char*>(log.transcript.data() + off);
    const std::uint32_t n = static_cast<std::uint32_t>(p[6]) | (p[7] << 8u) | (p[8] << 16u) |
                            (static_cast<std::uint32_t>(p[9]) << 24u);
    const std::size_t len = 10 + 8 * static_cast<std::size_t>(n);
    const Envelope e = decode_envelope(log.transcript.substr(off, len));
    const auto it = last.find(e.sender);
    if (it == last.end())
      CHECK(e.iteration == 0);
    else
      CHECK(e.iteration == it->second + 1);
    last[e.sender] = e.iteration;
    off += len;
    ++count;
  }
  CHECK(off == log.transcript.size());
  CHECK(count == 4);
  CHECK(last[0] == 1);
  CHECK(last[1] == 0);
}

TEST_CASE("consensus coordinates reproduce true link quality values") {
  const auto [s, c] = micro_instance(11);
  const Eigen::MatrixXd x = closest_node_association(s, false);
  SolutionState st = matched_filter_state(s, c, x, -1);
  backoff_feeder_overflow(s, c, st);
  tighten_aux(s, c, st);

  const int sz = consensus_size(s);
  std::vector<char> seen(sz, 0);
  for (int n = 0; n < 2; ++n) {
    for (int i = 0; i < s.n_nodes(); ++i)
      for (int k = 0; k < s.n_users(); ++k) {
        const int id = consensus_gamma_index(s, n, i, k);
        REQUIRE(id >= 0);
        REQUIRE(id < sz);
        CHECK(!seen[id]);
        seen[id] = 1;
      }
    for (int z = 0; z < 2; ++z)
      for (int k = 0; k < s.n_users(); ++k) {
        for (int id : {consensus_theta_index(s, n, z, k), consensus_psi_index(s, n, z, k)}) {
          REQUIRE(id >= 0);
          REQUIRE(id < sz);
          CHECK(!seen[id]);
          seen[id] = 1;
        }
      }
  }
  for (int id = 0; id < sz; ++id) CHECK(seen[id]);  // layout is a bijection

  const ConsensusState cs = consensus_from_state(s, c, st);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < s.n_nodes(); ++i)
      for (int k = 0; k < s.n_users(); ++k)
        CHECK(cs.v[consensus_gamma_index(s, n, i, k)] ==
              doctest::Approx(sinr(s, c, st, n, i, k)).epsilon(1e-12));

  // cross-operator interference loads, noise-normalized; both families agree
  for (int n = 0; n < 2; ++n)
    for (int z = 0; z < 2; ++z)
      for (int k = 0; k < s.n_users(); ++k) {
        double cross = 0.0;
        for (int j = 0; j < s.n_nodes(); ++j) {
          if (s.node_operator(j) != z) continue;
          for (int kp = 0; kp < s.n_users(); ++kp) {
            if (kp == k) continue;
            cross += std::norm(chan_dot(c.hv(n, j, k), st.wv(n, j, kp)));
          }
        }
        cross /= c.sigma2_ground;
        CHECK(cs.v[consensus_theta_index(s, n, z, k)] == doctest::Approx(cross).epsilon(1e-12));
        CHECK(cs.v[consensus_psi_index(s, n, z, k)] == doctest::Approx(cross).epsilon(1e-12));
      }
}

TEST_CASE("association dual update moves against the floor violation and stays nonnegative") {
  const std::array<double, 2> l1 = ua_dual_update({1.0, 0.5}, 0.1, {3.0, 9.0}, {5.0, 2.0});
  CHECK(l1[0] == doctest::Approx(1.2));  // violated floor: multiplier grows
  CHECK(l1[1] == doctest::Approx(0.0));  // satisfied with slack 7: 0.5 - 0.7 clamps
  const std::array<double, 2> l2 = ua_dual_update({0.0, 0.0}, 1.0, {10.0, 10.0}, {0.0, 0.0});
  CHECK(l2[0] == 0.0);
  CHECK(l2[1] == 0.0);
}

TEST_CASE("per-user association decision maximizes the priced rate") {
  const auto [s, c] = desk_instance(12);
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(s.n_nodes(), s.n_users());
  // user 3 (satellite side): node 2 offers 1.0, node 3 offers 2.0
  rates(2, 3) = 1.0;
  rates(3, 3) = 2.0;
  CHECK(ua_user_decision(s, 3, rates, {0.0, 0.0}) == 3);

  // lambda reweighting can flip the choice: node 0 is the ground operator's,
  // so a ground-side user on node 2 earns alpha_G = 1 - delta_S there.
  rates.setZero();
  rates(0, 0) = 1.0;  // own node: alpha_G = 1, score (1 + l_G) * 1
  rates(2, 0) = 2.0;  // hosted: alpha_G = 0.4, alpha_S = 0.6
  CHECK(ua_user_decision(s, 0, rates, {0.0, 0.0}) == 2);  // plain rate wins
  // heavy ground multiplier favors the own-revenue-rich node:
  // (1 + 6) * 1 = 7 beats (1 + 6 * 0.4) * 2 = 6.8
  CHECK(ua_user_decision(s, 0, rates, {6.0, 0.0}) == 0);

  // all-zero scores fall back to the lowest node index
  rates.setZero();
  CHECK(ua_user_decision(s, 9, rates, {0.0, 0.0}) == 0);
}

TEST_CASE("dual association search returns a floor-feasible one-hot matrix") {
  const auto [s, c] = desk_instance(13);
  const Eigen::MatrixXd x0 = closest_node_association(s, false);
  SolutionState st = matched_filter_state(s, c, x0, -1);
  backoff_feeder_overflow(s, c, st);
  tighten_aux(s, c, st);
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(s.n_nodes(), s.n_users());
  for (int i = 0; i < s.n_nodes(); ++i)
    for (int k = 0; k < s.n_users(); ++k) rates(i, k) = user_rate(s, c, st, i, k);

  DualUaOptions opt;
  // floors from the standalone split of the same rate table
  std::array<double, 2> u0{0.0, 0.0};
  for (int k = 0; k < s.n_users(); ++k) {
    double best = 0.0;
    for (int i = 0; i < s.n_nodes(); ++i)
      if (s.node_operator(i) == s.user_operator(k)) best = std::max(best, rates(i, k));
    u0[s.user_operator(k)] += 0.25 * best;  // deliberately loose floors
  }
  opt.u0 = u0;
  const DualUaResult r = run_dual_ua(s, rates, opt);

  CHECK(r.iterations > 0);
  for (int k = 0; k < s.n_users(); ++k) {
    CHECK(r.x.col(k).sum() == doctest::Approx(1.0));
    for (int i = 0; i < s.n_nodes(); ++i) CHECK((r.x(i, k) == 0.0 || r.x(i, k) == 1.0));
  }
  CHECK(r.feasible);
  CHECK(r.lambda[0] >= 0.0);
  CHECK(r.lambda[1] >= 0.0);
  CHECK(r.duality_gap >= -1e-9);  // weak duality at fixed rates

  // revenue of the returned association clears both floors
  std::array<double, 2> u{0.0, 0.0};
  for (int k = 0; k < s.n_users(); ++k)
    for (int i = 0; i < s.n_nodes(); ++i)
      if (r.x(i, k) == 1.0)
        for (int z = 0; z < 2; ++z) u[z] += alpha_coefficient(s, z, i, k) * rates(i, k);
  CHECK(u[0] >= u0[0] - 1e-9);
  CHECK(u[1] >= u0[1] - 1e-9);
}

TEST_CASE("penalized averaging agrees with the closed form and zeroes the dual sum") {
  // two agents, scalar consensus: average of (local + nu/c)
  std::vector<Eigen::VectorXd> locals(2), nus(2);
  locals[0] = Eigen::VectorXd::Constant(1, 4.0);
  locals[1] = Eigen::VectorXd::Constant(1, 2.0);
  nus[0] = Eigen::VectorXd::Constant(1, 0.3);
  nus[1] = Eigen::VectorXd::Constant(1, -0.3);
  const double c = 1.5;
  const ConsensusState g = admm_global_average(locals, nus, c);
  CHECK(g.v[0] == doctest::Approx(0.5 * (4.0 + 0.3 / c + 2.0 - 0.3 / c)));

  OperatorAgent a0, a1;
  a0.local = locals[0];
  a0.nu = nus[0];
  a1.local = locals[1];
  a1.nu = nus[1];
  admm_dual_update(a0, g, c);
  admm_dual_update(a1, g, c);
  // sum of duals stays zero when it starts zero (here: 0.3 - 0.3)
  CHECK(a0.nu[0] + a1.nu[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a0.nu[0] == doctest::Approx(0.3 + c * (4.0 - g.v[0])));
}

TEST_CASE("scalar consensus iteration converges to agreement") {
  // agents hold fixed private targets 4 and 2 and move toward the broadcast by
  // minimizing (v - target)^2 + c/2 (v - global + nu/c)^2 each round
  const double c = 2.0;
  std::vector<Eigen::VectorXd> locals(2), nus(2);
  locals[0] = Eigen::VectorXd::Constant(1, 4.0);
  locals[1] = Eigen::VectorXd::Constant(1, 2.0);
  nus[0] = Eigen::VectorXd::Zero(1);
  nus[1] = Eigen::VectorXd::Zero(1);
  const double targets[2] = {4.0, 2.0};
  double res = 1e30;
  ConsensusState g = admm_global_average(locals, nus, c);
  for (int it = 0; it < 60; ++it) {
    for (int a = 0; a < 2; ++a)
      locals[a][0] = (2.0 * targets[a] + c * g.v[0] - nus[a][0]) / (2.0 + c);
    g = admm_global_average(locals, nus, c);
    for (int a = 0; a < 2; ++a) nus[a][0] += c * (locals[a][0] - g.v[0]);
    res = std::max(std::fabs(locals[0][0] - g.v[0]), std::fabs(locals[1][0] - g.v[0]));
  }
  CHECK(res < 1e-6);
  CHECK(g.v[0] == doctest::Approx(3.0).epsilon(1e-6));  // the consensus optimum is the mean
  CHECK(nus[0][0] + nus[1][0] == doctest::Approx(0.0).epsilon(1e-9));
}

static SolutionState admm_ready_state(const ScenarioInstance& s, const ChannelRealization& c) {
  const Eigen::MatrixXd x = closest_node_association(s, false);
  SolutionState st = matched_filter_state(s, c, x, -1);
  backoff_feeder_overflow(s, c, st);
  tighten_aux(s, c, st);
  return st;
}

static double state_max_diff(const SolutionState& a, const SolutionState& b) {
  double d = (a.x - b.x).cwiseAbs().maxCoeff();
  d = std::max(d, (a.p - b.p).cwiseAbs().maxCoeff());
  d = std::max(d, (a.t - b.t).cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < a.w.size(); ++i)
    d = std::max(d, (a.w[i] - b.w[i]).cwiseAbs().maxCoeff());
  return d;
}

TEST_CASE("one consensus resource block never degrades an accepted state") {
  const auto [s, c] = micro_instance(14);
  const SolutionState st = admm_ready_state(s, c);
  const double before = wsr(s, c, st);

  AdmmOptions opt;
  opt.mbc_enabled = false;
  std::array<OperatorAgent, 2> agents;
  for (int z = 0; z < 2; ++z) {
    agents[z].op = z;
    agents[z].local = Eigen::VectorXd::Zero(consensus_size(s));
    agents[z].nu = Eigen::VectorXd::Zero(consensus_size(s));
  }
  MessageLog log;
  const AdmmBlockResult r =
      run_admm_block(s, c, agents, st, SatBlock::Power, opt.i_init, opt, &log);

  CHECK(r.iterations == opt.i_init);
  CHECK(r.wsr_before == doctest::Approx(before).epsilon(1e-12));
  if (r.accepted) {
    CHECK(r.wsr_after >= r.wsr_before - opt.accept_tol);
    const auto res = constraint_residuals(s, c, r.state, {0, 0}, false);
    for (const auto& [key, val] : res)
      if (key != "binariness") CHECK(val <= 1e-6);
    CHECK(r.i_admm_next == opt.i_init);
  } else {
    // rejection hands back the untouched input and doubles the budget
    CHECK(state_max_diff(r.state, st) == 0.0);
    CHECK(r.i_admm_next == std::min(2 * opt.i_init, opt.i_cap));
  }
  CHECK(!log.transcript.empty());

  // duals remain balanced across the two agents
  CHECK((agents[0].nu + agents[1].nu).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("a heavy consensus penalty forces near-agreement on link quality copies") {
  const auto [s, c] = micro_instance(15);
  const SolutionState st = admm_ready_state(s, c);
  AdmmOptions opt;
  opt.mbc_enabled = false;
  opt.c = 1e6;
  std::array<OperatorAgent, 2> agents;
  for (int z = 0; z < 2; ++z) {
    agents[z].op = z;
    agents[z].local = Eigen::VectorXd::Zero(consensus_size(s));
    agents[z].nu = Eigen::VectorXd::Zero(consensus_size(s));
  }
  const AdmmBlockResult r = run_admm_block(s, c, agents, st, SatBlock::Time, 8, opt, nullptr);
  CHECK(r.consensus_res_first >= 0.0);
  CHECK(r.gamma_res_last <= 1e-3);
}

TEST_CASE("full distributed run on the micro instance") {
  const auto [s, c] = micro_instance(16);
  DistributedOptions opt;
  const DistributedResult r = run_wsrm_distributed(s, c, opt);

  CHECK(r.wsr > 0.0);
  CHECK(r.u[0] >= r.u0[0] - 1e-6);
  CHECK(r.u[1] >= r.u0[1] - 1e-6);
  for (const auto& [key, val] : r.residuals)
    if (key != "binariness") CHECK(val <= 1e-6);
  CHECK(!r.transcript.empty());
  CHECK(r.consensus_disagreement <= 1e-3);
  CHECK(!r.blocks.empty());

  // accepted blocks never lower the objective beyond the acceptance slack
  for (const auto& b : r.blocks)
    if (b.accepted) CHECK(b.wsr_after >= b.wsr_before - 1e-8 * std::max(1.0, b.wsr_before));

  // determinism: bytes and objective reproduce exactly
  const DistributedResult r2 = run_wsrm_distributed(s, c, opt);
  CHECK(r2.wsr == doctest::Approx(r.wsr).epsilon(1e-12));
  CHECK(r2.transcript == r.transcript);
}
