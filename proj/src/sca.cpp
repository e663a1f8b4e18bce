#include <sagin/sca.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sagin {

namespace {

constexpr double kLn2 = 0.6931471805599453;

int full_streams(const ScenarioInstance& s) { return 2 * s.n_nodes() * s.n_users(); }

int stream_id(const ScenarioInstance& s, int n, int i, int k) {
  return (n * s.n_nodes() + i) * s.n_users() + k;
}

// coefficients of 2*Re(conj(c0) * (h . w)) over interleaved (Re, Im) coordinates
Eigen::VectorXd linear_re_coef(const std::complex<double>& c0, const Eigen::VectorXcd& h) {
  const int na = static_cast<int>(h.size());
  Eigen::VectorXd a(2 * na);
  for (int t = 0; t < na; ++t) {
    const std::complex<double> q = std::conj(c0) * h(t);
    a(2 * t) = 2.0 * q.real();
    a(2 * t + 1) = -2.0 * q.imag();
  }
  return a;
}

}  // namespace

double AffineW::eval(const Eigen::VectorXcd& w) const {
  double v = constant;
  for (int t = 0; t < w.size(); ++t) {
    v += coef(2 * t) * w(t).real() + coef(2 * t + 1) * w(t).imag();
  }
  return v;
}

IteratePoint IteratePoint::from_state(const ScenarioInstance& s, const ChannelRealization& c,
                                      const SolutionState& st) {
  IteratePoint pt;
  pt.w_prev = st.w;
  pt.p_prev = st.p;
  pt.x_prev = st.x;
  const int ns = full_streams(s);
  const bool have_aux = st.beta.size() == ns && st.phi.size() == ns && st.rho.size() == ns;
  pt.beta_prev.resize(ns);
  pt.phi_prev.resize(ns);
  pt.rho_prev.resize(ns);
  if (have_aux) {
    pt.beta_prev = st.beta;
    pt.phi_prev = st.phi;
    pt.rho_prev = st.rho;
  } else {
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < s.n_nodes(); ++i)
        for (int k = 0; k < s.n_users(); ++k) {
          const int sid = stream_id(s, n, i, k);
          const auto it = interference_terms(s, c, st, n, i, k);
          const double den = it.intra + it.inter + c.sigma2_ground;
          pt.beta_prev(sid) = den;
          pt.rho_prev(sid) = den;
          pt.phi_prev(sid) = std::norm(chan_dot(c.hv(n, i, k), st.wv(n, i, k))) / den;
        }
  }
  return pt;
}

RateLowerSurrogate g1_surrogate(const IteratePoint& pt, const Eigen::VectorXcd& h, int stream,
                                double beta_floor) {
  double bhat = pt.beta_prev(stream);
  if (bhat <= 0.0) throw DomainError("g1_surrogate: nonpositive interference bound at expansion");
  bhat = std::max(bhat, beta_floor);
  const std::complex<double> c0 = chan_dot(h, pt.w_prev[stream]);
  RateLowerSurrogate g;
  g.w_part.coef = linear_re_coef(c0, h) / bhat;
  g.w_part.constant = 0.0;
  g.beta_coef = -std::norm(c0) / (bhat * bhat);
  return g;
}

AffineW g2_surrogate(const IteratePoint& pt, const Eigen::VectorXcd& h, int stream) {
  const std::complex<double> c0 = chan_dot(h, pt.w_prev[stream]);
  AffineW a;
  a.coef = linear_re_coef(c0, h);
  a.constant = -std::norm(c0);
  return a;
}

LogUpperSurrogate g3_surrogate(const IteratePoint& pt, int stream) {
  const double phat = std::max(0.0, pt.phi_prev(stream));
  LogUpperSurrogate g;
  g.slope = 1.0 / (kLn2 * (1.0 + phat));
  g.constant = std::log2(1.0 + phat) - g.slope * phat;
  return g;
}

PenaltyLowerSurrogate penalty_surrogate(double x_prev) {
  PenaltyLowerSurrogate f;
  f.slope = 2.0 * x_prev - 1.0;
  f.constant = -x_prev * x_prev;
  return f;
}

BackhaulLowerSurrogate backhaul_surrogate(const ScenarioInstance& s, const ChannelRealization& c,
                                          const IteratePoint& pt, int st_index) {
  const int nl = s.satellite.n_beams;
  const double pmax = s.satellite.max_power_w;
  if (pt.p_prev.size() != nl) throw DomainError("backhaul_surrogate: beam power size mismatch");
  if (pt.p_prev.minCoeff() < -1e-9 * pmax || pt.p_prev.sum() > pmax * (1.0 + 1e-9) + 1e-12)
    throw DomainError("backhaul_surrogate: expansion beam powers outside the budget");

  BackhaulLowerSurrogate b;
  b.st_index = st_index;
  b.beam = s.st_beam[st_index];
  b.b_ka_hz = s.satellite.b_ka_hz;
  b.p_prev = pt.p_prev.cwiseMax(0.0);
  const double f2 = std::norm(c.f[st_index]);
  b.gain.resize(nl);
  for (int l = 0; l < nl; ++l) b.gain(l) = c.gt(l, st_index) * c.g_r * f2 / c.sigma2_sat;
  double intf = 1.0;
  for (int l = 0; l < nl; ++l)
    if (l != b.beam) intf += b.p_prev(l) * b.gain(l);
  b.c1 = std::log2(intf);
  b.c2 = Eigen::VectorXd::Zero(nl);
  for (int l = 0; l < nl; ++l)
    if (l != b.beam) b.c2(l) = b.gain(l) / (kLn2 * intf);
  return b;
}

double BackhaulLowerSurrogate::eval_bps(const Eigen::VectorXd& p, double t) const {
  const double total = gain.dot(p) + 1.0;
  const double lin = c1 + c2.dot(p - p_prev);
  return b_ka_hz * t * (std::log2(total) - lin);
}

double BackhaulLowerSurrogate::exact_bps(const Eigen::VectorXd& p, double t) const {
  double intf = 1.0;
  for (int l = 0; l < gain.size(); ++l)
    if (l != beam) intf += p(l) * gain(l);
  return b_ka_hz * t * std::log2(1.0 + p(beam) * gain(beam) / intf);
}

namespace {

struct Scope {
  std::vector<int> bands, nodes, users;
  std::vector<char> node_in, user_in;
};

Scope make_scope(const ScenarioInstance& s, int op_scope) {
  Scope sc;
  sc.node_in.assign(s.n_nodes(), 0);
  sc.user_in.assign(s.n_users(), 0);
  if (op_scope < 0) {
    sc.bands = {0, 1};
    for (int i = 0; i < s.n_nodes(); ++i) {
      sc.nodes.push_back(i);
      sc.node_in[i] = 1;
    }
    for (int k = 0; k < s.n_users(); ++k) {
      sc.users.push_back(k);
      sc.user_in[k] = 1;
    }
  } else {
    sc.bands = {op_scope};  // each operator's licensed band carries its id
    for (int i = 0; i < s.n_nodes(); ++i)
      if (s.node_operator(i) == op_scope) {
        sc.nodes.push_back(i);
        sc.node_in[i] = 1;
      }
    for (int k = 0; k < s.n_users(); ++k)
      if (s.user_operator(k) == op_scope) {
        sc.users.push_back(k);
        sc.user_in[k] = 1;
      }
  }
  return sc;
}

// Shared assembly for every subproblem that optimizes beamformers: the full
// p/t blocks, the per-operator standalone blocks, and the slack-assisted
// initialization blocks.
SurrogateProblem build_core(const ScenarioInstance& s, const ChannelRealization& c,
                            const IteratePoint& pt, SatBlock kind,
                            const Eigen::VectorXd& t_fixed, const Eigen::VectorXd& p_fixed,
                            const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc, double xi,
                            bool slacks, int op_scope) {
  const Scope sc = make_scope(s, op_scope);
  const int na = s.network.n_antennas;
  const int ns_full = full_streams(s);
  const int n_st = s.network.n_st;
  const int nl = s.satellite.n_beams;
  const double sig_t = std::sqrt(c.sigma2_ground);
  const double bc_over_bka = s.bands.b_c_hz / s.satellite.b_ka_hz;

  std::vector<char> st_in_scope(n_st, 0);
  bool with_sat = false;
  for (int i : sc.nodes)
    if (s.node_is_st(i)) {
      with_sat = true;
      st_in_scope[s.st_index(i)] = 1;
    }

  if (kind == SatBlock::Power && with_sat && t_fixed.size() != n_st)
    throw DomainError("build: time shares missing for the satellite power block");
  if (kind == SatBlock::Time && with_sat && p_fixed.size() != nl)
    throw DomainError("build: beam powers missing for the beam time block");
  if (x_fixed.rows() != s.n_nodes() || x_fixed.cols() != s.n_users())
    throw DomainError("build: association shape mismatch");

  // normalized channels for every in-scope stream
  std::vector<Eigen::VectorXcd> hn(ns_full);
  for (int n : sc.bands)
    for (int i : sc.nodes)
      for (int k : sc.users) hn[stream_id(s, n, i, k)] = c.hv(n, i, k) / sig_t;

  // noise-normalized expansion point (only beta/rho change units)
  IteratePoint ptn = pt;
  ptn.beta_prev = pt.beta_prev / c.sigma2_ground;
  ptn.rho_prev = pt.rho_prev / c.sigma2_ground;

  VariableIndex ix;
  ix.n_ant = na;
  ix.w.assign(ns_full, -1);
  ix.sinr_lb.assign(ns_full, -1);
  ix.ipn_ub.assign(ns_full, -1);
  ix.rate.assign(ns_full, -1);
  ix.sinr_ub.assign(ns_full, -1);
  ix.ipn_lb.assign(ns_full, -1);
  ix.rx_total.assign(2 * s.n_users(), -1);
  ix.g2_node_sum.assign(ns_full, -1);

  int nv = 0;
  auto alloc = [&nv](int n) {
    const int at = nv;
    nv += n;
    return at;
  };

  for (int n : sc.bands)
    for (int i : sc.nodes)
      for (int k : sc.users) {
        const int sid = stream_id(s, n, i, k);
        ix.w[sid] = alloc(2 * na);
        ix.sinr_lb[sid] = alloc(1);
        ix.ipn_ub[sid] = alloc(1);
        ix.rate[sid] = alloc(1);
        if (with_sat && s.node_is_st(i)) {
          ix.sinr_ub[sid] = alloc(1);
          ix.ipn_lb[sid] = alloc(1);
        }
      }
  for (int n : sc.bands)
    for (int k : sc.users) ix.rx_total[n * s.n_users() + k] = alloc(1);
  if (with_sat) {
    for (int n : sc.bands)
      for (int i : sc.nodes)
        for (int k : sc.users) ix.g2_node_sum[stream_id(s, n, i, k)] = alloc(1);
    if (kind == SatBlock::Power) {
      ix.p.assign(nl, -1);
      for (int l = 0; l < nl; ++l) ix.p[l] = alloc(1);
      ix.v_sat.assign(n_st, -1);
      for (int u = 0; u < n_st; ++u)
        if (st_in_scope[u]) ix.v_sat[u] = alloc(1);
    } else {
      ix.t.assign(n_st, -1);
      for (int u = 0; u < n_st; ++u)
        if (st_in_scope[u]) ix.t[u] = alloc(1);
    }
  }
  if (slacks) {
    ix.s_user.assign(2, -1);
    if (mbc.enabled)
      for (int z = 0; z < 2; ++z) ix.s_user[z] = alloc(1);
    if (with_sat) {
      ix.s_back.assign(n_st, -1);
      for (int u = 0; u < n_st; ++u)
        if (st_in_scope[u]) ix.s_back[u] = alloc(1);
    }
  }
  ix.n_vars = nv;

  ConeProgram prog(nv);

  // objective: maximize the weighted association-scaled rate sum
  for (int n : sc.bands)
    for (int i : sc.nodes)
      for (int k : sc.users) {
        const double wobj = x_fixed(i, k) * s.weights(i, k);
        if (wobj > 0.0) prog.add_objective(ix.rate[stream_id(s, n, i, k)], -wobj);
      }
  if (slacks) {
    for (int z = 0; z < 2; ++z)
      if (ix.s_user.size() == 2 && ix.s_user[z] >= 0) prog.add_objective(ix.s_user[z], xi);
    if (with_sat)
      for (int u = 0; u < n_st; ++u)
        if (ix.s_back[u] >= 0) prog.add_objective(ix.s_back[u], xi);
  }

  // cached minorant pieces: own-squared-gain minorant per (victim stream, source user)
  // g2_cache[sid_victim][k2] bounds |h(victim) . w(node(victim), k2)|^2 from below
  std::vector<std::vector<AffineW>> g2_cache(ns_full);
  if (with_sat)
    for (int n : sc.bands)
      for (int j : sc.nodes)
        for (int k : sc.users) {
          const int vict = stream_id(s, n, j, k);
          g2_cache[vict].resize(s.n_users());
          for (int k2 : sc.users)
            g2_cache[vict][k2] = g2_surrogate(ptn, hn[vict], stream_id(s, n, j, k2));
        }

  auto add_affine_w = [&prog, na](int row, int wbase, const Eigen::VectorXd& coef, double scale) {
    for (int t = 0; t < 2 * na; ++t) {
      const double v = coef(t) * scale;
      if (v != 0.0) prog.add_entry(row, wbase + t, v);
    }
  };

  // per-node minorant aggregates of the received interference (linearized side)
  if (with_sat) {
    for (int n : sc.bands)
      for (int j : sc.nodes)
        for (int k : sc.users) {
          const int vict = stream_id(s, n, j, k);
          const int row = prog.add_zero(1);
          prog.add_entry(row, ix.g2_node_sum[vict], 1.0);
          for (int k2 : sc.users) {
            const AffineW& g2 = g2_cache[vict][k2];
            add_affine_w(row, ix.w[stream_id(s, n, j, k2)], g2.coef, -1.0);
            prog.add_offset(row, -g2.constant);
          }
        }
  }

  // received-power epigraphs: rx_total >= sum over in-scope streams of |h.w|^2
  for (int n : sc.bands)
    for (int k : sc.users) {
      const int dim = 2 + 2 * static_cast<int>(sc.nodes.size()) * static_cast<int>(sc.users.size());
      const int row = prog.add_rsoc(dim);
      prog.add_entry(row, ix.rx_total[n * s.n_users() + k], 1.0);
      prog.add_offset(row + 1, 0.5);
      int zr = row + 2;
      for (int j : sc.nodes) {
        const Eigen::VectorXcd& h = hn[stream_id(s, n, j, k)];
        for (int k2 : sc.users) {
          const int wb = ix.w[stream_id(s, n, j, k2)];
          for (int t = 0; t < na; ++t) {
            // Re(h.w) then Im(h.w)
            if (h(t).real() != 0.0) prog.add_entry(zr, wb + 2 * t, h(t).real());
            if (h(t).imag() != 0.0) prog.add_entry(zr, wb + 2 * t + 1, -h(t).imag());
            if (h(t).imag() != 0.0) prog.add_entry(zr + 1, wb + 2 * t, h(t).imag());
            if (h(t).real() != 0.0) prog.add_entry(zr + 1, wb + 2 * t + 1, h(t).real());
          }
          zr += 2;
        }
      }
    }

  // per-stream rows
  for (int n : sc.bands)
    for (int i : sc.nodes)
      for (int k : sc.users) {
        const int sid = stream_id(s, n, i, k);
        const Eigen::VectorXcd& h = hn[sid];

        // interference upper bound: beta >= rx_total - own-signal minorant + noise
        {
          const AffineW own = g2_surrogate(ptn, h, sid);
          const int row = prog.add_nonneg(1);
          prog.add_entry(row, ix.ipn_ub[sid], 1.0);
          prog.add_entry(row, ix.rx_total[n * s.n_users() + k], -1.0);
          add_affine_w(row, ix.w[sid], own.coef, 1.0);
          prog.add_offset(row, own.constant - 1.0);
        }

        // SINR lower bound against the rate surrogate: g1(w, beta) - gamma >= 0
        {
          const RateLowerSurrogate g1 = g1_surrogate(ptn, h, sid);
          const int row = prog.add_nonneg(1);
          add_affine_w(row, ix.w[sid], g1.w_part.coef, 1.0);
          prog.add_entry(row, ix.ipn_ub[sid], g1.beta_coef);
          prog.add_entry(row, ix.sinr_lb[sid], -1.0);
        }

        // gamma >= 0
        {
          const int row = prog.add_nonneg(1);
          prog.add_entry(row, ix.sinr_lb[sid], 1.0);
        }

        // rate cone: exp(rate * ln2) <= 1 + gamma, recentered through the
        // shift symmetry (x, y, z) -> (x - y ln s, y, z / s) of the
        // exponential cone so the block sits near (0, 1, 1) at the expansion
        // point instead of at a badly conditioned slice z/y ~ SINR
        {
          const double ghat =
              std::norm(chan_dot(h, ptn.w_prev[sid])) / std::max(ptn.beta_prev(sid), 1e-300);
          const double sr = 1.0 + std::max(0.0, ghat);
          const int row = prog.add_exp();
          prog.add_entry(row, ix.rate[sid], kLn2);
          prog.add_offset(row, -std::log(sr));
          prog.add_offset(row + 1, 1.0);
          prog.add_entry(row + 2, ix.sinr_lb[sid], 1.0 / sr);
          prog.add_offset(row + 2, 1.0 / sr);
        }

        // rate >= 0
        {
          const int row = prog.add_nonneg(1);
          prog.add_entry(row, ix.rate[sid], 1.0);
        }

        if (ix.sinr_ub[sid] >= 0) {
          // SINR upper bound cone: phi * rho >= |h.w|^2
          {
            const int row = prog.add_rsoc(4);
            prog.add_entry(row, ix.sinr_ub[sid], 1.0);
            prog.add_entry(row + 1, ix.ipn_lb[sid], 0.5);
            for (int t = 0; t < na; ++t) {
              if (h(t).real() != 0.0) prog.add_entry(row + 2, ix.w[sid] + 2 * t, h(t).real());
              if (h(t).imag() != 0.0) prog.add_entry(row + 2, ix.w[sid] + 2 * t + 1, -h(t).imag());
              if (h(t).imag() != 0.0) prog.add_entry(row + 3, ix.w[sid] + 2 * t, h(t).imag());
              if (h(t).real() != 0.0) prog.add_entry(row + 3, ix.w[sid] + 2 * t + 1, h(t).real());
            }
          }
          // interference lower bound: rho <= sum_j node-sums - own minorant + noise
          {
            const AffineW own = g2_surrogate(ptn, h, sid);
            const int row = prog.add_nonneg(1);
            for (int j : sc.nodes) prog.add_entry(row, ix.g2_node_sum[stream_id(s, n, j, k)], 1.0);
            add_affine_w(row, ix.w[sid], own.coef, -1.0);
            prog.add_entry(row, ix.ipn_lb[sid], -1.0);
            prog.add_offset(row, -own.constant + 1.0);
          }
        }
      }

  // per-node transmit power budgets
  for (int j : sc.nodes) {
    const int dim = 1 + 2 * na * static_cast<int>(sc.bands.size()) * static_cast<int>(sc.users.size());
    const int row = prog.add_soc(dim);
    prog.add_offset(row, std::sqrt(s.node_power_w(j)));
    int zr = row + 1;
    for (int n : sc.bands)
      for (int k : sc.users) {
        const int wb = ix.w[stream_id(s, n, j, k)];
        for (int t = 0; t < 2 * na; ++t) prog.add_entry(zr++, wb + t, 1.0);
      }
  }

  // feeder-link machinery
  if (with_sat) {
    if (kind == SatBlock::Power) {
      // beam power box and budget
      for (int l = 0; l < nl; ++l) {
        const int row = prog.add_nonneg(1);
        prog.add_entry(row, ix.p[l], 1.0);
      }
      {
        const int row = prog.add_nonneg(1);
        for (int l = 0; l < nl; ++l) prog.add_entry(row, ix.p[l], -1.0);
        prog.add_offset(row, s.satellite.max_power_w);
      }
    } else {
      for (int u = 0; u < n_st; ++u)
        if (ix.t[u] >= 0) {
          const int row = prog.add_nonneg(1);
          prog.add_entry(row, ix.t[u], 1.0);
        }
      for (int l = 0; l < nl; ++l) {
        const int row = prog.add_nonneg(1);
        bool any = false;
        for (int u = 0; u < n_st; ++u)
          if (ix.t[u] >= 0 && s.st_beam[u] == l) {
            prog.add_entry(row, ix.t[u], -1.0);
            any = true;
          }
        prog.add_offset(row, 1.0);
        (void)any;
      }
    }

    for (int u = 0; u < n_st; ++u) {
      if (!st_in_scope[u]) continue;
      const int node = s.network.n_bs + u;
      const BackhaulLowerSurrogate bs = backhaul_surrogate(s, c, pt, u);

      if (kind == SatBlock::Power) {
        // total received satellite power in log2: exp(v ln2) <= sum_l gain_l p_l + 1,
        // recentered at the expansion powers the same way as the rate cone
        {
          const double sv = 1.0 + bs.gain.dot(bs.p_prev);
          const int row = prog.add_exp();
          prog.add_entry(row, ix.v_sat[u], kLn2);
          prog.add_offset(row, -std::log(sv));
          prog.add_offset(row + 1, 1.0);
          for (int l = 0; l < nl; ++l)
            if (bs.gain(l) != 0.0) prog.add_entry(row + 2, ix.p[l], bs.gain(l) / sv);
          prog.add_offset(row + 2, 1.0 / sv);
        }
        // capacity minorant covers the consumption majorant:
        // t*(v - c1 - c2.(p - p_prev)) - (Bc/Bka) sum g3(phi) [+ slack] >= 0
        {
          const double th = t_fixed(u);
          const int row = prog.add_nonneg(1);
          prog.add_entry(row, ix.v_sat[u], th);
          for (int l = 0; l < nl; ++l)
            if (bs.c2(l) != 0.0) prog.add_entry(row, ix.p[l], -th * bs.c2(l));
          prog.add_offset(row, -th * (bs.c1 - bs.c2.dot(bs.p_prev)));
          for (int n : sc.bands)
            for (int k : sc.users) {
              const int sid = stream_id(s, n, node, k);
              const LogUpperSurrogate g3 = g3_surrogate(pt, sid);
              prog.add_entry(row, ix.sinr_ub[sid], -bc_over_bka * g3.slope);
              prog.add_offset(row, -bc_over_bka * g3.constant);
            }
          if (slacks && ix.s_back.size() == static_cast<std::size_t>(n_st) && ix.s_back[u] >= 0)
            prog.add_entry(row, ix.s_back[u], bc_over_bka);
        }
      } else {
        // exact per-unit-time capacity at the frozen beam powers
        double intf = 1.0;
        for (int l = 0; l < nl; ++l)
          if (l != bs.beam) intf += p_fixed(l) * bs.gain(l);
        const double kappa = std::log2(1.0 + p_fixed(bs.beam) * bs.gain(bs.beam) / intf);
        const int row = prog.add_nonneg(1);
        prog.add_entry(row, ix.t[u], kappa);
        for (int n : sc.bands)
          for (int k : sc.users) {
            const int sid = stream_id(s, n, node, k);
            const LogUpperSurrogate g3 = g3_surrogate(pt, sid);
            prog.add_entry(row, ix.sinr_ub[sid], -bc_over_bka * g3.slope);
            prog.add_offset(row, -bc_over_bka * g3.constant);
          }
        if (slacks && ix.s_back.size() == static_cast<std::size_t>(n_st) && ix.s_back[u] >= 0)
          prog.add_entry(row, ix.s_back[u], bc_over_bka);
      }
    }
  }

  // mutual-benefit floors over the scoped streams
  if (mbc.enabled) {
    for (int z = 0; z < 2; ++z) {
      const int row = prog.add_nonneg(1);
      for (int n : sc.bands)
        for (int i : sc.nodes)
          for (int k : sc.users) {
            const double coef = x_fixed(i, k) * alpha_coefficient(s, z, i, k);
            if (coef > 0.0) prog.add_entry(row, ix.rate[stream_id(s, n, i, k)], coef);
          }
      if (slacks && ix.s_user.size() == 2 && ix.s_user[z] >= 0)
        prog.add_entry(row, ix.s_user[z], 1.0);
      prog.add_offset(row, -(mbc.u_ref[z] + mbc.margin));
    }
  }

  // slack nonnegativity
  if (slacks) {
    for (int z = 0; z < 2; ++z)
      if (ix.s_user.size() == 2 && ix.s_user[z] >= 0) {
        const int row = prog.add_nonneg(1);
        prog.add_entry(row, ix.s_user[z], 1.0);
      }
    if (with_sat)
      for (int u = 0; u < n_st; ++u)
        if (ix.s_back[u] >= 0) {
          const int row = prog.add_nonneg(1);
          prog.add_entry(row, ix.s_back[u], 1.0);
        }
  }

  SurrogateProblem out;
  out.program = std::move(prog);
  out.vars = std::move(ix);
  return out;
}

}  // namespace

SurrogateProblem build_p_step(const ScenarioInstance& s, const ChannelRealization& c,
                              const IteratePoint& pt, const Eigen::VectorXd& t_fixed,
                              const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc) {
  return build_core(s, c, pt, SatBlock::Power, t_fixed, Eigen::VectorXd(), x_fixed, mbc, 0.0,
                    false, -1);
}

SurrogateProblem build_t_step(const ScenarioInstance& s, const ChannelRealization& c,
                              const IteratePoint& pt, const Eigen::VectorXd& p_fixed,
                              const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc) {
  return build_core(s, c, pt, SatBlock::Time, Eigen::VectorXd(), p_fixed, x_fixed, mbc, 0.0,
                    false, -1);
}

SurrogateProblem build_nosharing_step(const ScenarioInstance& s, const ChannelRealization& c,
                                      const IteratePoint& pt, int op, SatBlock kind,
                                      const Eigen::VectorXd& fixed_other,
                                      const Eigen::MatrixXd& x_fixed) {
  MbcSpec off;
  off.enabled = false;
  if (kind == SatBlock::Power)
    return build_core(s, c, pt, kind, fixed_other, Eigen::VectorXd(), x_fixed, off, 0.0, false, op);
  return build_core(s, c, pt, kind, Eigen::VectorXd(), fixed_other, x_fixed, off, 0.0, false, op);
}

SurrogateProblem build_initpoint_step(const ScenarioInstance& s, const ChannelRealization& c,
                                      const IteratePoint& pt, SatBlock kind,
                                      const Eigen::VectorXd& fixed_other,
                                      const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc,
                                      double xi) {
  if (xi < 0.0) throw DomainError("build_initpoint_step: negative slack penalty");
  if (kind == SatBlock::Power)
    return build_core(s, c, pt, kind, fixed_other, Eigen::VectorXd(), x_fixed, mbc, xi, true, -1);
  return build_core(s, c, pt, kind, Eigen::VectorXd(), fixed_other, x_fixed, mbc, xi, true, -1);
}

SurrogateProblem build_x_step(const ScenarioInstance& s, const Eigen::MatrixXd& rates,
                              const IteratePoint& pt, const MbcSpec& mbc, double penalty_weight,
                              const Eigen::VectorXd& st_capacity_bps) {
  if (penalty_weight <= 0.0) throw DomainError("build_x_step: penalty weight must be positive");
  if (rates.rows() != s.n_nodes() || rates.cols() != s.n_users())
    throw DomainError("build_x_step: rate table shape mismatch");

  const int nn = s.n_nodes();
  const int nu = s.n_users();
  VariableIndex ix;
  ix.n_ant = s.network.n_antennas;
  ix.x.assign(nn * nu, -1);
  int nv = 0;
  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < nu; ++k) ix.x[i * nu + k] = nv++;
  ix.n_vars = nv;

  ConeProgram prog(nv);
  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < nu; ++k) {
      const PenaltyLowerSurrogate f = penalty_surrogate(pt.x_prev(i, k));
      prog.add_objective(ix.x[i * nu + k],
                         -(s.weights(i, k) * rates(i, k) + penalty_weight * f.slope));
    }

  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < nu; ++k) {
      int row = prog.add_nonneg(1);
      prog.add_entry(row, ix.x[i * nu + k], 1.0);
      row = prog.add_nonneg(1);
      prog.add_entry(row, ix.x[i * nu + k], -1.0);
      prog.add_offset(row, 1.0);
    }
  for (int k = 0; k < nu; ++k) {
    const int row = prog.add_nonneg(1);
    for (int i = 0; i < nn; ++i) prog.add_entry(row, ix.x[i * nu + k], -1.0);
    prog.add_offset(row, 1.0);
  }
  if (mbc.enabled) {
    for (int z = 0; z < 2; ++z) {
      const int row = prog.add_nonneg(1);
      for (int i = 0; i < nn; ++i)
        for (int k = 0; k < nu; ++k) {
          const double coef = alpha_coefficient(s, z, i, k) * rates(i, k);
          if (coef != 0.0) prog.add_entry(row, ix.x[i * nu + k], coef);
        }
      prog.add_offset(row, -(mbc.u_ref[z] + mbc.margin));
    }
  }
  // served traffic through each ST stays within the current feeder capacity
  for (int u = 0; u < s.network.n_st; ++u) {
    const int i = s.network.n_bs + u;
    const int row = prog.add_nonneg(1);
    for (int k = 0; k < nu; ++k)
      if (rates(i, k) != 0.0) prog.add_entry(row, ix.x[i * nu + k], -rates(i, k));
    prog.add_offset(row, st_capacity_bps(u) / s.bands.b_c_hz);
  }

  SurrogateProblem out;
  out.program = std::move(prog);
  out.vars = std::move(ix);
  return out;
}

SolutionState extract_state(const ScenarioInstance& s, const ChannelRealization& c,
                            const SurrogateProblem& prob, const Eigen::VectorXd& v,
                            const SolutionState& base) {
  const VariableIndex& ix = prob.vars;
  SolutionState st = base;
  const int ns = full_streams(s);
  const int na = s.network.n_antennas;
  auto ensure = [ns](Eigen::VectorXd& a) {
    if (a.size() != ns) a = Eigen::VectorXd::Zero(ns);
  };
  if (!ix.sinr_lb.empty()) ensure(st.gamma);
  if (!ix.ipn_ub.empty()) ensure(st.beta);
  if (!ix.sinr_ub.empty()) ensure(st.phi);
  if (!ix.ipn_lb.empty()) ensure(st.rho);

  for (int sid = 0; sid < ns; ++sid) {
    if (!ix.w.empty() && ix.w[sid] >= 0) {
      Eigen::VectorXcd wv(na);
      for (int t = 0; t < na; ++t)
        wv(t) = std::complex<double>(v(ix.w[sid] + 2 * t), v(ix.w[sid] + 2 * t + 1));
      st.w[sid] = wv;
    }
    if (!ix.sinr_lb.empty() && ix.sinr_lb[sid] >= 0) st.gamma(sid) = std::max(0.0, v(ix.sinr_lb[sid]));
    if (!ix.ipn_ub.empty() && ix.ipn_ub[sid] >= 0) st.beta(sid) = v(ix.ipn_ub[sid]) * c.sigma2_ground;
    if (!ix.sinr_ub.empty() && ix.sinr_ub[sid] >= 0) st.phi(sid) = std::max(0.0, v(ix.sinr_ub[sid]));
    if (!ix.ipn_lb.empty() && ix.ipn_lb[sid] >= 0) st.rho(sid) = v(ix.ipn_lb[sid]) * c.sigma2_ground;
  }
  if (!ix.p.empty()) {
    for (int l = 0; l < static_cast<int>(ix.p.size()); ++l)
      if (ix.p[l] >= 0) st.p(l) = std::max(0.0, v(ix.p[l]));
  }
  if (!ix.t.empty()) {
    for (int u = 0; u < static_cast<int>(ix.t.size()); ++u)
      if (ix.t[u] >= 0) st.t(u) = std::min(1.0, std::max(0.0, v(ix.t[u])));
  }
  if (!ix.x.empty()) {
    for (int i = 0; i < s.n_nodes(); ++i)
      for (int k = 0; k < s.n_users(); ++k) {
        const int id = ix.x[i * s.n_users() + k];
        if (id >= 0) st.x(i, k) = std::min(1.0, std::max(0.0, v(id)));
      }
  }
  return st;
}

Eigen::VectorXd project_association(const Eigen::VectorXd& v, const std::vector<char>& allowed) {
  const int n = static_cast<int>(v.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  std::vector<double> vals;
  vals.reserve(n);
  for (int i = 0; i < n; ++i)
    if (allowed.empty() || allowed[i]) vals.push_back(v(i));
  if (vals.empty()) return out;

  double pos_sum = 0.0;
  for (double x : vals) pos_sum += std::max(0.0, x);
  double theta = 0.0;
  if (pos_sum > 1.0) {
    // largest theta with sum max(v - theta, 0) = 1
    std::vector<double> u = vals;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double csum = 0.0;
    int rank = 0;
    for (int i = 0; i < static_cast<int>(u.size()); ++i) {
      csum += u[i];
      const double th = (csum - 1.0) / (i + 1);
      if (th < u[i]) {
        theta = th;
        rank = i + 1;
      }
    }
    (void)rank;
  }
  int j = 0;
  for (int i = 0; i < n; ++i) {
    if (!allowed.empty() && !allowed[i]) continue;
    out(i) = std::max(0.0, vals[j++] - theta);
  }
  return out;
}

XSProjection project_association_with_slack(const Eigen::MatrixXd& v_x,
                                            const std::array<double, 2>& v_s,
                                            const std::array<Eigen::MatrixXd, 2>& revenue_coef,
                                            const std::array<double, 2>& u_ref,
                                            const std::vector<char>& allowed) {
  const int nn = static_cast<int>(v_x.rows());
  const int nu = static_cast<int>(v_x.cols());
  const int nx = nn * nu;
  auto pair_allowed = [&](int i, int k) {
    return allowed.empty() || allowed[static_cast<std::size_t>(i) * nu + k];
  };

  ConeProgram prog(nx + 3);
  const int qvar = nx + 2;
  prog.add_objective(qvar, 1.0);

  {
    const int row = prog.add_rsoc(2 + nx + 2);
    prog.add_entry(row, qvar, 1.0);
    prog.add_offset(row + 1, 1.0);
    int zr = row + 2;
    for (int i = 0; i < nn; ++i)
      for (int k = 0; k < nu; ++k) {
        prog.add_entry(zr, i * nu + k, 1.0);
        prog.add_offset(zr, -v_x(i, k));
        ++zr;
      }
    for (int z = 0; z < 2; ++z) {
      prog.add_entry(zr, nx + z, 1.0);
      prog.add_offset(zr, -v_s[z]);
      ++zr;
    }
  }

  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < nu; ++k) {
      if (!pair_allowed(i, k)) {
        const int row = prog.add_zero(1);
        prog.add_entry(row, i * nu + k, 1.0);
        continue;
      }
      int row = prog.add_nonneg(1);
      prog.add_entry(row, i * nu + k, 1.0);
      row = prog.add_nonneg(1);
      prog.add_entry(row, i * nu + k, -1.0);
      prog.add_offset(row, 1.0);
    }
  for (int k = 0; k < nu; ++k) {
    const int row = prog.add_nonneg(1);
    for (int i = 0; i < nn; ++i)
      if (pair_allowed(i, k)) prog.add_entry(row, i * nu + k, -1.0);
    prog.add_offset(row, 1.0);
  }
  for (int z = 0; z < 2; ++z) {
    int row = prog.add_nonneg(1);
    prog.add_entry(row, nx + z, 1.0);
    row = prog.add_nonneg(1);
    for (int i = 0; i < nn; ++i)
      for (int k = 0; k < nu; ++k)
        if (pair_allowed(i, k) && revenue_coef[z](i, k) != 0.0)
          prog.add_entry(row, i * nu + k, revenue_coef[z](i, k));
    prog.add_entry(row, nx + z, 1.0);
    prog.add_offset(row, -u_ref[z]);
  }

  SolveSettings settings;
  settings.eps = 1e-9;
  const ConeSolution sol = conic::solve(prog, settings);
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::MaxIterations)
    throw InfeasibleModel("association-with-slack projection did not solve");

  XSProjection out;
  out.x = Eigen::MatrixXd::Zero(nn, nu);
  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < nu; ++k)
      if (pair_allowed(i, k)) out.x(i, k) = std::min(1.0, std::max(0.0, sol.v(i * nu + k)));
  for (int z = 0; z < 2; ++z) out.s[z] = std::max(0.0, sol.v(nx + z));
  return out;
}

}  // namespace sagin
