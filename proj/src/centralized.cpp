#include <sagin/centralized.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace sagin {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double binariness(const Eigen::MatrixXd& x) {
  return (x.array() * (1.0 - x.array())).maxCoeff();
}

double max_residual_excl_binariness(const std::map<std::string, double>& res) {
  double m = 0.0;
  for (const auto& [name, v] : res)
    if (name != "binariness") m = std::max(m, v);
  return m;
}

double penalty_term(const Eigen::MatrixXd& x, double rho) {
  return rho * (x.array().square() - x.array()).sum();
}

double phase_objective(const ScenarioInstance& s, const ChannelRealization& c,
                       const SolutionState& st, double rho) {
  return wsr(s, c, st) + penalty_term(st.x, rho);
}

Eigen::MatrixXd true_rates(const ScenarioInstance& s, const ChannelRealization& c,
                           const SolutionState& st) {
  Eigen::MatrixXd r(s.n_nodes(), s.n_users());
  for (int i = 0; i < s.n_nodes(); ++i)
    for (int k = 0; k < s.n_users(); ++k) r(i, k) = user_rate(s, c, st, i, k);
  return r;
}

Eigen::VectorXd feeder_capacities(const ScenarioInstance& s, const ChannelRealization& c,
                                  const SolutionState& st) {
  Eigen::VectorXd cap(s.network.n_st);
  for (int u = 0; u < s.network.n_st; ++u) cap(u) = backhaul_capacity(s, c, st, u);
  return cap;
}

// C-band-normalized feeder consumption of one ST across both bands and all users
double feeder_consumption_bphz(const ScenarioInstance& s, const ChannelRealization& c,
                               const SolutionState& st, int st_index) {
  const int node = s.network.n_bs + st_index;
  double tot = 0.0;
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < s.n_users(); ++k) tot += std::log2(1.0 + sinr(s, c, st, n, node, k));
  return tot;
}

void zero_unserved(const ScenarioInstance& s, SolutionState& st, double thresh = 0.5) {
  for (int i = 0; i < s.n_nodes(); ++i)
    for (int k = 0; k < s.n_users(); ++k)
      if (st.x(i, k) < thresh)
        for (int n = 0; n < 2; ++n) st.wv(n, i, k).setZero();
}

void round_association(const ScenarioInstance& s, SolutionState& st, bool allow_unserved) {
  for (int k = 0; k < s.n_users(); ++k) {
    int best = 0;
    for (int i = 1; i < s.n_nodes(); ++i)
      if (st.x(i, k) > st.x(best, k)) best = i;
    const double v = st.x(best, k);
    st.x.col(k).setZero();
    if (!allow_unserved || v >= 0.5) st.x(best, k) = 1.0;
  }
}

}  // namespace

ConeSolution solve_or_throw(const ConeProgram& prog, const SolveSettings& settings,
                            const std::string& what) {
  ConeSolution sol = conic::solve(prog, settings);
  if (sol.status == SolveStatus::Infeasible)
    throw InfeasibleModel(what + ": subproblem certified infeasible");
  if (sol.status == SolveStatus::Unbounded)
    throw InfeasibleModel(what + ": subproblem certified unbounded");
  return sol;
}

void apply_warm(SolveSettings& settings, const WarmCache& cache, const ConeProgram& prog) {
  if (cache.v.size() == prog.nvar() && cache.y.size() == prog.rows() &&
      cache.slack.size() == prog.rows()) {
    settings.warm_v = cache.v;
    settings.warm_y = cache.y;
    settings.warm_slack = cache.slack;
  }
}

void store_warm(WarmCache& cache, const ConeSolution& sol) {
  cache.v = sol.v;
  cache.y = sol.y;
  cache.slack = sol.slack;
}

Eigen::MatrixXd closest_node_association(const ScenarioInstance& s, bool per_operator) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(s.n_nodes(), s.n_users());
  for (int k = 0; k < s.n_users(); ++k) {
    int best = -1;
    double bd = 0.0;
    for (int i = 0; i < s.n_nodes(); ++i) {
      if (per_operator && s.node_operator(i) != s.user_operator(k)) continue;
      const double d = (s.node_pos(i) - s.user_pos[k]).norm();
      if (best < 0 || d < bd) {
        best = i;
        bd = d;
      }
    }
    x(best, k) = 1.0;
  }
  return x;
}

SolutionState matched_filter_state(const ScenarioInstance& s, const ChannelRealization& c,
                                   const Eigen::MatrixXd& x, int band_scope) {
  SolutionState st = SolutionState::zeros(s);
  st.x = x;
  std::vector<int> bands;
  if (band_scope < 0)
    bands = {0, 1};
  else
    bands = {band_scope};
  for (int i = 0; i < s.n_nodes(); ++i) {
    int served = 0;
    for (int k = 0; k < s.n_users(); ++k)
      if (x(i, k) > 0.5) ++served;
    if (served == 0) continue;
    const double pw = s.node_power_w(i) / (static_cast<double>(bands.size()) * served);
    for (int n : bands)
      for (int k = 0; k < s.n_users(); ++k)
        if (x(i, k) > 0.5) {
          const Eigen::VectorXcd& h = c.hv(n, i, k);
          const double nh = h.norm();
          if (nh > 0.0) st.wv(n, i, k) = std::sqrt(pw) * h.conjugate() / nh;
        }
  }
  st.p.setConstant(s.satellite.max_power_w / s.satellite.n_beams);
  for (int u = 0; u < s.network.n_st; ++u) {
    int in_beam = 0;
    for (int v = 0; v < s.network.n_st; ++v)
      if (s.st_beam[v] == s.st_beam[u]) ++in_beam;
    st.t(u) = 1.0 / in_beam;
  }
  tighten_aux(s, c, st);
  return st;
}

int backoff_feeder_overflow(const ScenarioInstance& s, const ChannelRealization& c,
                            SolutionState& st, int max_rounds, double tol) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  int rounds = 0;
  for (; rounds < max_rounds; ++rounds) {
    bool any = false;
    for (int u = 0; u < s.network.n_st; ++u) {
      const double cons = feeder_consumption_bphz(s, c, st, u);
      const double cap = backhaul_capacity(s, c, st, u) / s.bands.b_c_hz;
      if (cons - cap > tol) {
        const int node = s.network.n_bs + u;
        for (int n = 0; n < 2; ++n)
          for (int k = 0; k < s.n_users(); ++k) st.wv(n, node, k) *= inv_sqrt2;
        any = true;
      }
    }
    if (!any) break;
  }
  tighten_aux(s, c, st);
  return rounds;
}

SolutionState revive_dead_streams(const ScenarioInstance& s, const ChannelRealization& c,
                                  const SolutionState& st, double eps, bool mbc_on,
                                  const std::array<double, 2>& u_floor) {
  if (eps <= 0.0) return st;
  const int nn = s.n_nodes();
  const int nu = s.n_users();

  // base injection per dead stream: matched filter at an eps^2 node-power share
  std::vector<Eigen::VectorXcd> kick(st.w.size());
  std::vector<char> is_dead(st.w.size(), 0);
  for (int i = 0; i < nn; ++i) {
    int dead = 0;
    for (int n = 0; n < 2; ++n)
      for (int k = 0; k < nu; ++k)
        if (st.wv(n, i, k).squaredNorm() <= 1e-12 * s.node_power_w(i)) ++dead;
    if (dead == 0) continue;
    const double pw = eps * eps * s.node_power_w(i) / dead;
    for (int n = 0; n < 2; ++n)
      for (int k = 0; k < nu; ++k) {
        const std::size_t id = st.flat(n, i, k);
        if (st.wv(n, i, k).squaredNorm() <= 1e-12 * s.node_power_w(i)) {
          const Eigen::VectorXcd& h = c.hv(n, i, k);
          const double nh = h.norm();
          if (nh > 0.0) {
            kick[id] = std::sqrt(pw) * h.conjugate() / nh;
            is_dead[id] = 1;
          }
        }
      }
  }

  auto compose = [&](double scale) {
    if (scale <= 0.0) return st;
    SolutionState out = st;
    const double live = std::sqrt(std::max(0.0, 1.0 - scale * scale * eps * eps));
    for (std::size_t id = 0; id < out.w.size(); ++id) {
      if (is_dead[id]) {
        out.w[id] = scale * kick[id];
      } else {
        out.w[id] *= live;
      }
    }
    clamp_budgets(s, out);
    tighten_aux(s, c, out);
    return out;
  };

  // per-node feeder pre-shrink at full scale
  std::array<double, 64> node_scale{};
  node_scale.fill(1.0);
  for (int round = 0; round < 40; ++round) {
    SolutionState cand = compose(1.0);
    for (int u = 0; u < s.network.n_st; ++u) {
      const int node = s.network.n_bs + u;
      for (int n = 0; n < 2; ++n)
        for (int k = 0; k < nu; ++k) {
          const std::size_t id = st.flat(n, node, k);
          if (is_dead[id]) cand.w[id] *= node_scale[node];
        }
    }
    tighten_aux(s, c, cand);
    bool any = false;
    for (int u = 0; u < s.network.n_st; ++u) {
      const double cons = feeder_consumption_bphz(s, c, cand, u);
      const double cap = backhaul_capacity(s, c, cand, u) / s.bands.b_c_hz;
      if (cons - cap > 1e-6) {
        node_scale[s.network.n_bs + u] *= 0.5;
        any = true;
      }
    }
    if (!any) break;
  }
  for (int i = 0; i < nn; ++i)
    if (node_scale[i] < 1.0)
      for (int n = 0; n < 2; ++n)
        for (int k = 0; k < nu; ++k) {
          const std::size_t id = st.flat(n, i, k);
          if (is_dead[id]) kick[id] *= node_scale[i];
        }

  // joint check over a shrinking global injection scale; scale 0 is exact input
  double scale = 1.0;
  for (int round = 0; round <= 41; ++round) {
    const SolutionState cand = compose(scale);
    bool ok = true;
    for (int u = 0; u < s.network.n_st && ok; ++u) {
      const double cons = feeder_consumption_bphz(s, c, cand, u);
      const double cap = backhaul_capacity(s, c, cand, u) / s.bands.b_c_hz;
      if (cons - cap > 1e-6) ok = false;
    }
    if (ok && mbc_on) {
      const RevenueReport rev = revenue(s, c, cand);
      for (int z = 0; z < 2; ++z)
        if (rev.u[z] < u_floor[z]) ok = false;
    }
    if (ok) return cand;
    if (scale == 0.0) break;
    scale = (round >= 40) ? 0.0 : scale * 0.5;
  }
  return st;
}

// ---------------------------------------------------------------------------
// standalone per-operator optimization
// ---------------------------------------------------------------------------

NoSharingResult run_nosharing(const ScenarioInstance& s, const ChannelRealization& c,
                              const NoSharingOptions& opt) {
  NoSharingResult out;
  SolveSettings base_ss;
  base_ss.eps = opt.solver.eps;
  base_ss.max_iters = opt.solver.max_iters;

  const Eigen::MatrixXd x0 = closest_node_association(s, true);

  for (int z = 0; z < 2; ++z) {
    SolverTrace& tr = out.trace[z];
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(s.n_nodes(), s.n_users());
    for (int i = 0; i < s.n_nodes(); ++i)
      for (int k = 0; k < s.n_users(); ++k)
        if (s.node_operator(i) == z && s.user_operator(k) == z) x(i, k) = x0(i, k);

    SolutionState st = matched_filter_state(s, c, x, z);
    backoff_feeder_overflow(s, c, st);

    std::vector<char> own_node(s.n_nodes(), 0);
    for (int i = 0; i < s.n_nodes(); ++i) own_node[i] = s.node_operator(i) == z;

    auto own_rev = [&](const SolutionState& state) { return revenue(s, c, state).u[z]; };

    WarmCache warm_p, warm_t;
    auto block_solve = [&](SolutionState& cur, SatBlock kind, char label) {
      const auto t0 = Clock::now();
      const IteratePoint pt = IteratePoint::from_state(s, c, cur);
      const Eigen::VectorXd& other = kind == SatBlock::Power ? cur.t : cur.p;
      SurrogateProblem prob = build_nosharing_step(s, c, pt, z, kind, other, cur.x);
      SolveSettings ss = base_ss;
      WarmCache& wc = kind == SatBlock::Power ? warm_p : warm_t;
      apply_warm(ss, wc, prob.program);
      const ConeSolution sol = solve_or_throw(prob.program, ss, "standalone block");
      store_warm(wc, sol);
      ++tr.total_solves;
      SolutionState cand = extract_state(s, c, prob, sol.v, cur);
      clamp_budgets(s, cand);
      tighten_aux(s, c, cand);
      const bool accept = own_rev(cand) >= own_rev(cur) - 1e-12;
      if (accept) cur = cand;
      TraceEntry e;
      e.iter = static_cast<int>(tr.entries.size());
      e.step = label;
      e.wsr = own_rev(cur);
      e.objective = e.wsr;
      e.accepted = accept;
      e.solve_iters = sol.iterations;
      e.wall_ms = ms_since(t0);
      tr.entries.push_back(e);
    };

    int quiet = 0;
    double prev = own_rev(st);
    for (int it = 0; it < opt.max_iters; ++it) {
      if (z == kOpG) {
        block_solve(st, SatBlock::Power, 'w');
      } else {
        block_solve(st, SatBlock::Power, 'p');
        block_solve(st, SatBlock::Time, 't');
      }

      // association ascent: per-user gradient step projected onto the
      // own-node capped simplex, kept only when the revenue does not drop
      {
        Eigen::MatrixXd xc = st.x;
        for (int k = 0; k < s.n_users(); ++k) {
          if (s.user_operator(k) != z) continue;
          Eigen::VectorXd col(s.n_nodes());
          for (int i = 0; i < s.n_nodes(); ++i)
            col(i) = st.x(i, k) +
                     (own_node[i] ? opt.eta * s.weights(i, k) * user_rate(s, c, st, i, k) : 0.0);
          xc.col(k) = project_association(col, own_node);
        }
        SolutionState cand = st;
        cand.x = xc;
        const bool accept = own_rev(cand) >= own_rev(st) - 1e-12;
        if (accept) st = cand;
        TraceEntry e;
        e.iter = static_cast<int>(tr.entries.size());
        e.step = 'x';
        e.wsr = own_rev(st);
        e.objective = e.wsr;
        e.accepted = accept;
        tr.entries.push_back(e);
      }

      const double cur = own_rev(st);
      const double rel = std::abs(cur - prev) / std::max(1.0, std::abs(cur));
      quiet = rel < opt.rel_tol ? quiet + 1 : 0;
      prev = cur;
      if (quiet >= opt.tol_window) {
        tr.exit_reason = "converged";
        break;
      }
    }
    if (tr.exit_reason.empty()) tr.exit_reason = "iteration-cap";

    // binary rounding (largest value, lowest index on ties) and final polish
    for (int k = 0; k < s.n_users(); ++k) {
      if (s.user_operator(k) != z) continue;
      int best = -1;
      for (int i = 0; i < s.n_nodes(); ++i) {
        if (!own_node[i]) continue;
        if (best < 0 || st.x(i, k) > st.x(best, k)) best = i;
      }
      st.x.col(k).setZero();
      st.x(best, k) = 1.0;
    }
    zero_unserved(s, st);
    tighten_aux(s, c, st);
    if (z == kOpG) {
      block_solve(st, SatBlock::Power, 'w');
    } else {
      block_solve(st, SatBlock::Power, 'p');
      block_solve(st, SatBlock::Time, 't');
    }

    out.per_op[z] = st;
    out.u0[z] = own_rev(st);
  }

  // disjoint bands: merge directly
  SolutionState comb = SolutionState::zeros(s);
  comb.x = out.per_op[0].x + out.per_op[1].x;
  for (std::size_t id = 0; id < comb.w.size(); ++id) {
    if (out.per_op[0].w[id].squaredNorm() > 0.0)
      comb.w[id] = out.per_op[0].w[id];
    else
      comb.w[id] = out.per_op[1].w[id];
  }
  comb.p = out.per_op[1].p;
  comb.t = out.per_op[1].t;
  tighten_aux(s, c, comb);
  out.state = comb;
  return out;
}

// ---------------------------------------------------------------------------
// slack-assisted feasible-point search
// ---------------------------------------------------------------------------

SolutionState find_initial_point(const ScenarioInstance& s, const ChannelRealization& c,
                                 const std::array<double, 2>& u0, const SolutionState& seed,
                                 const InitPointOptions& opt) {
  SolutionState cur = seed;
  tighten_aux(s, c, cur);

  if (!opt.mbc_enabled) {
    backoff_feeder_overflow(s, c, cur);
    return cur;
  }

  SolveSettings base_ss;
  base_ss.eps = opt.solver.eps;
  base_ss.max_iters = opt.solver.max_iters;
  MbcSpec mbc;
  mbc.enabled = true;
  mbc.u_ref = u0;
  mbc.margin = opt.margin_floor;

  WarmCache warm_p, warm_t;
  auto slack_solve = [&](SatBlock kind) {
    const IteratePoint pt = IteratePoint::from_state(s, c, cur);
    const Eigen::VectorXd& other = kind == SatBlock::Power ? cur.t : cur.p;
    SurrogateProblem prob = build_initpoint_step(s, c, pt, kind, other, cur.x, mbc, opt.xi);
    SolveSettings ss = base_ss;
    WarmCache& wc = kind == SatBlock::Power ? warm_p : warm_t;
    apply_warm(ss, wc, prob.program);
    const ConeSolution sol = solve_or_throw(prob.program, ss, "feasibility search");
    store_warm(wc, sol);
    SolutionState cand = extract_state(s, c, prob, sol.v, cur);
    clamp_budgets(s, cand);
    tighten_aux(s, c, cand);
    cur = cand;
  };

  auto min_gap = [&](const SolutionState& state) {
    const RevenueReport rev = revenue(s, c, state);
    return std::min(rev.u[0] - u0[0], rev.u[1] - u0[1]);
  };

  for (int it = 0; it < opt.max_iters; ++it) {
    slack_solve(SatBlock::Power);
    slack_solve(SatBlock::Time);

    if (opt.move_x) {
      const Eigen::MatrixXd r = true_rates(s, c, cur);
      const RevenueReport rev = revenue(s, c, cur);
      Eigen::MatrixXd xraw = cur.x;
      for (int i = 0; i < s.n_nodes(); ++i)
        for (int k = 0; k < s.n_users(); ++k)
          xraw(i, k) += opt.eta * s.weights(i, k) * r(i, k);
      std::array<double, 2> sraw{};
      std::array<double, 2> floors{};
      std::array<Eigen::MatrixXd, 2> coef;
      for (int z = 0; z < 2; ++z) {
        floors[z] = u0[z] + opt.margin_floor;
        sraw[z] = std::max(0.0, floors[z] - rev.u[z]) - opt.eta * opt.xi;
        coef[z] = Eigen::MatrixXd::Zero(s.n_nodes(), s.n_users());
        for (int i = 0; i < s.n_nodes(); ++i)
          for (int k = 0; k < s.n_users(); ++k)
            coef[z](i, k) = alpha_coefficient(s, z, i, k) * r(i, k);
      }
      const XSProjection pr =
          project_association_with_slack(xraw, sraw, coef, floors, std::vector<char>());
      SolutionState cand = cur;
      cand.x = pr.x;
      if (min_gap(cand) >= min_gap(cur)) cur = cand;
    }

    const RevenueReport rev = revenue(s, c, cur);
    const auto res = constraint_residuals(s, c, cur, u0, true);
    const bool clear = rev.u[0] - u0[0] >= opt.margin_exit && rev.u[1] - u0[1] >= opt.margin_exit;
    if (clear && max_residual_excl_binariness(res) <= opt.residual_tol) return cur;
  }
  throw NoFeasiblePoint("no point cleared the revenue floors within the iteration cap");
}

// ---------------------------------------------------------------------------
// full alternating solver
// ---------------------------------------------------------------------------

CentralizedResult run_wsrm_centralized(const ScenarioInstance& s, const ChannelRealization& c,
                                       const CentralizedOptions& opt) {
  CentralizedResult out;
  SolveSettings base_ss;
  base_ss.eps = opt.solver.eps;
  base_ss.max_iters = opt.solver.max_iters;

  NoSharingResult ns;
  bool have_ns = false;
  if (!opt.u0_override || !opt.start) {
    ns = run_nosharing(s, c, opt.nosharing);
    have_ns = true;
  }
  const std::array<double, 2> u0 = opt.u0_override ? *opt.u0_override : ns.u0;
  const std::array<double, 2> u0_used =
      opt.mbc_enabled ? u0 : std::array<double, 2>{0.0, 0.0};
  out.u0 = u0;

  SolutionState init;
  if (opt.start) {
    init = *opt.start;
    init.validate_shape(s);
    tighten_aux(s, c, init);
  } else {
    InitPointOptions io = opt.init;
    io.mbc_enabled = opt.mbc_enabled;
    io.move_x = !opt.fix_x;
    init = find_initial_point(s, c, u0_used, ns.state, io);
    if (opt.kick_eps > 0.0 && !opt.fix_x)
      init = revive_dead_streams(s, c, init, opt.kick_eps, opt.mbc_enabled,
                                 {u0_used[0] + opt.margin, u0_used[1] + opt.margin});
    if (opt.uniform_x_init && !opt.fix_x) {
      SolutionState cand = init;
      cand.x = Eigen::MatrixXd::Constant(s.n_nodes(), s.n_users(), 1.0 / s.n_nodes());
      bool ok = true;
      if (opt.mbc_enabled) {
        const RevenueReport rev = revenue(s, c, cand);
        for (int z = 0; z < 2; ++z)
          if (rev.u[z] - u0_used[z] < opt.init.margin_exit) ok = false;
      }
      if (ok) init = cand;
    }
  }

  SolverTrace& tr = out.trace;
  SolutionState cur = init;
  double rho = opt.rho0;
  WarmCache warm_p, warm_t, warm_x;

  auto true_ok = [&](const SolutionState& state) {
    const auto res = constraint_residuals(s, c, state, u0_used, opt.mbc_enabled);
    return max_residual_excl_binariness(res) <= 1e-6;
  };

  auto record = [&](char step, int phase, int iter, bool accepted, double wall,
                    int iters_used) {
    TraceEntry e;
    e.phase = phase;
    e.iter = iter;
    e.step = step;
    e.wsr = wsr(s, c, cur);
    e.penalty = penalty_term(cur.x, rho);
    e.objective = e.wsr + e.penalty;
    const RevenueReport rev = revenue(s, c, cur);
    for (int z = 0; z < 2; ++z) e.mbc_gap[z] = rev.u[z] - u0[z];
    e.max_residual =
        max_residual_excl_binariness(constraint_residuals(s, c, cur, u0_used, opt.mbc_enabled));
    e.accepted = accepted;
    e.wall_ms = wall;
    e.solve_iters = iters_used;
    tr.entries.push_back(e);
  };

  // one guarded block step; margin retry inside, throws InfeasibleModel only
  // after both the hardened and the exact-floor builds certify infeasible
  auto do_step = [&](char kind, int phase, int iter) {
    const auto t0 = Clock::now();
    int iters_used = 0;
    auto attempt = [&](double margin) -> std::optional<SolutionState> {
      MbcSpec m;
      m.enabled = opt.mbc_enabled;
      m.u_ref = u0_used;
      m.margin = margin;
      const IteratePoint pt = IteratePoint::from_state(s, c, cur);
      SurrogateProblem prob;
      WarmCache* wc = nullptr;
      if (kind == 'p') {
        prob = build_p_step(s, c, pt, cur.t, cur.x, m);
        wc = &warm_p;
      } else if (kind == 't') {
        prob = build_t_step(s, c, pt, cur.p, cur.x, m);
        wc = &warm_t;
      } else {
        prob = build_x_step(s, true_rates(s, c, cur), pt, m, rho, feeder_capacities(s, c, cur));
        wc = &warm_x;
      }
      SolveSettings ss = base_ss;
      apply_warm(ss, *wc, prob.program);
      ConeSolution sol = conic::solve(prob.program, ss);
      ++tr.total_solves;
      iters_used = sol.iterations;
      if (sol.status == SolveStatus::Infeasible || sol.status == SolveStatus::Unbounded)
        return std::nullopt;
      store_warm(*wc, sol);
      SolutionState cand = extract_state(s, c, prob, sol.v, cur);
      if (kind != 'x') {
        clamp_budgets(s, cand);
        tighten_aux(s, c, cand);
      }
      return cand;
    };
    std::optional<SolutionState> cand = attempt(opt.margin);
    if (!cand && opt.mbc_enabled) cand = attempt(0.0);
    if (!cand) throw InfeasibleModel("block step infeasible at the exact floors");
    const bool accept =
        phase_objective(s, c, *cand, rho) >= phase_objective(s, c, cur, rho) - 1e-12 &&
        true_ok(*cand);
    if (accept) cur = *cand;
    record(kind, phase, iter, accept, ms_since(t0), iters_used);
  };

  auto run_phases = [&]() {
    tr.phase_rho.assign(1, rho);
    for (int phase = 0; phase < opt.max_phases; ++phase) {
      int quiet = 0;
      double prev = phase_objective(s, c, cur, rho);
      for (int iter = 0; iter < opt.max_inner; ++iter) {
        if (opt.enable_p) do_step('p', phase, iter);
        if (opt.enable_t) do_step('t', phase, iter);
        if (!opt.fix_x) do_step('x', phase, iter);
        const double obj = phase_objective(s, c, cur, rho);
        const double rel = std::abs(obj - prev) / std::max(1.0, std::abs(obj));
        quiet = rel < opt.inner_rel_tol ? quiet + 1 : 0;
        prev = obj;
        if (quiet >= opt.inner_tol_window) break;
      }
      if (binariness(cur.x) <= opt.binary_tol) {
        tr.exit_reason = "binary";
        break;
      }
      if (phase + 1 < opt.max_phases) {
        rho *= opt.rho_growth;
        tr.phase_rho.push_back(rho);
      } else {
        tr.exit_reason = "phase-cap";
      }
    }

    round_association(s, cur, /*allow_unserved=*/true);
    zero_unserved(s, cur);
    tighten_aux(s, c, cur);

    // final polish at the fixed binary association (penalty now zero)
    const int polish_iter = opt.max_inner;
    if (opt.enable_p) do_step('p', static_cast<int>(tr.phase_rho.size()) - 1, polish_iter);
    if (opt.enable_t) do_step('t', static_cast<int>(tr.phase_rho.size()) - 1, polish_iter);
  };

  bool restarted = false;
  for (;;) {
    try {
      run_phases();
      break;
    } catch (const InfeasibleModel& e) {
      if (!restarted) {
        restarted = true;
        tr.exit_reason = std::string("restarted: ") + e.what();
        cur = init;
        rho = opt.rho0;
        warm_p = WarmCache{};
        warm_t = WarmCache{};
        warm_x = WarmCache{};
        continue;
      }
      std::ostringstream diag;
      diag << "alternating solver failed twice: " << e.what() << " (wsr=" << wsr(s, c, cur)
           << ", binariness=" << binariness(cur.x) << ")";
      throw InfeasibleModel(diag.str());
    }
  }

  // crude achievability cap as a sanity guard
  {
    double cap = 0.0;
    double pmax = 0.0;
    for (int i = 0; i < s.n_nodes(); ++i) pmax = std::max(pmax, s.node_power_w(i));
    for (int n = 0; n < 2; ++n)
      for (int k = 0; k < s.n_users(); ++k) {
        double g = 0.0;
        for (int i = 0; i < s.n_nodes(); ++i)
          g = std::max(g, c.hv(n, i, k).squaredNorm());
        cap += std::log2(1.0 + pmax * g / c.sigma2_ground);
      }
    if (wsr(s, c, cur) > cap + 1e-6)
      throw std::logic_error("weighted sum rate exceeded the single-user capacity bound");
  }

  out.state = cur;
  const RevenueReport rev = revenue(s, c, cur);
  out.u = rev.u;
  out.wsr = wsr(s, c, cur);
  out.residuals = constraint_residuals(s, c, cur, u0_used, opt.mbc_enabled);
  if (tr.exit_reason.empty()) tr.exit_reason = "phase-cap";
  return out;
}

}  // namespace sagin
