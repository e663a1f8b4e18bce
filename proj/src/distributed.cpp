#include <sagin/distributed.hpp>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <thread>

#include <unistd.h>

namespace sagin {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int stream_flat(const ScenarioInstance& s, int band, int node, int user) {
  return (band * s.n_nodes() + node) * s.n_users() + user;
}

Eigen::MatrixXd true_rates(const ScenarioInstance& s, const ChannelRealization& c,
                           const SolutionState& st) {
  Eigen::MatrixXd r(s.n_nodes(), s.n_users());
  for (int i = 0; i < s.n_nodes(); ++i)
    for (int k = 0; k < s.n_users(); ++k) r(i, k) = user_rate(s, c, st, i, k);
  return r;
}

void zero_unserved(const ScenarioInstance& s, SolutionState& st) {
  for (int n = 0; n < st.n_bands; ++n)
    for (int i = 0; i < s.n_nodes(); ++i)
      for (int k = 0; k < s.n_users(); ++k)
        if (st.x(i, k) < 0.5) st.wv(n, i, k).setZero();
}

double max_residual_excl_binariness(const ScenarioInstance& s, const ChannelRealization& c,
                                    const SolutionState& st, const std::array<double, 2>& u0,
                                    bool mbc_on) {
  double worst = 0.0;
  for (const auto& [name, val] : constraint_residuals(s, c, st, u0, mbc_on))
    if (name != "binariness") worst = std::max(worst, val);
  return worst;
}

// Revenue of operator z earned on its own nodes only; the floor each agent can
// honor locally.
double own_node_revenue(const ScenarioInstance& s, const ChannelRealization& c,
                        const SolutionState& st, int z) {
  double u = 0.0;
  for (int i = 0; i < s.n_nodes(); ++i) {
    if (s.node_operator(i) != z) continue;
    for (int k = 0; k < s.n_users(); ++k) {
      const double xv = st.x(i, k);
      if (xv <= 0.0) continue;
      u += xv * alpha_coefficient(s, z, i, k) * user_rate(s, c, st, i, k);
    }
  }
  return u;
}

std::vector<int> own_nodes(const ScenarioInstance& s, int z) {
  std::vector<int> v;
  for (int i = 0; i < s.n_nodes(); ++i)
    if (s.node_operator(i) == z) v.push_back(i);
  return v;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return v;
}

void put_f64_le(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

// ---------------------------------------------------------------------------
// consensus layout
// ---------------------------------------------------------------------------

int consensus_size(const ScenarioInstance& s) {
  return 2 * s.n_nodes() * s.n_users() + 8 * s.n_users();
}

int consensus_gamma_index(const ScenarioInstance& s, int band, int node, int user) {
  return stream_flat(s, band, node, user);
}

int consensus_theta_index(const ScenarioInstance& s, int band, int op, int user) {
  return 2 * s.n_nodes() * s.n_users() + (band * 2 + op) * s.n_users() + user;
}

int consensus_psi_index(const ScenarioInstance& s, int band, int op, int user) {
  return consensus_theta_index(s, band, op, user) + 4 * s.n_users();
}

ConsensusState consensus_from_state(const ScenarioInstance& s, const ChannelRealization& c,
                                    const SolutionState& st) {
  ConsensusState cs;
  cs.v = Eigen::VectorXd::Zero(consensus_size(s));
  const double s2 = c.sigma2_ground;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < s.n_nodes(); ++i)
      for (int k = 0; k < s.n_users(); ++k)
        cs.v[consensus_gamma_index(s, n, i, k)] = sinr(s, c, st, n, i, k);
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
        cross /= s2;
        cs.v[consensus_theta_index(s, n, z, k)] = cross;
        cs.v[consensus_psi_index(s, n, z, k)] = cross;
      }
  return cs;
}

// ---------------------------------------------------------------------------
// message protocol
// ---------------------------------------------------------------------------

std::string encode_envelope(const Envelope& e) {
  std::string out;
  out.reserve(10 + 8 * e.payload.size());
  out.push_back(static_cast<char>(e.kind));
  out.push_back(static_cast<char>(e.sender));
  put_u32_le(out, e.iteration);
  put_u32_le(out, static_cast<std::uint32_t>(e.payload.size()));
  for (double d : e.payload) put_f64_le(out, d);
  return out;
}

Envelope decode_envelope(const std::string& bytes) {
  if (bytes.size() < 10) throw std::runtime_error("envelope: truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Envelope e;
  const unsigned kind = p[0];
  if (kind < 1 || kind > 4) throw std::runtime_error("envelope: unknown kind");
  e.kind = static_cast<MsgKind>(kind);
  e.sender = p[1];
  e.iteration = get_u32_le(p + 2);
  const std::uint32_t count = get_u32_le(p + 6);
  if (bytes.size() != 10 + 8 * static_cast<std::size_t>(count))
    throw std::runtime_error("envelope: payload size mismatch");
  e.payload.resize(count);
  for (std::uint32_t j = 0; j < count; ++j) e.payload[j] = get_f64_le(p + 10 + 8 * j);
  return e;
}

bool send_framed(int fd, const std::string& bytes) {
  std::string framed;
  framed.reserve(4 + bytes.size());
  put_u32_le(framed, static_cast<std::uint32_t>(bytes.size()));
  framed += bytes;
  std::size_t off = 0;
  while (off < framed.size()) {
    const ssize_t n = ::write(fd, framed.data() + off, framed.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string recv_framed(int fd) {
  auto read_exact = [fd](char* buf, std::size_t want) -> std::size_t {
    std::size_t got = 0;
    while (got < want) {
      const ssize_t n = ::read(fd, buf + got, want - got);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error("framed read failed");
      }
      if (n == 0) break;
      got += static_cast<std::size_t>(n);
    }
    return got;
  };
  char hdr[4];
  const std::size_t h = read_exact(hdr, 4);
  if (h == 0) return {};
  if (h < 4) throw std::runtime_error("framed read: truncated length");
  const std::uint32_t len = get_u32_le(reinterpret_cast<const unsigned char*>(hdr));
  std::string body(len, '\0');
  if (read_exact(body.data(), len) != len)
    throw std::runtime_error("framed read: truncated body");
  return body;
}

void MessageLog::append(MsgKind kind, std::uint8_t sender, const std::vector<double>& payload) {
  Envelope e;
  e.kind = kind;
  e.sender = sender;
  e.iteration = next_tag[sender]++;
  e.payload = payload;
  transcript += encode_envelope(e);
}

// ---------------------------------------------------------------------------
// dual-decomposition user association
// ---------------------------------------------------------------------------

int ua_user_decision(const ScenarioInstance& s, int user, const Eigen::MatrixXd& rates,
                     const std::array<double, 2>& lambda) {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < s.n_nodes(); ++i) {
    double coef = s.weights(i, user);
    for (int z = 0; z < 2; ++z) coef += lambda[z] * alpha_coefficient(s, z, i, user);
    const double score = coef * rates(i, user);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

std::array<double, 2> ua_dual_update(const std::array<double, 2>& lambda, double eta,
                                     const std::array<double, 2>& u,
                                     const std::array<double, 2>& u0) {
  std::array<double, 2> out{};
  for (int z = 0; z < 2; ++z) out[z] = std::max(0.0, lambda[z] - eta * (u[z] - u0[z]));
  return out;
}

DualUaResult run_dual_ua(const ScenarioInstance& s, const Eigen::MatrixXd& rates,
                         const DualUaOptions& opt) {
  const int nn = s.n_nodes(), nu = s.n_users();
  DualUaResult res;
  res.x = Eigen::MatrixXd::Zero(nn, nu);

  struct Candidate {
    Eigen::MatrixXd x;
    std::array<double, 2> u{0.0, 0.0};
    double wsr_val = 0.0;
  };
  std::vector<Candidate> cands;

  std::array<double, 2> lambda{0.0, 0.0};
  double g_prev = std::numeric_limits<double>::quiet_NaN();
  int quiet = 0;

  for (int it = 0; it < opt.max_iters; ++it) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(nn, nu);
    double chosen_sum = 0.0;
    for (int k = 0; k < nu; ++k) {
      const int i = ua_user_decision(s, k, rates, lambda);
      x(i, k) = 1.0;
      double coef = s.weights(i, k);
      for (int z = 0; z < 2; ++z) coef += lambda[z] * alpha_coefficient(s, z, i, k);
      chosen_sum += coef * rates(i, k);
    }
    std::array<double, 2> u{0.0, 0.0};
    double wsr_val = 0.0;
    for (int k = 0; k < nu; ++k)
      for (int i = 0; i < nn; ++i) {
        if (x(i, k) <= 0.0) continue;
        wsr_val += s.weights(i, k) * rates(i, k);
        for (int z = 0; z < 2; ++z) u[z] += alpha_coefficient(s, z, i, k) * rates(i, k);
      }
    const double g = chosen_sum - lambda[0] * opt.u0[0] - lambda[1] * opt.u0[1];
    res.dual_values.push_back(g);
    res.lambda_trace.push_back(lambda);
    res.iterations = it + 1;

    bool seen = false;
    for (const auto& cd : cands)
      if ((cd.x - x).cwiseAbs().maxCoeff() < 0.5) {
        seen = true;
        break;
      }
    if (!seen) cands.push_back({x, u, wsr_val});

    if (!std::isnan(g_prev) && std::abs(g - g_prev) < opt.tol) {
      if (++quiet >= opt.tol_window) {
        res.converged = true;
        lambda = ua_dual_update(lambda, opt.eta, u, opt.u0);
        break;
      }
    } else {
      quiet = 0;
    }
    g_prev = g;
    lambda = ua_dual_update(lambda, opt.eta, u, opt.u0);
  }
  res.lambda = lambda;

  // Rank stored associations: floor-feasible ones by penalized value at the
  // final multipliers, falling back to the best penalized value overall.
  auto lag = [&](const Candidate& cd) {
    double L = cd.wsr_val;
    for (int z = 0; z < 2; ++z) L += lambda[z] * (cd.u[z] - opt.u0[z]);
    return L;
  };
  const Candidate* best_feas = nullptr;
  const Candidate* best_any = nullptr;
  for (const auto& cd : cands) {
    if (!best_any || lag(cd) > lag(*best_any)) best_any = &cd;
    const bool feas = cd.u[0] >= opt.u0[0] - 1e-12 && cd.u[1] >= opt.u0[1] - 1e-12;
    if (feas && (!best_feas || lag(cd) > lag(*best_feas))) best_feas = &cd;
  }
  const Candidate* pick = best_feas ? best_feas : best_any;
  res.x = pick->x;
  res.feasible = best_feas != nullptr;
  res.duality_gap = res.dual_values.back() -
                    (pick->wsr_val + lambda[0] * (pick->u[0] - opt.u0[0]) +
                     lambda[1] * (pick->u[1] - opt.u0[1]));
  return res;
}

// ---------------------------------------------------------------------------
// agent subproblem
// ---------------------------------------------------------------------------

namespace {

// Adds the Re/Im rows of (ht . w) for one stream's stacked coordinates.
void add_cx_rows(ConeProgram& prog, int row_re, int row_im, int wbase,
                 const Eigen::VectorXcd& ht) {
  for (int a = 0; a < ht.size(); ++a) {
    const double re = ht[a].real(), im = ht[a].imag();
    if (re != 0.0) {
      prog.add_entry(row_re, wbase + 2 * a, re);
      prog.add_entry(row_im, wbase + 2 * a + 1, re);
    }
    if (im != 0.0) {
      prog.add_entry(row_re, wbase + 2 * a + 1, -im);
      prog.add_entry(row_im, wbase + 2 * a, im);
    }
  }
}

void add_affine_w(ConeProgram& prog, int row, int wbase, const Eigen::VectorXd& coef,
                  double scale = 1.0) {
  for (int j = 0; j < coef.size(); ++j)
    if (coef[j] != 0.0) prog.add_entry(row, wbase + j, scale * coef[j]);
}

struct AgentIx {
  int n_vars = 0;
  int n_ant = 0;
  std::vector<int> w, beta, rate, phi, rho;  // full stream tables, -1 absent
  std::vector<int> gamma;                    // full stream table, all present
  std::vector<int> theta, psi;               // (band, operator, user) tables
  std::vector<int> ggx, e_own;               // (band, user) tables
  std::vector<int> p, v_sat, t;
  int q = -1;
  int mbc_row = -1;
};

struct AgentProblem {
  ConeProgram program{0};
  AgentIx ix;
};

// One operator's convex local problem at a fixed expansion point: rate
// surrogates over its own-node streams, interference bookkeeping split into an
// exact own-set part plus consensus copies of the other set's contribution,
// its own resource budgets (and feeder rows for the satellite operator), the
// revenue floor earned on its own nodes, and the quadratic consensus penalty.
AgentProblem build_agent_step(const ScenarioInstance& s, const ChannelRealization& c,
                              const IteratePoint& pt, int op, SatBlock kind,
                              const SolutionState& state, const ConsensusState& consensus,
                              const Eigen::VectorXd& nu, const AdmmOptions& opt) {
  const int nn = s.n_nodes(), nusr = s.n_users(), na = s.network.n_antennas;
  const int ns = 2 * nn * nusr;
  const int csz = consensus_size(s);
  const double s2 = c.sigma2_ground;
  const double ln2 = std::log(2.0);
  const std::vector<int> own = own_nodes(s, op);
  const bool sat = op == kOpS;

  // Noise-normalized expansion clone: interference bounds divided by the
  // ground noise power so every in-program power is relative to noise = 1.
  IteratePoint ptn = pt;
  if (ptn.beta_prev.size()) ptn.beta_prev /= s2;
  if (ptn.rho_prev.size()) ptn.rho_prev /= s2;

  AgentProblem ap;
  AgentIx& ix = ap.ix;
  ix.n_ant = na;
  ix.w.assign(ns, -1);
  ix.beta.assign(ns, -1);
  ix.rate.assign(ns, -1);
  ix.phi.assign(ns, -1);
  ix.rho.assign(ns, -1);
  ix.gamma.assign(ns, -1);
  ix.theta.assign(4 * nusr, -1);
  ix.psi.assign(4 * nusr, -1);
  ix.ggx.assign(2 * nusr, -1);
  ix.e_own.assign(2 * nusr, -1);

  auto alloc = [&ix](int k) {
    const int base = ix.n_vars;
    ix.n_vars += k;
    return base;
  };
  auto nzk = [nusr](int n, int z, int k) { return (n * 2 + z) * nusr + k; };
  auto nk = [nusr](int n, int k) { return n * nusr + k; };

  for (int n = 0; n < 2; ++n)
    for (int i : own)
      for (int k = 0; k < nusr; ++k) {
        const int sid = stream_flat(s, n, i, k);
        ix.w[sid] = alloc(2 * na);
        ix.beta[sid] = alloc(1);
        ix.rate[sid] = alloc(1);
        if (sat) {
          ix.phi[sid] = alloc(1);
          ix.rho[sid] = alloc(1);
        }
      }
  for (int sid = 0; sid < ns; ++sid) ix.gamma[sid] = alloc(1);
  for (int j = 0; j < 4 * nusr; ++j) ix.theta[j] = alloc(1);
  for (int j = 0; j < 4 * nusr; ++j) ix.psi[j] = alloc(1);
  for (int j = 0; j < 2 * nusr; ++j) ix.ggx[j] = alloc(1);
  for (int j = 0; j < 2 * nusr; ++j) ix.e_own[j] = alloc(1);
  if (sat && kind == SatBlock::Power) {
    ix.p.resize(s.satellite.n_beams);
    for (int l = 0; l < s.satellite.n_beams; ++l) ix.p[l] = alloc(1);
    ix.v_sat.resize(s.network.n_st);
    for (int m = 0; m < s.network.n_st; ++m) ix.v_sat[m] = alloc(1);
  }
  if (sat && kind == SatBlock::Time) {
    ix.t.resize(s.network.n_st);
    for (int m = 0; m < s.network.n_st; ++m) ix.t[m] = alloc(1);
  }
  ix.q = alloc(1);

  ConeProgram prog(ix.n_vars);

  // own-set received-power epigraphs and interference-minorant aggregates
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < nusr; ++k) {
      {
        const int row = prog.add_block(conic::Cone::Zero, 1);
        prog.add_entry(row, ix.ggx[nk(n, k)], 1.0);
        double cst = 0.0;
        for (int j : own) {
          const Eigen::VectorXcd hj = c.hv(n, j, k) / std::sqrt(s2);
          for (int kp = 0; kp < nusr; ++kp) {
            if (kp == k) continue;
            const AffineW g2 = g2_surrogate(ptn, hj, stream_flat(s, n, j, kp));
            add_affine_w(prog, row, ix.w[stream_flat(s, n, j, kp)], g2.coef, -1.0);
            cst -= g2.constant;
          }
        }
        prog.add_offset(row, cst);
      }
      {
        const int base = prog.add_block(conic::Cone::RSOC,
                                        2 + 2 * static_cast<int>(own.size()) * nusr);
        prog.add_entry(base, ix.e_own[nk(n, k)], 1.0);
        prog.add_offset(base + 1, 0.5);
        int r = base + 2;
        for (int j : own) {
          const Eigen::VectorXcd hj = c.hv(n, j, k) / std::sqrt(s2);
          for (int kp = 0; kp < nusr; ++kp) {
            add_cx_rows(prog, r, r + 1, ix.w[stream_flat(s, n, j, kp)], hj);
            r += 2;
          }
        }
      }
    }

  // per-stream rate machinery on own streams
  for (int n = 0; n < 2; ++n)
    for (int i : own)
      for (int k = 0; k < nusr; ++k) {
        const int sid = stream_flat(s, n, i, k);
        const Eigen::VectorXcd ht = c.hv(n, i, k) / std::sqrt(s2);
        const int other = 1 - op;

        {  // beta >= E_own - (own-signal minorant) + theta_other + 1
          const AffineW g2own = g2_surrogate(ptn, ht, sid);
          const int row = prog.add_block(conic::Cone::NonNeg, 1);
          prog.add_entry(row, ix.beta[sid], 1.0);
          prog.add_entry(row, ix.e_own[nk(n, k)], -1.0);
          add_affine_w(prog, row, ix.w[sid], g2own.coef);
          prog.add_entry(row, ix.theta[nzk(n, other, k)], -1.0);
          prog.add_offset(row, g2own.constant - 1.0);
        }
        {  // rate-ratio minorant dominates the SINR copy
          const RateLowerSurrogate g1 = g1_surrogate(ptn, ht, sid);
          const int row = prog.add_block(conic::Cone::NonNeg, 1);
          add_affine_w(prog, row, ix.w[sid], g1.w_part.coef);
          prog.add_entry(row, ix.beta[sid], g1.beta_coef);
          prog.add_entry(row, ix.gamma[sid], -1.0);
          prog.add_offset(row, g1.w_part.constant);
        }
        {
          const int row = prog.add_block(conic::Cone::NonNeg, 1);
          prog.add_entry(row, ix.gamma[sid], 1.0);
        }
        {  // r <= log2(1 + gamma)
          const int base = prog.add_exp();
          prog.add_entry(base, ix.rate[sid], ln2);
          prog.add_offset(base + 1, 1.0);
          prog.add_entry(base + 2, ix.gamma[sid], 1.0);
          prog.add_offset(base + 2, 1.0);
        }
        {
          const int row = prog.add_block(conic::Cone::NonNeg, 1);
          prog.add_entry(row, ix.rate[sid], 1.0);
        }
        if (sat) {
          {  // phi * rho >= |ht . w|^2
            const int base = prog.add_block(conic::Cone::RSOC, 4);
            prog.add_entry(base, ix.phi[sid], 1.0);
            prog.add_entry(base + 1, ix.rho[sid], 0.5);
            add_cx_rows(prog, base + 2, base + 3, ix.w[sid], ht);
          }
          {  // rho <= own-set minorant + psi_other + 1
            const int row = prog.add_block(conic::Cone::NonNeg, 1);
            prog.add_entry(row, ix.ggx[nk(n, k)], 1.0);
            prog.add_entry(row, ix.psi[nzk(n, other, k)], 1.0);
            prog.add_entry(row, ix.rho[sid], -1.0);
            prog.add_offset(row, 1.0);
          }
        }
      }

  // own cross-interference reports: upper bound as an epigraph, lower bound
  // dominated by the minorant aggregate
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < nusr; ++k) {
      {
        const int base = prog.add_block(
            conic::Cone::RSOC, 2 + 2 * static_cast<int>(own.size()) * (nusr - 1));
        prog.add_entry(base, ix.theta[nzk(n, op, k)], 1.0);
        prog.add_offset(base + 1, 0.5);
        int r = base + 2;
        for (int j : own) {
          const Eigen::VectorXcd hj = c.hv(n, j, k) / std::sqrt(s2);
          for (int kp = 0; kp < nusr; ++kp) {
            if (kp == k) continue;
            add_cx_rows(prog, r, r + 1, ix.w[stream_flat(s, n, j, kp)], hj);
            r += 2;
          }
        }
      }
      {
        const int row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_entry(row, ix.ggx[nk(n, k)], 1.0);
        prog.add_entry(row, ix.psi[nzk(n, op, k)], -1.0);
      }
    }

  // per-node transmit power budgets over both bands
  for (int i : own) {
    const int base = prog.add_block(conic::Cone::SOC, 1 + 2 * na * 2 * nusr);
    prog.add_offset(base, std::sqrt(s.node_power_w(i)));
    int r = base + 1;
    for (int n = 0; n < 2; ++n)
      for (int k = 0; k < nusr; ++k) {
        const int wb = ix.w[stream_flat(s, n, i, k)];
        for (int j = 0; j < 2 * na; ++j) prog.add_entry(r++, wb + j, 1.0);
      }
  }

  // satellite feeder links
  if (sat) {
    const double bc_over_bka = s.bands.b_c_hz / s.satellite.b_ka_hz;
    if (kind == SatBlock::Power) {
      for (int l = 0; l < s.satellite.n_beams; ++l) {
        const int row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_entry(row, ix.p[l], 1.0);
      }
      {
        const int row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_offset(row, s.satellite.max_power_w);
        for (int l = 0; l < s.satellite.n_beams; ++l) prog.add_entry(row, ix.p[l], -1.0);
      }
    }
    if (kind == SatBlock::Time) {
      for (int m = 0; m < s.network.n_st; ++m) {
        const int row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_entry(row, ix.t[m], 1.0);
      }
      for (int l = 0; l < s.satellite.n_beams; ++l) {
        const int row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_offset(row, 1.0);
        for (int m = 0; m < s.network.n_st; ++m)
          if (s.st_beam[m] == l) prog.add_entry(row, ix.t[m], -1.0);
      }
    }
    for (int i : own) {
      const int m = s.st_index(i);
      const BackhaulLowerSurrogate bs = backhaul_surrogate(s, c, ptn, m);
      int row = -1;
      if (kind == SatBlock::Power) {
        const double that = state.t[m];
        {  // v <= log2(1 + sum_l p_l gain_l)
          const int base = prog.add_exp();
          prog.add_entry(base, ix.v_sat[m], ln2);
          prog.add_offset(base + 1, 1.0);
          prog.add_offset(base + 2, 1.0);
          for (int l = 0; l < s.satellite.n_beams; ++l)
            prog.add_entry(base + 2, ix.p[l], bs.gain[l]);
        }
        row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_entry(row, ix.v_sat[m], that);
        double off = -that * bs.c1;
        for (int l = 0; l < s.satellite.n_beams; ++l) {
          if (bs.c2[l] == 0.0) continue;
          prog.add_entry(row, ix.p[l], -that * bs.c2[l]);
          off += that * bs.c2[l] * bs.p_prev[l];
        }
        prog.add_offset(row, off);
      } else {
        const double kappa = bs.exact_bps(pt.p_prev, 1.0) / s.satellite.b_ka_hz;
        row = prog.add_block(conic::Cone::NonNeg, 1);
        prog.add_entry(row, ix.t[m], kappa);
      }
      double off = 0.0;
      for (int n = 0; n < 2; ++n)
        for (int k = 0; k < nusr; ++k) {
          const double xv = pt.x_prev(i, k);
          if (xv <= 0.0) continue;
          const int sid = stream_flat(s, n, i, k);
          const LogUpperSurrogate g3 = g3_surrogate(ptn, sid);
          prog.add_entry(row, ix.phi[sid], -bc_over_bka * xv * g3.slope);
          off -= bc_over_bka * xv * g3.constant;
        }
      prog.add_offset(row, off);
    }
  }

  // revenue floor over own nodes
  if (opt.mbc_enabled) {
    ix.mbc_row = prog.add_block(conic::Cone::NonNeg, 1);
    for (int n = 0; n < 2; ++n)
      for (int i : own)
        for (int k = 0; k < nusr; ++k) {
          const double coef = pt.x_prev(i, k) * alpha_coefficient(s, op, i, k);
          if (coef > 0.0)
            prog.add_entry(ix.mbc_row, ix.rate[stream_flat(s, n, i, k)], coef);
        }
    prog.add_offset(ix.mbc_row, -(opt.u0[op] + opt.margin));
  }

  // quadratic consensus penalty: q >= 0.5 || local - (global - nu/c) ||^2
  {
    const int base = prog.add_block(conic::Cone::RSOC, 2 + csz);
    prog.add_entry(base, ix.q, 1.0);
    prog.add_offset(base + 1, 1.0);
    for (int j = 0; j < csz; ++j) {
      int var = -1;
      if (j < ns) {
        var = ix.gamma[j];
      } else if (j < ns + 4 * nusr) {
        var = ix.theta[j - ns];
      } else {
        var = ix.psi[j - ns - 4 * nusr];
      }
      prog.add_entry(base + 2 + j, var, 1.0);
      prog.add_offset(base + 2 + j, -(consensus.v[j] - nu[j] / opt.c));
    }
  }

  // objective: maximize weighted served rates, penalize consensus deviation
  for (int n = 0; n < 2; ++n)
    for (int i : own)
      for (int k = 0; k < nusr; ++k) {
        const double coef = pt.x_prev(i, k) * s.weights(i, k);
        if (coef > 0.0) prog.add_objective(ix.rate[stream_flat(s, n, i, k)], -coef);
      }
  prog.add_objective(ix.q, opt.c);

  ap.program = std::move(prog);
  return ap;
}

}  // namespace

LocalStepResult admm_local_step(const ScenarioInstance& s, const ChannelRealization& c,
                                OperatorAgent& agent, const SolutionState& state,
                                const IteratePoint& pt, const ConsensusState& consensus,
                                SatBlock kind, const AdmmOptions& opt) {
  const int nusr = s.n_users(), na = s.network.n_antennas;
  const std::vector<int> own = own_nodes(s, agent.op);
  const bool sat = agent.op == kOpS;

  AgentProblem ap =
      build_agent_step(s, c, pt, agent.op, kind, state, consensus, agent.nu, opt);

  SolveSettings settings;
  settings.eps = opt.solver.eps;
  settings.max_iters = opt.solver.max_iters;
  WarmCache& warm = kind == SatBlock::Power ? agent.warm_p : agent.warm_t;
  apply_warm(settings, warm, ap.program);

  LocalStepResult out;
  ConeSolution sol;
  try {
    sol = solve_or_throw(ap.program, settings, "agent local step");
  } catch (const InfeasibleModel&) {
    if (ap.ix.mbc_row < 0) return out;
    ap.program.set_offset(ap.ix.mbc_row, -opt.u0[agent.op]);  // drop the hardening margin
    try {
      sol = solve_or_throw(ap.program, settings, "agent local step (relaxed floor)");
    } catch (const InfeasibleModel&) {
      return out;
    }
  }
  store_warm(warm, sol);

  out.ok = true;
  out.solve_iters = sol.iterations;
  out.state = state;
  for (int n = 0; n < 2; ++n)
    for (int i : own)
      for (int k = 0; k < nusr; ++k) {
        const int wb = ap.ix.w[stream_flat(s, n, i, k)];
        Eigen::VectorXcd& w = out.state.wv(n, i, k);
        for (int a = 0; a < na; ++a)
          w[a] = std::complex<double>(sol.v[wb + 2 * a], sol.v[wb + 2 * a + 1]);
      }
  if (sat && kind == SatBlock::Power)
    for (int l = 0; l < s.satellite.n_beams; ++l)
      out.state.p[l] = std::max(0.0, sol.v[ap.ix.p[l]]);
  if (sat && kind == SatBlock::Time)
    for (int m = 0; m < s.network.n_st; ++m)
      out.state.t[m] = std::clamp(sol.v[ap.ix.t[m]], 0.0, 1.0);

  const int csz = consensus_size(s);
  const int ns = 2 * s.n_nodes() * nusr;
  out.local = Eigen::VectorXd::Zero(csz);
  for (int j = 0; j < csz; ++j) {
    int var = -1;
    if (j < ns) {
      var = ap.ix.gamma[j];
    } else if (j < ns + 4 * nusr) {
      var = ap.ix.theta[j - ns];
    } else {
      var = ap.ix.psi[j - ns - 4 * nusr];
    }
    out.local[j] = sol.v[var];
  }
  return out;
}

ConsensusState admm_global_average(const std::vector<Eigen::VectorXd>& locals,
                                   const std::vector<Eigen::VectorXd>& nus, double c) {
  if (locals.empty() || locals.size() != nus.size())
    throw MissingPayload("consensus average: agent share missing");
  const Eigen::Index dim = locals[0].size();
  for (std::size_t z = 0; z < locals.size(); ++z)
    if (locals[z].size() != dim || nus[z].size() != dim)
      throw MissingPayload("consensus average: share dimension mismatch");
  ConsensusState out;
  out.v = Eigen::VectorXd::Zero(dim);
  for (std::size_t z = 0; z < locals.size(); ++z) out.v += locals[z] + nus[z] / c;
  out.v /= static_cast<double>(locals.size());
  return out;
}

void admm_dual_update(OperatorAgent& agent, const ConsensusState& global, double c) {
  agent.nu += c * (agent.local - global.v);
}

AdmmBlockResult run_admm_block(const ScenarioInstance& s, const ChannelRealization& c,
                               std::array<OperatorAgent, 2>& agents, const SolutionState& state,
                               SatBlock kind, int i_admm, const AdmmOptions& opt,
                               MessageLog* log) {
  AdmmBlockResult res;
  res.state = state;
  res.i_admm_next = i_admm;
  res.wsr_before = wsr(s, c, state);

  const IteratePoint pt = IteratePoint::from_state(s, c, state);
  ConsensusState consensus = consensus_from_state(s, c, state);
  const int csz = consensus_size(s);
  for (auto& a : agents) {
    a.local = consensus.v;
    a.nu = Eigen::VectorXd::Zero(csz);
  }

  std::array<LocalStepResult, 2> last{};
  bool failed = false;
  for (int it = 0; it < i_admm; ++it) {
    std::array<LocalStepResult, 2> r;
    std::array<std::exception_ptr, 2> err{};
    {
      std::thread tg([&] {
        try {
          r[0] = admm_local_step(s, c, agents[0], state, pt, consensus, kind, opt);
        } catch (...) {
          err[0] = std::current_exception();
        }
      });
      std::thread ts([&] {
        try {
          r[1] = admm_local_step(s, c, agents[1], state, pt, consensus, kind, opt);
        } catch (...) {
          err[1] = std::current_exception();
        }
      });
      tg.join();
      ts.join();
    }
    for (auto& e : err)
      if (e) std::rethrow_exception(e);
    res.iterations = it + 1;
    res.solve_iters += r[0].solve_iters + r[1].solve_iters;
    if (!r[0].ok || !r[1].ok) {
      failed = true;
      break;
    }
    if (log)
      for (int z = 0; z < 2; ++z) {
        std::vector<double> pay(2 * csz);
        Eigen::VectorXd::Map(pay.data(), csz) = r[z].local;
        Eigen::VectorXd::Map(pay.data() + csz, csz) = agents[z].nu;
        log->append(MsgKind::LocalShare, static_cast<std::uint8_t>(z), pay);
      }
    for (int z = 0; z < 2; ++z) agents[z].local = r[z].local;
    consensus = admm_global_average({agents[0].local, agents[1].local},
                                    {agents[0].nu, agents[1].nu}, opt.c);
    if (log) {
      log->append(MsgKind::Barrier, kOrchestratorSender, {});
      std::vector<double> pay(csz);
      Eigen::VectorXd::Map(pay.data(), csz) = consensus.v;
      log->append(MsgKind::GlobalBroadcast, kOrchestratorSender, pay);
    }
    for (int z = 0; z < 2; ++z) admm_dual_update(agents[z], consensus, opt.c);
    double resid = 0.0, gres = 0.0;
    const int ngam = 2 * s.n_nodes() * s.n_users();
    for (int z = 0; z < 2; ++z) {
      resid = std::max(resid, (agents[z].local - consensus.v).cwiseAbs().maxCoeff());
      gres = std::max(
          gres, (agents[z].local.head(ngam) - consensus.v.head(ngam)).cwiseAbs().maxCoeff());
    }
    if (it == 0) res.consensus_res_first = resid;
    res.consensus_res_last = resid;
    res.gamma_res_last = gres;
    last = r;
  }

  if (!failed) {
    SolutionState cand = state;
    for (int z = 0; z < 2; ++z)
      for (int n = 0; n < 2; ++n)
        for (int i : own_nodes(s, z))
          for (int k = 0; k < s.n_users(); ++k)
            cand.wv(n, i, k) = last[z].state.wv(n, i, k);
    cand.p = last[1].state.p;
    cand.t = last[1].state.t;
    zero_unserved(s, cand);
    clamp_budgets(s, cand);
    tighten_aux(s, c, cand);
    const double after = wsr(s, c, cand);
    const double worst =
        max_residual_excl_binariness(s, c, cand, opt.u0, opt.mbc_enabled);
    if (after >= res.wsr_before - opt.accept_tol && worst <= 1e-6) {
      res.accepted = true;
      res.state = cand;
      res.wsr_after = after;
      return res;
    }
  }
  res.wsr_after = res.wsr_before;
  res.i_admm_next = std::min(2 * i_admm, opt.i_cap);
  return res;
}

// ---------------------------------------------------------------------------
// full distributed solver
// ---------------------------------------------------------------------------

DistributedResult run_wsrm_distributed(const ScenarioInstance& s, const ChannelRealization& c,
                                       const DistributedOptions& opt) {
  const auto t0 = Clock::now();
  DistributedResult res;
  MessageLog log;

  NoSharingOptions nso = opt.nosharing;
  nso.solver = opt.solver;
  const NoSharingResult ns = run_nosharing(s, c, nso);
  res.u0 = opt.u0_override.value_or(ns.u0);
  const std::array<double, 2> u0_used =
      opt.mbc_enabled ? res.u0 : std::array<double, 2>{0.0, 0.0};

  AdmmOptions admm = opt.admm;
  admm.mbc_enabled = opt.mbc_enabled;
  admm.u0 = u0_used;
  admm.margin = opt.margin;
  admm.solver = opt.solver;

  InitPointOptions io = opt.init;
  io.mbc_enabled = opt.mbc_enabled;
  io.solver = opt.solver;
  SolutionState state = find_initial_point(s, c, u0_used, ns.state, io);
  state = revive_dead_streams(s, c, state, opt.kick_eps, opt.mbc_enabled,
                              {u0_used[0] + opt.margin, u0_used[1] + opt.margin});
  tighten_aux(s, c, state);

  DualUaOptions uo = opt.ua;
  uo.u0 = u0_used;
  uo.mbc_enabled = opt.mbc_enabled;

  auto emit_lambda = [&](const DualUaResult& ua) {
    for (std::size_t it = 0; it < ua.lambda_trace.size(); ++it)
      for (int z = 0; z < 2; ++z)
        log.append(MsgKind::LambdaBroadcast, static_cast<std::uint8_t>(z),
                   {ua.lambda_trace[it][z]});
  };
  auto candidate_ok = [&](const SolutionState& cand) {
    if (max_residual_excl_binariness(s, c, cand, u0_used, opt.mbc_enabled) > 1e-6)
      return false;
    if (!opt.mbc_enabled) return true;
    for (int z = 0; z < 2; ++z)
      if (own_node_revenue(s, c, cand, z) < u0_used[z] + opt.margin) return false;
    return true;
  };

  // initial association at kicked-alive rates
  {
    DualUaResult ua = run_dual_ua(s, true_rates(s, c, state), uo);
    emit_lambda(ua);
    res.lambda = ua.lambda;
    res.duality_gap = ua.duality_gap;
    SolutionState cand = state;
    cand.x = ua.x;
    zero_unserved(s, cand);
    tighten_aux(s, c, cand);
    if (!candidate_ok(cand)) {
      // repair beamformers and feeder usage at the pinned binary association
      InitPointOptions io2 = io;
      io2.move_x = false;
      SolutionState seed = state;
      seed.x = ua.x;
      bool repaired = false;
      try {
        cand = find_initial_point(s, c, u0_used, seed, io2);
        repaired = true;
      } catch (const NoFeasiblePoint&) {
      }
      if (repaired) {
        cand = revive_dead_streams(s, c, cand, opt.kick_eps, opt.mbc_enabled,
                                   {u0_used[0] + opt.margin, u0_used[1] + opt.margin});
        zero_unserved(s, cand);
        tighten_aux(s, c, cand);
        repaired = candidate_ok(cand);
      }
      if (!repaired) {
        // final fallback: each user on its own operator's closest node
        seed.x = closest_node_association(s, true);
        cand = find_initial_point(s, c, u0_used, seed, io2);
        cand = revive_dead_streams(s, c, cand, opt.kick_eps, opt.mbc_enabled,
                                   {u0_used[0] + opt.margin, u0_used[1] + opt.margin});
        zero_unserved(s, cand);
        tighten_aux(s, c, cand);
        if (!candidate_ok(cand))
          throw NoFeasiblePoint("no feasible binary association for the distributed run");
      }
    }
    state = cand;
  }

  auto push_entry = [&](int outer, int iter, char step, bool accepted, int solves) {
    TraceEntry e;
    e.phase = outer;
    e.iter = iter;
    e.step = step;
    const RevenueReport rr = revenue(s, c, state);
    e.wsr = wsr(s, c, state);
    e.objective = e.wsr;
    e.penalty = 0.0;
    e.mbc_gap = {rr.u[0] - u0_used[0], rr.u[1] - u0_used[1]};
    e.max_residual = max_residual_excl_binariness(s, c, state, u0_used, opt.mbc_enabled);
    e.wall_ms = ms_since(t0);
    e.accepted = accepted;
    e.solve_iters = solves;
    res.trace.entries.push_back(e);
  };
  push_entry(0, 0, 'u', true, 0);

  std::array<OperatorAgent, 2> agents{OperatorAgent{kOpG}, OperatorAgent{kOpS}};
  int i_admm = admm.i_init;
  double prev_wsr = wsr(s, c, state);
  int quiet = 0;

  for (int outer = 1; outer <= opt.max_outer; ++outer) {
    for (const SatBlock kind : {SatBlock::Power, SatBlock::Time}) {
      const double bt0 = ms_since(t0);
      AdmmBlockResult blk = run_admm_block(s, c, agents, state, kind, i_admm, admm, &log);
      if (blk.accepted) {
        state = blk.state;
        res.consensus_disagreement = blk.gamma_res_last;
      }
      i_admm = blk.i_admm_next;
      res.trace.total_solves += blk.iterations * 2;
      AdmmBlockRecord rec;
      rec.kind = kind == SatBlock::Power ? 'p' : 't';
      rec.outer = outer;
      rec.iterations = blk.iterations;
      rec.accepted = blk.accepted;
      rec.wsr_before = blk.wsr_before;
      rec.wsr_after = blk.wsr_after;
      rec.res_first = blk.consensus_res_first;
      rec.res_last = blk.consensus_res_last;
      rec.wall_ms = ms_since(t0) - bt0;
      res.blocks.push_back(rec);
      push_entry(outer, static_cast<int>(res.blocks.size()), rec.kind, blk.accepted,
                 blk.solve_iters);
    }
    {
      DualUaResult ua = run_dual_ua(s, true_rates(s, c, state), uo);
      emit_lambda(ua);
      res.lambda = ua.lambda;
      res.duality_gap = ua.duality_gap;
      SolutionState cand = state;
      cand.x = ua.x;
      zero_unserved(s, cand);
      tighten_aux(s, c, cand);
      const bool take =
          wsr(s, c, cand) >= wsr(s, c, state) - 1e-12 && candidate_ok(cand);
      if (take) state = cand;
      push_entry(outer, static_cast<int>(res.blocks.size()), 'u', take, ua.iterations);
    }
    const double cur = wsr(s, c, state);
    const double rel = std::abs(cur - prev_wsr) / std::max(1.0, std::abs(prev_wsr));
    quiet = rel < opt.outer_rel_tol ? quiet + 1 : 0;
    prev_wsr = cur;
    if (quiet >= opt.tol_window) {
      res.trace.exit_reason = "converged";
      break;
    }
    if (outer == opt.max_outer) res.trace.exit_reason = "outer-cap";
  }

  res.state = state;
  const RevenueReport rr = revenue(s, c, state);
  res.u = rr.u;
  res.wsr = wsr(s, c, state);
  res.residuals = constraint_residuals(s, c, state, u0_used, opt.mbc_enabled);
  res.transcript = std::move(log.transcript);
  return res;
}

}  // namespace sagin
