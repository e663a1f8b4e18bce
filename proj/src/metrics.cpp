#include "sagin/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace sagin {

SolutionState SolutionState::zeros(const ScenarioInstance& s) {
  SolutionState st;
  st.n_bands = 2;
  st.n_nodes = s.n_nodes();
  st.n_users = s.n_users();
  st.x = Eigen::MatrixXd::Zero(st.n_nodes, st.n_users);
  st.w.assign(static_cast<std::size_t>(st.n_bands) * st.n_nodes * st.n_users,
              Eigen::VectorXcd::Zero(s.network.n_antennas));
  st.p = Eigen::VectorXd::Zero(s.satellite.n_beams);
  st.t = Eigen::VectorXd::Zero(s.network.n_st);
  return st;
}

void SolutionState::validate_shape(const ScenarioInstance& s, double tol) const {
  if (x.rows() != s.n_nodes() || x.cols() != s.n_users())
    throw std::invalid_argument("state: association shape mismatch");
  if (static_cast<int>(w.size()) != 2 * s.n_nodes() * s.n_users())
    throw std::invalid_argument("state: beamformer count mismatch");
  if (p.size() != s.satellite.n_beams || t.size() != s.network.n_st)
    throw std::invalid_argument("state: satellite variable shape mismatch");
  if ((x.array() < -tol).any() || (x.array() > 1.0 + tol).any())
    throw std::invalid_argument("state: association outside [0,1]");
  for (int k = 0; k < x.cols(); ++k)
    if (x.col(k).sum() > 1.0 + tol) throw std::invalid_argument("state: association column sum > 1");
  if ((p.array() < -tol).any()) throw std::invalid_argument("state: negative satellite power");
  if ((t.array() < -tol).any() || (t.array() > 1.0 + tol).any())
    throw std::invalid_argument("state: time share outside [0,1]");
  for (const auto& v : {&gamma, &beta, &phi, &rho})
    if (v->size() != 0 && (v->array() < -tol).any())
      throw std::invalid_argument("state: negative auxiliary variable");
}

InterferenceTerms interference_terms(const ScenarioInstance& s, const ChannelRealization& c,
                                     const SolutionState& st, int band, int node, int user) {
  InterferenceTerms out;
  const int my_op = s.node_operator(node);
  for (int j = 0; j < st.n_nodes; ++j) {
    const bool same_op = s.node_operator(j) == my_op;
    for (int kp = 0; kp < st.n_users; ++kp) {
      if (j == node && kp == user) continue;
      const double pw = std::norm(chan_dot(c.hv(band, j, user), st.wv(band, j, kp)));
      if (same_op)
        out.intra += pw;
      else
        out.inter += pw;
    }
  }
  return out;
}

double sinr(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st,
            int band, int node, int user) {
  const auto it = interference_terms(s, c, st, band, node, user);
  const double sig = std::norm(chan_dot(c.hv(band, node, user), st.wv(band, node, user)));
  return sig / (it.intra + it.inter + c.sigma2_ground);
}

double user_rate(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st,
                 int node, int user) {
  double r = 0.0;
  for (int n = 0; n < st.n_bands; ++n) r += std::log2(1.0 + sinr(s, c, st, n, node, user));
  return r;
}

double backhaul_capacity(const ScenarioInstance& s, const ChannelRealization& c,
                         const SolutionState& st, int st_index) {
  const int beam = s.st_beam[st_index];
  const double f2 = std::norm(c.f[st_index]);
  const double sig = st.p(beam) * c.gt(beam, st_index) * c.g_r * f2;
  double intf = 0.0;
  for (int l = 0; l < s.satellite.n_beams; ++l)
    if (l != beam) intf += st.p(l) * c.gt(l, st_index) * c.g_r * f2;
  return s.satellite.b_ka_hz * st.t(st_index) * std::log2(1.0 + sig / (intf + c.sigma2_sat));
}

double alpha_coefficient(const ScenarioInstance& s, int z, int node, int user) {
  const int m = s.node_operator(node);
  const int q = s.user_operator(user);
  if (z == m && m == q) return 1.0;
  if (z == m && m != q) return s.delta(m);
  if (z == q && q != m) return 1.0 - s.delta(m);
  return 0.0;
}

RevenueReport revenue(const ScenarioInstance& s, const ChannelRealization& c,
                      const SolutionState& st) {
  RevenueReport rep;
  for (int i = 0; i < st.n_nodes; ++i)
    for (int k = 0; k < st.n_users; ++k) {
      if (st.x(i, k) == 0.0) continue;
      const double r = user_rate(s, c, st, i, k);
      rep.rate_sum += st.x(i, k) * r;
      for (int z = 0; z < 2; ++z) rep.u[z] += st.x(i, k) * alpha_coefficient(s, z, i, k) * r;
    }
  return rep;
}

double wsr(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st) {
  double v = 0.0;
  for (int i = 0; i < st.n_nodes; ++i)
    for (int k = 0; k < st.n_users; ++k)
      if (st.x(i, k) != 0.0) v += st.x(i, k) * s.weights(i, k) * user_rate(s, c, st, i, k);
  return v;
}

std::map<std::string, double> constraint_residuals(const ScenarioInstance& s,
                                                   const ChannelRealization& c,
                                                   const SolutionState& st,
                                                   const std::array<double, 2>& u0,
                                                   bool mbc_on) {
  std::map<std::string, double> res;
  const auto rep = revenue(s, c, st);
  res["mbc_g"] = mbc_on ? std::max(0.0, u0[kOpG] - rep.u[kOpG]) : 0.0;
  res["mbc_s"] = mbc_on ? std::max(0.0, u0[kOpS] - rep.u[kOpS]) : 0.0;

  double node_power = 0.0;
  for (int i = 0; i < st.n_nodes; ++i) {
    double used = 0.0;
    for (int n = 0; n < st.n_bands; ++n)
      for (int k = 0; k < st.n_users; ++k) used += st.wv(n, i, k).squaredNorm();
    node_power = std::max(node_power, used - s.node_power_w(i));
  }
  res["node_power"] = std::max(0.0, node_power);
  res["sat_power"] = std::max(0.0, st.p.sum() - s.satellite.max_power_w);
  res["sat_power_nonneg"] = std::max(0.0, -st.p.minCoeff());

  double time_res = std::max(0.0, -st.t.minCoeff());
  Eigen::VectorXd beam_time = Eigen::VectorXd::Zero(s.satellite.n_beams);
  for (int st_i = 0; st_i < s.network.n_st; ++st_i) beam_time(s.st_beam[st_i]) += st.t(st_i);
  time_res = std::max(time_res, beam_time.maxCoeff() - 1.0);
  res["time"] = std::max(0.0, time_res);

  double bh = 0.0;
  for (int st_i = 0; st_i < s.network.n_st; ++st_i) {
    double consumed = 0.0;
    for (int k = 0; k < st.n_users; ++k)
      consumed += s.bands.b_c_hz * user_rate(s, c, st, s.network.n_bs + st_i, k);
    bh = std::max(bh, (consumed - backhaul_capacity(s, c, st, st_i)) / s.bands.b_c_hz);
  }
  res["backhaul"] = std::max(0.0, bh);

  double assoc = std::max(0.0, -st.x.minCoeff());
  assoc = std::max(assoc, st.x.maxCoeff() - 1.0);
  for (int k = 0; k < st.n_users; ++k) assoc = std::max(assoc, st.x.col(k).sum() - 1.0);
  res["association"] = std::max(0.0, assoc);
  res["binariness"] = (st.x.array() * (1.0 - st.x.array())).maxCoeff();
  return res;
}

void tighten_aux(const ScenarioInstance& s, const ChannelRealization& c, SolutionState& st) {
  const std::size_t total = static_cast<std::size_t>(st.n_bands) * st.n_nodes * st.n_users;
  st.gamma.resize(total);
  st.beta.resize(total);
  st.phi.resize(total);
  st.rho.resize(total);
  for (int n = 0; n < st.n_bands; ++n)
    for (int i = 0; i < st.n_nodes; ++i)
      for (int k = 0; k < st.n_users; ++k) {
        const auto it = interference_terms(s, c, st, n, i, k);
        const double den = it.intra + it.inter + c.sigma2_ground;
        const double sig = std::norm(chan_dot(c.hv(n, i, k), st.wv(n, i, k)));
        const auto idx = st.flat(n, i, k);
        st.beta(idx) = den;
        st.rho(idx) = den;
        st.gamma(idx) = sig / den;
        st.phi(idx) = sig / den;
      }
}

double clamp_budgets(const ScenarioInstance& s, SolutionState& st) {
  double worst = 0.0;
  for (int i = 0; i < st.n_nodes; ++i) {
    double used = 0.0;
    for (int n = 0; n < st.n_bands; ++n)
      for (int k = 0; k < st.n_users; ++k) used += st.wv(n, i, k).squaredNorm();
    const double cap = s.node_power_w(i);
    if (used > cap && used > 0.0) {
      const double scale = std::sqrt(cap / used);
      for (int n = 0; n < st.n_bands; ++n)
        for (int k = 0; k < st.n_users; ++k) st.wv(n, i, k) *= scale;
      worst = std::max(worst, 1.0 - scale);
    }
  }
  st.p = st.p.cwiseMax(0.0);
  if (st.p.sum() > s.satellite.max_power_w && st.p.sum() > 0.0) {
    const double scale = s.satellite.max_power_w / st.p.sum();
    st.p *= scale;
    worst = std::max(worst, 1.0 - scale);
  }
  st.t = st.t.cwiseMax(0.0).cwiseMin(1.0);
  Eigen::VectorXd beam_time = Eigen::VectorXd::Zero(s.satellite.n_beams);
  for (int i = 0; i < s.network.n_st; ++i) beam_time(s.st_beam[i]) += st.t(i);
  for (int l = 0; l < s.satellite.n_beams; ++l) {
    if (beam_time(l) > 1.0) {
      const double scale = 1.0 / beam_time(l);
      for (int i = 0; i < s.network.n_st; ++i)
        if (s.st_beam[i] == l) st.t(i) *= scale;
      worst = std::max(worst, 1.0 - scale);
    }
  }
  // association box + per-user simplex
  st.x = st.x.cwiseMax(0.0).cwiseMin(1.0);
  for (int k = 0; k < st.n_users; ++k) {
    const double sum = st.x.col(k).sum();
    if (sum > 1.0) {
      st.x.col(k) /= sum;
      worst = std::max(worst, 1.0 - 1.0 / sum);
    }
  }
  return worst;
}

}  // namespace sagin
