#pragma once
#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "sagin/channel.hpp"
#include "sagin/scenario.hpp"

namespace sagin {

// One full decision point: association, beamformers, satellite powers and time
// shares, plus the auxiliary SINR/interference bounds carried by the solvers.
struct SolutionState {
  Eigen::MatrixXd x;                  // n_nodes x n_users association (possibly fractional)
  std::vector<Eigen::VectorXcd> w;    // [(band*n_nodes + node)*n_users + user] -> N_t
  Eigen::VectorXd p;                  // per-beam satellite power, watts
  Eigen::VectorXd t;                  // per-ST time share of its serving beam
  // auxiliary variables (same flat (band, node, user) indexing); empty until set
  Eigen::VectorXd gamma, beta, phi, rho;

  int n_bands = 2, n_nodes = 0, n_users = 0;

  std::size_t flat(int band, int node, int user) const {
    return (static_cast<std::size_t>(band) * n_nodes + node) * n_users + user;
  }
  const Eigen::VectorXcd& wv(int band, int node, int user) const { return w[flat(band, node, user)]; }
  Eigen::VectorXcd& wv(int band, int node, int user) { return w[flat(band, node, user)]; }

  static SolutionState zeros(const ScenarioInstance& s);
  // throws std::invalid_argument on malformed dimensions / box violations beyond tol
  void validate_shape(const ScenarioInstance& s, double tol = 1e-9) const;
};

struct InterferenceTerms {
  double intra = 0.0;  // same-operator nodes, excluding the (i,k) stream itself
  double inter = 0.0;  // other-operator nodes, all streams
};

struct RevenueReport {
  std::array<double, 2> u{0.0, 0.0};  // per-operator revenue, b/s/Hz
  double rate_sum = 0.0;              // sum of served rates (conservation partner)
};

InterferenceTerms interference_terms(const ScenarioInstance& s, const ChannelRealization& c,
                                     const SolutionState& st, int band, int node, int user);
double sinr(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st,
            int band, int node, int user);
// sum over both bands of log2(1 + sinr), b/s/Hz
double user_rate(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st,
                 int node, int user);
// offered Ka backhaul toward one ST, bits/s
double backhaul_capacity(const ScenarioInstance& s, const ChannelRealization& c,
                         const SolutionState& st, int st_index);
// revenue share of operator z on the (node, user) pair under the scenario's deltas
double alpha_coefficient(const ScenarioInstance& s, int z, int node, int user);
RevenueReport revenue(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st);
// weighted sum rate sum_{i,k} x b R
double wsr(const ScenarioInstance& s, const ChannelRealization& c, const SolutionState& st);

// Named constraint residuals (positive = violation). Rates in b/s/Hz (backhaul
// normalized by the C-band width), powers in watts, shares dimensionless.
std::map<std::string, double> constraint_residuals(const ScenarioInstance& s,
                                                   const ChannelRealization& c,
                                                   const SolutionState& st,
                                                   const std::array<double, 2>& u0,
                                                   bool mbc_on);

// Recompute the auxiliary variables tight at the current (x, w, p, t):
// beta = rho = interference + noise, gamma = phi = SINR.
void tighten_aux(const ScenarioInstance& s, const ChannelRealization& c, SolutionState& st);

// Clamp hard budgets exactly (per-node beamformer power, satellite power simplex,
// time-share boxes); returns the largest applied relative correction.
double clamp_budgets(const ScenarioInstance& s, SolutionState& st);

}  // namespace sagin
