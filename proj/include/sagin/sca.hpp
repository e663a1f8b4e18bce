#pragma once
// Convex-surrogate toolkit for the block-coordinate solvers: affine minorants
// and majorants of the coupled rate / interference / backhaul expressions,
// assembly of each block subproblem as a cone program, solution extraction,
// and the projection operators used by gradient-projection updates.

#include <sagin/channel.hpp>
#include <sagin/conic.hpp>
#include <sagin/metrics.hpp>
#include <sagin/scenario.hpp>

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace sagin {

using conic::ConeProgram;
using conic::ConeSolution;
using conic::SolveSettings;
using conic::SolveStatus;

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& m) : std::runtime_error(m) {}
};
struct InfeasibleModel : std::runtime_error {
  explicit InfeasibleModel(const std::string& m) : std::runtime_error(m) {}
};

// Expansion point: previous accepted values of every linearized symbol.
// All quantities in physical units (watts, dimensionless SINRs).
struct IteratePoint {
  std::vector<Eigen::VectorXcd> w_prev;  // per stream, flat (band*n_nodes+node)*n_users+user
  Eigen::VectorXd beta_prev;             // interference-plus-noise upper bound, W
  Eigen::VectorXd phi_prev;              // SINR upper bound, dimensionless
  Eigen::VectorXd rho_prev;              // interference-plus-noise lower bound, W
  Eigen::VectorXd p_prev;                // satellite beam powers, W
  Eigen::MatrixXd x_prev;                // association weights, n_nodes x n_users

  // Builds the expansion point from a solution state; missing auxiliaries are
  // recomputed from the beamformers (exact SINR/interference values).
  static IteratePoint from_state(const ScenarioInstance& s, const ChannelRealization& c,
                                 const SolutionState& st);
};

// Real-affine form in one beamformer's stacked coordinates:
// value(w) = sum_t coef[2t]*Re(w_t) + coef[2t+1]*Im(w_t) + constant.
struct AffineW {
  Eigen::VectorXd coef;
  double constant = 0.0;
  double eval(const Eigen::VectorXcd& w) const;
};

// Affine lower bound of |h.w|^2 / beta, tight at the expansion point.
struct RateLowerSurrogate {
  AffineW w_part;
  double beta_coef = 0.0;
  double eval(const Eigen::VectorXcd& w, double beta) const {
    return w_part.eval(w) + beta_coef * beta;
  }
};

// Affine upper bound of log2(1 + phi), tight at the expansion point.
struct LogUpperSurrogate {
  double constant = 0.0;
  double slope = 0.0;
  double eval(double phi) const { return constant + slope * phi; }
};

// Affine lower bound of x^2 - x, tight at the expansion point.
struct PenaltyLowerSurrogate {
  double slope = 0.0;
  double constant = 0.0;
  double eval(double x) const { return slope * x + constant; }
};

// Concave-in-p lower bound of one feeder-link capacity, linear in the time
// share; exact when only one beam exists or at p = p_prev.
struct BackhaulLowerSurrogate {
  int st_index = 0;
  int beam = 0;
  Eigen::VectorXd gain;    // per-beam link gain normalized by satellite noise power
  double c1 = 0.0;         // log2 of normalized interference-plus-noise at p_prev
  Eigen::VectorXd c2;      // per-beam slopes of the linearized subtracted log
  Eigen::VectorXd p_prev;
  double b_ka_hz = 0.0;

  double eval_bps(const Eigen::VectorXd& p, double t) const;   // surrogate capacity
  double exact_bps(const Eigen::VectorXd& p, double t) const;  // true capacity
};

RateLowerSurrogate g1_surrogate(const IteratePoint& pt, const Eigen::VectorXcd& h,
                                int stream, double beta_floor = 1e-12);
AffineW g2_surrogate(const IteratePoint& pt, const Eigen::VectorXcd& h, int stream);
LogUpperSurrogate g3_surrogate(const IteratePoint& pt, int stream);
BackhaulLowerSurrogate backhaul_surrogate(const ScenarioInstance& s,
                                          const ChannelRealization& c,
                                          const IteratePoint& pt, int st_index);
PenaltyLowerSurrogate penalty_surrogate(double x_prev);

// Mutual-benefit constraint data threaded through the builders. `margin` is a
// hardening offset added to the revenue floors inside cone programs so solver
// residual slop cannot leak past the exit tolerance.
struct MbcSpec {
  bool enabled = true;
  std::array<double, 2> u_ref{0.0, 0.0};
  double margin = 0.0;
};

// Which satellite resource is free in a subproblem that touches the feeder links.
enum class SatBlock { Power, Time };

// Coordinate tables of one assembled subproblem; -1 marks an absent symbol.
// Stream tables are flat (band*n_nodes + node)*n_users + user.
struct VariableIndex {
  int n_vars = 0;
  int n_ant = 0;
  std::vector<int> w;            // first of 2*n_ant consecutive reals (Re0, Im0, ...)
  std::vector<int> sinr_lb;      // per stream
  std::vector<int> ipn_ub;       // per stream (noise-normalized inside the program)
  std::vector<int> rate;         // per stream
  std::vector<int> sinr_ub;      // per ST stream
  std::vector<int> ipn_lb;       // per ST stream (noise-normalized)
  std::vector<int> rx_total;     // per band*n_users+user: received-power epigraph
  std::vector<int> g2_node_sum;  // per stream slot (band,node,victim): per-node minorant sums
  std::vector<int> p;            // per beam
  std::vector<int> v_sat;        // per ST: log2 of total received satellite power
  std::vector<int> t;            // per ST
  std::vector<int> x;            // per node*n_users+user (association step only)
  std::vector<int> s_user;       // per operator slack (initialization step only)
  std::vector<int> s_back;       // per ST slack (initialization step only)
};

struct SurrogateProblem {
  ConeProgram program{0};
  VariableIndex vars;
};

// Satellite-power block: variables (w, p) plus auxiliaries; t, x fixed.
SurrogateProblem build_p_step(const ScenarioInstance& s, const ChannelRealization& c,
                              const IteratePoint& pt, const Eigen::VectorXd& t_fixed,
                              const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc);

// Beam-time block: variables (w, t) plus auxiliaries; p, x fixed.
SurrogateProblem build_t_step(const ScenarioInstance& s, const ChannelRealization& c,
                              const IteratePoint& pt, const Eigen::VectorXd& p_fixed,
                              const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc);

// Association block: LP over relaxed x with a concave binariness penalty.
// `rates` are the current true per-pair rates (b/s/Hz summed over bands);
// `st_capacity_bps` the current feeder-link capacities.
SurrogateProblem build_x_step(const ScenarioInstance& s, const Eigen::MatrixXd& rates,
                              const IteratePoint& pt, const MbcSpec& mbc,
                              double penalty_weight, const Eigen::VectorXd& st_capacity_bps);

// Standalone per-operator problem: own band, own nodes, own users, no
// cross-operator interference, no revenue coupling. For the satellite
// operator `kind` selects the free feeder resource and `fixed_other` carries
// the frozen one (t when Power, p when Time); both ignored for the ground
// operator.
SurrogateProblem build_nosharing_step(const ScenarioInstance& s, const ChannelRealization& c,
                                      const IteratePoint& pt, int op, SatBlock kind,
                                      const Eigen::VectorXd& fixed_other,
                                      const Eigen::MatrixXd& x_fixed);

// Initialization step: the p- or t-block augmented with nonnegative slacks on
// the revenue floors and feeder-link rows, penalized by xi in the objective.
SurrogateProblem build_initpoint_step(const ScenarioInstance& s, const ChannelRealization& c,
                                      const IteratePoint& pt, SatBlock kind,
                                      const Eigen::VectorXd& fixed_other,
                                      const Eigen::MatrixXd& x_fixed, const MbcSpec& mbc,
                                      double xi);

// Copies the solved coordinates of `prob` out of `v` into a copy of `base`,
// restoring physical units; symbols absent from the program keep base values.
SolutionState extract_state(const ScenarioInstance& s, const ChannelRealization& c,
                            const SurrogateProblem& prob, const Eigen::VectorXd& v,
                            const SolutionState& base);

// Euclidean projection of one user's association column onto
// {x >= 0, sum x <= 1, x[i] = 0 where !allowed[i]}.
Eigen::VectorXd project_association(const Eigen::VectorXd& v, const std::vector<char>& allowed);

// Joint projection of (x, s) onto {x in the per-user capped simplexes,
// s >= 0, sum_{i,k} revenue_coef[z](i,k) x(i,k) + s[z] >= u_ref[z]},
// solved as a small quadratic program through the cone solver.
struct XSProjection {
  Eigen::MatrixXd x;
  std::array<double, 2> s{0.0, 0.0};
};
XSProjection project_association_with_slack(const Eigen::MatrixXd& v_x,
                                            const std::array<double, 2>& v_s,
                                            const std::array<Eigen::MatrixXd, 2>& revenue_coef,
                                            const std::array<double, 2>& u_ref,
                                            const std::vector<char>& allowed);

}  // namespace sagin
