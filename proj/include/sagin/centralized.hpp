#pragma once
// Centralized pipeline: standalone per-operator optimization (the revenue
// thresholds), slack-assisted feasible-point search, and the alternating
// block solver with a progressively weighted binariness penalty. Also hosts
// the shared helpers (guarded solves, warm starts, feasibility repair) reused
// by the distributed pipeline and the restricted baselines.

#include <sagin/sca.hpp>

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sagin {

struct NoFeasiblePoint : std::runtime_error {
  explicit NoFeasiblePoint(const std::string& m) : std::runtime_error(m) {}
};

struct TraceEntry {
  int phase = 0;  // penalty phase (0-based); standalone runs use 0
  int iter = 0;   // iteration within the phase
  char step = 'p';  // 'p' power, 't' time, 'x' association, 'w' beamformer-only
  double objective = 0.0;  // phase objective after the step (wsr + penalty)
  double wsr = 0.0;        // true weighted sum rate
  double penalty = 0.0;    // rho * sum x(x-1), nonpositive
  std::array<double, 2> mbc_gap{0.0, 0.0};  // U_z - U_z^0
  double max_residual = 0.0;  // worst true constraint residual (binariness excluded)
  double wall_ms = 0.0;
  bool accepted = true;
  int solve_iters = 0;
};

struct SolverTrace {
  std::vector<TraceEntry> entries;
  std::vector<double> phase_rho;
  std::string exit_reason;
  int total_solves = 0;
};

struct SolverOptions {
  double eps = 1e-7;
  int max_iters = 200000;
};

// Cached primal/dual vectors reused to warm-start the next solve of a
// structurally identical subproblem.
struct WarmCache {
  Eigen::VectorXd v, y, slack;
};

// Solves and throws InfeasibleModel on an infeasibility or unboundedness
// certificate; Optimal and MaxIterations results are returned to the caller.
ConeSolution solve_or_throw(const ConeProgram& prog, const SolveSettings& settings,
                            const std::string& what);
void apply_warm(SolveSettings& settings, const WarmCache& cache, const ConeProgram& prog);
void store_warm(WarmCache& cache, const ConeSolution& sol);

// Binary association matrix sending every user to its nearest node (smallest
// index wins ties); own-operator nodes only when per_operator is set.
Eigen::MatrixXd closest_node_association(const ScenarioInstance& s, bool per_operator);

// Deterministic warm start at a given binary association: matched-filter
// beamformers with each node's power split evenly across its served streams,
// equal beam powers, equal time shares within each beam.
// `bands` restricts the populated bands (-1 = both).
SolutionState matched_filter_state(const ScenarioInstance& s, const ChannelRealization& c,
                                   const Eigen::MatrixXd& x, int band_scope);

// Scales ST beamformers down (factor 1/sqrt(2) per round) until every
// feeder link fits within its offered capacity; returns rounds used.
int backoff_feeder_overflow(const ScenarioInstance& s, const ChannelRealization& c,
                            SolutionState& st, int max_rounds = 60, double tol = 1e-9);

// Gives every zero beamformer a small matched-filter component (eps^2 power
// fraction per node, split across its dead streams) while scaling live
// streams by sqrt(1-eps^2); repairs feeder-link overflow and, when the
// revenue floors are active, halves the injected components until the floors
// clear again. Never worsens true feasibility.
SolutionState revive_dead_streams(const ScenarioInstance& s, const ChannelRealization& c,
                                  const SolutionState& st, double eps, bool mbc_on,
                                  const std::array<double, 2>& u_floor);

struct NoSharingOptions {
  int max_iters = 30;
  double eta = 0.1;        // association gradient-projection step
  double rel_tol = 1e-4;   // convergence on the own-revenue objective
  int tol_window = 2;
  SolverOptions solver;
};

struct NoSharingResult {
  SolutionState state;                  // both operators combined, disjoint bands
  std::array<SolutionState, 2> per_op;  // full-grid states, other operator zeroed
  std::array<double, 2> u0{0.0, 0.0};
  std::array<SolverTrace, 2> trace;
};

// Standalone optimization of each operator on its own band (no cross-operator
// interference, no revenue coupling); the resulting revenues are the
// mutual-benefit thresholds.
NoSharingResult run_nosharing(const ScenarioInstance& s, const ChannelRealization& c,
                              const NoSharingOptions& opt = {});

struct InitPointOptions {
  double xi = 10.0;          // slack penalty weight
  int max_iters = 30;
  double eta = 0.1;          // (x, s) gradient-projection step
  double margin_floor = 3e-5;  // hardening added to the revenue floors in-program
  double margin_exit = 2e-5;   // required true revenue clearance at exit
  double residual_tol = 1e-6;
  bool mbc_enabled = true;
  bool move_x = true;  // disable to search at a pinned association
  SolverOptions solver;
};

// Feasible-point search for the shared problem: slack-augmented power and
// time solves alternate with a joint (x, s) gradient projection until the
// slacks vanish and the revenue floors clear with margin. Throws
// NoFeasiblePoint at the iteration cap.
SolutionState find_initial_point(const ScenarioInstance& s, const ChannelRealization& c,
                                 const std::array<double, 2>& u0, const SolutionState& seed,
                                 const InitPointOptions& opt = {});

struct CentralizedOptions {
  bool mbc_enabled = true;
  double margin = 1e-5;      // revenue-floor hardening inside cone programs
  double rho0 = 1e-4;        // initial binariness penalty weight
  double rho_growth = 50.0;  // per-phase multiplier
  int max_phases = 8;
  int max_inner = 50;
  double inner_rel_tol = 1e-4;
  int inner_tol_window = 2;
  double binary_tol = 1e-3;  // exit once max x(1-x) falls below
  double kick_eps = 0.05;    // dead-stream revival power fraction (0 disables)
  bool uniform_x_init = true;  // start from uniform association when it clears the floors
  bool fix_x = false;          // restricted baselines: association frozen
  bool enable_p = true;        // restricted baselines: which satellite blocks run
  bool enable_t = true;
  std::optional<SolutionState> start;  // skip the feasibility search, start here
  std::optional<std::array<double, 2>> u0_override;  // reuse precomputed thresholds
  NoSharingOptions nosharing;
  InitPointOptions init;
  SolverOptions solver;
};

struct CentralizedResult {
  SolutionState state;
  std::array<double, 2> u0{0.0, 0.0};  // standalone revenues (always reported)
  std::array<double, 2> u{0.0, 0.0};   // achieved revenues
  double wsr = 0.0;
  SolverTrace trace;
  std::map<std::string, double> residuals;
};

// Full alternating solver: power block, time block, association block per
// inner iteration; the binariness penalty grows across phases until the
// relaxed association is effectively binary, then the association is rounded
// and a final power/time polish pair runs at the fixed binary association.
CentralizedResult run_wsrm_centralized(const ScenarioInstance& s, const ChannelRealization& c,
                                       const CentralizedOptions& opt = {});

}  // namespace sagin
