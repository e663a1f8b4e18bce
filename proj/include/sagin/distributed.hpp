#pragma once
// Distributed pipeline: dual-decomposition user association (per-user analytic
// argmax with per-operator projected-subgradient multiplier updates) and
// consensus-ADMM resource blocks, where each operator agent solves a local
// convex subproblem over its own nodes and the agents agree on shared SINR /
// cross-interference estimates through penalized averaging. All cross-agent
// traffic flows through a byte-exact envelope protocol so a full run yields a
// reproducible message transcript.

#include <sagin/centralized.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sagin {

struct MissingPayload : std::runtime_error {
  explicit MissingPayload(const std::string& m) : std::runtime_error(m) {}
};

// ---------------------------------------------------------------------------
// consensus vector layout: SINR copies for every (band, node, user) triple,
// then per-(band, operator, user) cross-set interference upper bounds, then
// the matching lower bounds; all dimensionless (noise-normalized).
// ---------------------------------------------------------------------------

int consensus_size(const ScenarioInstance& s);
int consensus_gamma_index(const ScenarioInstance& s, int band, int node, int user);
int consensus_theta_index(const ScenarioInstance& s, int band, int op, int user);
int consensus_psi_index(const ScenarioInstance& s, int band, int op, int user);

struct ConsensusState {
  Eigen::VectorXd v;
};

// Tight consensus values at a state: true SINRs and true one-set-excluded
// interference sums (upper and lower families coincide).
ConsensusState consensus_from_state(const ScenarioInstance& s, const ChannelRealization& c,
                                    const SolutionState& st);

// ---------------------------------------------------------------------------
// message protocol
// ---------------------------------------------------------------------------

enum class MsgKind : std::uint8_t {
  LocalShare = 1,       // agent -> orchestrator: [local copies; dual variables]
  GlobalBroadcast = 2,  // orchestrator -> agents: averaged consensus values
  LambdaBroadcast = 3,  // per-operator association multiplier
  Barrier = 4,          // empty synchronization marker
};

inline constexpr std::uint8_t kOrchestratorSender = 255;

struct Envelope {
  MsgKind kind = MsgKind::Barrier;
  std::uint8_t sender = 0;
  std::uint32_t iteration = 0;
  std::vector<double> payload;
};

// header {kind u8, sender u8, iteration u32 LE, count u32 LE} + count f64 LE
std::string encode_envelope(const Envelope& e);
Envelope decode_envelope(const std::string& bytes);  // throws std::runtime_error if malformed

// length-prefixed (u32 LE) framing over a local stream socket
bool send_framed(int fd, const std::string& bytes);
std::string recv_framed(int fd);  // empty string on clean EOF

// Canonical transcript: envelopes appended in a fixed drain order with
// per-sender strictly increasing iteration tags.
struct MessageLog {
  std::string transcript;
  std::map<std::uint8_t, std::uint32_t> next_tag;
  void append(MsgKind kind, std::uint8_t sender, const std::vector<double>& payload);
};

// ---------------------------------------------------------------------------
// dual-decomposition user association
// ---------------------------------------------------------------------------

// Analytic per-user decision: the node maximizing (b + sum_z lambda_z alpha_z)
// times the pair rate; ties and the all-zero-score case resolve to the lowest
// node index, so every user is always associated.
int ua_user_decision(const ScenarioInstance& s, int user, const Eigen::MatrixXd& rates,
                     const std::array<double, 2>& lambda);

// Projected subgradient step on the revenue-floor multipliers.
std::array<double, 2> ua_dual_update(const std::array<double, 2>& lambda, double eta,
                                     const std::array<double, 2>& u,
                                     const std::array<double, 2>& u0);

struct DualUaOptions {
  double eta = 0.1;
  int max_iters = 200;
  double tol = 1e-4;  // |dual value change| threshold
  int tol_window = 3;
  std::array<double, 2> u0{0.0, 0.0};
  bool mbc_enabled = true;
};

struct DualUaResult {
  Eigen::MatrixXd x;
  std::array<double, 2> lambda{0.0, 0.0};
  std::vector<double> dual_values;  // dual objective per iteration
  std::vector<std::array<double, 2>> lambda_trace;
  bool converged = false;
  bool feasible = false;     // the returned x clears both revenue floors
  double duality_gap = 0.0;  // final dual value minus best feasible primal value
  int iterations = 0;
};

// Iterates decisions and dual updates at fixed rates; returns the best
// floor-feasible association found (by weighted sum rate), falling back to
// the best association by Lagrangian value when none is feasible.
DualUaResult run_dual_ua(const ScenarioInstance& s, const Eigen::MatrixXd& rates,
                         const DualUaOptions& opt);

// ---------------------------------------------------------------------------
// consensus-ADMM resource blocks
// ---------------------------------------------------------------------------

struct OperatorAgent {
  int op = 0;
  Eigen::VectorXd local;  // consensus-sized local copies
  Eigen::VectorXd nu;     // consensus-sized dual variables
  WarmCache warm_p, warm_t;
};

struct AdmmOptions {
  double c = 1.5;  // consensus penalty weight
  int i_init = 5;  // ADMM iterations per block
  int i_cap = 80;  // growth cap after rejections
  double accept_tol = 1e-8;
  double margin = 1e-5;  // revenue-floor hardening in agent subproblems
  bool mbc_enabled = true;
  std::array<double, 2> u0{0.0, 0.0};
  SolverOptions solver;
};

struct LocalStepResult {
  bool ok = false;        // false: the local subproblem certified infeasible
  SolutionState state;    // full grid with this agent's slice updated
  Eigen::VectorXd local;  // updated consensus copies
  int solve_iters = 0;
};

// One agent's augmented-Lagrangian minimization: its own-node constraint set
// (budgets, rate surrogates, feeder rows for the satellite operator, revenue
// floor over its own nodes) plus the quadratic consensus penalty around the
// broadcast values, solved as a cone program at the block's expansion point.
LocalStepResult admm_local_step(const ScenarioInstance& s, const ChannelRealization& c,
                                OperatorAgent& agent, const SolutionState& state,
                                const IteratePoint& pt, const ConsensusState& consensus,
                                SatBlock kind, const AdmmOptions& opt);

// Coordinate-wise average of local copies shifted by their scaled duals.
ConsensusState admm_global_average(const std::vector<Eigen::VectorXd>& locals,
                                   const std::vector<Eigen::VectorXd>& nus, double c);

// nu <- nu + c (local - global)
void admm_dual_update(OperatorAgent& agent, const ConsensusState& global, double c);

struct AdmmBlockResult {
  bool accepted = false;
  SolutionState state;  // accepted state, or the untouched input on rejection
  int i_admm_next = 0;
  int iterations = 0;
  double wsr_before = 0.0, wsr_after = 0.0;
  double consensus_res_first = 0.0, consensus_res_last = 0.0;
  double gamma_res_last = 0.0;  // SINR-copy disagreement after the final iteration
  int solve_iters = 0;
};

// Runs i_admm consensus iterations (two concurrent agent contexts per
// iteration, merged in a fixed order), then accepts the merged variables only
// if the true weighted sum rate did not drop and every true constraint holds;
// a rejection doubles the iteration budget for the next call and leaves the
// input state untouched.
AdmmBlockResult run_admm_block(const ScenarioInstance& s, const ChannelRealization& c,
                               std::array<OperatorAgent, 2>& agents, const SolutionState& state,
                               SatBlock kind, int i_admm, const AdmmOptions& opt,
                               MessageLog* log);

// ---------------------------------------------------------------------------
// full distributed solver
// ---------------------------------------------------------------------------

struct AdmmBlockRecord {
  char kind = 'p';
  int outer = 0;
  int iterations = 0;
  bool accepted = false;
  double wsr_before = 0.0, wsr_after = 0.0;
  double res_first = 0.0, res_last = 0.0;
  double wall_ms = 0.0;
};

struct DistributedOptions {
  bool mbc_enabled = true;
  double margin = 1e-5;
  int max_outer = 30;
  double outer_rel_tol = 1e-4;
  int tol_window = 2;
  double kick_eps = 0.05;
  AdmmOptions admm;
  DualUaOptions ua;
  NoSharingOptions nosharing;
  InitPointOptions init;
  SolverOptions solver;
  std::optional<std::array<double, 2>> u0_override;
};

struct DistributedResult {
  SolutionState state;
  std::array<double, 2> u0{0.0, 0.0};
  std::array<double, 2> u{0.0, 0.0};
  double wsr = 0.0;
  SolverTrace trace;
  std::vector<AdmmBlockRecord> blocks;
  std::map<std::string, double> residuals;
  std::string transcript;
  std::array<double, 2> lambda{0.0, 0.0};
  double duality_gap = 0.0;
  double consensus_disagreement = 0.0;  // max over agents of ||local - global||_inf at exit
};

// Outer loop: power block, time block, then a dual-decomposition association
// update at the newest rates, repeated until the weighted sum rate settles.
DistributedResult run_wsrm_distributed(const ScenarioInstance& s, const ChannelRealization& c,
                                       const DistributedOptions& opt = {});

}  // namespace sagin
