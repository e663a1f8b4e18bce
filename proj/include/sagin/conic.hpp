#pragma once
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <string>
#include <vector>

namespace sagin::conic {

enum class Cone { Zero, NonNeg, SOC, RSOC, Exp };

struct ConeBlock {
  Cone kind;
  int start = 0;  // first row in the affine map
  int size = 0;
};

// Convex cone program over an affine map: minimize c'v subject to, per block,
// (F v + g)[rows] in K. Zero blocks are equalities, RSOC uses 2 u v >= |w|^2.
class ConeProgram {
 public:
  explicit ConeProgram(int nvar) : nvar_(nvar), c_(Eigen::VectorXd::Zero(nvar)) {}

  int nvar() const { return nvar_; }
  int rows() const { return rows_; }

  void add_objective(int var, double coef) { c_(var) += coef; }
  const Eigen::VectorXd& objective() const { return c_; }

  int add_block(Cone kind, int nrows);
  int add_zero(int nrows) { return add_block(Cone::Zero, nrows); }
  int add_nonneg(int nrows) { return add_block(Cone::NonNeg, nrows); }
  int add_soc(int nrows) { return add_block(Cone::SOC, nrows); }
  int add_rsoc(int nrows) { return add_block(Cone::RSOC, nrows); }
  int add_exp() { return add_block(Cone::Exp, 3); }

  void add_entry(int row, int var, double coef);
  void add_offset(int row, double val) { g_(row) += val; }
  void set_offset(int row, double val) { g_(row) = val; }

  const std::vector<Eigen::Triplet<double>>& entries() const { return trips_; }
  const Eigen::VectorXd& offsets() const { return g_; }
  const std::vector<ConeBlock>& blocks() const { return blocks_; }

  // affine map value a(v) = F v + g
  Eigen::VectorXd affine(const Eigen::VectorXd& v) const;
  Eigen::SparseMatrix<double> matrix() const;

 private:
  int nvar_;
  int rows_ = 0;
  Eigen::VectorXd c_;
  Eigen::VectorXd g_ = Eigen::VectorXd::Zero(0);
  std::vector<Eigen::Triplet<double>> trips_;
  std::vector<ConeBlock> blocks_;
};

enum class SolveStatus { Optimal, MaxIterations, Infeasible, Unbounded };
const char* to_string(SolveStatus s);

struct ConeSolution {
  SolveStatus status = SolveStatus::MaxIterations;
  Eigen::VectorXd v;      // primal variables
  Eigen::VectorXd y;      // dual multipliers per row (user row order, y in K*)
  Eigen::VectorXd slack;  // cone slacks per row (user row order, slack in K)
  double objective = 0.0;
  int iterations = 0;
  double primal_res = 0.0, dual_res = 0.0, gap = 0.0;
};

struct SolveSettings {
  double eps = 1e-6;
  int max_iters = 100000;
  int check_every = 25;
  double relax = 1.5;  // over-relaxation parameter in (0, 2)
  bool equilibrate = true;
  // optional warm start (sizes must match the program; empty = cold)
  Eigen::VectorXd warm_v, warm_y, warm_slack;
};

ConeSolution solve(const ConeProgram& prog, const SolveSettings& settings = {});

struct KktResiduals {
  double primal = 0.0;        // worst Euclidean distance of a(v) block from its cone
  double dual_cone = 0.0;     // worst distance of y block from the dual cone
  double stationarity = 0.0;  // ||c - F'y||_inf
  double gap = 0.0;           // |c'v + g'y| / (1 + |c'v| + |g'y|)
};
KktResiduals kkt_residuals(const ConeProgram& prog, const ConeSolution& sol);

// portable triplet dump (round-trips through parse_dump)
std::string dump(const ConeProgram& prog);
ConeProgram parse_dump(const std::string& text);

// projections (exposed for direct testing)
void project_soc(Eigen::Ref<Eigen::VectorXd> v);
std::array<double, 3> project_exp(const std::array<double, 3>& v);      // onto K_exp
std::array<double, 3> project_exp_dual(const std::array<double, 3>& v); // onto K_exp^*
bool in_exp(double r, double s, double t, double tol = 0.0);
bool in_exp_dual(double u, double v, double w, double tol = 0.0);

}  // namespace sagin::conic
