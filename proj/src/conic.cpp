#include "sagin/conic.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <cstdlib>
#include <cstdio>

namespace sagin::conic {

namespace {
constexpr double kSqrtHalf = 0.70710678118654752440;
}

int ConeProgram::add_block(Cone kind, int nrows) {
  if (nrows <= 0) throw std::invalid_argument("cone block needs at least one row");
  if (kind == Cone::SOC && nrows < 2) throw std::invalid_argument("soc block needs >= 2 rows");
  if (kind == Cone::RSOC && nrows < 3) throw std::invalid_argument("rsoc block needs >= 3 rows");
  if (kind == Cone::Exp && nrows != 3) throw std::invalid_argument("exp block is 3 rows");
  int start = rows_;
  blocks_.push_back({kind, start, nrows});
  rows_ += nrows;
  g_.conservativeResize(rows_);
  g_.tail(nrows).setZero();
  return start;
}

void ConeProgram::add_entry(int row, int var, double coef) {
  if (row < 0 || row >= rows_) throw std::out_of_range("row out of range");
  if (var < 0 || var >= nvar_) throw std::out_of_range("var out of range");
  if (coef != 0.0) trips_.emplace_back(row, var, coef);
}

Eigen::SparseMatrix<double> ConeProgram::matrix() const {
  Eigen::SparseMatrix<double> F(rows_, nvar_);
  F.setFromTriplets(trips_.begin(), trips_.end());
  return F;
}

Eigen::VectorXd ConeProgram::affine(const Eigen::VectorXd& v) const {
  Eigen::VectorXd a = g_;
  for (const auto& t : trips_) a(t.row()) += t.value() * v(t.col());
  return a;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// cone projections

void project_soc(Eigen::Ref<Eigen::VectorXd> v) {
  const int n = static_cast<int>(v.size());
  if (n == 1) {
    v(0) = std::max(v(0), 0.0);
    return;
  }
  double t = v(0);
  double nz = v.tail(n - 1).norm();
  if (nz <= t) return;
  if (nz <= -t) {
    v.setZero();
    return;
  }
  double a = 0.5 * (t + nz);
  v(0) = a;
  v.tail(n - 1) *= a / nz;
}

bool in_exp(double r, double s, double t, double tol) {
  if (s > 0.0) {
    double q = r / s;
    if (q > 709.0) return false;
    return s * std::exp(q) <= t + tol;
  }
  return s >= -tol && r <= tol && t >= -tol;
}

bool in_exp_dual(double u, double v, double w, double tol) {
  // K* = {(u,v,w) : u < 0, -u e^{v/u} <= e w} U {(0,v,w) : v >= 0, w >= 0}
  if (u < 0.0) {
    double q = v / u;
    if (q > 709.0) return w >= -tol;
    return -u * std::exp(q) <= std::exp(1.0) * w + tol;
  }
  return u <= tol && v >= -tol && w >= -tol;
}

namespace {

// Projection onto K_exp off the special cases reduces to the scalar root of
//   h(rho) = ((rho-1) r + s) e^rho - (r - rho s) e^{-rho} - (rho^2 - rho + 1) t
// where rho = x/y at the projected point (x, y, z) = (rho y, y, y e^rho).
double exp_h(double rho, double r, double s, double t) {
  double ep = std::exp(std::min(rho, 690.0));
  double em = std::exp(std::min(-rho, 690.0));
  return ((rho - 1.0) * r + s) * ep - (r - rho * s) * em - (rho * rho - rho + 1.0) * t;
}

// recover the projected point from rho, using whichever expression for y is
// better conditioned
std::array<double, 3> exp_point_from_rho(double rho, double r, double s, double t) {
  double ep = std::exp(std::min(rho, 690.0));
  double d1 = rho + std::exp(std::min(2.0 * rho, 690.0));
  double d2 = 1.0 + (1.0 - rho) * std::exp(std::min(2.0 * rho, 690.0));
  double y1 = (std::abs(d1) > 0) ? (r + t * ep) / d1 : -1.0;
  double y2 = (std::abs(d2) > 0) ? (s + t * ep * (1.0 - rho)) / d2 : -1.0;
  double y = (std::abs(d1) >= std::abs(d2)) ? y1 : y2;
  if (!(y > 0.0)) y = std::max(y1, y2);
  if (!(y > 0.0)) y = 0.0;
  return {rho * y, y, y * ep};
}

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

// candidate must lie in the cone (to modest accuracy) and satisfy the
// projection optimality condition <v - p, q - p> <= 0 approximately; we accept
// on membership plus orthogonality of the residual.
bool exp_candidate_ok(const std::array<double, 3>& p, const std::array<double, 3>& v,
                      double scale) {
  double tol = 1e-7 * std::max(1.0, scale);
  if (!in_exp(p[0], p[1], p[2], tol)) return false;
  double ortho = (v[0] - p[0]) * p[0] + (v[1] - p[1]) * p[1] + (v[2] - p[2]) * p[2];
  return std::abs(ortho) <= 1e-6 * std::max(1.0, scale * scale);
}

}  // namespace

std::array<double, 3> project_exp(const std::array<double, 3>& v0) {
  const double r = v0[0], s = v0[1], t = v0[2];
  if (in_exp(r, s, t)) return v0;
  if (in_exp_dual(-r, -s, -t)) return {0.0, 0.0, 0.0};
  if (r <= 0.0 && s <= 0.0) return {r, 0.0, std::max(t, 0.0)};

  const double scale = std::max({std::abs(r), std::abs(s), std::abs(t), 1.0});

  // bracket a sign change of h
  double lo = -1.0, hi = 1.0;
  {
    double guess = 0.0;
    if (t > 0.0 && s > 0.0) guess = std::log(t / s);
    guess = std::clamp(guess, -60.0, 60.0);
    lo = guess - 1.0;
    hi = guess + 1.0;
  }
  double flo = exp_h(lo, r, s, t), fhi = exp_h(hi, r, s, t);
  for (int i = 0; i < 80 && flo * fhi > 0.0; ++i) {
    double w = hi - lo;
    lo -= 0.6 * w;
    hi += 0.6 * w;
    lo = std::max(lo, -680.0);
    hi = std::min(hi, 680.0);
    flo = exp_h(lo, r, s, t);
    fhi = exp_h(hi, r, s, t);
    if (lo == -680.0 && hi == 680.0) break;
  }

  std::array<double, 3> best = {std::min(r, 0.0), 0.0, std::max(t, 0.0)};  // face fallback
  bool have = in_exp(best[0], best[1], best[2], 1e-12 * scale);
  double bestd = have ? dist2(best, v0) : std::numeric_limits<double>::infinity();

  if (flo * fhi <= 0.0) {
    // Illinois secant/bisection hybrid
    double a = lo, b = hi, fa = flo, fb = fhi;
    double root = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
      double m = (std::abs(fb - fa) > 0) ? (a * fb - b * fa) / (fb - fa) : 0.5 * (a + b);
      if (!(m > std::min(a, b) && m < std::max(a, b))) m = 0.5 * (a + b);
      double fm = exp_h(m, r, s, t);
      if (fa * fm <= 0.0) {
        b = m;
        fb = fm;
      } else {
        a = m;
        fa = fm;
        fb *= 0.5;  // Illinois trick to force the bracket to shrink
      }
      root = 0.5 * (a + b);
      if (std::abs(b - a) < 1e-13 * std::max(1.0, std::abs(root))) break;
    }
    auto p = exp_point_from_rho(root, r, s, t);
    if (exp_candidate_ok(p, v0, scale)) {
      double d = dist2(p, v0);
      if (d < bestd) {
        bestd = d;
        best = p;
        have = true;
      }
    }
  }

  if (!have || bestd == std::numeric_limits<double>::infinity() ||
      !exp_candidate_ok(best, v0, scale)) {
    // robust fallback: scan for every sign change and keep the closest valid point
    const int N = 3200;
    double prev_rho = -80.0, prev_h = exp_h(prev_rho, r, s, t);
    for (int i = 1; i <= N; ++i) {
      double rho = -80.0 + 160.0 * i / N;
      double hcur = exp_h(rho, r, s, t);
      if (prev_h * hcur <= 0.0) {
        double a = prev_rho, b = rho, fa = prev_h;
        for (int it = 0; it < 100; ++it) {
          double m = 0.5 * (a + b);
          double fm = exp_h(m, r, s, t);
          if (fa * fm <= 0.0) {
            b = m;
          } else {
            a = m;
            fa = fm;
          }
        }
        auto p = exp_point_from_rho(0.5 * (a + b), r, s, t);
        if (in_exp(p[0], p[1], p[2], 1e-7 * scale)) {
          double d = dist2(p, v0);
          if (d < bestd) {
            bestd = d;
            best = p;
          }
        }
      }
      prev_rho = rho;
      prev_h = hcur;
    }
  }
  return best;
}

std::array<double, 3> project_exp_dual(const std::array<double, 3>& v) {
  // Moreau: v = proj_{K*}(v) - proj_{K}(-v)  =>  proj_{K*}(v) = v + proj_K(-v)
  auto p = project_exp({-v[0], -v[1], -v[2]});
  return {v[0] + p[0], v[1] + p[1], v[2] + p[2]};
}

// ---------------------------------------------------------------------------
// canonical form used by the splitting solver:
//   minimize c'x  s.t.  A x + s = b,  s in K,   K = Zero x NonNeg x SOC... x Exp...
// built from the user program via A = -P T F, b = P T g where T rewrites each
// rotated cone 2uv >= |w|^2 into a plain second-order cone and P permutes rows
// into cone-sorted order.

namespace {

struct Canonical {
  Eigen::SparseMatrix<double> A;  // column-major
  Eigen::VectorXd b, c;
  int n_zero = 0, n_nonneg = 0;
  std::vector<int> soc_sizes;
  int n_exp = 0;  // number of 3-row exponential blocks
  std::vector<int> perm;          // user row -> canonical row
  std::vector<int> rsoc_starts;   // user row indices of rotated-cone blocks
  int m = 0, n = 0;
};

Canonical canonicalize(const ConeProgram& prog) {
  Canonical cn;
  cn.m = prog.rows();
  cn.n = prog.nvar();
  cn.c = prog.objective();

  // role of each row under the rotated-cone rewrite: 0 plain, 1 first row of a
  // rotated block, 2 second row; partner holds the sibling row index
  std::vector<int> role(cn.m, 0), partner(cn.m, -1);
  Eigen::VectorXd g = prog.offsets();
  for (const auto& blk : prog.blocks()) {
    if (blk.kind != Cone::RSOC) continue;
    cn.rsoc_starts.push_back(blk.start);
    int u = blk.start, v = blk.start + 1;
    role[u] = 1;
    role[v] = 2;
    partner[u] = v;
    partner[v] = u;
    double gu = g(u), gv = g(v);
    g(u) = kSqrtHalf * (gu + gv);
    g(v) = kSqrtHalf * (gu - gv);
  }

  cn.perm.assign(cn.m, -1);
  int next = 0;
  for (const auto& blk : prog.blocks())
    if (blk.kind == Cone::Zero)
      for (int i = 0; i < blk.size; ++i) cn.perm[blk.start + i] = next++;
  cn.n_zero = next;
  for (const auto& blk : prog.blocks())
    if (blk.kind == Cone::NonNeg)
      for (int i = 0; i < blk.size; ++i) cn.perm[blk.start + i] = next++;
  cn.n_nonneg = next - cn.n_zero;
  for (const auto& blk : prog.blocks())
    if (blk.kind == Cone::SOC || blk.kind == Cone::RSOC) {
      cn.soc_sizes.push_back(blk.size);
      for (int i = 0; i < blk.size; ++i) cn.perm[blk.start + i] = next++;
    }
  for (const auto& blk : prog.blocks())
    if (blk.kind == Cone::Exp) {
      ++cn.n_exp;
      for (int i = 0; i < blk.size; ++i) cn.perm[blk.start + i] = next++;
    }

  std::vector<Eigen::Triplet<double>> atr;
  atr.reserve(prog.entries().size() * 2);
  for (const auto& t : prog.entries()) {
    int r = t.row();
    double v = t.value();
    if (role[r] == 0) {
      atr.emplace_back(cn.perm[r], t.col(), -v);
    } else if (role[r] == 1) {
      // first rotated row feeds +/sqrt2 into both mixed rows
      atr.emplace_back(cn.perm[r], t.col(), -kSqrtHalf * v);
      atr.emplace_back(cn.perm[partner[r]], t.col(), -kSqrtHalf * v);
    } else {
      // second rotated row feeds +/sqrt2 and -/sqrt2
      atr.emplace_back(cn.perm[partner[r]], t.col(), -kSqrtHalf * v);
      atr.emplace_back(cn.perm[r], t.col(), kSqrtHalf * v);
    }
  }
  cn.A.resize(cn.m, cn.n);
  cn.A.setFromTriplets(atr.begin(), atr.end());
  cn.A.makeCompressed();
  cn.b.resize(cn.m);
  for (int r = 0; r < cn.m; ++r) cn.b(cn.perm[r]) = g(r);
  return cn;
}

struct Scaling {
  Eigen::VectorXd d, e;  // row and column scales
};

Scaling equilibrate(Canonical& cn, bool enabled) {
  Scaling sc;
  sc.d = Eigen::VectorXd::Ones(cn.m);
  sc.e = Eigen::VectorXd::Ones(cn.n);
  if (enabled && cn.A.nonZeros() > 0) {
    for (int sweep = 0; sweep < 16; ++sweep) {
      Eigen::VectorXd rmax = Eigen::VectorXd::Zero(cn.m);
      Eigen::VectorXd cmax = Eigen::VectorXd::Zero(cn.n);
      for (int k = 0; k < cn.A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(cn.A, k); it; ++it) {
          double av = std::abs(it.value()) * sc.d(it.row()) * sc.e(it.col());
          rmax(it.row()) = std::max(rmax(it.row()), av);
          cmax(it.col()) = std::max(cmax(it.col()), av);
        }
      // rows of one cone block share a scale so the scaled cone is the cone
      int at = cn.n_zero + cn.n_nonneg;
      for (int sz : cn.soc_sizes) {
        double mx = rmax.segment(at, sz).maxCoeff();
        rmax.segment(at, sz).setConstant(mx);
        at += sz;
      }
      for (int i = 0; i < cn.n_exp; ++i) {
        double mx = rmax.segment(at, 3).maxCoeff();
        rmax.segment(at, 3).setConstant(mx);
        at += 3;
      }
      for (int r = 0; r < cn.m; ++r)
        if (rmax(r) > 0) sc.d(r) = std::clamp(sc.d(r) / std::sqrt(rmax(r)), 1e-6, 1e6);
      for (int c = 0; c < cn.n; ++c)
        if (cmax(c) > 0) sc.e(c) = std::clamp(sc.e(c) / std::sqrt(cmax(c)), 1e-6, 1e6);
    }
  }
  return sc;
}

// largest step that keeps a strictly interior second-order-cone point inside;
// the boundary is the first positive root of the Lorentz quadratic (or of the
// leading coordinate)
double soc_max_step(const Eigen::Ref<const Eigen::VectorXd>& v,
                    const Eigen::Ref<const Eigen::VectorXd>& dv) {
  const int nb = static_cast<int>(v.size());
  const double c0 = v(0) * v(0) - v.tail(nb - 1).squaredNorm();
  const double c1 = v(0) * dv(0) - v.tail(nb - 1).dot(dv.tail(nb - 1));
  const double c2 = dv(0) * dv(0) - dv.tail(nb - 1).squaredNorm();
  double best = std::numeric_limits<double>::infinity();
  if (dv(0) < 0.0) best = std::min(best, -v(0) / dv(0));
  if (std::abs(c2) < 1e-300) {
    if (c1 < 0.0) best = std::min(best, -c0 / (2.0 * c1));
    return best;
  }
  const double disc = c1 * c1 - c2 * c0;
  if (disc < 0.0) return best;
  const double sq = std::sqrt(disc);
  double r1 = (-c1 - sq) / c2, r2 = (-c1 + sq) / c2;
  if (r1 > r2) std::swap(r1, r2);
  if (r1 > 0.0)
    best = std::min(best, r1);
  else if (r2 > 0.0)
    best = std::min(best, r2);
  return best;
}

// gradient and Hessian of the exponential-cone log barrier
//   f(x, y, z) = -ln(y ln(z/y) - x) - ln y - ln z
struct ExpDeriv {
  Eigen::Vector3d g;
  Eigen::Matrix3d hess;
};

ExpDeriv exp_barrier_deriv(const Eigen::Vector3d& s) {
  const double x = s(0), y = s(1), z = s(2);
  const double l = std::log(z / y);
  const double a = 1.0 / (y * l - x);
  const Eigen::Vector3d du(-1.0, l - 1.0, y / z);
  ExpDeriv d;
  d.g = -a * du;
  d.g(1) -= 1.0 / y;
  d.g(2) -= 1.0 / z;
  d.hess = (a * a) * (du * du.transpose());
  d.hess(1, 1) += a / y + 1.0 / (y * y);
  d.hess(1, 2) += -a / z;
  d.hess(2, 1) += -a / z;
  d.hess(2, 2) += a * y / (z * z) + 1.0 / (z * z);
  return d;
}

bool exp_strict(double x, double y, double z) {
  return y > 0.0 && z > 0.0 && y * std::log(z / y) - x > 0.0;
}

// -u e^{v/u} < e w  with u < 0, w > 0, in log form
bool exp_dual_strict(double u, double v, double w) {
  return u < 0.0 && w > 0.0 && std::log(-u) + v / u < 1.0 + std::log(w);
}

}  // namespace

ConeSolution solve(const ConeProgram& prog, const SolveSettings& st) {
  Canonical cn = canonicalize(prog);
  const int n = cn.n, m = cn.m;

  ConeSolution out;
  out.v = Eigen::VectorXd::Zero(n);
  out.y = Eigen::VectorXd::Zero(m);
  out.slack = Eigen::VectorXd::Zero(m);
  if (m == 0 || n == 0) {
    out.status = (cn.c.size() == 0 || cn.c.norm() == 0.0) ? SolveStatus::Optimal
                                                          : SolveStatus::Unbounded;
    return out;
  }

  Scaling sc = equilibrate(cn, st.equilibrate);

  // scaled data; cn.A/b/c stay in user scale for the convergence checks
  Eigen::SparseMatrix<double> As = cn.A;
  for (int k = 0; k < As.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(As, k); it; ++it)
      it.valueRef() *= sc.d(it.row()) * sc.e(it.col());
  Eigen::SparseMatrix<double> AsT = As.transpose();
  const Eigen::VectorXd bs = cn.b.cwiseProduct(sc.d);
  const Eigen::VectorXd cs = cn.c.cwiseProduct(sc.e);
  const double bnorm = cn.b.norm(), cnorm = cn.c.norm();

  const int mz = cn.n_zero;
  const int nn = cn.n_nonneg;
  const int nsoc = static_cast<int>(cn.soc_sizes.size());
  const int nexp = cn.n_exp;
  const int mi = m - mz;
  const double nu = nn + 2.0 * nsoc + 3.0 * nexp;

  std::vector<int> soc_at(nsoc);
  int exp0 = mz + nn;
  for (int b = 0; b < nsoc; ++b) {
    soc_at[b] = exp0;
    exp0 += cn.soc_sizes[b];
  }

  const bool dbg = std::getenv("SAGIN_CONIC_DEBUG") != nullptr;
  if (dbg) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int k = 0; k < As.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(As, k); it; ++it) {
        double a = std::abs(it.value());
        if (a > 0) {
          lo = std::min(lo, a);
          hi = std::max(hi, a);
        }
      }
    std::fprintf(stderr,
                 "[conic] m=%d n=%d (mz=%d nn=%d soc=%d exp=%d) scaledA [%.3e, %.3e] "
                 "|bs|=%.3e |cs|=%.3e\n",
                 m, n, mz, nn, nsoc, nexp, lo, hi, bs.norm(), cs.norm());
  }

  // homogeneous self-dual embedding
  //   As x + s = bs tau,  As' y + cs tau = 0,  cs'x + bs'y + kappa = 0
  // walked by an interior-point method; s and y span all rows, with the
  // zero-cone part of s pinned at 0 and the matching part of y free
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
  double tau = 1.0, kap = 1.0;

  // start at the analytic center of each block so every block sees mu = 1
  s.segment(mz, nn).setOnes();
  y.segment(mz, nn).setOnes();
  const double kSqrt2 = std::sqrt(2.0);
  for (int b = 0; b < nsoc; ++b) {
    s(soc_at[b]) = kSqrt2;
    y(soc_at[b]) = kSqrt2;
  }
  for (int e = 0; e < nexp; ++e) {
    const int at = exp0 + 3 * e;
    s(at) = 0.0;
    s(at + 1) = 1.0;
    s(at + 2) = std::exp(1.0);
    y(at) = -1.0;
    y(at + 1) = 1.0;
    y(at + 2) = 2.0 / std::exp(1.0);
  }

  // per-iteration scaling blocks: H z = s for the symmetric cones
  // (Nesterov-Todd), H = (mu f''(s))^{-1} for the exponential blocks
  Eigen::VectorXd hnn(nn);
  std::vector<Eigen::MatrixXd> socH(nsoc);
  std::vector<Eigen::Matrix3d> expH(nexp);
  std::vector<Eigen::Vector3d> expG(nexp);

  auto build_scalings = [&](double mu) {
    for (int i = 0; i < nn; ++i) hnn(i) = s(mz + i) / y(mz + i);
    for (int b = 0; b < nsoc; ++b) {
      const int at = soc_at[b], sz = cn.soc_sizes[b];
      const Eigen::VectorXd sb = s.segment(at, sz), zb = y.segment(at, sz);
      double res = sb(0) * sb(0) - sb.tail(sz - 1).squaredNorm();
      double rz = zb(0) * zb(0) - zb.tail(sz - 1).squaredNorm();
      res = std::max(res, 1e-300);
      rz = std::max(rz, 1e-300);
      const Eigen::VectorXd sbar = sb / std::sqrt(res);
      const Eigen::VectorXd zbar = zb / std::sqrt(rz);
      Eigen::VectorXd jzbar = zbar;
      jzbar.tail(sz - 1) = -jzbar.tail(sz - 1);
      const double gam = std::sqrt(std::max(0.5 * (1.0 + sbar.dot(zbar)), 1e-300));
      const Eigen::VectorXd wbar = (sbar + jzbar) / (2.0 * gam);
      Eigen::MatrixXd H = 2.0 * wbar * wbar.transpose();
      for (int i = 0; i < sz; ++i) H(i, i) -= (i == 0) ? 1.0 : -1.0;
      H *= std::sqrt(res / rz);
      socH[b] = H;
    }
    for (int e = 0; e < nexp; ++e) {
      const int at = exp0 + 3 * e;
      const Eigen::Vector3d sb(s(at), s(at + 1), s(at + 2));
      const ExpDeriv dv = exp_barrier_deriv(sb);
      expG[e] = dv.g;
      expH[e] = dv.hess.inverse() / mu;
    }
  };

  auto apply_H = [&](const Eigen::VectorXd& w) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
    r.segment(mz, nn) = hnn.cwiseProduct(w.segment(mz, nn));
    for (int b = 0; b < nsoc; ++b)
      r.segment(soc_at[b], cn.soc_sizes[b]).noalias() =
          socH[b] * w.segment(soc_at[b], cn.soc_sizes[b]);
    for (int e = 0; e < nexp; ++e)
      r.segment<3>(exp0 + 3 * e).noalias() =
          expH[e] * Eigen::Vector3d(w.segment<3>(exp0 + 3 * e));
    return r;
  };

  // KKT matrix [[d I, As'], [As, -(H + d I)]], lower triangle, fixed pattern
  const int N = n + m;
  double delta = 1e-8;
  Eigen::SparseMatrix<double> K(N, N);
  std::vector<Eigen::Triplet<double>> ktr;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;

  auto assemble = [&]() {
    ktr.clear();
    for (int i = 0; i < n; ++i) ktr.emplace_back(i, i, delta);
    for (int k = 0; k < As.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(As, k); it; ++it)
        ktr.emplace_back(n + it.row(), it.col(), it.value());
    for (int r = 0; r < mz; ++r) ktr.emplace_back(n + r, n + r, -delta);
    for (int i = 0; i < nn; ++i)
      ktr.emplace_back(n + mz + i, n + mz + i, -(hnn(i) + delta));
    for (int b = 0; b < nsoc; ++b) {
      const int at = n + soc_at[b], sz = cn.soc_sizes[b];
      for (int i = 0; i < sz; ++i)
        for (int j = 0; j <= i; ++j)
          ktr.emplace_back(at + i, at + j, -(socH[b](i, j) + (i == j ? delta : 0.0)));
    }
    for (int e = 0; e < nexp; ++e) {
      const int at = n + exp0 + 3 * e;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j <= i; ++j)
          ktr.emplace_back(at + i, at + j, -(expH[e](i, j) + (i == j ? delta : 0.0)));
    }
    K.setFromTriplets(ktr.begin(), ktr.end());
  };

  auto factorize = [&]() {
    for (int tries = 0; tries < 4; ++tries) {
      assemble();
      if (!analyzed) {
        ldlt.analyzePattern(K);
        analyzed = true;
      }
      ldlt.factorize(K);
      if (ldlt.info() == Eigen::Success) return true;
      delta *= 100.0;
    }
    return false;
  };

  // solve the unregularized KKT system through the regularized factor with
  // two rounds of iterative refinement
  auto kkt_solve = [&](const Eigen::VectorXd& rx, const Eigen::VectorXd& ry,
                       Eigen::VectorXd& ox, Eigen::VectorXd& oy) {
    Eigen::VectorXd rhs(N);
    rhs << rx, ry;
    Eigen::VectorXd u = ldlt.solve(rhs);
    for (int ref = 0; ref < 2; ++ref) {
      Eigen::VectorXd un = u.head(n), um = u.tail(m);
      Eigen::VectorXd rr(N);
      rr.head(n) = rx - AsT * um;
      rr.tail(m) = ry - As * un + apply_H(um);
      u += ldlt.solve(rr);
    }
    ox = u.head(n);
    oy = u.tail(m);
  };

  // fraction-to-boundary step; exponential blocks backtrack on strict
  // interior membership of both sides
  auto max_step = [&](const Eigen::VectorXd& ds, const Eigen::VectorXd& dy, double dtau,
                      double dkap) {
    double bound = std::numeric_limits<double>::infinity();
    for (int i = 0; i < nn; ++i) {
      const int r = mz + i;
      if (ds(r) < 0.0) bound = std::min(bound, -s(r) / ds(r));
      if (dy(r) < 0.0) bound = std::min(bound, -y(r) / dy(r));
    }
    for (int b = 0; b < nsoc; ++b) {
      const int at = soc_at[b], sz = cn.soc_sizes[b];
      bound = std::min(bound, soc_max_step(s.segment(at, sz), ds.segment(at, sz)));
      bound = std::min(bound, soc_max_step(y.segment(at, sz), dy.segment(at, sz)));
    }
    if (dtau < 0.0) bound = std::min(bound, -tau / dtau);
    if (dkap < 0.0) bound = std::min(bound, -kap / dkap);
    const double symb = bound;
    double alpha = std::min(1.0, 0.99 * bound);
    const double preexp = alpha;
    for (int e = 0; e < nexp && alpha > 1e-13; ++e) {
      const int at = exp0 + 3 * e;
      while (alpha > 1e-13 &&
             (!exp_strict(s(at) + alpha * ds(at), s(at + 1) + alpha * ds(at + 1),
                          s(at + 2) + alpha * ds(at + 2)) ||
              !exp_dual_strict(y(at) + alpha * dy(at), y(at + 1) + alpha * dy(at + 1),
                               y(at + 2) + alpha * dy(at + 2))))
        alpha *= 0.9;
    }
    if (dbg)
      std::fprintf(stderr, "    [step] sym_bound=%.3e preexp=%.3e final=%.3e\n", symb,
                   preexp, alpha);
    return alpha;
  };

  // complementarity right-hand side; sigmu = 0 requests the affine direction,
  // and the Mehrotra corrector is added only when an affine probe is supplied
  Eigen::VectorXd comp = Eigen::VectorXd::Zero(m);
  auto fill_comp = [&](double sigmu, const Eigen::VectorXd* dsa, const Eigen::VectorXd* dya) {
    for (int i = 0; i < nn; ++i) {
      const int r = mz + i;
      comp(r) = s(r);
      if (sigmu > 0.0) comp(r) += -sigmu / y(r);
      if (dsa) comp(r) += (*dsa)(r) * (*dya)(r) / y(r);
    }
    for (int b = 0; b < nsoc; ++b) {
      const int at = soc_at[b], sz = cn.soc_sizes[b];
      comp.segment(at, sz) = s.segment(at, sz);
      if (sigmu > 0.0) {
        Eigen::VectorXd jz = y.segment(at, sz);
        jz.tail(sz - 1) = -jz.tail(sz - 1);
        const double rz =
            std::max(y(at) * y(at) - y.segment(at + 1, sz - 1).squaredNorm(), 1e-300);
        comp.segment(at, sz) -= (2.0 * sigmu / rz) * jz;
      }
    }
    for (int e = 0; e < nexp; ++e) {
      const int at = exp0 + 3 * e;
      Eigen::Vector3d t = y.segment<3>(at);
      if (sigmu > 0.0) t += sigmu * expG[e];
      comp.segment<3>(at).noalias() = expH[e] * t;
    }
  };

  auto to_user_rows = [&](const Eigen::VectorXd& w) {
    Eigen::VectorXd wu(m);
    for (int r = 0; r < m; ++r) wu(r) = w(cn.perm[r]);
    for (int rstart : cn.rsoc_starts) {
      const double a = wu(rstart), b = wu(rstart + 1);
      wu(rstart) = kSqrtHalf * (a + b);
      wu(rstart + 1) = kSqrtHalf * (a - b);
    }
    return wu;
  };

  Eigen::VectorXd rp(m), rd(n);
  double rg = 0.0;
  Eigen::VectorXd dx1(n), dy1(m), dx2(n), dy2(m);
  Eigen::VectorXd dx(n), dy(m), ds(m), dsa(m), dya(m), dxa(n);
  double dtaua = 0.0, dkapa = 0.0;

  // one Newton solve against the current factorization; comp and comptau are
  // the complementarity right-hand sides, u2 the cached (cs, bs) solve
  auto newton = [&](double comptau, Eigen::VectorXd& odx, Eigen::VectorXd& ody,
                    Eigen::VectorXd& ods, double& odtau, double& odkap) {
    kkt_solve(-rd, -rp + comp, dx1, dy1);
    double den = cs.dot(dx2) + bs.dot(dy2) - kap / tau;
    if (std::abs(den) < 1e-300) den = (den < 0.0) ? -1e-300 : 1e-300;
    odtau = (-rg + comptau / tau - cs.dot(dx1) - bs.dot(dy1)) / den;
    odx = dx1 + odtau * dx2;
    ody = dy1 + odtau * dy2;
    ods = -apply_H(ody) - comp;
    ods.head(mz).setZero();
    odkap = -(comptau + kap * odtau) / tau;
  };

  const int max_iter = std::min(st.max_iters, 200);
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    rp = As * x + s - bs * tau;
    rd = AsT * y + cs * tau;
    rg = cs.dot(x) + bs.dot(y) + kap;
    const double scz = (mi > 0) ? s.segment(mz, mi).dot(y.segment(mz, mi)) : 0.0;
    const double mu = (scz + tau * kap) / (nu + 1.0);

    // convergence is judged on the user-scale data
    const Eigen::VectorXd X = x.cwiseProduct(sc.e) / tau;
    const Eigen::VectorXd Y = y.cwiseProduct(sc.d) / tau;
    const Eigen::VectorXd S = s.cwiseQuotient(sc.d) / tau;
    const double pres = (cn.A * X + S - cn.b).norm() / (1.0 + bnorm);
    const double dres = (cn.A.transpose() * Y + cn.c).norm() / (1.0 + cnorm);
    const double pcost = cn.c.dot(X), dcost = -cn.b.dot(Y);
    const double gap =
        std::abs(pcost - dcost) / (1.0 + std::abs(pcost) + std::abs(dcost));
    out.primal_res = pres;
    out.dual_res = dres;
    out.gap = gap;

    if (dbg) {
      double pm = std::numeric_limits<double>::infinity();
      double dm = pm;
      for (int e = 0; e < nexp; ++e) {
        const int at = exp0 + 3 * e;
        pm = std::min(pm, s(at + 1) * std::log(s(at + 2) / s(at + 1)) - s(at));
        dm = std::min(dm, 1.0 + std::log(y(at + 2)) - std::log(-y(at)) - y(at + 1) / y(at));
      }
      std::fprintf(stderr,
                   "[it %3d] mu=%.3e pres=%.3e dres=%.3e gap=%.3e tau=%.3e kap=%.3e "
                   "expPm=%.2e expDm=%.2e\n",
                   iter, mu, pres, dres, gap, tau, kap, pm, dm);
    }

    if (pres <= st.eps && dres <= st.eps && gap <= st.eps) {
      out.status = SolveStatus::Optimal;
      out.iterations = iter;
      out.v = X;
      out.y = to_user_rows(Y);
      out.slack = to_user_rows(S);
      out.objective = pcost;
      return out;
    }

    // certificate checks: the rays are interior to their cones by
    // construction, so a small residual is trustworthy
    {
      const Eigen::VectorXd Ydir = y.cwiseProduct(sc.d);
      const double bty = cn.b.dot(Ydir);
      if (bty < -1e-10 * std::max(1.0, Ydir.norm())) {
        const double res = (cn.A.transpose() * Ydir).norm() * std::max(bnorm, 1.0) / (-bty);
        if (res <= st.eps) {
          out.status = SolveStatus::Infeasible;
          out.iterations = iter;
          out.y = to_user_rows(Ydir / (-bty));
          return out;
        }
      }
      const Eigen::VectorXd Xdir = x.cwiseProduct(sc.e);
      const double ctx = cn.c.dot(Xdir);
      if (ctx < -1e-10 * std::max(1.0, Xdir.norm())) {
        const Eigen::VectorXd Sdir = s.cwiseQuotient(sc.d);
        const double res = (cn.A * Xdir + Sdir).norm() * std::max(cnorm, 1.0) / (-ctx);
        if (res <= st.eps) {
          out.status = SolveStatus::Unbounded;
          out.iterations = iter;
          out.v = Xdir / (-ctx);
          return out;
        }
      }
    }

    build_scalings(mu);
    if (!factorize()) break;
    kkt_solve(-cs, bs, dx2, dy2);

    // the Mehrotra machinery keeps the symmetric blocks centered on its own,
    // but the exponential blocks can drift toward a cone boundary and choke
    // the line search; measure their distance to the central path and run an
    // explicit centering step when they stray
    double prox = 0.0;
    for (int e = 0; e < nexp; ++e) {
      const int at = exp0 + 3 * e;
      const Eigen::Vector3d psi = Eigen::Vector3d(y.segment<3>(at)) + mu * expG[e];
      prox = std::max(prox, std::sqrt(std::max(0.0, psi.dot(expH[e] * psi)) / mu));
    }

    double alpha = 0.0;
    double dtau = 0.0, dkap = 0.0;
    bool center = prox > 0.8;
    if (!center) {
      // affine probe sets the centering weight
      fill_comp(0.0, nullptr, nullptr);
      newton(tau * kap, dxa, dya, dsa, dtaua, dkapa);
      const double a_aff = max_step(dsa, dya, dtaua, dkapa);
      const double scz_aff =
          (mi > 0) ? (s.segment(mz, mi) + a_aff * dsa.segment(mz, mi))
                         .dot(y.segment(mz, mi) + a_aff * dya.segment(mz, mi))
                   : 0.0;
      const double mu_aff =
          (scz_aff + (tau + a_aff * dtaua) * (kap + a_aff * dkapa)) / (nu + 1.0);
      const double ratio = mu_aff / std::max(mu, 1e-300);
      const double sig = std::clamp(ratio * ratio * ratio, 1e-8, 1.0);

      fill_comp(sig * mu, &dsa, &dya);
      newton(tau * kap - sig * mu + dtaua * dkapa, dx, dy, ds, dtau, dkap);
      alpha = max_step(ds, dy, dtau, dkap);
      if (alpha < 1e-8) center = true;  // predictor choked, re-center instead
    }
    if (center) {
      fill_comp(mu, nullptr, nullptr);
      newton(tau * kap - mu, dx, dy, ds, dtau, dkap);
      alpha = max_step(ds, dy, dtau, dkap);
      if (dbg) std::fprintf(stderr, "    [center] prox=%.3e alpha=%.3e\n", prox, alpha);
    }
    if (!(alpha > 1e-11)) break;

    x += alpha * dx;
    y += alpha * dy;
    s += alpha * ds;
    tau += alpha * dtau;
    kap += alpha * dkap;
  }

  out.status = SolveStatus::MaxIterations;
  out.iterations = iter;
  if (tau > 1e-12) {
    const Eigen::VectorXd X = x.cwiseProduct(sc.e) / tau;
    const Eigen::VectorXd Y = y.cwiseProduct(sc.d) / tau;
    const Eigen::VectorXd S = s.cwiseQuotient(sc.d) / tau;
    out.v = X;
    out.y = to_user_rows(Y);
    out.slack = to_user_rows(S);
    out.objective = cn.c.dot(X);
  }
  return out;
}

// ---------------------------------------------------------------------------

KktResiduals kkt_residuals(const ConeProgram& prog, const ConeSolution& sol) {
  KktResiduals kr;
  Eigen::VectorXd a = prog.affine(sol.v);
  for (const auto& blk : prog.blocks()) {
    Eigen::VectorXd seg = a.segment(blk.start, blk.size);
    Eigen::VectorXd yseg = sol.y.segment(blk.start, blk.size);
    Eigen::VectorXd p = seg, yp = yseg;
    switch (blk.kind) {
      case Cone::Zero:
        kr.primal = std::max(kr.primal, seg.norm());
        // dual free
        break;
      case Cone::NonNeg:
        p = seg.cwiseMax(0.0);
        yp = yseg.cwiseMax(0.0);
        kr.primal = std::max(kr.primal, (seg - p).norm());
        kr.dual_cone = std::max(kr.dual_cone, (yseg - yp).norm());
        break;
      case Cone::SOC:
        project_soc(p);
        project_soc(yp);
        kr.primal = std::max(kr.primal, (seg - p).norm());
        kr.dual_cone = std::max(kr.dual_cone, (yseg - yp).norm());
        break;
      case Cone::RSOC: {
        // map to plain second-order cone, project, measure there
        auto mix = [](Eigen::VectorXd& w) {
          double u = w(0), v = w(1);
          w(0) = kSqrtHalf * (u + v);
          w(1) = kSqrtHalf * (u - v);
        };
        mix(p);
        mix(yp);
        Eigen::VectorXd p2 = p, yp2 = yp;
        project_soc(p2);
        project_soc(yp2);
        kr.primal = std::max(kr.primal, (p - p2).norm());
        kr.dual_cone = std::max(kr.dual_cone, (yp - yp2).norm());
        break;
      }
      case Cone::Exp: {
        auto pp = project_exp({seg(0), seg(1), seg(2)});
        auto dd = project_exp_dual({yseg(0), yseg(1), yseg(2)});
        double dp = std::hypot(seg(0) - pp[0], std::hypot(seg(1) - pp[1], seg(2) - pp[2]));
        double dy = std::hypot(yseg(0) - dd[0], std::hypot(yseg(1) - dd[1], yseg(2) - dd[2]));
        kr.primal = std::max(kr.primal, dp);
        kr.dual_cone = std::max(kr.dual_cone, dy);
        break;
      }
    }
  }
  // stationarity: c = F' y at an optimum of min c'v s.t. Fv + g in K
  Eigen::VectorXd fty = Eigen::VectorXd::Zero(prog.nvar());
  for (const auto& t : prog.entries()) fty(t.col()) += t.value() * sol.y(t.row());
  kr.stationarity = (prog.objective() - fty).lpNorm<Eigen::Infinity>();
  double ctv = prog.objective().dot(sol.v);
  double gty = prog.offsets().dot(sol.y);
  kr.gap = std::abs(ctv + gty) / (1.0 + std::abs(ctv) + std::abs(gty));
  return kr;
}

std::string dump(const ConeProgram& prog) {
  std::ostringstream os;
  os.precision(17);
  os << "conicprogram 1\n";
  os << "vars " << prog.nvar() << "\n";
  os << "blocks " << prog.blocks().size() << "\n";
  for (const auto& blk : prog.blocks()) {
    const char* k = "zero";
    switch (blk.kind) {
      case Cone::Zero: k = "zero"; break;
      case Cone::NonNeg: k = "nonneg"; break;
      case Cone::SOC: k = "soc"; break;
      case Cone::RSOC: k = "rsoc"; break;
      case Cone::Exp: k = "exp"; break;
    }
    os << k << " " << blk.size << "\n";
  }
  const Eigen::VectorXd& c = prog.objective();
  int cn = 0;
  for (int i = 0; i < c.size(); ++i)
    if (c(i) != 0.0) ++cn;
  os << "objective " << cn << "\n";
  for (int i = 0; i < c.size(); ++i)
    if (c(i) != 0.0) os << i << " " << c(i) << "\n";
  const Eigen::VectorXd& g = prog.offsets();
  int gn = 0;
  for (int i = 0; i < g.size(); ++i)
    if (g(i) != 0.0) ++gn;
  os << "offsets " << gn << "\n";
  for (int i = 0; i < g.size(); ++i)
    if (g(i) != 0.0) os << i << " " << g(i) << "\n";
  os << "entries " << prog.entries().size() << "\n";
  for (const auto& t : prog.entries()) os << t.row() << " " << t.col() << " " << t.value() << "\n";
  os << "end\n";
  return os.str();
}

ConeProgram parse_dump(const std::string& text) {
  std::istringstream is(text);
  std::string tok;
  int version = 0;
  is >> tok >> version;
  if (tok != "conicprogram" || version != 1)
    throw std::invalid_argument("bad cone program dump header");
  int nvar = 0, nblocks = 0;
  is >> tok >> nvar;
  if (tok != "vars") throw std::invalid_argument("bad dump: vars");
  ConeProgram prog(nvar);
  is >> tok >> nblocks;
  if (tok != "blocks") throw std::invalid_argument("bad dump: blocks");
  for (int i = 0; i < nblocks; ++i) {
    std::string kind;
    int sz;
    is >> kind >> sz;
    Cone k;
    if (kind == "zero")
      k = Cone::Zero;
    else if (kind == "nonneg")
      k = Cone::NonNeg;
    else if (kind == "soc")
      k = Cone::SOC;
    else if (kind == "rsoc")
      k = Cone::RSOC;
    else if (kind == "exp")
      k = Cone::Exp;
    else
      throw std::invalid_argument("bad dump: cone kind " + kind);
    prog.add_block(k, sz);
  }
  int cnt = 0;
  is >> tok >> cnt;
  if (tok != "objective") throw std::invalid_argument("bad dump: objective");
  for (int i = 0; i < cnt; ++i) {
    int v;
    double val;
    is >> v >> val;
    prog.add_objective(v, val);
  }
  is >> tok >> cnt;
  if (tok != "offsets") throw std::invalid_argument("bad dump: offsets");
  for (int i = 0; i < cnt; ++i) {
    int r;
    double val;
    is >> r >> val;
    prog.set_offset(r, val);
  }
  is >> tok >> cnt;
  if (tok != "entries") throw std::invalid_argument("bad dump: entries");
  for (int i = 0; i < cnt; ++i) {
    int r, v;
    double val;
    is >> r >> v >> val;
    prog.add_entry(r, v, val);
  }
  return prog;
}

}  // namespace sagin::conic
