#include "romax/lp.hpp"

#include <cmath>
#include <limits>

namespace romax::lp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kPivotTol = 1e-11;
constexpr int kMaxIter = 20000;

enum VarStatus { kAtLower, kAtUpper, kBasic };

// Equality-form working problem: min c'x, A x = b, lo <= x <= hi.
struct Tableau {
  Mat a;
  Vec b;
  Vec c;
  Vec lo, hi;
  int n = 0;  // columns (structural + slack + artificial)
  int m = 0;  // rows
  std::vector<int> basis;          // basic variable per row
  std::vector<VarStatus> status;   // per variable
  Vec x;                           // current values

  Eigen::PartialPivLU<Mat> lu;

  void factorize() {
    Mat bmat(m, m);
    for (int r = 0; r < m; ++r) bmat.col(r) = a.col(basis[r]);
    lu.compute(bmat);
  }

  void recompute_basics() {
    Vec rhs = b;
    for (int j = 0; j < n; ++j) {
      if (status[j] == kBasic) continue;
      const double v = status[j] == kAtLower ? lo[j] : hi[j];
      x[j] = v;
      if (v != 0.0) rhs -= a.col(j) * v;
    }
    Vec xb = lu.solve(rhs);
    for (int r = 0; r < m; ++r) x[basis[r]] = xb[r];
  }

  // One simplex phase on the given costs. Returns false on unbounded ray.
  bool iterate(const Vec& cost, bool* hit_limit) {
    *hit_limit = false;
    for (int iter = 0; iter < kMaxIter; ++iter) {
      factorize();
      recompute_basics();

      Vec cb(m);
      for (int r = 0; r < m; ++r) cb[r] = cost[basis[r]];
      Vec y = lu.transpose().solve(cb);

      // Bland: entering = lowest-index eligible nonbasic variable.
      int enter = -1;
      int dir = 0;  // +1 increase from lower, -1 decrease from upper
      for (int j = 0; j < n; ++j) {
        if (status[j] == kBasic || lo[j] == hi[j]) continue;
        const double d = cost[j] - y.dot(a.col(j));
        if (status[j] == kAtLower && d < -kCostTol) {
          enter = j;
          dir = +1;
          break;
        }
        if (status[j] == kAtUpper && d > kCostTol) {
          enter = j;
          dir = -1;
          break;
        }
      }
      if (enter < 0) return true;  // optimal for this phase

      Vec w = lu.solve(a.col(enter));  // column of entering in basis coords

      // Ratio test: x_B(t) = x_B - dir * w * t stays within bounds;
      // entering moves at most its own range. Ties by smallest basic
      // index (Bland).
      double row_limit = kInf;
      int leave_row = -1;
      for (int r = 0; r < m; ++r) {
        const double wr = dir * w[r];
        const int jb = basis[r];
        double limit;
        if (wr > kPivotTol)
          limit = (x[jb] - lo[jb]) / wr;
        else if (wr < -kPivotTol)
          limit = (x[jb] - hi[jb]) / wr;
        else
          continue;
        limit = std::max(limit, 0.0);
        if (limit < row_limit - kFeasTol ||
            (limit < row_limit + kFeasTol &&
             (leave_row < 0 || jb < basis[leave_row]))) {
          row_limit = std::min(limit, row_limit);
          leave_row = r;
        }
      }

      const double range = hi[enter] - lo[enter];
      if (row_limit == kInf && !std::isfinite(range)) return false;

      if (range <= row_limit) {
        // Bound flip: entering crosses to its other bound.
        status[enter] = dir > 0 ? kAtUpper : kAtLower;
        continue;
      }

      const int leave = basis[leave_row];
      // Leaving variable lands on the bound it hit.
      const double wr = dir * w[leave_row];
      status[leave] = wr > 0 ? kAtLower : kAtUpper;
      basis[leave_row] = enter;
      status[enter] = kBasic;
    }
    *hit_limit = true;
    return true;
  }
};

}  // namespace

Solution solve(const Problem& problem) {
  const int m = static_cast<int>(problem.a.rows());
  const int ns = static_cast<int>(problem.a.cols());
  require(problem.b.size() == m && static_cast<int>(problem.rel.size()) == m,
          "lp: row count mismatch");
  require(problem.c.size() == ns && problem.lo.size() == ns &&
              problem.hi.size() == ns,
          "lp: column count mismatch");

  int n_slack = 0;
  for (Rel r : problem.rel)
    if (r != Rel::kEq) ++n_slack;

  Tableau t;
  t.m = m;
  t.n = ns + n_slack + m;  // structural + slacks + artificials
  t.a = Mat::Zero(m, t.n);
  t.a.leftCols(ns) = problem.a;
  t.b = problem.b;
  t.lo = Vec::Zero(t.n);
  t.hi = Vec::Zero(t.n);
  t.lo.head(ns) = problem.lo;
  t.hi.head(ns) = problem.hi;

  int col = ns;
  for (int r = 0; r < m; ++r) {
    if (problem.rel[r] == Rel::kEq) continue;
    t.a(r, col) = problem.rel[r] == Rel::kLe ? 1.0 : -1.0;
    t.lo[col] = 0.0;
    t.hi[col] = kInf;
    ++col;
  }

  // Nonbasic start: every structural/slack at its finite bound.
  t.status.assign(t.n, kAtLower);
  t.x = Vec::Zero(t.n);
  for (int j = 0; j < ns + n_slack; ++j) {
    if (std::isfinite(t.lo[j]))
      t.status[j] = kAtLower;
    else if (std::isfinite(t.hi[j]))
      t.status[j] = kAtUpper;
    else {
      t.lo[j] = 0.0;  // free variable pinned at 0 for the start
      t.hi[j] = kInf;
      t.status[j] = kAtLower;
    }
  }

  // Artificials absorb the residual: a_r = b_r - (A x_N)_r, signed columns.
  Vec resid = t.b;
  for (int j = 0; j < ns + n_slack; ++j) {
    const double v = t.status[j] == kAtLower ? t.lo[j] : t.hi[j];
    if (v != 0.0) resid -= t.a.col(j) * v;
  }
  t.basis.resize(m);
  for (int r = 0; r < m; ++r) {
    const int ja = ns + n_slack + r;
    t.a(r, ja) = resid[r] >= 0 ? 1.0 : -1.0;
    t.lo[ja] = 0.0;
    t.hi[ja] = kInf;
    t.basis[r] = ja;
    t.status[ja] = kBasic;
  }

  // Phase 1: minimize the sum of artificials.
  Vec phase1 = Vec::Zero(t.n);
  phase1.tail(m).setOnes();
  bool limit = false;
  if (!t.iterate(phase1, &limit) || limit)
    return {Status::kInfeasible, 0.0, Vec()};
  t.factorize();
  t.recompute_basics();
  double art_sum = 0.0;
  for (int j = ns + n_slack; j < t.n; ++j) art_sum += t.x[j];
  if (art_sum > 1e-7) return {Status::kInfeasible, 0.0, Vec()};

  // Lock artificials at zero for phase 2.
  for (int j = ns + n_slack; j < t.n; ++j) t.hi[j] = 0.0;

  Vec phase2 = Vec::Zero(t.n);
  phase2.head(ns) = problem.c;
  if (!t.iterate(phase2, &limit))
    return {Status::kUnbounded, -kInf, Vec()};
  if (limit) return {Status::kInfeasible, 0.0, Vec()};

  t.factorize();
  t.recompute_basics();
  Solution sol;
  sol.status = Status::kOptimal;
  sol.x = t.x.head(ns);
  sol.objective = problem.c.dot(sol.x);
  return sol;
}

}  // namespace romax::lp
