#pragma once

#include <set>
#include <vector>

#include "certed/ed_model.hpp"

namespace certed {

struct LPSolveResult {
  PrimalPoint primal;
  DualPoint dual;
  double objective = 0.0;
  int iterations = 0;
  int lazy_rounds = 0;
  std::set<int> activated_branches;
  double wall_time = 0.0;  // seconds, model build excluded
};

// Full formulation: every PTDF row present.
LPSolveResult solve_ed_full(const EDInstance& inst);

// Lazy PTDF outer loop: start with no thermal rows, add violated branches
// until none remain.
LPSolveResult solve_ed_lazy(const EDInstance& inst);

// Global solve counter; used to assert label-freedom of the training path.
long lp_solve_count();
void reset_lp_solve_count();

namespace simplex {

// min c'x  s.t.  A x = b,  lo <= x <= hi   (entries of lo/hi may be +-inf)
struct Problem {
  Mat A;
  Vec b;
  Vec c;
  Vec lo;
  Vec hi;
};

struct Solution {
  Vec x;
  Vec row_dual;      // m
  Vec reduced_cost;  // n (zero on basic columns)
  double objective = 0.0;
  int iterations = 0;
};

struct Options {
  double pivot_tol = 1e-9;
  double reduced_cost_tol = 1e-9;
  double feas_tol = 1e-7;
  int max_iterations = 0;  // 0 -> automatic
};

// Two-phase bounded-variable revised simplex with explicit artificials on
// the equality rows; Dantzig pricing, Bland's rule after 10*(m+n)
// degenerate pivots. Throws SolveError on infeasibility/unboundedness.
Solution solve(const Problem& prob, const Options& opts = {});

}  // namespace simplex
}  // namespace certed
