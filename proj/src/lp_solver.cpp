#include "certed/lp_solver.hpp"

#include <atomic>
#include <chrono>

namespace certed {
namespace simplex {

namespace {

enum class Status : char { AtLower, AtUpper, AtZero, Basic };

class Worker {
 public:
  Worker(const Problem& p, const Options& opts) : opts_(opts) {
    n_ = static_cast<int>(p.c.size());
    m_ = static_cast<int>(p.b.size());
    if (p.A.rows() != m_ || p.A.cols() != n_ || p.lo.size() != n_ ||
        p.hi.size() != n_)
      throw DimensionError("inconsistent LP dimensions");
    ntot_ = n_ + m_;
    b_ = p.b;
    A_.resize(m_, ntot_);
    A_.leftCols(n_) = p.A;
    A_.rightCols(m_).setZero();
    lo_.resize(ntot_);
    hi_.resize(ntot_);
    lo_.head(n_) = p.lo;
    hi_.head(n_) = p.hi;
    x_ = Vec::Zero(ntot_);
    stat_.assign(ntot_, Status::AtZero);
    for (int j = 0; j < n_; ++j) {
      if (std::isfinite(lo_[j])) {
        stat_[j] = Status::AtLower;
        x_[j] = lo_[j];
      } else if (std::isfinite(hi_[j])) {
        stat_[j] = Status::AtUpper;
        x_[j] = hi_[j];
      }
    }
    // Artificial columns signed so the initial artificial basis is feasible.
    Vec resid = b_ - A_.leftCols(n_) * x_.head(n_);
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      const int j = n_ + i;
      A_(i, j) = resid[i] >= 0 ? 1.0 : -1.0;
      lo_[j] = 0.0;
      hi_[j] = kInf;
      x_[j] = std::abs(resid[i]);
      stat_[j] = Status::Basic;
      basis_[i] = j;
    }
    max_iter_ = opts_.max_iterations > 0 ? opts_.max_iterations
                                         : 50 * (m_ + ntot_) + 10000;
  }

  Solution run(const Problem& p) {
    // Phase 1: drive the artificials to zero.
    Vec cost1 = Vec::Zero(ntot_);
    cost1.tail(m_).setOnes();
    optimize(cost1);
    double infeas = x_.tail(m_).sum();
    if (infeas > opts_.feas_tol * std::max(1.0, b_.cwiseAbs().maxCoeff()))
      throw SolveError("LP infeasible (phase-1 residual " +
                       std::to_string(infeas) + ")");
    // Phase 2: artificials pinned at zero, original objective.
    for (int i = 0; i < m_; ++i) {
      lo_[n_ + i] = 0.0;
      hi_[n_ + i] = 0.0;
      if (stat_[n_ + i] != Status::Basic) {
        stat_[n_ + i] = Status::AtLower;
        x_[n_ + i] = 0.0;
      }
    }
    Vec cost2 = Vec::Zero(ntot_);
    cost2.head(n_) = p.c;
    optimize(cost2);

    Solution sol;
    sol.x = x_.head(n_);
    sol.iterations = iterations_;
    sol.objective = p.c.dot(sol.x);
    // Row duals and reduced costs from the final basis.
    factorize();
    Vec cb(m_);
    for (int i = 0; i < m_; ++i) cb[i] = cost2[basis_[i]];
    sol.row_dual = lu_.transpose().solve(cb);
    sol.reduced_cost = Vec::Zero(n_);
    for (int j = 0; j < n_; ++j)
      if (stat_[j] != Status::Basic)
        sol.reduced_cost[j] = p.c[j] - A_.col(j).dot(sol.row_dual);
    return sol;
  }

 private:
  void factorize() {
    Mat B(m_, m_);
    for (int i = 0; i < m_; ++i) B.col(i) = A_.col(basis_[i]);
    lu_.compute(B);
  }

  void recompute_basics() {
    Vec rhs = b_;
    for (int j = 0; j < ntot_; ++j)
      if (stat_[j] != Status::Basic && x_[j] != 0.0) rhs -= A_.col(j) * x_[j];
    Vec xb = lu_.solve(rhs);
    for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb[i];
  }

  void optimize(const Vec& cost) {
    const int bland_after = 10 * (m_ + ntot_);
    while (true) {
      if (iterations_ > max_iter_)
        throw SolveError("simplex iteration limit exceeded");
      factorize();
      recompute_basics();
      Vec cb(m_);
      for (int i = 0; i < m_; ++i) cb[i] = cost[basis_[i]];
      Vec y = lu_.transpose().solve(cb);

      // Pricing: Dantzig, or Bland once too many degenerate pivots occurred.
      int enter = -1;
      double best = opts_.reduced_cost_tol;
      double enter_d = 0.0;
      for (int j = 0; j < ntot_; ++j) {
        if (stat_[j] == Status::Basic || lo_[j] == hi_[j]) continue;
        const double d = cost[j] - A_.col(j).dot(y);
        double viol = 0.0;
        if (stat_[j] == Status::AtLower)
          viol = -d;
        else if (stat_[j] == Status::AtUpper)
          viol = d;
        else
          viol = std::abs(d);
        if (viol > best) {
          enter = j;
          enter_d = d;
          if (bland_) break;  // lowest eligible index
          best = viol;
        }
      }
      if (enter < 0) return;  // optimal for this phase

      const double sigma =
          (stat_[enter] == Status::AtLower ||
           (stat_[enter] == Status::AtZero && enter_d < 0))
              ? 1.0
              : -1.0;
      Vec w = lu_.solve(A_.col(enter));

      // Ratio test; leave = -1 means the entering variable flips bound.
      double t = kInf;
      if (std::isfinite(lo_[enter]) && std::isfinite(hi_[enter]))
        t = hi_[enter] - lo_[enter];
      int leave = -1;
      bool hit_lower = false;
      for (int i = 0; i < m_; ++i) {
        const int bi = basis_[i];
        const double delta = sigma * w[i];
        double limit = kInf;
        bool lower = false;
        if (delta > opts_.pivot_tol && std::isfinite(lo_[bi])) {
          limit = (x_[bi] - lo_[bi]) / delta;
          lower = true;
        } else if (delta < -opts_.pivot_tol && std::isfinite(hi_[bi])) {
          limit = (hi_[bi] - x_[bi]) / (-delta);
        }
        limit = std::max(limit, 0.0);
        const bool tie = leave >= 0 && limit < t + 1e-12;
        const bool better =
            bland_ ? (tie && basis_[i] < basis_[leave])
                   : (tie && std::abs(w[i]) > std::abs(w[leave]));
        if (limit < t - 1e-12 || better) {
          t = limit;
          leave = i;
          hit_lower = lower;
        }
      }
      if (!std::isfinite(t)) throw SolveError("LP unbounded");

      ++iterations_;
      if (leave < 0) {
        // Bound flip, basis unchanged.
        x_[enter] = sigma > 0 ? hi_[enter] : lo_[enter];
        stat_[enter] =
            sigma > 0 ? Status::AtUpper : Status::AtLower;
        continue;
      }
      const int out = basis_[leave];
      x_[out] = hit_lower ? lo_[out] : hi_[out];
      stat_[out] = hit_lower ? Status::AtLower : Status::AtUpper;
      x_[enter] = (stat_[enter] == Status::AtZero ? 0.0
                   : stat_[enter] == Status::AtLower ? lo_[enter]
                                                     : hi_[enter]) +
                  sigma * t;
      stat_[enter] = Status::Basic;
      basis_[leave] = enter;
      if (t <= 1e-11 && ++degenerate_ > bland_after) bland_ = true;
    }
  }

  Options opts_;
  int n_ = 0, m_ = 0, ntot_ = 0;
  Mat A_;
  Vec b_, lo_, hi_, x_;
  std::vector<Status> stat_;
  std::vector<int> basis_;
  Eigen::PartialPivLU<Mat> lu_;
  int iterations_ = 0;
  int degenerate_ = 0;
  int max_iter_ = 0;
  bool bland_ = false;
};

}  // namespace

Solution solve(const Problem& prob, const Options& opts) {
  Worker worker(prob, opts);
  return worker.run(prob);
}

}  // namespace simplex

namespace {

std::atomic<long> g_solve_count{0};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Relaxation with PTDF/thermal rows only for the activated branches.
// Variable layout: pg (G) | pf_act | xi_act | s_up_act | s_lo_act.
simplex::Problem build_ed_problem(const EDInstance& inst,
                                  const std::vector<int>& act) {
  const System& s = *inst.sys;
  const int ng = s.n_gen();
  const int nb = static_cast<int>(act.size());
  const int n = ng + 4 * nb;
  const int m = 3 * nb + 1;

  simplex::Problem p;
  p.A = Mat::Zero(m, n);
  p.b = Vec::Zero(m);
  p.c = Vec::Zero(n);
  p.lo = Vec::Zero(n);
  p.hi = Vec::Zero(n);

  p.c.head(ng) = s.cost;
  p.lo.head(ng) = s.pg_lower;
  p.hi.head(ng) = s.pg_upper;
  for (int r = 0; r < nb; ++r) {
    p.lo[ng + r] = -kInf;  // pf free
    p.hi[ng + r] = kInf;
    p.c[ng + nb + r] = s.penalty;  // xi
    p.hi[ng + nb + r] = kInf;
    p.hi[ng + 2 * nb + r] = kInf;  // slacks
    p.hi[ng + 3 * nb + r] = kInf;
  }

  const Vec flow_rhs = s.phi_ad * inst.pd;
  for (int r = 0; r < nb; ++r) {
    const int e = act[r];
    p.A.row(r).head(ng) = s.phi_ag.row(e);
    p.A(r, ng + r) = -1.0;
    p.b[r] = flow_rhs[e];
  }
  p.A.row(nb).head(ng).setOnes();
  p.b[nb] = inst.pd.sum();
  for (int r = 0; r < nb; ++r) {
    const int up = nb + 1 + r;
    p.A(up, ng + r) = 1.0;
    p.A(up, ng + nb + r) = -1.0;
    p.A(up, ng + 2 * nb + r) = 1.0;
    p.b[up] = s.f_upper[act[r]];
    const int dn = nb + 1 + nb + r;
    p.A(dn, ng + r) = -1.0;
    p.A(dn, ng + nb + r) = -1.0;
    p.A(dn, ng + 3 * nb + r) = 1.0;
    p.b[dn] = -s.f_lower[act[r]];
  }
  return p;
}

DualPoint extract_dual(const EDInstance& inst, const simplex::Solution& sol,
                       const std::vector<int>& act) {
  const System& s = *inst.sys;
  const int ne = s.n_branch();
  const int nb = static_cast<int>(act.size());
  const double M = s.penalty;

  DualPoint dual;
  dual.lambda = sol.row_dual[nb];
  dual.pi = Vec::Zero(ne);
  dual.mu_lower = Vec::Zero(ne);
  dual.mu_upper = Vec::Zero(ne);
  dual.y = Vec::Constant(ne, M);
  for (int r = 0; r < nb; ++r) {
    const int e = act[r];
    double mu_up = std::max(0.0, -sol.row_dual[nb + 1 + r]);
    double mu_lo = std::max(0.0, -sol.row_dual[nb + 1 + nb + r]);
    // Numerical noise may push mu_lo+mu_up just beyond M; shave the excess
    // off the larger multiplier so y stays nonnegative.
    const double excess = mu_lo + mu_up - M;
    if (excess > 0) {
      if (mu_lo >= mu_up)
        mu_lo -= excess;
      else
        mu_up -= excess;
    }
    dual.mu_lower[e] = mu_lo;
    dual.mu_upper[e] = mu_up;
    dual.pi[e] = mu_lo - mu_up;  // (11c) holds exactly
    dual.y[e] = M - mu_lo - mu_up;
  }
  // Generator reduced costs split by sign so (11b) holds exactly.
  Vec z = s.cost - Vec::Constant(s.n_gen(), dual.lambda) -
          s.phi_ag.transpose() * dual.pi;
  dual.z_lower = z.cwiseMax(0.0);
  dual.z_upper = (-z).cwiseMax(0.0);
  return dual;
}

LPSolveResult solve_ed_with(const EDInstance& inst, bool lazy) {
  if (inst.sys) {
    const double total = inst.pd.sum();
    if (total < inst.sys->pg_lower.sum() - 1e-9 ||
        total > inst.sys->pg_upper.sum() + 1e-9)
      throw SolveError("infeasible balance");
  }
  inst.validate();
  g_solve_count.fetch_add(1, std::memory_order_relaxed);
  const System& s = *inst.sys;

  LPSolveResult res;
  std::vector<int> act;
  if (!lazy) {
    act.resize(s.n_branch());
    for (int e = 0; e < s.n_branch(); ++e) act[e] = e;
  }

  simplex::Solution sol;
  while (true) {
    simplex::Problem prob = build_ed_problem(inst, act);
    const auto t0 = Clock::now();
    sol = simplex::solve(prob);
    res.wall_time += seconds_since(t0);
    res.iterations += sol.iterations;
    ++res.lazy_rounds;

    const Vec pg = sol.x.head(s.n_gen());
    const Vec flow = s.phi_ag * pg - s.phi_ad * inst.pd;
    const Vec xi = (flow - s.f_upper).cwiseMax(0.0).cwiseMax(
        (s.f_lower - flow).cwiseMax(0.0));

    bool added = false;
    if (lazy) {
      for (int e = 0; e < s.n_branch(); ++e) {
        if (xi[e] > 1e-7 &&
            std::find(act.begin(), act.end(), e) == act.end()) {
          act.push_back(e);
          added = true;
        }
      }
    }
    if (!added) {
      res.primal = PrimalPoint{pg, flow, xi};
      res.dual = extract_dual(inst, sol, act);
      res.objective = s.cost.dot(pg) + s.penalty * xi.sum();
      res.activated_branches.insert(act.begin(), act.end());
      return res;
    }
    std::sort(act.begin(), act.end());
  }
}

}  // namespace

LPSolveResult solve_ed_full(const EDInstance& inst) {
  return solve_ed_with(inst, false);
}

LPSolveResult solve_ed_lazy(const EDInstance& inst) {
  return solve_ed_with(inst, true);
}

long lp_solve_count() { return g_solve_count.load(); }
void reset_lp_solve_count() { g_solve_count.store(0); }

}  // namespace certed
