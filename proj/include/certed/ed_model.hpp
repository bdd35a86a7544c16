#pragma once

#include <memory>
#include <string>
#include <vector>

#include "certed/grid.hpp"

namespace certed {

// One parametric ED query: the demand vector over a fixed System.
struct EDInstance {
  std::shared_ptr<const System> sys;
  Vec pd;  // length D, MW

  double pd_total() const { return pd.sum(); }
  void validate() const;
};

struct PrimalPoint {
  Vec pg;  // G
  Vec pf;  // E
  Vec xi;  // E, >= 0
};

struct DualPoint {
  double lambda = 0.0;
  Vec pi;        // E
  Vec mu_lower;  // E, >= 0
  Vec mu_upper;  // E, >= 0
  Vec z_lower;   // G, >= 0
  Vec z_upper;   // G, >= 0
  Vec y;         // E, >= 0
};

double primal_objective(const EDInstance& inst, const PrimalPoint& x);
double dual_objective(const EDInstance& inst, const DualPoint& y);

double duality_gap(const EDInstance& inst, const PrimalPoint& x,
                   const DualPoint& y);

// Gap / dual objective. Throws CertificateError when the dual objective is
// not positive (the certificate is unusable and the caller must fall back).
double normalized_gap(const EDInstance& inst, const PrimalPoint& x,
                      const DualPoint& y);

// Gap / midpoint of the two objectives; training-loss normalizer only.
double midpoint_gap(const EDInstance& inst, const PrimalPoint& x,
                    const DualPoint& y);

double hinge_gap(double gap, double eps);

struct ConstraintResidual {
  std::string constraint;  // e.g. "pg_upper[3]"
  double residual = 0.0;   // positive = violated by that amount
};

struct FeasibilityReport {
  bool ok = true;
  double max_residual = 0.0;
  std::vector<ConstraintResidual> violations;
  std::string summary() const;
};

// Residual checks for Eqs. (10b)-(10f) / (11b)-(11e). tol is scaled by
// max(1, e'pd) internally.
FeasibilityReport check_primal_feasible(const EDInstance& inst,
                                        const PrimalPoint& x,
                                        double tol = 1e-9);
FeasibilityReport check_dual_feasible(const EDInstance& inst,
                                      const DualPoint& y, double tol = 1e-9);

std::string serialize_point(const PrimalPoint& x);
std::string serialize_point(const DualPoint& y);
PrimalPoint parse_primal_point(const std::string& text);
DualPoint parse_dual_point(const std::string& text);

}  // namespace certed
