#include "certed/ed_model.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace certed {

using nlohmann::json;

void EDInstance::validate() const {
  if (!sys) throw InvariantError("instance has no system");
  if (pd.size() != sys->n_load())
    throw DimensionError("demand vector length does not match load count");
  if ((pd.array() < 0).any())
    throw InvariantError("negative demand entry");
  const double total = pd.sum();
  if (total < sys->pg_lower.sum() - 1e-9 || total > sys->pg_upper.sum() + 1e-9)
    throw InvariantError("total demand outside generation capacity");
}

namespace {

void check_primal_dims(const EDInstance& inst, const PrimalPoint& x) {
  if (x.pg.size() != inst.sys->n_gen() || x.pf.size() != inst.sys->n_branch() ||
      x.xi.size() != inst.sys->n_branch())
    throw DimensionError("primal point dimensions do not match system");
}

void check_dual_dims(const EDInstance& inst, const DualPoint& y) {
  const int e = inst.sys->n_branch();
  const int g = inst.sys->n_gen();
  if (y.pi.size() != e || y.mu_lower.size() != e || y.mu_upper.size() != e ||
      y.y.size() != e || y.z_lower.size() != g || y.z_upper.size() != g)
    throw DimensionError("dual point dimensions do not match system");
}

}  // namespace

double primal_objective(const EDInstance& inst, const PrimalPoint& x) {
  check_primal_dims(inst, x);
  return inst.sys->cost.dot(x.pg) + inst.sys->penalty * x.xi.sum();
}

double dual_objective(const EDInstance& inst, const DualPoint& y) {
  check_dual_dims(inst, y);
  const System& s = *inst.sys;
  return y.lambda * inst.pd.sum() + (s.phi_ad * inst.pd).dot(y.pi) +
         s.f_lower.dot(y.mu_lower) - s.f_upper.dot(y.mu_upper) +
         s.pg_lower.dot(y.z_lower) - s.pg_upper.dot(y.z_upper);
}

double duality_gap(const EDInstance& inst, const PrimalPoint& x,
                   const DualPoint& y) {
  return primal_objective(inst, x) - dual_objective(inst, y);
}

double normalized_gap(const EDInstance& inst, const PrimalPoint& x,
                      const DualPoint& y) {
  const double psi = dual_objective(inst, y);
  if (!(psi > 0))
    throw CertificateError("denominator not positive: dual objective is " +
                           std::to_string(psi));
  return (primal_objective(inst, x) - psi) / psi;
}

double midpoint_gap(const EDInstance& inst, const PrimalPoint& x,
                    const DualPoint& y) {
  const double phi = primal_objective(inst, x);
  const double psi = dual_objective(inst, y);
  const double mid = 0.5 * (phi + psi);
  if (!(mid > 0)) throw CertificateError("denominator not positive");
  return (phi - psi) / mid;
}

double hinge_gap(double gap, double eps) { return std::max(gap - eps, 0.0); }

std::string FeasibilityReport::summary() const {
  if (ok) return "feasible";
  std::ostringstream out;
  out << violations.size() << " violation(s), worst " << max_residual << ":";
  for (size_t i = 0; i < violations.size() && i < 5; ++i)
    out << " " << violations[i].constraint << "=" << violations[i].residual;
  return out.str();
}

namespace {

struct ReportBuilder {
  FeasibilityReport rep;
  double tol;

  void residual(const std::string& name, double r) {
    rep.max_residual = std::max(rep.max_residual, r);
    if (r > tol) {
      rep.ok = false;
      rep.violations.push_back({name, r});
    }
  }
  void vec_residual(const std::string& name, const Vec& r) {
    for (int i = 0; i < r.size(); ++i)
      residual(name + "[" + std::to_string(i) + "]", r[i]);
  }
};

}  // namespace

FeasibilityReport check_primal_feasible(const EDInstance& inst,
                                        const PrimalPoint& x, double tol) {
  check_primal_dims(inst, x);
  const System& s = *inst.sys;
  ReportBuilder b;
  b.tol = tol * std::max(1.0, inst.pd.sum());

  Vec flow = s.phi_ag * x.pg - s.phi_ad * inst.pd;
  b.vec_residual("ptdf", (flow - x.pf).cwiseAbs());
  b.residual("balance", std::abs(x.pg.sum() - inst.pd.sum()));
  b.vec_residual("pg_lower", (s.pg_lower - x.pg).cwiseMax(0.0));
  b.vec_residual("pg_upper", (x.pg - s.pg_upper).cwiseMax(0.0));
  b.vec_residual("pf_lower", ((s.f_lower - x.xi) - x.pf).cwiseMax(0.0));
  b.vec_residual("pf_upper", (x.pf - (s.f_upper + x.xi)).cwiseMax(0.0));
  b.vec_residual("xi_nonneg", (-x.xi).cwiseMax(0.0));
  return b.rep;
}

FeasibilityReport check_dual_feasible(const EDInstance& inst,
                                      const DualPoint& y, double tol) {
  check_dual_dims(inst, y);
  const System& s = *inst.sys;
  ReportBuilder b;
  b.tol = tol * std::max(1.0, inst.pd.sum());

  Vec eq_pg = Vec::Constant(s.n_gen(), y.lambda) +
              s.phi_ag.transpose() * y.pi + y.z_lower - y.z_upper - s.cost;
  b.vec_residual("dual_pg", eq_pg.cwiseAbs());
  b.vec_residual("dual_pf", (-y.pi + y.mu_lower - y.mu_upper).cwiseAbs());
  Vec eq_xi = y.mu_lower + y.mu_upper + y.y -
              Vec::Constant(s.n_branch(), s.penalty);
  b.vec_residual("dual_xi", eq_xi.cwiseAbs());
  b.vec_residual("mu_lower_nonneg", (-y.mu_lower).cwiseMax(0.0));
  b.vec_residual("mu_upper_nonneg", (-y.mu_upper).cwiseMax(0.0));
  b.vec_residual("z_lower_nonneg", (-y.z_lower).cwiseMax(0.0));
  b.vec_residual("z_upper_nonneg", (-y.z_upper).cwiseMax(0.0));
  b.vec_residual("y_nonneg", (-y.y).cwiseMax(0.0));
  return b.rep;
}

namespace {

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vec vec_from_json(const json& arr) {
  Vec v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[static_cast<int>(i)] = arr[i];
  return v;
}

}  // namespace

std::string serialize_point(const PrimalPoint& x) {
  json doc{{"pg", vec_to_json(x.pg)}, {"pf", vec_to_json(x.pf)},
           {"xi", vec_to_json(x.xi)}};
  return doc.dump(2);
}

std::string serialize_point(const DualPoint& y) {
  json doc{{"lambda", y.lambda},
           {"pi", vec_to_json(y.pi)},
           {"mu_lower", vec_to_json(y.mu_lower)},
           {"mu_upper", vec_to_json(y.mu_upper)},
           {"z_lower", vec_to_json(y.z_lower)},
           {"z_upper", vec_to_json(y.z_upper)},
           {"y", vec_to_json(y.y)}};
  return doc.dump(2);
}

PrimalPoint parse_primal_point(const std::string& text) {
  json doc = json::parse(text);
  return PrimalPoint{vec_from_json(doc.at("pg")), vec_from_json(doc.at("pf")),
                     vec_from_json(doc.at("xi"))};
}

DualPoint parse_dual_point(const std::string& text) {
  json doc = json::parse(text);
  DualPoint y;
  y.lambda = doc.at("lambda");
  y.pi = vec_from_json(doc.at("pi"));
  y.mu_lower = vec_from_json(doc.at("mu_lower"));
  y.mu_upper = vec_from_json(doc.at("mu_upper"));
  y.z_lower = vec_from_json(doc.at("z_lower"));
  y.z_upper = vec_from_json(doc.at("z_upper"));
  y.y = vec_from_json(doc.at("y"));
  return y;
}

}  // namespace certed
