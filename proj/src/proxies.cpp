#include "certed/proxies.hpp"

#include <cmath>

namespace certed {

Mat InputScaler::apply(const Mat& pd_rows) const {
  if (pd_rows.cols() != mean.size())
    throw DimensionError("scaler width does not match demand vector");
  return (pd_rows.rowwise() - mean.transpose()).array().rowwise() /
         std.transpose().array();
}

InputScaler InputScaler::fit(const Mat& pd_rows) {
  InputScaler s;
  s.mean = pd_rows.colwise().mean();
  Mat centered = pd_rows.rowwise() - s.mean.transpose();
  Vec var = centered.array().square().colwise().mean();
  s.std = var.array().sqrt().max(1e-8);
  return s;
}

PrimalProxy PrimalProxy::make(std::shared_ptr<const System> sys,
                              const std::vector<int>& hidden,
                              InputScaler scaler, std::uint64_t seed) {
  PrimalProxy proxy;
  proxy.net = nn::Mlp::make(sys->n_load(), hidden, sys->n_gen(),
                            sys->pg_lower, sys->pg_upper, seed);
  proxy.scaler = std::move(scaler);
  proxy.sys = std::move(sys);
  return proxy;
}

DualProxy DualProxy::make(std::shared_ptr<const System> sys,
                          const std::vector<int>& hidden, InputScaler scaler,
                          std::uint64_t seed, double mu_s) {
  const int e = sys->n_branch();
  Vec lo(1 + e), hi(1 + e);
  lo[0] = -kInf;  // lambda unbounded
  hi[0] = kInf;
  lo.tail(e).setConstant(-sys->penalty);
  hi.tail(e).setConstant(sys->penalty);
  DualProxy proxy;
  proxy.net = nn::Mlp::make(sys->n_load(), hidden, 1 + e, lo, hi, seed);
  proxy.scaler = std::move(scaler);
  proxy.sys = std::move(sys);
  proxy.mu_s = mu_s;
  return proxy;
}

Vec proportional_response(const Vec& p_tilde, double pd_total, const Vec& lo,
                          const Vec& hi) {
  const double total = p_tilde.sum();
  if (total < pd_total) {
    const double denom = hi.sum() - total;
    const double eta = denom <= 1e-12 ? 1.0 : (pd_total - total) / denom;
    return (1.0 - eta) * p_tilde + eta * hi;
  }
  const double denom = total - lo.sum();
  const double eta = denom <= 1e-12 ? 1.0 : (total - pd_total) / denom;
  return (1.0 - eta) * p_tilde + eta * lo;
}

Vec proportional_response_vjp(const Vec& p_tilde, double pd_total,
                              const Vec& lo, const Vec& hi, const Vec& grad) {
  const double total = p_tilde.sum();
  if (total < pd_total) {
    const double denom = hi.sum() - total;
    if (denom <= 1e-12) return Vec::Zero(p_tilde.size());  // snapped to hi
    const double eta = (pd_total - total) / denom;
    const double deta = (pd_total - hi.sum()) / (denom * denom);
    return (1.0 - eta) * grad +
           (grad.dot(hi - p_tilde) * deta) * Vec::Ones(p_tilde.size());
  }
  const double denom = total - lo.sum();
  if (denom <= 1e-12) return Vec::Zero(p_tilde.size());
  const double eta = (total - pd_total) / denom;
  const double deta = (pd_total - lo.sum()) / (denom * denom);
  return (1.0 - eta) * grad +
         (grad.dot(lo - p_tilde) * deta) * Vec::Ones(p_tilde.size());
}

PrimalPoint primal_from_ptilde(const EDInstance& inst, const Vec& p_tilde) {
  const System& s = *inst.sys;
  PrimalPoint x;
  x.pg = proportional_response(p_tilde, inst.pd.sum(), s.pg_lower, s.pg_upper);
  x.pf = s.phi_ag * x.pg - s.phi_ad * inst.pd;
  x.xi = (x.pf - s.f_upper)
             .cwiseMax(0.0)
             .cwiseMax((s.f_lower - x.pf).cwiseMax(0.0));
  return x;
}

PrimalPoint primal_predict(const PrimalProxy& proxy, const EDInstance& inst) {
  Mat features = proxy.scaler.apply(inst.pd.transpose());
  Mat out = nn::forward(proxy.net, features);
  return primal_from_ptilde(inst, out.row(0).transpose());
}

DualPoint dual_complete_s3l(double lambda_hat, const Vec& pi_hat,
                            const EDInstance& inst, double mu_s) {
  const System& s = *inst.sys;
  if (!(mu_s > 0)) throw InvariantError("S3L smoothing constant must be > 0");
  if (((s.f_upper - s.f_lower).array() <= 0).any() ||
      ((s.pg_upper - s.pg_lower).array() <= 0).any())
    throw InvariantError("S3L requires strictly positive bound ranges");

  DualPoint y;
  y.lambda = lambda_hat;
  Vec sf = mu_s * (s.f_upper - s.f_lower).cwiseInverse();
  Vec a = 0.5 * pi_hat;
  Vec root = (sf.array().square() + a.array().square()).sqrt();
  y.mu_lower = sf + a + root.matrix();
  y.mu_upper = sf - a + root.matrix();
  y.pi = y.mu_lower - y.mu_upper;  // equals pi_hat

  Vec z = s.cost - Vec::Constant(s.n_gen(), lambda_hat) -
          s.phi_ag.transpose() * pi_hat;
  Vec sg = mu_s * (s.pg_upper - s.pg_lower).cwiseInverse();
  Vec t = 0.5 * z;
  Vec rootg = (sg.array().square() + t.array().square()).sqrt();
  y.z_lower = sg + t + rootg.matrix();
  y.z_upper = sg - t + rootg.matrix();

  y.y = Vec::Constant(s.n_branch(), s.penalty) - y.mu_lower - y.mu_upper;
  return y;
}

DualPoint dual_complete_dll(double lambda_hat, const Vec& pi_hat,
                            const EDInstance& inst) {
  const System& s = *inst.sys;
  if ((pi_hat.cwiseAbs().array() > s.penalty).any())
    throw InvariantError("|pi| exceeds the penalty bound M");

  DualPoint y;
  y.lambda = lambda_hat;
  y.pi = pi_hat;
  y.mu_lower = pi_hat.cwiseMax(0.0);
  y.mu_upper = (-pi_hat).cwiseMax(0.0);
  Vec z = s.cost - Vec::Constant(s.n_gen(), lambda_hat) -
          s.phi_ag.transpose() * pi_hat;
  y.z_lower = z.cwiseMax(0.0);
  y.z_upper = (-z).cwiseMax(0.0);
  y.y = Vec::Constant(s.n_branch(), s.penalty) - pi_hat.cwiseAbs();
  return y;
}

DualPoint dual_predict(const DualProxy& proxy, const EDInstance& inst,
                       nn::Mode mode) {
  Mat features = proxy.scaler.apply(inst.pd.transpose());
  Mat out = nn::forward(proxy.net, features);
  const double lambda_hat = out(0, 0);
  Vec pi_hat = out.row(0).tail(proxy.sys->n_branch()).transpose();
  return mode == nn::Mode::Training
             ? dual_complete_s3l(lambda_hat, pi_hat, inst, proxy.mu_s)
             : dual_complete_dll(lambda_hat, pi_hat, inst);
}

}  // namespace certed
