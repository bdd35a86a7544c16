#pragma once

#include <memory>

#include "certed/ed_model.hpp"
#include "certed/nn.hpp"

namespace certed {

// Input feature scaling shared by the primal and dual nets; statistics come
// from the training sampler and travel with the checkpoint.
struct InputScaler {
  Vec mean;
  Vec std;

  Mat apply(const Mat& pd_rows) const;
  static InputScaler fit(const Mat& pd_rows);
};

struct PrimalProxy {
  nn::Mlp net;  // output width G, double-softplus bounded to [p_lower, p_upper]
  InputScaler scaler;
  std::shared_ptr<const System> sys;

  static PrimalProxy make(std::shared_ptr<const System> sys,
                          const std::vector<int>& hidden, InputScaler scaler,
                          std::uint64_t seed);
};

struct DualProxy {
  nn::Mlp net;  // output width 1+E: lambda unbounded, pi in [-M, M]
  InputScaler scaler;
  std::shared_ptr<const System> sys;
  double mu_s = 1e-2;  // S3L smoothing constant

  static DualProxy make(std::shared_ptr<const System> sys,
                        const std::vector<int>& hidden, InputScaler scaler,
                        std::uint64_t seed, double mu_s = 1e-2);
};

// Projects a bound-feasible dispatch onto the power-balance hypersimplex.
Vec proportional_response(const Vec& p_tilde, double pd_total, const Vec& lo,
                          const Vec& hi);

// Vector-Jacobian product of proportional_response at p_tilde.
Vec proportional_response_vjp(const Vec& p_tilde, double pd_total,
                              const Vec& lo, const Vec& hi, const Vec& grad);

// p_hat via net + proportional response, p_f via the PTDF identity, xi via
// the overflow formula. Feasible for any parameter values.
PrimalPoint primal_predict(const PrimalProxy& proxy, const EDInstance& inst);
PrimalPoint primal_from_ptilde(const EDInstance& inst, const Vec& p_tilde);

// Smooth dual completion used during training. y may come out negative when
// |pi| is close to M; callers flag (not reject) such points.
DualPoint dual_complete_s3l(double lambda_hat, const Vec& pi_hat,
                            const EDInstance& inst, double mu_s);

// Closed-form optimal completion given fixed (lambda, pi); inference path.
DualPoint dual_complete_dll(double lambda_hat, const Vec& pi_hat,
                            const EDInstance& inst);

DualPoint dual_predict(const DualProxy& proxy, const EDInstance& inst,
                       nn::Mode mode);

}  // namespace certed
