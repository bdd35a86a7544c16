#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "certed/proxies.hpp"

namespace certed {

struct SamplerConfig {
  double scale_lo = 0.8;  // global demand scale, U(lo, hi)
  double scale_hi = 1.2;
  double noise_lo = -0.05;  // per-load multiplicative noise, U(lo, hi)
  double noise_hi = 0.05;
  double capacity_margin = 0.98;  // total demand <= margin * sum(p_upper)
};

// pd = scale * (1 + noise) .* pd_ref, rescaled onto the capacity margin when
// needed. Deterministic given the seed.
Mat sample_demand_matrix(const System& sys, const SamplerConfig& cfg, int n,
                         std::uint64_t seed);
std::vector<EDInstance> sample_demands(std::shared_ptr<const System> sys,
                                       const SamplerConfig& cfg, int n,
                                       std::uint64_t seed);

struct TrainConfig {
  double eps_target = 0.0;  // 0 for the plain gap loss, e.g. 0.01 for 1%
  int epochs = 5000;
  int batch_size = 1024;
  int train_samples_per_epoch = 20480;
  int val_samples = 10240;
  double lr_init = 1e-3;
  double lr_floor = 1e-5;
  double lr_factor = 0.95;
  int patience_epochs = 50;
  double min_improvement = 1e-4;
  std::uint64_t seed = 0;
  double mu_s = 1e-2;
  SamplerConfig sampler;
  std::vector<int> hidden = {256, 256, 256, 256};

  void validate() const;
};

struct BatchLossResult {
  double loss = 0.0;
  nn::MlpGrads primal_grads;
  nn::MlpGrads dual_grads;
  int s3l_y_flags = 0;  // samples where the S3L completion had y < 0
};

// Mean hinge(midpoint-normalized gap, eps) over a batch of demand rows,
// with exact reverse-mode gradients for both nets. Training-mode forward;
// the midpoint denominator is treated as a constant under differentiation.
BatchLossResult training_loss(const Mat& pd_rows, PrimalProxy& primal,
                              DualProxy& dual, double eps);

using Predictor =
    std::function<std::pair<PrimalPoint, DualPoint>(const EDInstance&)>;

struct ValidationResult {
  double mean_gap = 0.0;  // +inf when any certificate failed
  int cert_failures = 0;
  int n = 0;
};

ValidationResult validate(const std::vector<EDInstance>& val_set,
                          const Predictor& predict);
ValidationResult validate(const std::vector<EDInstance>& val_set,
                          const PrimalProxy& primal, const DualProxy& dual);

struct Checkpoint {
  int version = 1;
  nn::Mlp primal_net;
  nn::Mlp dual_net;
  InputScaler scaler;
  double mu_s = 1e-2;
  double best_val_gap = kInf;
  int best_epoch = -1;
  TrainConfig config;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint parse_checkpoint(const std::string& text);

PrimalProxy bind_primal(const Checkpoint& ckpt,
                        std::shared_ptr<const System> sys);
DualProxy bind_dual(const Checkpoint& ckpt, std::shared_ptr<const System> sys);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_gap = 0.0;
  int val_cert_failures = 0;
  double lr = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  bool diverged = false;
  int s3l_y_flags_total = 0;
};

// Joint label-free training: fresh sample set every epoch, fixed validation
// set, best-gap checkpointing, patience-based LR decay. Never calls the LP
// solver.
TrainResult train_joint(std::shared_ptr<const System> sys,
                        const TrainConfig& cfg,
                        const std::string& log_csv_path = "");

}  // namespace certed
