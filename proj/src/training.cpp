#include "certed/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

namespace certed {

using nlohmann::json;

Mat sample_demand_matrix(const System& sys, const SamplerConfig& cfg, int n,
                         std::uint64_t seed) {
  if (n < 1) throw InvariantError("sample count must be >= 1");
  if (cfg.scale_lo > cfg.scale_hi || cfg.noise_lo > cfg.noise_hi)
    throw InvariantError("sampler ranges must be ordered");
  if (sys.pd_ref.cwiseAbs().sum() == 0.0)
    throw InvariantError("reference demand is zero everywhere");

  const double cap = cfg.capacity_margin * sys.pg_upper.sum();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale_dist(cfg.scale_lo, cfg.scale_hi);
  std::uniform_real_distribution<double> noise_dist(cfg.noise_lo, cfg.noise_hi);

  const int nd = sys.n_load();
  Mat pd(n, nd);
  for (int i = 0; i < n; ++i) {
    const double scale = scale_dist(rng);
    for (int d = 0; d < nd; ++d)
      pd(i, d) = scale * (1.0 + noise_dist(rng)) * sys.pd_ref[d];
    const double total = pd.row(i).sum();
    if (total > cap) pd.row(i) *= cap / total;
  }
  return pd;
}

std::vector<EDInstance> sample_demands(std::shared_ptr<const System> sys,
                                       const SamplerConfig& cfg, int n,
                                       std::uint64_t seed) {
  Mat pd = sample_demand_matrix(*sys, cfg, n, seed);
  std::vector<EDInstance> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(EDInstance{sys, pd.row(i).transpose()});
  return out;
}

void TrainConfig::validate() const {
  if (eps_target < 0) throw InvariantError("eps_target must be >= 0");
  if (lr_floor > lr_init) throw InvariantError("lr_floor must be <= lr_init");
  if (batch_size > train_samples_per_epoch)
    throw InvariantError("batch_size must be <= train_samples_per_epoch");
  if (min_improvement < 0)
    throw InvariantError("min_improvement must be >= 0");
  if (epochs < 1 || batch_size < 1 || val_samples < 1)
    throw InvariantError("epochs, batch_size, val_samples must be >= 1");
}

BatchLossResult training_loss(const Mat& pd_rows, PrimalProxy& primal,
                              DualProxy& dual, double eps) {
  if (primal.sys != dual.sys)
    throw InvariantError("proxies bound to different systems");
  const System& s = *primal.sys;
  const int nb = static_cast<int>(pd_rows.rows());
  const int ng = s.n_gen();
  const int ne = s.n_branch();
  const double M = s.penalty;
  const double mu_s = dual.mu_s;

  // Forward passes (training mode, batch statistics).
  nn::Tape tape_p, tape_d;
  Mat pg_tilde = nn::forward(primal.net, primal.scaler.apply(pd_rows),
                             nn::Mode::Training, &tape_p);
  Mat dual_out = nn::forward(dual.net, dual.scaler.apply(pd_rows),
                             nn::Mode::Training, &tape_d);

  const Vec sf = mu_s * (s.f_upper - s.f_lower).cwiseInverse();
  const Vec sg = mu_s * (s.pg_upper - s.pg_lower).cwiseInverse();

  BatchLossResult res;
  Mat g_pg_tilde = Mat::Zero(nb, ng);
  Mat g_dual_out = Mat::Zero(nb, 1 + ne);
  double loss_sum = 0.0;

  for (int b = 0; b < nb; ++b) {
    const Vec pd = pd_rows.row(b).transpose();
    const double pd_total = pd.sum();
    const Vec p_tilde = pg_tilde.row(b).transpose();

    // Primal recovery.
    const Vec pg =
        proportional_response(p_tilde, pd_total, s.pg_lower, s.pg_upper);
    const Vec flow_load = s.phi_ad * pd;
    const Vec pf = s.phi_ag * pg - flow_load;
    Vec sgn = Vec::Zero(ne);
    double xi_sum = 0.0;
    for (int e = 0; e < ne; ++e) {
      if (pf[e] > s.f_upper[e]) {
        sgn[e] = 1.0;
        xi_sum += pf[e] - s.f_upper[e];
      } else if (pf[e] < s.f_lower[e]) {
        sgn[e] = -1.0;
        xi_sum += s.f_lower[e] - pf[e];
      }
    }
    const double phi = s.cost.dot(pg) + M * xi_sum;

    // Dual completion (S3L).
    const double lambda_hat = dual_out(b, 0);
    const Vec pi_hat = dual_out.row(b).tail(ne).transpose();
    const Vec a = 0.5 * pi_hat;
    const Vec root = (sf.array().square() + a.array().square()).sqrt();
    const Vec mu_lo = sf + a + root.matrix();
    const Vec mu_hi = sf - a + root.matrix();
    const Vec z = s.cost - Vec::Constant(ng, lambda_hat) -
                  s.phi_ag.transpose() * pi_hat;
    const Vec t = 0.5 * z;
    const Vec rootg = (sg.array().square() + t.array().square()).sqrt();
    const Vec z_lo = sg + t + rootg.matrix();
    const Vec z_hi = sg - t + rootg.matrix();
    if ((mu_lo + mu_hi).maxCoeff() > M) ++res.s3l_y_flags;

    const double psi = lambda_hat * pd_total + flow_load.dot(pi_hat) +
                       s.f_lower.dot(mu_lo) - s.f_upper.dot(mu_hi) +
                       s.pg_lower.dot(z_lo) - s.pg_upper.dot(z_hi);

    const double gap = phi - psi;
    const double denom = 0.5 * (phi + psi);
    if (!(denom > 0) || !std::isfinite(gap))
      throw NumericError("non-finite loss");
    const double norm_gap = gap / denom;
    loss_sum += std::max(norm_gap - eps, 0.0);
    if (norm_gap <= eps) continue;  // hinge flat region: zero gradient

    // Denominator is a constant under differentiation.
    const double u = 1.0 / (denom * nb);

    // d(phi)/d(pg_hat), then back through the proportional response.
    Vec dphi_dpg = s.cost + s.phi_ag.transpose() * (M * sgn);
    g_pg_tilde.row(b) =
        (u * proportional_response_vjp(p_tilde, pd_total, s.pg_lower,
                                       s.pg_upper, dphi_dpg))
            .transpose();

    // d(psi)/d(lambda, pi) through the smoothed completion.
    Vec dpsi_dz(ng);
    for (int g = 0; g < ng; ++g) {
      const double ratio = t[g] / rootg[g];
      dpsi_dz[g] = 0.5 * (s.pg_lower[g] * (1.0 + ratio) -
                          s.pg_upper[g] * (-1.0 + ratio));
    }
    const double dpsi_dlambda = pd_total - dpsi_dz.sum();
    Vec dpsi_dpi = flow_load - s.phi_ag * dpsi_dz;
    for (int e = 0; e < ne; ++e) {
      const double ratio = a[e] / root[e];
      dpsi_dpi[e] += 0.5 * (s.f_lower[e] * (1.0 + ratio) -
                            s.f_upper[e] * (-1.0 + ratio));
    }
    g_dual_out(b, 0) = -u * dpsi_dlambda;
    g_dual_out.row(b).tail(ne) = (-u * dpsi_dpi).transpose();
  }

  res.loss = loss_sum / nb;
  res.primal_grads = nn::backward(primal.net, tape_p, g_pg_tilde);
  res.dual_grads = nn::backward(dual.net, tape_d, g_dual_out);
  return res;
}

ValidationResult validate(const std::vector<EDInstance>& val_set,
                          const Predictor& predict) {
  ValidationResult res;
  res.n = static_cast<int>(val_set.size());
  double sum = 0.0;
  for (const EDInstance& inst : val_set) {
    auto [x, y] = predict(inst);
    try {
      sum += normalized_gap(inst, x, y);
    } catch (const CertificateError&) {
      ++res.cert_failures;
      sum = kInf;
    }
  }
  res.mean_gap = res.n == 0 ? 0.0 : sum / res.n;
  return res;
}

ValidationResult validate(const std::vector<EDInstance>& val_set,
                          const PrimalProxy& primal, const DualProxy& dual) {
  return validate(val_set, [&](const EDInstance& inst) {
    return std::make_pair(primal_predict(primal, inst),
                          dual_predict(dual, inst, nn::Mode::Inference));
  });
}

namespace {

json num_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

double num_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>() == "-inf" ? -kInf : kInf;
  return j.get<double>();
}

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(num_to_json(v[i]));
  return arr;
}

Vec vec_from_json(const json& arr) {
  Vec v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i)
    v[static_cast<int>(i)] = num_from_json(arr[i]);
  return v;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i)
    rows.push_back(vec_to_json(m.row(i).transpose()));
  return rows;
}

Mat mat_from_json(const json& rows) {
  const int nr = static_cast<int>(rows.size());
  const int nc = nr == 0 ? 0 : static_cast<int>(rows[0].size());
  Mat m(nr, nc);
  for (int i = 0; i < nr; ++i)
    m.row(i) = vec_from_json(rows[i]).transpose();
  return m;
}

json mlp_to_json(const nn::Mlp& mlp) {
  json doc;
  doc["layers"] = json::array();
  for (const nn::DenseLayer& layer : mlp.layers)
    doc["layers"].push_back(
        {{"W", mat_to_json(layer.W)}, {"b", vec_to_json(layer.b)}});
  doc["bn"] = json::array();
  for (const nn::BatchNormLayer& bn : mlp.bn)
    doc["bn"].push_back({{"gamma", vec_to_json(bn.gamma)},
                         {"beta", vec_to_json(bn.beta)},
                         {"run_mean", vec_to_json(bn.run_mean)},
                         {"run_var", vec_to_json(bn.run_var)},
                         {"momentum", bn.momentum},
                         {"eps", bn.eps}});
  doc["out_lo"] = vec_to_json(mlp.out_lo);
  doc["out_hi"] = vec_to_json(mlp.out_hi);
  return doc;
}

nn::Mlp mlp_from_json(const json& doc) {
  nn::Mlp mlp;
  for (const json& layer : doc.at("layers"))
    mlp.layers.push_back(
        {mat_from_json(layer.at("W")), vec_from_json(layer.at("b"))});
  for (const json& bn : doc.at("bn")) {
    nn::BatchNormLayer b;
    b.gamma = vec_from_json(bn.at("gamma"));
    b.beta = vec_from_json(bn.at("beta"));
    b.run_mean = vec_from_json(bn.at("run_mean"));
    b.run_var = vec_from_json(bn.at("run_var"));
    b.momentum = bn.at("momentum");
    b.eps = bn.at("eps");
    mlp.bn.push_back(std::move(b));
  }
  mlp.out_lo = vec_from_json(doc.at("out_lo"));
  mlp.out_hi = vec_from_json(doc.at("out_hi"));
  return mlp;
}

json config_to_json(const TrainConfig& cfg) {
  return json{{"eps_target", cfg.eps_target},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"train_samples_per_epoch", cfg.train_samples_per_epoch},
              {"val_samples", cfg.val_samples},
              {"lr_init", cfg.lr_init},
              {"lr_floor", cfg.lr_floor},
              {"lr_factor", cfg.lr_factor},
              {"patience_epochs", cfg.patience_epochs},
              {"min_improvement", cfg.min_improvement},
              {"seed", cfg.seed},
              {"mu_s", cfg.mu_s},
              {"hidden", cfg.hidden},
              {"sampler",
               {{"scale_lo", cfg.sampler.scale_lo},
                {"scale_hi", cfg.sampler.scale_hi},
                {"noise_lo", cfg.sampler.noise_lo},
                {"noise_hi", cfg.sampler.noise_hi},
                {"capacity_margin", cfg.sampler.capacity_margin}}}};
}

TrainConfig config_from_json(const json& doc) {
  TrainConfig cfg;
  cfg.eps_target = doc.at("eps_target");
  cfg.epochs = doc.at("epochs");
  cfg.batch_size = doc.at("batch_size");
  cfg.train_samples_per_epoch = doc.at("train_samples_per_epoch");
  cfg.val_samples = doc.at("val_samples");
  cfg.lr_init = doc.at("lr_init");
  cfg.lr_floor = doc.at("lr_floor");
  cfg.lr_factor = doc.at("lr_factor");
  cfg.patience_epochs = doc.at("patience_epochs");
  cfg.min_improvement = doc.at("min_improvement");
  cfg.seed = doc.at("seed");
  cfg.mu_s = doc.at("mu_s");
  cfg.hidden = doc.at("hidden").get<std::vector<int>>();
  const json& s = doc.at("sampler");
  cfg.sampler.scale_lo = s.at("scale_lo");
  cfg.sampler.scale_hi = s.at("scale_hi");
  cfg.sampler.noise_lo = s.at("noise_lo");
  cfg.sampler.noise_hi = s.at("noise_hi");
  cfg.sampler.capacity_margin = s.at("capacity_margin");
  return cfg;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json doc;
  doc["version"] = ckpt.version;
  doc["primal_net"] = mlp_to_json(ckpt.primal_net);
  doc["dual_net"] = mlp_to_json(ckpt.dual_net);
  doc["scaler"] = {{"mean", vec_to_json(ckpt.scaler.mean)},
                   {"std", vec_to_json(ckpt.scaler.std)}};
  doc["mu_s"] = ckpt.mu_s;
  doc["best_val_gap"] = num_to_json(ckpt.best_val_gap);
  doc["best_epoch"] = ckpt.best_epoch;
  doc["config"] = config_to_json(ckpt.config);
  return doc.dump(2);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write checkpoint '" + path + "'");
  out << serialize_checkpoint(ckpt);
}

Checkpoint parse_checkpoint(const std::string& text) {
  json doc = json::parse(text);
  Checkpoint ckpt;
  ckpt.version = doc.at("version");
  ckpt.primal_net = mlp_from_json(doc.at("primal_net"));
  ckpt.dual_net = mlp_from_json(doc.at("dual_net"));
  ckpt.scaler.mean = vec_from_json(doc.at("scaler").at("mean"));
  ckpt.scaler.std = vec_from_json(doc.at("scaler").at("std"));
  ckpt.mu_s = doc.at("mu_s");
  ckpt.best_val_gap = num_from_json(doc.at("best_val_gap"));
  ckpt.best_epoch = doc.at("best_epoch");
  ckpt.config = config_from_json(doc.at("config"));
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_checkpoint(text);
}

PrimalProxy bind_primal(const Checkpoint& ckpt,
                        std::shared_ptr<const System> sys) {
  if (ckpt.primal_net.out_dim() != sys->n_gen() ||
      ckpt.primal_net.in_dim() != sys->n_load())
    throw DimensionError("checkpoint does not match the system");
  return PrimalProxy{ckpt.primal_net, ckpt.scaler, std::move(sys)};
}

DualProxy bind_dual(const Checkpoint& ckpt,
                    std::shared_ptr<const System> sys) {
  if (ckpt.dual_net.out_dim() != 1 + sys->n_branch() ||
      ckpt.dual_net.in_dim() != sys->n_load())
    throw DimensionError("checkpoint does not match the system");
  return DualProxy{ckpt.dual_net, ckpt.scaler, std::move(sys), ckpt.mu_s};
}

TrainResult train_joint(std::shared_ptr<const System> sys,
                        const TrainConfig& cfg,
                        const std::string& log_csv_path) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;

  // All randomness from named streams of the one seed.
  const auto scaler_pd = sample_demand_matrix(
      *sys, cfg.sampler, std::max(4096, cfg.batch_size),
      split_seed(cfg.seed, "scaler"));
  InputScaler scaler = InputScaler::fit(scaler_pd);
  const auto val_set = sample_demands(sys, cfg.sampler, cfg.val_samples,
                                      split_seed(cfg.seed, "validation"));

  PrimalProxy primal = PrimalProxy::make(sys, cfg.hidden, scaler,
                                         split_seed(cfg.seed, "primal-init"));
  DualProxy dual = DualProxy::make(sys, cfg.hidden, scaler,
                                   split_seed(cfg.seed, "dual-init"), cfg.mu_s);

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr_init;
  nn::Adam opt_primal(primal.net, adam_cfg);
  nn::Adam opt_dual(dual.net, adam_cfg);

  TrainResult result;
  result.best.scaler = scaler;
  result.best.mu_s = cfg.mu_s;
  result.best.config = cfg;
  result.best.primal_net = primal.net;
  result.best.dual_net = dual.net;

  std::ofstream log_csv;
  if (!log_csv_path.empty()) {
    log_csv.open(log_csv_path);
    if (!log_csv)
      throw ParseError("cannot write training log '" + log_csv_path + "'");
    log_csv << "epoch,train_loss,val_gap,val_cert_failures,lr,wall_time\n";
  }

  double lr = cfg.lr_init;
  double sched_best = kInf;
  int since_improve = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    // Fresh queries every epoch; no sample is ever reused.
    Mat pd = sample_demand_matrix(*sys, cfg.sampler,
                                  cfg.train_samples_per_epoch,
                                  split_seed(cfg.seed, "epoch", epoch));
    double loss_sum = 0.0;
    int batches = 0;
    try {
      for (int start = 0; start + cfg.batch_size <= pd.rows();
           start += cfg.batch_size) {
        BatchLossResult batch = training_loss(
            pd.middleRows(start, cfg.batch_size), primal, dual,
            cfg.eps_target);
        result.s3l_y_flags_total += batch.s3l_y_flags;
        opt_primal.step(primal.net, batch.primal_grads);
        opt_dual.step(dual.net, batch.dual_grads);
        loss_sum += batch.loss;
        ++batches;
      }
    } catch (const NumericError&) {
      result.diverged = true;
      break;  // abort with the last good checkpoint
    }

    ValidationResult val = validate(val_set, primal, dual);

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = batches ? loss_sum / batches : 0.0;
    row.val_gap = val.mean_gap;
    row.val_cert_failures = val.cert_failures;
    row.lr = lr;
    row.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
    result.log.push_back(row);
    if (log_csv.is_open())
      log_csv << row.epoch << "," << row.train_loss << "," << row.val_gap
              << "," << row.val_cert_failures << "," << row.lr << ","
              << row.wall_time << "\n";

    if (val.mean_gap < result.best.best_val_gap) {
      result.best.best_val_gap = val.mean_gap;
      result.best.best_epoch = epoch;
      result.best.primal_net = primal.net;
      result.best.dual_net = dual.net;
    }
    // Scheduler: an infinite gap counts as no improvement.
    if (val.mean_gap < sched_best - cfg.min_improvement) {
      sched_best = val.mean_gap;
      since_improve = 0;
    } else if (++since_improve >= cfg.patience_epochs) {
      lr = std::max(lr * cfg.lr_factor, cfg.lr_floor);
      opt_primal.set_lr(lr);
      opt_dual.set_lr(lr);
      since_improve = 0;
    }
  }
  return result;
}

}  // namespace certed
