// certed: self-certifying primal-dual proxies for DC economic dispatch.
//
// Subcommands: datagen | train | solve | report | verify.
// Exit codes: 0 ok, 1 usage, 2 io, 3 invariant violation, 4 solver failure.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "certed/hybrid.hpp"
#include "certed/training.hpp"

namespace {

using namespace certed;

Mat read_demands_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open demands file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty demands file");
  int cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  std::vector<Vec> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Vec row(cols);
    int j = 0;
    while (std::getline(ss, field, ',')) {
      if (j >= cols) throw ParseError("ragged demands row: '" + line + "'");
      row[j++] = std::stod(field);
    }
    if (j != cols) throw ParseError("ragged demands row: '" + line + "'");
    rows.push_back(row);
  }
  Mat pd(rows.size(), cols);
  for (size_t i = 0; i < rows.size(); ++i) pd.row(i) = rows[i].transpose();
  return pd;
}

void write_demands_csv(const Mat& pd, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out.precision(17);
  for (int j = 0; j < pd.cols(); ++j) out << (j ? "," : "") << "pd_" << j;
  out << "\n";
  for (int i = 0; i < pd.rows(); ++i) {
    for (int j = 0; j < pd.cols(); ++j) out << (j ? "," : "") << pd(i, j);
    out << "\n";
  }
}

std::vector<EDInstance> instances_from_matrix(
    std::shared_ptr<const System> sys, const Mat& pd) {
  if (pd.cols() != sys->n_load())
    throw InvariantError("demands file width does not match the case");
  std::vector<EDInstance> out;
  out.reserve(pd.rows());
  for (int i = 0; i < pd.rows(); ++i)
    out.push_back(EDInstance{sys, pd.row(i).transpose()});
  return out;
}

struct UntrainedProxies {
  PrimalProxy primal;
  DualProxy dual;
};

UntrainedProxies make_untrained(std::shared_ptr<const System> sys,
                                std::uint64_t seed,
                                const std::vector<int>& hidden) {
  Mat stats = sample_demand_matrix(*sys, SamplerConfig{}, 4096,
                                   split_seed(seed, "scaler"));
  InputScaler scaler = InputScaler::fit(stats);
  return {PrimalProxy::make(sys, hidden, scaler,
                            split_seed(seed, "primal-init")),
          DualProxy::make(sys, hidden, scaler, split_seed(seed, "dual-init"))};
}

int cmd_datagen(const std::string& case_path, int n, std::uint64_t seed,
                const std::string& out, const SamplerConfig& sampler) {
  auto sys = load_system(case_path);
  Mat pd = sample_demand_matrix(*sys, sampler, n, split_seed(seed, "sampler"));
  write_demands_csv(pd, out);
  std::cout << "datagen: wrote " << pd.rows() << " instances to " << out
            << "\n";
  return 0;
}

int cmd_train(const std::string& case_path, TrainConfig cfg,
              const std::string& out, std::string log_path) {
  auto sys = load_system(case_path);
  if (log_path.empty()) log_path = out + ".log.csv";
  TrainResult result = train_joint(sys, cfg, log_path);
  save_checkpoint(result.best, out);
  std::cout << "train: best validation gap " << result.best.best_val_gap
            << " at epoch " << result.best.best_epoch
            << (result.diverged ? " (diverged, last good checkpoint kept)"
                                : "")
            << "; checkpoint " << out << ", log " << log_path << "\n";
  return result.diverged ? 4 : 0;
}

int cmd_solve(const std::string& case_path, const std::string& model_path,
              const std::string& demands_path, double epsilon,
              const std::string& out, int workers, std::uint64_t seed) {
  auto sys = load_system(case_path);
  Mat pd = read_demands_csv(demands_path);
  auto batch = instances_from_matrix(sys, pd);

  PrimalProxy primal = [&] {
    if (model_path.empty()) return make_untrained(sys, seed, {64, 64}).primal;
    return bind_primal(load_checkpoint(model_path), sys);
  }();
  DualProxy dual = [&] {
    if (model_path.empty()) return make_untrained(sys, seed, {64, 64}).dual;
    return bind_dual(load_checkpoint(model_path), sys);
  }();

  BatchReport report =
      batch_solve(batch, primal, dual, epsilon, TimingModel{workers});
  write_batch_csv(report, out);
  if (report.rows.size() != batch.size())
    throw InvariantError("row count does not match batch size");
  std::cout << "solve: " << report.rows.size() << " instances, "
            << report.fallback_count << " fallbacks, speedup N="
            << report.speedup << " at eps=" << epsilon << "; wrote " << out
            << "\n";
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& out_path,
               const std::string& plot_path, int workers,
               std::vector<double> eps_grid, const std::string& format) {
  auto records = read_records_csv(in_path);
  if (eps_grid.empty()) {
    for (double e = 0.0; e <= 0.05 + 1e-12; e += 0.0025) eps_grid.push_back(e);
    for (const SampleRecord& r : records)
      if (std::isfinite(r.norm_gap) && r.norm_gap > 0)
        eps_grid.push_back(r.norm_gap);
    std::sort(eps_grid.begin(), eps_grid.end());
    eps_grid.erase(std::unique(eps_grid.begin(), eps_grid.end()),
                   eps_grid.end());
  }
  auto curve = speedup_curve(records, eps_grid, TimingModel{workers});
  if (format == "csv" || format == "both") write_curve_csv(curve, out_path);
  if (format == "svg" || format == "both") write_curve_svg(curve, plot_path);
  for (double target : {100.0, 500.0, 1000.0}) {
    auto eps = inverse_speedup(curve, target);
    std::cout << "report: " << target << "x at eps="
              << (eps ? std::to_string(*eps) : std::string("unreached"))
              << "\n";
  }
  std::cout << "report: wrote "
            << (format == "svg" ? plot_path
                : format == "csv" ? out_path
                                  : out_path + " and " + plot_path)
            << "\n";
  return 0;
}

int cmd_verify(const std::string& case_path, std::uint64_t seed) {
  auto sys = load_system(case_path);
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  // PTDF lossless consistency on random balanced injections.
  {
    std::mt19937_64 rng(split_seed(seed, "verify-ptdf"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      Vec inj(sys->grid.n_buses());
      for (int i = 0; i < inj.size(); ++i) inj[i] = gauss(rng);
      inj.array() -= inj.mean();
      Vec flow = sys->ptdf.phi * inj;
      for (int bus = 0; bus < sys->grid.n_buses(); ++bus) {
        double net = inj[bus];
        for (int e = 0; e < sys->grid.n_branches(); ++e) {
          if (sys->grid.branches[e].from == bus) net -= flow[e];
          if (sys->grid.branches[e].to == bus) net += flow[e];
        }
        if (std::abs(net) > 1e-9) ok = false;
      }
    }
    check("ptdf flow conservation", ok);
  }

  auto proxies = make_untrained(sys, seed, {32, 32});
  auto instances =
      sample_demands(sys, SamplerConfig{}, 100, split_seed(seed, "verify"));

  // Oracle equivalence of the lazy and full solvers.
  {
    bool ok = true;
    for (int i = 0; i < 25; ++i) {
      auto full = solve_ed_full(instances[i]);
      auto lazy = solve_ed_lazy(instances[i]);
      if (std::abs(full.objective - lazy.objective) >
          1e-6 * std::max(1.0, std::abs(full.objective)))
        ok = false;
    }
    check("lazy/full oracle equivalence", ok);
  }

  // Feasibility by construction.
  {
    bool ok = true;
    for (const EDInstance& inst : instances) {
      if (!check_primal_feasible(inst, primal_predict(proxies.primal, inst))
               .ok)
        ok = false;
      if (!check_dual_feasible(
               inst, dual_predict(proxies.dual, inst, nn::Mode::Inference))
               .ok)
        ok = false;
    }
    check("primal/dual feasibility by construction", ok);
  }

  // Certificate soundness against the oracle.
  {
    bool ok = true;
    for (int i = 0; i < 50; ++i) {
      const EDInstance& inst = instances[i];
      auto x = primal_predict(proxies.primal, inst);
      auto y = dual_predict(proxies.dual, inst, nn::Mode::Inference);
      double ng;
      try {
        ng = normalized_gap(inst, x, y);
      } catch (const CertificateError&) {
        continue;  // unusable certificate: hybrid would fall back
      }
      auto exact = solve_ed_full(inst);
      const double star = exact.objective;
      if (ng + 1e-7 < (primal_objective(inst, x) - star) / star) ok = false;
      if (ng + 1e-7 < (star - dual_objective(inst, y)) / star) ok = false;
    }
    check("certificate soundness", ok);
  }

  // Gradient fidelity of the network stack (affine, batch-norm,
  // double-softplus) against central finite differences of a sum-of-outputs
  // loss, which the reverse pass differentiates exactly.
  {
    Mat input = sample_demand_matrix(*sys, SamplerConfig{}, 16,
                                     split_seed(seed, "verify-grad"));
    Vec lo = Vec::Zero(3);
    Vec hi = Vec::Constant(3, 5.0);
    nn::Mlp net = nn::Mlp::make(static_cast<int>(input.cols()), {8}, 3, lo,
                                hi, split_seed(seed, "vg-net"));
    auto loss = [&]() {
      return nn::forward(net, input, nn::Mode::Training, nullptr).sum();
    };
    nn::Tape tape;
    Mat out = nn::forward(net, input, nn::Mode::Training, &tape);
    nn::MlpGrads grads =
        nn::backward(net, tape, Mat::Ones(out.rows(), out.cols()));
    const double h = 1e-5;
    bool ok = true;
    auto fd_check = [&](double& param, double analytic) {
      const double orig = param;
      param = orig + h;
      const double up = loss();
      param = orig - h;
      const double dn = loss();
      param = orig;
      const double fd = (up - dn) / (2 * h);
      if (std::abs(fd - analytic) >
          1e-4 * std::max({1e-3, std::abs(fd), std::abs(analytic)}))
        ok = false;
    };
    for (int i = 0; i < 8; ++i) {
      fd_check(net.layers[0].W(i % net.layers[0].W.rows(), 0),
               grads.layers[0].W(i % net.layers[0].W.rows(), 0));
      fd_check(net.layers[1].W(0, i % net.layers[1].W.cols()),
               grads.layers[1].W(0, i % net.layers[1].W.cols()));
      fd_check(net.bn[0].gamma(i % 8), grads.bn[0].gamma(i % 8));
      fd_check(net.bn[0].beta(i % 8), grads.bn[0].beta(i % 8));
    }
    check("gradient fidelity", ok);
  }

  if (failures) {
    std::cout << "verify: " << failures << " check(s) failed\n";
    return 3;
  }
  std::cout << "verify: all checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-certifying primal-dual proxies for DC economic dispatch"};
  app.require_subcommand(1);

  std::string case_path, out, model, demands, in_path, plot, log_path;
  std::string format = "both";
  int n = 1000, workers = 24;
  std::uint64_t seed = 0;
  double epsilon = 0.01;
  std::vector<double> eps_grid;
  TrainConfig tcfg;

  auto* datagen = app.add_subcommand("datagen", "Sample demand instances");
  datagen->add_option("--case", case_path)->required();
  datagen->add_option("--n", n);
  datagen->add_option("--seed", seed);
  datagen->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "Joint primal-dual training");
  train->add_option("--case", case_path)->required();
  train->add_option("--seed", tcfg.seed);
  train->add_option("--epochs", tcfg.epochs);
  train->add_option("--eps-target", tcfg.eps_target);
  train->add_option("--batch-size", tcfg.batch_size);
  train->add_option("--samples-per-epoch", tcfg.train_samples_per_epoch);
  train->add_option("--val-samples", tcfg.val_samples);
  train->add_option("--hidden", tcfg.hidden, "hidden layer widths")
      ->delimiter(',');
  train->add_option("--out", out)->required();
  train->add_option("--log", log_path);

  auto* solve = app.add_subcommand("solve", "Hybrid batch solve");
  solve->add_option("--case", case_path)->required();
  solve->add_option("--model", model, "checkpoint; untrained net if omitted");
  solve->add_option("--demands", demands)->required();
  solve->add_option("--epsilon", epsilon);
  solve->add_option("--workers", workers);
  solve->add_option("--seed", seed);
  solve->add_option("--out", out)->required();

  auto* report = app.add_subcommand("report", "Speedup curve from solve output");
  report->add_option("--in", in_path)->required();
  report->add_option("--out", out, "curve CSV path");
  report->add_option("--plot", plot, "curve SVG path");
  report->add_option("--workers", workers);
  report->add_option("--eps-grid", eps_grid)->delimiter(',');
  report->add_option("--format", format)
      ->check(CLI::IsMember({"csv", "svg", "both"}));

  auto* verify = app.add_subcommand("verify", "Run the invariant suite");
  verify->add_option("--case", case_path)->required();
  verify->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // usage errors map to exit code 1
  }

  try {
    if (datagen->parsed())
      return cmd_datagen(case_path, n, seed, out, SamplerConfig{});
    if (train->parsed()) return cmd_train(case_path, tcfg, out, log_path);
    if (solve->parsed())
      return cmd_solve(case_path, model, demands, epsilon, out, workers, seed);
    if (report->parsed()) {
      if ((format != "svg" && out.empty()) ||
          (format != "csv" && plot.empty())) {
        std::cerr << "report: --out/--plot required for format " << format
                  << "\n";
        return 1;
      }
      return cmd_report(in_path, out, plot, workers, eps_grid, format);
    }
    if (verify->parsed()) return cmd_verify(case_path, seed);
  } catch (const ParseError& ex) {
    std::cerr << "io error: " << ex.what() << "\n";
    return 2;
  } catch (const SolveError& ex) {
    std::cerr << "solver error: " << ex.what() << "\n";
    return 4;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  }
  return 1;
}
