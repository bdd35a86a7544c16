#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "certed/hybrid.hpp"
#include "certed/training.hpp"

namespace py = pybind11;
using namespace certed;

PYBIND11_MODULE(certed, m) {
  m.doc() = "Self-certifying primal-dual proxies for DC economic dispatch";

  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<InvariantError>(m, "InvariantError");
  py::register_exception<SolveError>(m, "SolveError");
  py::register_exception<CertificateError>(m, "CertificateError");
  py::register_exception<NumericError>(m, "NumericError");

  py::class_<System, std::shared_ptr<System>>(m, "System")
      .def_property_readonly("n_gen", &System::n_gen)
      .def_property_readonly("n_branch", &System::n_branch)
      .def_property_readonly("n_load", &System::n_load)
      .def_readonly("cost", &System::cost)
      .def_readonly("pg_lower", &System::pg_lower)
      .def_readonly("pg_upper", &System::pg_upper)
      .def_readonly("f_lower", &System::f_lower)
      .def_readonly("f_upper", &System::f_upper)
      .def_readonly("pd_ref", &System::pd_ref)
      .def_readonly("penalty", &System::penalty)
      .def_property_readonly(
          "ptdf", [](const System& s) { return s.ptdf.phi; });

  m.def("load_case", [](const std::string& path) {
    // pybind11 cannot hold shared_ptr<const System>; clone into a mutable
    // holder that Python treats as read-only anyway.
    auto sys = load_system(path);
    return std::make_shared<System>(*sys);
  });

  py::class_<EDInstance>(m, "EDInstance")
      .def(py::init([](std::shared_ptr<System> sys, Vec pd) {
             EDInstance inst{sys, std::move(pd)};
             inst.validate();
             return inst;
           }),
           py::arg("system"), py::arg("pd"))
      .def_readonly("pd", &EDInstance::pd)
      .def_property_readonly("pd_total", &EDInstance::pd_total);

  py::class_<PrimalPoint>(m, "PrimalPoint")
      .def_readonly("pg", &PrimalPoint::pg)
      .def_readonly("pf", &PrimalPoint::pf)
      .def_readonly("xi", &PrimalPoint::xi);

  py::class_<DualPoint>(m, "DualPoint")
      .def_readonly("lam", &DualPoint::lambda)
      .def_readonly("pi", &DualPoint::pi)
      .def_readonly("mu_lower", &DualPoint::mu_lower)
      .def_readonly("mu_upper", &DualPoint::mu_upper)
      .def_readonly("z_lower", &DualPoint::z_lower)
      .def_readonly("z_upper", &DualPoint::z_upper)
      .def_readonly("y", &DualPoint::y);

  py::class_<LPSolveResult>(m, "LPSolveResult")
      .def_readonly("primal", &LPSolveResult::primal)
      .def_readonly("dual", &LPSolveResult::dual)
      .def_readonly("objective", &LPSolveResult::objective)
      .def_readonly("iterations", &LPSolveResult::iterations)
      .def_readonly("lazy_rounds", &LPSolveResult::lazy_rounds)
      .def_readonly("wall_time", &LPSolveResult::wall_time);

  m.def("solve_ed_full", &solve_ed_full);
  m.def("solve_ed_lazy", &solve_ed_lazy);

  m.def("primal_objective", &primal_objective);
  m.def("dual_objective", &dual_objective);
  m.def("duality_gap", &duality_gap);
  m.def("normalized_gap", &normalized_gap);

  m.def("check_primal_feasible",
        [](const EDInstance& inst, const PrimalPoint& x, double tol) {
          auto rep = check_primal_feasible(inst, x, tol);
          return py::make_tuple(rep.ok, rep.max_residual, rep.summary());
        },
        py::arg("instance"), py::arg("point"), py::arg("tol") = 1e-9);
  m.def("check_dual_feasible",
        [](const EDInstance& inst, const DualPoint& y, double tol) {
          auto rep = check_dual_feasible(inst, y, tol);
          return py::make_tuple(rep.ok, rep.max_residual, rep.summary());
        },
        py::arg("instance"), py::arg("point"), py::arg("tol") = 1e-9);

  py::class_<SamplerConfig>(m, "SamplerConfig")
      .def(py::init<>())
      .def_readwrite("scale_lo", &SamplerConfig::scale_lo)
      .def_readwrite("scale_hi", &SamplerConfig::scale_hi)
      .def_readwrite("noise_lo", &SamplerConfig::noise_lo)
      .def_readwrite("noise_hi", &SamplerConfig::noise_hi)
      .def_readwrite("capacity_margin", &SamplerConfig::capacity_margin);

  m.def("sample_demands",
        [](std::shared_ptr<System> sys, int n, std::uint64_t seed,
           const SamplerConfig& cfg) {
          return sample_demand_matrix(*sys, cfg, n, seed);
        },
        py::arg("system"), py::arg("n"), py::arg("seed"),
        py::arg("config") = SamplerConfig{});

  py::class_<InputScaler>(m, "InputScaler")
      .def_readonly("mean", &InputScaler::mean)
      .def_readonly("std", &InputScaler::std)
      .def_static("fit", &InputScaler::fit);

  py::class_<PrimalProxy>(m, "PrimalProxy")
      .def_static(
          "make",
          [](std::shared_ptr<System> sys, const std::vector<int>& hidden,
             const InputScaler& scaler, std::uint64_t seed) {
            return PrimalProxy::make(sys, hidden, scaler, seed);
          },
          py::arg("system"), py::arg("hidden"), py::arg("scaler"),
          py::arg("seed"));

  py::class_<DualProxy>(m, "DualProxy")
      .def_static(
          "make",
          [](std::shared_ptr<System> sys, const std::vector<int>& hidden,
             const InputScaler& scaler, std::uint64_t seed, double mu_s) {
            return DualProxy::make(sys, hidden, scaler, seed, mu_s);
          },
          py::arg("system"), py::arg("hidden"), py::arg("scaler"),
          py::arg("seed"), py::arg("mu_s") = 1e-2);

  m.def("primal_predict", &primal_predict);
  m.def("dual_predict",
        [](const DualProxy& proxy, const EDInstance& inst, bool training) {
          return dual_predict(
              proxy, inst,
              training ? nn::Mode::Training : nn::Mode::Inference);
        },
        py::arg("proxy"), py::arg("instance"), py::arg("training") = false);
  m.def("proportional_response", &proportional_response);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("eps_target", &TrainConfig::eps_target)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("train_samples_per_epoch",
                     &TrainConfig::train_samples_per_epoch)
      .def_readwrite("val_samples", &TrainConfig::val_samples)
      .def_readwrite("lr_init", &TrainConfig::lr_init)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("hidden", &TrainConfig::hidden);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("best_val_gap", &Checkpoint::best_val_gap)
      .def_readonly("best_epoch", &Checkpoint::best_epoch)
      .def("save", &save_checkpoint, py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint);
  m.def("bind_primal",
        [](const Checkpoint& ckpt, std::shared_ptr<System> sys) {
          return bind_primal(ckpt, sys);
        });
  m.def("bind_dual", [](const Checkpoint& ckpt, std::shared_ptr<System> sys) {
    return bind_dual(ckpt, sys);
  });

  py::class_<EpochLog>(m, "EpochLog")
      .def_readonly("epoch", &EpochLog::epoch)
      .def_readonly("train_loss", &EpochLog::train_loss)
      .def_readonly("val_gap", &EpochLog::val_gap)
      .def_readonly("lr", &EpochLog::lr);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("best", &TrainResult::best)
      .def_readonly("log", &TrainResult::log)
      .def_readonly("diverged", &TrainResult::diverged);
  m.def("train_joint",
        [](std::shared_ptr<System> sys, const TrainConfig& cfg,
           const std::string& log_csv) {
          return train_joint(sys, cfg, log_csv);
        },
        py::arg("system"), py::arg("config"), py::arg("log_csv") = "");

  py::enum_<CertifiedSolution::Source>(m, "Source")
      .value("Proxy", CertifiedSolution::Source::Proxy)
      .value("Fallback", CertifiedSolution::Source::Fallback);

  py::class_<CertifiedSolution>(m, "CertifiedSolution")
      .def_readonly("primal", &CertifiedSolution::primal)
      .def_readonly("dual", &CertifiedSolution::dual)
      .def_readonly("gap", &CertifiedSolution::gap)
      .def_readonly("norm_gap", &CertifiedSolution::norm_gap)
      .def_readonly("source", &CertifiedSolution::source)
      .def_readonly("proxy_time", &CertifiedSolution::proxy_time)
      .def_readonly("solver_time", &CertifiedSolution::solver_time);

  m.def("certify_solve", &certify_solve, py::arg("instance"),
        py::arg("primal"), py::arg("dual"), py::arg("eps"),
        py::arg("use_absolute_gap") = false);

  py::class_<BatchRow>(m, "BatchRow")
      .def_readonly("instance", &BatchRow::instance)
      .def_readonly("gap", &BatchRow::gap)
      .def_readonly("norm_gap", &BatchRow::norm_gap)
      .def_readonly("source", &BatchRow::source)
      .def_readonly("proxy_time", &BatchRow::proxy_time)
      .def_readonly("solver_time", &BatchRow::solver_time);

  py::class_<BatchReport>(m, "BatchReport")
      .def_readonly("rows", &BatchReport::rows)
      .def_readonly("fallback_count", &BatchReport::fallback_count)
      .def_readonly("baseline_time", &BatchReport::baseline_time)
      .def_readonly("hybrid_time", &BatchReport::hybrid_time)
      .def_readonly("speedup", &BatchReport::speedup);

  m.def("batch_solve",
        [](const std::vector<EDInstance>& batch, const PrimalProxy& primal,
           const DualProxy& dual, double eps, int workers) {
          return batch_solve(batch, primal, dual, eps, TimingModel{workers});
        },
        py::arg("batch"), py::arg("primal"), py::arg("dual"), py::arg("eps"),
        py::arg("workers") = 24);

  m.def("makespan", &makespan, py::arg("times"), py::arg("workers") = 24);
  m.def("split_seed",
        [](std::uint64_t seed, const std::string& stream) {
          return split_seed(seed, stream);
        });
}
