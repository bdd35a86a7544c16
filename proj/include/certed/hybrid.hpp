#pragma once

#include <optional>
#include <string>
#include <vector>

#include "certed/lp_solver.hpp"
#include "certed/proxies.hpp"

namespace certed {

struct CertifiedSolution {
  PrimalPoint primal;
  DualPoint dual;
  double gap = 0.0;       // absolute duality gap of the returned pair
  double norm_gap = 0.0;  // proper normalized gap (+inf when psi <= 0)
  enum class Source { Proxy, Fallback } source = Source::Proxy;
  double epsilon = 0.0;
  double proxy_time = 0.0;   // inference + repair + certificate, seconds
  double solver_time = 0.0;  // fallback only
};

struct TimingModel {
  int workers = 24;
};

// Algorithm 1: accept the prediction when its certificate is within eps,
// otherwise fall back to the exact lazy solver. A certificate error
// (psi <= 0) forces the fallback. use_absolute_gap thresholds on the raw
// duality gap instead of the normalized one.
CertifiedSolution certify_solve(const EDInstance& inst,
                                const PrimalProxy& primal,
                                const DualProxy& dual, double eps,
                                bool use_absolute_gap = false);

// Cached per-instance evaluation: proxy certificate plus one offline exact
// solve (for the baseline and for fallback accounting at any eps).
struct SampleRecord {
  double gap = 0.0;
  double norm_gap = 0.0;  // +inf when the certificate failed
  double proxy_time = 0.0;
  double solve_time = 0.0;
};

struct BatchRow {
  int instance = 0;
  double gap = 0.0;
  double norm_gap = 0.0;
  CertifiedSolution::Source source = CertifiedSolution::Source::Proxy;
  double proxy_time = 0.0;
  double solver_time = 0.0;
};

struct BatchReport {
  std::vector<BatchRow> rows;
  int fallback_count = 0;
  double proxy_time_total = 0.0;
  double fallback_makespan = 0.0;
  double baseline_time = 0.0;  // makespan of solving everything
  double hybrid_time = 0.0;
  double speedup = 0.0;  // N = baseline / hybrid
  double epsilon = 0.0;
  int workers = 24;
};

double makespan(const std::vector<double>& times, int workers = 24);

std::vector<SampleRecord> evaluate_batch(const std::vector<EDInstance>& batch,
                                         const PrimalProxy& primal,
                                         const DualProxy& dual);

// Assembles the hybrid/baseline accounting from cached records.
BatchReport batch_report_from_records(const std::vector<SampleRecord>& records,
                                      double eps, const TimingModel& timing);

BatchReport batch_solve(const std::vector<EDInstance>& batch,
                        const PrimalProxy& primal, const DualProxy& dual,
                        double eps, const TimingModel& timing = {});

struct CurveRow {
  double eps = 0.0;
  double speedup = 0.0;
  double fallback_fraction = 0.0;
  double max_certified_gap = 0.0;
};

std::vector<CurveRow> speedup_curve(const std::vector<SampleRecord>& records,
                                    const std::vector<double>& eps_grid,
                                    const TimingModel& timing = {});

// Smallest eps on the grid achieving at least the target speedup.
std::optional<double> inverse_speedup(const std::vector<CurveRow>& curve,
                                      double target_speedup);

void write_batch_csv(const BatchReport& report, const std::string& path);
void write_curve_csv(const std::vector<CurveRow>& curve,
                     const std::string& path);
std::vector<SampleRecord> read_records_csv(const std::string& path);
void write_curve_svg(const std::vector<CurveRow>& curve,
                     const std::string& path);

}  // namespace certed
