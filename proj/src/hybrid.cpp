#include "certed/hybrid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace certed {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ProxyEval {
  PrimalPoint primal;
  DualPoint dual;
  double gap = 0.0;
  double norm_gap = kInf;  // +inf when psi <= 0
  double seconds = 0.0;
};

ProxyEval run_proxies(const EDInstance& inst, const PrimalProxy& primal,
                      const DualProxy& dual) {
  const auto t0 = Clock::now();
  ProxyEval ev;
  ev.primal = primal_predict(primal, inst);
  ev.dual = dual_predict(dual, inst, nn::Mode::Inference);
  ev.gap = duality_gap(inst, ev.primal, ev.dual);
  try {
    ev.norm_gap = normalized_gap(inst, ev.primal, ev.dual);
  } catch (const CertificateError&) {
    ev.norm_gap = kInf;
  }
  ev.seconds = seconds_since(t0);
  return ev;
}

}  // namespace

CertifiedSolution certify_solve(const EDInstance& inst,
                                const PrimalProxy& primal,
                                const DualProxy& dual, double eps,
                                bool use_absolute_gap) {
  if (eps < 0) throw InvariantError("eps must be >= 0");
  ProxyEval ev = run_proxies(inst, primal, dual);

  CertifiedSolution sol;
  sol.epsilon = eps;
  sol.proxy_time = ev.seconds;
  const double certificate = use_absolute_gap ? ev.gap : ev.norm_gap;
  if (certificate <= eps) {  // ties accepted
    sol.primal = std::move(ev.primal);
    sol.dual = std::move(ev.dual);
    sol.gap = ev.gap;
    sol.norm_gap = ev.norm_gap;
    sol.source = CertifiedSolution::Source::Proxy;
    return sol;
  }
  LPSolveResult exact = solve_ed_lazy(inst);
  sol.primal = std::move(exact.primal);
  sol.dual = std::move(exact.dual);
  sol.gap = duality_gap(inst, sol.primal, sol.dual);
  try {
    sol.norm_gap = normalized_gap(inst, sol.primal, sol.dual);
  } catch (const CertificateError&) {
    sol.norm_gap = kInf;
  }
  sol.source = CertifiedSolution::Source::Fallback;
  sol.solver_time = exact.wall_time;
  return sol;
}

double makespan(const std::vector<double>& times, int workers) {
  if (workers < 1) throw InvariantError("workers must be >= 1");
  if (times.empty()) return 0.0;
  double sum = 0.0;
  double worst = 0.0;
  for (double t : times) {
    sum += t;
    worst = std::max(worst, t);
  }
  return std::max(sum / workers, worst);
}

std::vector<SampleRecord> evaluate_batch(const std::vector<EDInstance>& batch,
                                         const PrimalProxy& primal,
                                         const DualProxy& dual) {
  std::vector<SampleRecord> records;
  records.reserve(batch.size());
  for (const EDInstance& inst : batch) {
    ProxyEval ev = run_proxies(inst, primal, dual);
    LPSolveResult exact = solve_ed_lazy(inst);  // offline, once per instance
    records.push_back(
        {ev.gap, ev.norm_gap, ev.seconds, exact.wall_time});
  }
  return records;
}

BatchReport batch_report_from_records(const std::vector<SampleRecord>& records,
                                      double eps, const TimingModel& timing) {
  BatchReport report;
  report.epsilon = eps;
  report.workers = timing.workers;
  std::vector<double> all_times, fallback_times;
  int id = 0;
  for (const SampleRecord& rec : records) {
    const bool fallback = !(rec.norm_gap <= eps);
    BatchRow row;
    row.instance = id++;
    row.gap = rec.gap;
    row.norm_gap = rec.norm_gap;
    row.source = fallback ? CertifiedSolution::Source::Fallback
                          : CertifiedSolution::Source::Proxy;
    row.proxy_time = rec.proxy_time;
    row.solver_time = rec.solve_time;
    report.rows.push_back(row);
    report.proxy_time_total += rec.proxy_time;
    all_times.push_back(rec.solve_time);
    if (fallback) {
      fallback_times.push_back(rec.solve_time);
      ++report.fallback_count;
    }
  }
  report.fallback_makespan = makespan(fallback_times, timing.workers);
  report.baseline_time = makespan(all_times, timing.workers);
  report.hybrid_time = report.proxy_time_total + report.fallback_makespan;
  report.speedup =
      report.hybrid_time > 0 ? report.baseline_time / report.hybrid_time : 0.0;
  return report;
}

BatchReport batch_solve(const std::vector<EDInstance>& batch,
                        const PrimalProxy& primal, const DualProxy& dual,
                        double eps, const TimingModel& timing) {
  if (batch.empty()) throw InvariantError("empty batch");
  return batch_report_from_records(evaluate_batch(batch, primal, dual), eps,
                                   timing);
}

std::vector<CurveRow> speedup_curve(const std::vector<SampleRecord>& records,
                                    const std::vector<double>& eps_grid,
                                    const TimingModel& timing) {
  std::vector<CurveRow> curve;
  curve.reserve(eps_grid.size());
  for (double eps : eps_grid) {
    BatchReport rep = batch_report_from_records(records, eps, timing);
    CurveRow row;
    row.eps = eps;
    row.speedup = rep.speedup;
    row.fallback_fraction =
        records.empty() ? 0.0
                        : static_cast<double>(rep.fallback_count) /
                              static_cast<double>(records.size());
    row.max_certified_gap = 0.0;
    for (const BatchRow& r : rep.rows)
      if (r.source == CertifiedSolution::Source::Proxy)
        row.max_certified_gap = std::max(row.max_certified_gap, r.norm_gap);
    curve.push_back(row);
  }
  return curve;
}

std::optional<double> inverse_speedup(const std::vector<CurveRow>& curve,
                                      double target_speedup) {
  std::optional<double> best;
  for (const CurveRow& row : curve)
    if (row.speedup >= target_speedup && (!best || row.eps < *best))
      best = row.eps;
  return best;
}

void write_batch_csv(const BatchReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "instance,gap,norm_gap,source,proxy_time,solver_time\n";
  out.precision(17);
  for (const BatchRow& row : report.rows)
    out << row.instance << "," << row.gap << "," << row.norm_gap << ","
        << (row.source == CertifiedSolution::Source::Proxy ? "proxy"
                                                           : "fallback")
        << "," << row.proxy_time << "," << row.solver_time << "\n";
}

void write_curve_csv(const std::vector<CurveRow>& curve,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "eps,speedup,fallback_fraction,max_certified_gap\n";
  out.precision(17);
  for (const CurveRow& row : curve)
    out << row.eps << "," << row.speedup << "," << row.fallback_fraction
        << "," << row.max_certified_gap << "\n";
}

std::vector<SampleRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty results file '" + path + "'");
  std::vector<SampleRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw ParseError("bad results row: '" + line + "'");
    SampleRecord rec;
    rec.gap = std::stod(fields[1]);
    rec.norm_gap = fields[2] == "inf" ? kInf : std::stod(fields[2]);
    rec.proxy_time = std::stod(fields[4]);
    rec.solve_time = std::stod(fields[5]);
    records.push_back(rec);
  }
  return records;
}

void write_curve_svg(const std::vector<CurveRow>& curve,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  const double width = 640, height = 420;
  const double ml = 70, mr = 20, mt = 25, mb = 55;
  double max_eps = 1e-12, max_n = 1e-12;
  for (const CurveRow& r : curve) {
    max_eps = std::max(max_eps, r.eps);
    max_n = std::max(max_n, r.speedup);
  }
  auto px = [&](double eps) {
    return ml + (width - ml - mr) * (eps / max_eps);
  };
  auto py = [&](double n) {
    return height - mb - (height - mt - mb) * (n / max_n);
  };
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<line x1='" << ml << "' y1='" << height - mb << "' x2='"
      << width - mr << "' y2='" << height - mb
      << "' stroke='black'/>\n"
      << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
      << height - mb << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double eps = max_eps * i / 4.0;
    const double n = max_n * i / 4.0;
    out << "<text x='" << px(eps) << "' y='" << height - mb + 18
        << "' font-size='11' text-anchor='middle'>" << eps << "</text>\n"
        << "<text x='" << ml - 8 << "' y='" << py(n) + 4
        << "' font-size='11' text-anchor='end'>" << n << "</text>\n";
  }
  out << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 15
      << "' font-size='13' text-anchor='middle'>optimality threshold "
         "&#949;</text>\n"
      << "<text x='18' y='" << (mt + height - mb) / 2
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 18 "
      << (mt + height - mb) / 2 << ")'>speedup N</text>\n";
  out << "<polyline fill='none' stroke='#1f77b4' stroke-width='2' points='";
  for (const CurveRow& r : curve) out << px(r.eps) << "," << py(r.speedup) << " ";
  out << "'/>\n";
  for (const CurveRow& r : curve)
    out << "<circle cx='" << px(r.eps) << "' cy='" << py(r.speedup)
        << "' r='2.5' fill='#1f77b4'/>\n";
  out << "</svg>\n";
}

}  // namespace certed
