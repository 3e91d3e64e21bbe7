#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestopt/search.hpp"

namespace nestopt {

/// One (benchmark, method) tuning outcome; the unit the results directory
/// stores as JSON.
struct MethodResult {
  std::string benchmark;
  std::string method;
  std::string backend;
  double best_gflops = 0.0;
  double initial_gflops = 0.0;  // the untiled schedule under the same backend
  double wall_time_s = 0.0;
  std::int64_t evals = 0;
  std::int64_t cache_hits = 0;
  std::int64_t nodes_expanded = 0;
  std::vector<Action> best_actions;
  std::vector<TracePoint> per_step_trace;
};

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Performance profiles (fraction of benchmarks within a factor tau of the
/// per-benchmark best method) and speedup-vs-baseline distributions.
struct RunReport {
  std::vector<std::string> methods;
  std::vector<std::string> benchmarks;
  std::string baseline;
  std::vector<double> taus;
  std::map<std::string, std::vector<double>> profile;  // method -> fraction at taus[i]
  std::map<std::string, std::map<std::string, double>> speedup;  // method -> benchmark -> x
};

/// The "original" baseline is the untiled schedule; when requested it is
/// synthesized from the recorded initial_gflops of the tuning runs.
inline RunReport build_report(std::vector<MethodResult> results, const std::string& baseline) {
  if (baseline == "original") {
    bool present = false;
    for (const auto& r : results) present = present || r.method == "original";
    if (!present) {
      std::map<std::string, MethodResult> synth;
      for (const auto& r : results) {
        MethodResult o;
        o.benchmark = r.benchmark;
        o.method = "original";
        o.backend = r.backend;
        o.best_gflops = r.initial_gflops;
        o.initial_gflops = r.initial_gflops;
        synth[r.benchmark] = o;
      }
      for (auto& [bench, o] : synth) results.push_back(o);
    }
  }

  std::map<std::string, std::map<std::string, double>> table;  // bench -> method -> gflops
  std::set<std::string> method_set;
  for (const auto& r : results) {
    table[r.benchmark][r.method] = r.best_gflops;
    method_set.insert(r.method);
  }
  if (method_set.size() < 2) throw ReportError("need results from at least two methods");
  for (const auto& [bench, per_method] : table) {
    for (const auto& m : method_set) {
      if (!per_method.count(m)) {
        throw ReportError("benchmark '" + bench + "' has no result for method '" + m + "'");
      }
    }
  }

  RunReport report;
  report.baseline = baseline;
  report.methods.assign(method_set.begin(), method_set.end());
  for (const auto& [bench, per_method] : table) report.benchmarks.push_back(bench);

  // ratio r(b, m) = best gflops on b / m's gflops on b  (>= 1)
  std::map<std::string, std::map<std::string, double>> ratios;
  std::set<double> tau_set{1.0};
  for (const auto& [bench, per_method] : table) {
    double best = 0.0;
    for (const auto& [m, g] : per_method) best = std::max(best, g);
    if (best <= 0.0) throw ReportError("benchmark '" + bench + "' has no positive result");
    for (const auto& [m, g] : per_method) {
      if (g <= 0.0) throw ReportError("non-positive gflops for '" + m + "' on '" + bench + "'");
      const double r = best / g;
      ratios[bench][m] = r;
      tau_set.insert(r);
    }
  }
  report.taus.assign(tau_set.begin(), tau_set.end());

  const double n = static_cast<double>(report.benchmarks.size());
  for (const auto& m : report.methods) {
    std::vector<double> fractions;
    fractions.reserve(report.taus.size());
    for (double tau : report.taus) {
      int within = 0;
      for (const auto& bench : report.benchmarks) {
        if (ratios[bench][m] <= tau) ++within;
      }
      fractions.push_back(static_cast<double>(within) / n);
    }
    report.profile[m] = std::move(fractions);
  }

  if (!method_set.count(baseline)) {
    throw ReportError("baseline method '" + baseline + "' has no results");
  }
  for (const auto& m : report.methods) {
    for (const auto& bench : report.benchmarks) {
      report.speedup[m][bench] = table[bench][m] / table[bench][baseline];
    }
  }
  return report;
}

inline void write_profile_csv(std::ostream& os, const RunReport& report) {
  os << "tau";
  for (const auto& m : report.methods) os << ',' << m;
  os << '\n';
  for (std::size_t i = 0; i < report.taus.size(); ++i) {
    os << report.taus[i];
    for (const auto& m : report.methods) os << ',' << report.profile.at(m)[i];
    os << '\n';
  }
}

inline void write_speedup_csv(std::ostream& os, const RunReport& report) {
  os << "benchmark,method,speedup_vs_" << report.baseline << '\n';
  for (const auto& bench : report.benchmarks) {
    for (const auto& m : report.methods) {
      os << bench << ',' << m << ',' << report.speedup.at(m).at(bench) << '\n';
    }
  }
}

}  // namespace nestopt
