#pragma once

#include <string>
#include <vector>

#include "uaopf/uao.hpp"

namespace uaopf {

// ---------------------------------------------------------------------------
// Three-scenario study: perfect-forecast ACOPF (reference), naive-forecast
// ACOPF, and the uncertainty-aware OPF, compared over held-out test cases by
// the mean relative cost errors E1 and E2.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string case_path;
  int training_profiles = 500;   // desk scale; the full study uses 5000
  int test_cases = 20;           // desk scale; the full study uses 50
  double eps_max = 0.30;
  double range_lo = 0.9, range_hi = 1.1;
  std::uint64_t train_seed = 20240501;
  std::uint64_t test_seed = 910111213;  // disjoint stream from training
  int threads = 1;
  RegressionConfig regression;
  GenerationConfig generation;
  BarrierOptions barrier;
  AcopfOptions acopf;

  void validate() const {
    if (training_profiles < 1 || test_cases < 1) {
      throw ValidationError("profile and test-case counts must be >= 1");
    }
    if (eps_max < 0.0) throw ValidationError("eps_max must be nonnegative");
  }
};

struct ScenarioResult {
  int index = 0;
  double c1 = 0.0, c2 = 0.0, c3 = 0.0;
  SolveStatus s1 = SolveStatus::Failed, s2 = SolveStatus::Failed, s3 = SolveStatus::Failed;

  bool included() const {
    return s1 == SolveStatus::Optimal && s2 == SolveStatus::Optimal &&
           s3 == SolveStatus::Optimal && c1 > 0.0 && std::isfinite(c1) && std::isfinite(c2) &&
           std::isfinite(c3);
  }
};

struct Report {
  double e1 = 0.0, e2 = 0.0;  // fractions, not percent
  std::vector<ScenarioResult> cases;
  int included = 0, excluded = 0;
  std::string case_hash_hex, dataset_hash_hex, surrogate_hash_hex;
  // Deterministic effort counters stand in for wall-clock timing so reports
  // are byte-stable across runs.
  long long pf_points = 0, pf_dropped = 0;
  long long regression_iterations = 0;
  long long opf_iterations = 0;
  std::string config_echo;  // JSON text of the configuration
};

/// E1 = mean |C1 - C2| / C1 and E2 = mean |C1 - C3| / C1 over the results.
/// Throws on an empty list or a nonpositive reference cost.
std::pair<double, double> compute_error_metrics(const std::vector<ScenarioResult>& results);

Report run_experiment(const ExperimentConfig& cfg);

std::string report_to_json(const Report& r);
std::string report_to_csv(const Report& r);

enum class ReportFormat { Json, Csv };
void emit_report(const Report& r, ReportFormat format, const std::string& path);

}  // namespace uaopf
