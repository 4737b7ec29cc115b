#pragma once

#include <map>
#include <string>
#include <vector>

#include "uaopf/datagen.hpp"

namespace uaopf {

// ---------------------------------------------------------------------------
// Learned convex quadratic surrogates.
//
// For each power-flow equation we fit h(x) = x^T P x + B^T x + c with P
// positive semidefinite such that h(x) <= y on every training point and the
// squared residual against the regression target is minimal.  In the
// deterministic mode the target is the actual injection y; in the
// uncertainty-aware mode the target is the forecast-based value z + u_tilde
// while the inequality stays pinned to the actual z + u.  Eliminating the
// epigraph variables t >= m^2 (a Schur complement of the 2x2 blocks) leaves a
// PSD-constrained least-squares problem, solved here by two-block ADMM with
// closed-form subproblems.
// ---------------------------------------------------------------------------

struct Surrogate {
  int equation = -1;
  std::vector<int> support;
  MatrixXd P;
  VectorXd B;
  double c = 0.0;

  double objective = 0.0;               // (1/N) sum m^2 at the solution
  int iterations = 0;
  double max_training_violation = 0.0;  // max_k h(x_k) - y_actual_k
  bool converged = false;
  bool rank_deficient = false;

  double evaluate(const VectorXd& x_full) const;
  /// Gradient of h restricted to the support: 2 P x_s + B.
  VectorXd gradient_on_support(const VectorXd& x_full) const;
};

enum class RegressionMode { Deterministic, UncertaintyAware };

struct RegressionConfig {
  double rho = 1.0;
  double eps_abs = 1e-8;
  double eps_rel = 1e-6;
  int max_iterations = 20000;
  double rho_adapt_ratio = 10.0;
  double rho_adapt_factor = 2.0;
  bool full_support = false;  // train over the whole state instead of the
                              // equation's natural variable support
};

/// Training rows for one equation: states restricted to the support plus the
/// actual and objective-target values.
struct EquationSamples {
  int equation = -1;
  std::vector<int> support;
  MatrixXd X;           // N x |support|
  VectorXd y_actual;    // inequality side
  VectorXd y_objective; // least-squares side
};

/// The equations that receive surrogates: all injections (reference bus
/// included) and all directed flows.  Magnitude equations are already convex
/// and are used natively.
std::vector<int> trained_equations(const FormCatalog& cat);

EquationSamples extract_samples(const FormCatalog& cat, const UncertaintyDataSet& ds,
                                int equation, RegressionMode mode, bool full_support);

/// Core PSD-constrained least-squares fit.  Deterministic given identical
/// inputs and configuration.
Surrogate fit_equation(const EquationSamples& samples, const RegressionConfig& cfg);

Surrogate fit_surrogate(const FormCatalog& cat, const DataSet& ds, int equation,
                        const RegressionConfig& cfg = {});

Surrogate fit_surrogate_uncertainty(const FormCatalog& cat, const UncertaintyDataSet& ds,
                                    int equation, const RegressionConfig& cfg = {});

/// Frobenius-nearest positive semidefinite matrix (eigenvalue clamping).
MatrixXd project_psd(const MatrixXd& symmetric);

struct SurrogateBundle {
  std::uint64_t case_hash = 0;
  std::uint64_t dataset_hash = 0;
  RegressionMode mode = RegressionMode::Deterministic;
  bool full_support = false;
  std::map<int, Surrogate> by_equation;
};

SurrogateBundle fit_all_surrogates(const FormCatalog& cat, const UncertaintyDataSet& ds,
                                   RegressionMode mode, const RegressionConfig& cfg = {},
                                   int threads = 1);

std::string serialize_bundle(const SurrogateBundle& b);
SurrogateBundle parse_bundle(const std::string& text);
void save_bundle(const SurrogateBundle& b, const std::string& path);
SurrogateBundle load_bundle(const std::string& path);

// ---------------------------------------------------------------------------
// Relaxation diagnostics.
// ---------------------------------------------------------------------------

struct EquationContainment {
  int equation = -1;
  double max_violation = 0.0;   // max over points of h(x) - y
  double mean_violation = 0.0;  // mean of h(x) - y (negative = slack)
  double contained_fraction = 0.0;
};

struct ContainmentReport {
  std::vector<EquationContainment> per_equation;
  double min_contained_fraction = 1.0;
  /// Fraction of points satisfying every surrogate inequality at once.
  double joint_contained_fraction = 0.0;
};

ContainmentReport validate_relaxation(const SurrogateBundle& b, const FormCatalog& cat,
                                      const DataSet& ds, double tolerance = 1e-6);

}  // namespace uaopf
