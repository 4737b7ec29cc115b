#pragma once

#include <map>
#include <string>
#include <vector>

#include "uaopf/regression.hpp"

namespace uaopf {

// ---------------------------------------------------------------------------
// The learned convex feasible set and the two optimal power flow solvers.
//
// Theta couples the trained surrogates (one per injection and directed flow
// equation) with the native convex magnitude constraints and the operational
// limit boxes.  The uncertainty-aware OPF minimizes generation cost over
// Theta driven by forecasts; the nonconvex ACOPF solves the exact equations
// and serves as the scenario reference.
// ---------------------------------------------------------------------------

struct ThetaSet {
  NetworkCase network;
  FormCatalog catalog;
  SurrogateBundle surrogates;
  OperationalLimits limits;
};

ThetaSet build_theta(const NetworkCase& c, const FormCatalog& cat, const SurrogateBundle& bundle,
                     const OperationalLimits& limits);

/// One operating scenario: fixed deterministic injections (negated scaled
/// demands, no dispatch) plus stochastic injections, both over the full
/// injection-equation block.
struct ScenarioInput {
  VectorXd z_fixed;
  VectorXd u;  // actual or forecast values, depending on the scenario
};

enum class SolveStatus { Optimal, Infeasible, MaxIterations, Failed };

std::string to_string(SolveStatus s);

struct DispatchEntry {
  int bus = -1, phase = 0;
  double p = 0.0, q = 0.0;
};

struct ConstraintSlack {
  std::string name;
  double slack = 0.0;  // >= 0 means satisfied
};

struct OpfSolution {
  SolveStatus status = SolveStatus::Failed;
  double objective = 0.0;
  VectorXd x;
  std::vector<DispatchEntry> dispatch;
  double kkt_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::string message;
  std::vector<ConstraintSlack> binding;  // most negative / tightest slacks
  // Buses whose true squared magnitude ended below v_min: the one-sided
  // relaxation cannot enforce the lower voltage bound on the actual state.
  std::vector<std::string> v_lower_diagnostic;
};

struct BarrierOptions {
  double initial_mu = 1.0;
  double mu_factor = 0.1;
  double gap_tolerance = 1e-8;       // relative duality-gap target
  double inner_tolerance = 1e-10;    // Newton decrement threshold
  int max_outer = 60;
  int max_inner = 80;
  double line_search_alpha = 0.1;
  double line_search_beta = 0.5;
};

/// Project forecast stochastic injections onto their configured intervals.
/// Theta lives inside Omega, so the framework plans at the nearest
/// in-envelope value when a forecast strays outside the band the surrogates
/// were trained over.  The naive ACOPF has no such envelope.
VectorXd clamp_forecast_to_envelope(const NetworkCase& c, const FormCatalog& cat,
                                    const VectorXd& u);

OpfSolution solve_uao_opf(const ThetaSet& theta, const ScenarioInput& forecast,
                          const BarrierOptions& opt = {});

struct AcopfOptions {
  int max_outer = 60;
  int max_inner = 120;
  double equality_tolerance = 1e-8;
  double kkt_tolerance = 1e-6;
  int starts = 5;  // flat plus perturbed starts
  std::uint64_t seed = 7;
};

OpfSolution solve_acopf(const NetworkCase& c, const FormCatalog& cat,
                        const ScenarioInput& actual, const AcopfOptions& opt = {});

// ---------------------------------------------------------------------------
// Uncertainty-aware model prediction: solve h(x) = z + u_tilde over the
// non-reference injection equations by damped Newton.
// ---------------------------------------------------------------------------

struct PredictResult {
  VectorXd x;
  bool converged = false;
  int iterations = 0;
  double max_residual = std::numeric_limits<double>::infinity();
  std::string message;
};

PredictResult predict_response(const NetworkCase& c, const FormCatalog& cat,
                               const SurrogateBundle& bundle, const VectorXd& y_tilde,
                               const VectorXd& x0, const PowerFlowOptions& opt = {});

// ---------------------------------------------------------------------------
// Theta membership for lifted points.
// ---------------------------------------------------------------------------

struct ThetaReport {
  std::vector<ConstraintSlack> slacks;
  double min_slack = std::numeric_limits<double>::infinity();
  bool in_theta = false;
};

/// A point of the lifted constraint space: state, injection values, and the
/// flow/magnitude auxiliaries.  Theta is convex in this tuple.
struct ThetaPoint {
  VectorXd x;
  VectorXd y;         // injection-equation block
  VectorXd flow;      // flow-equation block (auxiliary values)
  VectorXd v;         // per (bus, phase) squared-magnitude auxiliaries
};

/// Lift a power-flow solution: auxiliaries take their physical values.
ThetaPoint lift_theta_point(const ThetaSet& theta, const VectorXd& x, const VectorXd& y);

ThetaReport check_theta_membership(const ThetaSet& theta, const ThetaPoint& pt,
                                   double tolerance = 1e-6);

/// Convenience overload lifting the auxiliaries from the state.
ThetaReport check_theta_membership(const ThetaSet& theta, const VectorXd& x, const VectorXd& y,
                                   double tolerance = 1e-6);

}  // namespace uaopf
