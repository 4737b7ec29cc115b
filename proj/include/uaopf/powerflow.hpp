#pragma once

#include <string>
#include <vector>

#include "uaopf/network.hpp"

namespace uaopf {

// ---------------------------------------------------------------------------
// Quadratic-form view of the power-flow equations.
//
// Every equation of the three-phase model (bus injections, directed branch
// flows, squared voltage magnitudes) is x^T A x for a symmetric A supported
// on a small index set of the global state vector
//   x = [e_1^a, f_1^a, e_1^b, ..., e_2^a, ...]   (bus-major, e before f).
// ---------------------------------------------------------------------------

enum class FormKind {
  ActiveInjection,
  ReactiveInjection,
  ActiveFlow,
  ReactiveFlow,
  VoltageMagnitude,
};

struct QuadraticForm {
  FormKind kind = FormKind::ActiveInjection;
  int bus = -1;     // owning bus for injections/magnitudes, from-bus for flows
  int branch = -1;  // owning branch for flows
  bool from_side = true;
  int phase = 0;
  std::vector<int> support;  // ascending global variable indices
  MatrixXd A;                // symmetric, dim = |support|
};

/// All forms of a case plus the equation numbering shared by every module.
/// Equation ids: injections first (bus-major, phase-minor, P then Q), then
/// directed flows (branch-major, from/to, phase, P then Q), then magnitudes.
struct FormCatalog {
  std::vector<QuadraticForm> forms;
  int n_bus = 0, n_branch = 0, phases = 0;

  int injection_count() const { return 2 * n_bus * phases; }
  int flow_count() const { return 4 * n_branch * phases; }
  int magnitude_count() const { return n_bus * phases; }
  int total() const { return injection_count() + flow_count() + magnitude_count(); }

  int injection_eq(int bus, int phase, bool reactive) const {
    return 2 * (bus * phases + phase) + (reactive ? 1 : 0);
  }
  int flow_eq(int branch, bool from_side, int phase, bool reactive) const {
    return injection_count() + 2 * (((2 * branch + (from_side ? 0 : 1)) * phases) + phase) +
           (reactive ? 1 : 0);
  }
  int magnitude_eq(int bus, int phase) const {
    return injection_count() + flow_count() + bus * phases + phase;
  }
};

FormCatalog assemble_quadratic_forms(const NetworkCase& c);

double evaluate_form(const QuadraticForm& form, const VectorXd& x);

/// Gradient 2 A x_s scattered into a full-length vector.
VectorXd form_gradient(const QuadraticForm& form, const VectorXd& x);

// ---------------------------------------------------------------------------
// Injections and the Newton power-flow solve.
// ---------------------------------------------------------------------------

/// y = z + u over the injection equation block (ids 0 .. 2*n_bus*phases-1).
/// Reference-bus rows are carried for bookkeeping; the PF solve ignores them
/// (the slack absorbs the mismatch) and datasets fill them post-solve.
struct InjectionVector {
  VectorXd y, z, u;

  static InjectionVector zero(const FormCatalog& cat) {
    InjectionVector v;
    v.y = VectorXd::Zero(cat.injection_count());
    v.z = v.y;
    v.u = v.y;
    return v;
  }
};

struct PowerFlowOptions {
  double tolerance = 1e-8;   // max |g(x) - y| over solved equations
  int max_iterations = 50;
  int max_step_halvings = 6;
};

struct PowerFlowResult {
  VectorXd x;
  bool converged = false;
  int iterations = 0;
  double max_residual = std::numeric_limits<double>::infinity();
  std::string message;
};

/// Reference-bus voltage convention: magnitude sqrt(v_max), angles 0/-120/+120
/// degrees for phases a/b/c.
VectorXd flat_start(const NetworkCase& c);

/// Fill the reference-bus entries of x with their fixed values.
void pin_reference(const NetworkCase& c, VectorXd& x);

PowerFlowResult solve_power_flow(const NetworkCase& c, const FormCatalog& cat,
                                 const InjectionVector& inj, const VectorXd& x0,
                                 const PowerFlowOptions& opt = {});

// ---------------------------------------------------------------------------
// Feasible-set membership.
// ---------------------------------------------------------------------------

struct PsiViolation {
  std::string what;  // named bound, e.g. "v_max bus 3"
  double amount = 0.0;
};

struct PsiReport {
  double max_equation_residual = 0.0;
  std::vector<PsiViolation> limit_violations;
  bool in_psi = false;
};

/// Residuals |g(x) - y| over non-reference injection equations plus
/// componentwise limit checks on injections, flows and voltages.
PsiReport check_membership_psi(const NetworkCase& c, const FormCatalog& cat,
                               const OperationalLimits& lim, const VectorXd& x,
                               const VectorXd& y, double residual_tol = 1e-6);

}  // namespace uaopf
