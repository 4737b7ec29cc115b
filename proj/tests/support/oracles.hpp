#pragma once

// Independent reference implementations used only by tests: a complex-voltage
// power model, a Jacobi eigensolver, the closed-form 2-bus solution, and a
// dense grid search for tiny regression instances.  None of them share code
// with the library paths they check.

#include <complex>
#include <vector>

#include "uaopf/network.hpp"
#include "uaopf/powerflow.hpp"

namespace uaopf::oracle {

/// Per-(bus,phase) complex injections S = diag(V) conj(Y V) computed with
/// complex arithmetic from the branch blocks.
std::vector<std::complex<double>> complex_injections(const NetworkCase& c, const VectorXd& x);

/// Directed branch flow per the voltage-difference formulation:
/// S_ij = V_i^phase * conj(Y_series (V_j - V_i))_phase.
std::complex<double> complex_flow(const NetworkCase& c, const VectorXd& x, int branch,
                                  bool from_side, int phase);

/// Cyclic Jacobi rotations; returns eigenvalues ascending and the
/// corresponding orthonormal columns.
void jacobi_eigen(const MatrixXd& symmetric, VectorXd& values, MatrixXd& vectors);

MatrixXd jacobi_project_psd(const MatrixXd& symmetric);

/// Closed-form solution of a single-phase 2-bus case with fixed slack voltage
/// v1 = 1 + 0j and complex load injection S2 at bus 2 (series admittance-only
/// line).  Returns the high-voltage root.
struct TwoBusSolution {
  bool exists = false;
  double e2 = 0.0, f2 = 0.0;
};
TwoBusSolution solve_two_bus(std::complex<double> y_series, std::complex<double> s2);

/// Dense grid minimization of (1/N) sum (p x^2 + b x + c - y_obj)^2 subject
/// to p >= 0 and p x^2 + b x + c <= y_act pointwise, over 1-D data.
struct GridFit {
  double p = 0.0, b = 0.0, c = 0.0;
  double objective = std::numeric_limits<double>::infinity();
};
GridFit grid_fit_1d(const std::vector<double>& x, const std::vector<double>& y_act,
                    const std::vector<double>& y_obj, double p_max, double span, double step);

/// Central finite differences of a scalar function of the state.
template <typename F>
double central_difference(F&& f, VectorXd x, int i, double h = 1e-6) {
  const double xi = x[i];
  x[i] = xi + h;
  const double up = f(x);
  x[i] = xi - h;
  const double dn = f(x);
  x[i] = xi;
  return (up - dn) / (2.0 * h);
}

}  // namespace uaopf::oracle
