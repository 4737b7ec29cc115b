#include "uaopf/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include <Eigen/LU>

namespace uaopf {

namespace {

using Cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;

// Bus admittance blocks: diagonal gets series + shunt of every incident
// branch, off-diagonal the negated series block.
std::vector<std::vector<CMat>> bus_admittance(const NetworkCase& c) {
  const int n = c.n_bus(), np = c.phase_count;
  std::vector<std::vector<CMat>> Y(n, std::vector<CMat>(n, CMat::Zero(np, np)));
  for (const auto& br : c.branches) {
    const int i = c.bus_index(br.from), j = c.bus_index(br.to);
    CMat ys(np, np), ysh(np, np);
    for (int r = 0; r < np; ++r)
      for (int s = 0; s < np; ++s) {
        ys(r, s) = Cplx(br.g(r, s), br.b(r, s));
        ysh(r, s) = Cplx(br.g_shunt(r, s), br.b_shunt(r, s));
      }
    Y[i][i] += ys + ysh;
    Y[j][j] += ys.transpose() + ysh.transpose();
    Y[i][j] -= ys;
    Y[j][i] -= ys.transpose();
  }
  return Y;
}

struct FormBuilder {
  struct Entry {
    int row, col;
    double value;
  };
  std::map<int, int> index_of;  // global var -> support slot
  std::vector<int> support;
  std::vector<Entry> entries;

  int slot(int var) {
    auto it = index_of.find(var);
    if (it != index_of.end()) return it->second;
    int s = static_cast<int>(support.size());
    index_of.emplace(var, s);
    support.push_back(var);
    return s;
  }
  void add(int row_var, int col_var, double v) {
    if (v == 0.0) return;
    entries.push_back({slot(row_var), slot(col_var), v});
  }

  // Symmetrize: A = (M + M^T)/2 so x^T A x = x^T M x exactly.
  QuadraticForm finish(FormKind kind, int bus, int branch, bool from_side, int phase) {
    // Re-map into ascending variable order for stable serialization.
    std::vector<int> order(support.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return support[a] < support[b]; });
    std::vector<int> rank(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) rank[order[k]] = static_cast<int>(k);

    const int m = static_cast<int>(support.size());
    MatrixXd M = MatrixXd::Zero(m, m);
    for (const auto& t : entries) M(rank[t.row], rank[t.col]) += t.value;

    QuadraticForm f;
    f.kind = kind;
    f.bus = bus;
    f.branch = branch;
    f.from_side = from_side;
    f.phase = phase;
    f.support.resize(m);
    for (int k = 0; k < m; ++k) f.support[rank[k]] = support[k];
    std::sort(f.support.begin(), f.support.end());
    f.A = 0.5 * (M + M.transpose());
    return f;
  }
};

QuadraticForm injection_form(const NetworkCase& c, const std::vector<std::vector<CMat>>& Y,
                             int bus, int phase, bool reactive) {
  FormBuilder fb;
  const int np = c.phase_count;
  std::vector<int> scope = c.neighbors(bus);
  scope.insert(scope.begin(), bus);
  const int ei = c.var_e(bus, phase), fi = c.var_f(bus, phase);
  fb.slot(ei);
  fb.slot(fi);
  for (int j : scope) {
    for (int pp = 0; pp < np; ++pp) {
      const double G = Y[bus][j](phase, pp).real();
      const double B = Y[bus][j](phase, pp).imag();
      const int ej = c.var_e(j, pp), fj = c.var_f(j, pp);
      if (!reactive) {
        fb.add(ei, ej, G);
        fb.add(ei, fj, -B);
        fb.add(fi, ej, B);
        fb.add(fi, fj, G);
      } else {
        fb.add(fi, ej, G);
        fb.add(fi, fj, -B);
        fb.add(ei, ej, -B);
        fb.add(ei, fj, -G);
      }
    }
  }
  return fb.finish(reactive ? FormKind::ReactiveInjection : FormKind::ActiveInjection, bus, -1,
                   true, phase);
}

QuadraticForm flow_form(const NetworkCase& c, int branch, bool from_side, int phase,
                        bool reactive) {
  const auto& br = c.branches[branch];
  const int np = c.phase_count;
  int i = c.bus_index(br.from), j = c.bus_index(br.to);
  MatrixXd G = br.g, B = br.b;
  if (!from_side) {
    std::swap(i, j);
    G.transposeInPlace();
    B.transposeInPlace();
  }
  FormBuilder fb;
  const int ei = c.var_e(i, phase), fi = c.var_f(i, phase);
  fb.slot(ei);
  fb.slot(fi);
  for (int pp = 0; pp < np; ++pp) {
    const int eip = c.var_e(i, pp), fip = c.var_f(i, pp);
    const int ejp = c.var_e(j, pp), fjp = c.var_f(j, pp);
    const double g = G(phase, pp), b = B(phase, pp);
    if (!reactive) {
      fb.add(ei, ejp, g);
      fb.add(ei, eip, -g);
      fb.add(ei, fjp, -b);
      fb.add(ei, fip, b);
      fb.add(fi, ejp, b);
      fb.add(fi, eip, -b);
      fb.add(fi, fjp, g);
      fb.add(fi, fip, -g);
    } else {
      fb.add(fi, ejp, g);
      fb.add(fi, eip, -g);
      fb.add(fi, fjp, -b);
      fb.add(fi, fip, b);
      fb.add(ei, ejp, -b);
      fb.add(ei, eip, b);
      fb.add(ei, fjp, -g);
      fb.add(ei, fip, g);
    }
  }
  return fb.finish(reactive ? FormKind::ReactiveFlow : FormKind::ActiveFlow,
                   c.bus_index(br.from), branch, from_side, phase);
}

QuadraticForm magnitude_form(const NetworkCase& c, int bus, int phase) {
  QuadraticForm f;
  f.kind = FormKind::VoltageMagnitude;
  f.bus = bus;
  f.phase = phase;
  f.support = {c.var_e(bus, phase), c.var_f(bus, phase)};
  f.A = MatrixXd::Identity(2, 2);
  return f;
}

}  // namespace

FormCatalog assemble_quadratic_forms(const NetworkCase& c) {
  FormCatalog cat;
  cat.n_bus = c.n_bus();
  cat.n_branch = c.n_branch();
  cat.phases = c.phase_count;
  cat.forms.resize(cat.total());

  const auto Y = bus_admittance(c);
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < c.phase_count; ++p) {
      cat.forms[cat.injection_eq(b, p, false)] = injection_form(c, Y, b, p, false);
      cat.forms[cat.injection_eq(b, p, true)] = injection_form(c, Y, b, p, true);
      cat.forms[cat.magnitude_eq(b, p)] = magnitude_form(c, b, p);
    }
  }
  for (int k = 0; k < c.n_branch(); ++k) {
    for (int d = 0; d < 2; ++d) {
      for (int p = 0; p < c.phase_count; ++p) {
        cat.forms[cat.flow_eq(k, d == 0, p, false)] = flow_form(c, k, d == 0, p, false);
        cat.forms[cat.flow_eq(k, d == 0, p, true)] = flow_form(c, k, d == 0, p, true);
      }
    }
  }
  return cat;
}

double evaluate_form(const QuadraticForm& form, const VectorXd& x) {
  const int m = static_cast<int>(form.support.size());
  VectorXd xs(m);
  for (int k = 0; k < m; ++k) {
    if (form.support[k] >= x.size()) throw ValidationError("state vector too short for form");
    xs[k] = x[form.support[k]];
  }
  return xs.dot(form.A * xs);
}

VectorXd form_gradient(const QuadraticForm& form, const VectorXd& x) {
  const int m = static_cast<int>(form.support.size());
  VectorXd xs(m);
  for (int k = 0; k < m; ++k) xs[k] = x[form.support[k]];
  VectorXd gs = 2.0 * (form.A * xs);
  VectorXd g = VectorXd::Zero(x.size());
  for (int k = 0; k < m; ++k) g[form.support[k]] = gs[k];
  return g;
}

VectorXd flat_start(const NetworkCase& c) {
  VectorXd x(c.state_dim());
  const double third = 2.0 * std::numbers::pi / 3.0;
  const int ref = c.reference_bus();
  for (int b = 0; b < c.n_bus(); ++b) {
    const double mag = b == ref ? std::sqrt(c.buses[b].v_max) : 1.0;
    for (int p = 0; p < c.phase_count; ++p) {
      const double ang = p == 0 ? 0.0 : (p == 1 ? -third : third);
      x[c.var_e(b, p)] = mag * std::cos(ang);
      x[c.var_f(b, p)] = mag * std::sin(ang);
    }
  }
  return x;
}

void pin_reference(const NetworkCase& c, VectorXd& x) {
  const int ref = c.reference_bus();
  const double mag = std::sqrt(c.buses[ref].v_max);
  const double third = 2.0 * std::numbers::pi / 3.0;
  for (int p = 0; p < c.phase_count; ++p) {
    const double ang = p == 0 ? 0.0 : (p == 1 ? -third : third);
    x[c.var_e(ref, p)] = mag * std::cos(ang);
    x[c.var_f(ref, p)] = mag * std::sin(ang);
  }
}

PowerFlowResult solve_power_flow(const NetworkCase& c, const FormCatalog& cat,
                                 const InjectionVector& inj, const VectorXd& x0,
                                 const PowerFlowOptions& opt) {
  PowerFlowResult res;
  if (x0.size() != c.state_dim()) {
    res.message = "starting state has wrong dimension";
    return res;
  }
  if (!x0.allFinite()) {
    res.message = "starting state not finite";
    return res;
  }
  const int ref = c.reference_bus();
  const int np = c.phase_count;

  // Solved equations: injections at non-reference (bus, phase).
  std::vector<int> eqs;
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      eqs.push_back(cat.injection_eq(b, p, false));
      eqs.push_back(cat.injection_eq(b, p, true));
    }
  }
  // Free variables: everything but the reference-bus phasors.
  std::vector<int> free_vars;
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      free_vars.push_back(c.var_e(b, p));
      free_vars.push_back(c.var_f(b, p));
    }
  }
  const int m = static_cast<int>(eqs.size());

  VectorXd x = x0;
  pin_reference(c, x);

  auto residual = [&](const VectorXd& xc) {
    VectorXd r(m);
    for (int k = 0; k < m; ++k) r[k] = evaluate_form(cat.forms[eqs[k]], xc) - inj.y[eqs[k]];
    return r;
  };

  VectorXd r = residual(x);
  double rnorm = r.lpNorm<Eigen::Infinity>();

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (rnorm <= opt.tolerance) {
      res.converged = true;
      break;
    }
    MatrixXd J(m, static_cast<int>(free_vars.size()));
    for (int k = 0; k < m; ++k) {
      VectorXd g = form_gradient(cat.forms[eqs[k]], x);
      for (std::size_t v = 0; v < free_vars.size(); ++v) J(k, static_cast<int>(v)) = g[free_vars[v]];
    }
    Eigen::FullPivLU<MatrixXd> lu(J);
    if (lu.rank() < m) {
      res.message = "singular Jacobian at iteration " + std::to_string(it);
      break;
    }
    VectorXd step = lu.solve(-r);

    // Damped update: halve the step while the residual norm fails to drop.
    double scale = 1.0;
    VectorXd x_new;
    VectorXd r_new;
    double rnorm_new = rnorm;
    for (int h = 0; h <= opt.max_step_halvings; ++h) {
      x_new = x;
      for (std::size_t v = 0; v < free_vars.size(); ++v) {
        x_new[free_vars[v]] += scale * step[static_cast<int>(v)];
      }
      r_new = residual(x_new);
      rnorm_new = r_new.lpNorm<Eigen::Infinity>();
      if (std::isfinite(rnorm_new) && rnorm_new < rnorm) break;
      scale *= 0.5;
    }
    x = x_new;
    r = r_new;
    rnorm = rnorm_new;
    res.iterations = it + 1;
    if (!std::isfinite(rnorm)) {
      res.message = "diverged (non-finite residual)";
      break;
    }
  }
  if (!res.converged && rnorm <= opt.tolerance) res.converged = true;
  res.x = x;
  res.max_residual = rnorm;
  if (!res.converged && res.message.empty()) {
    res.message = "no convergence after " + std::to_string(res.iterations) + " iterations";
  }
  return res;
}

PsiReport check_membership_psi(const NetworkCase& c, const FormCatalog& cat,
                               const OperationalLimits& lim, const VectorXd& x,
                               const VectorXd& y, double residual_tol) {
  PsiReport rep;
  const int ref = c.reference_bus();
  const int np = c.phase_count;

  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      for (bool reactive : {false, true}) {
        const int eq = cat.injection_eq(b, p, reactive);
        const double r = std::abs(evaluate_form(cat.forms[eq], x) - y[eq]);
        rep.max_equation_residual = std::max(rep.max_equation_residual, r);
      }
    }
  }

  auto flag = [&](const std::string& what, double amount) {
    if (amount > 1e-9) rep.limit_violations.push_back({what, amount});
  };

  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      const int k = b * np + p;
      const double yp = y[cat.injection_eq(b, p, false)];
      const double yq = y[cat.injection_eq(b, p, true)];
      flag("p_min bus " + std::to_string(c.buses[b].id), lim.p_lo[k] - yp);
      flag("p_max bus " + std::to_string(c.buses[b].id), yp - lim.p_hi[k]);
      flag("q_min bus " + std::to_string(c.buses[b].id), lim.q_lo[k] - yq);
      flag("q_max bus " + std::to_string(c.buses[b].id), yq - lim.q_hi[k]);
    }
    for (int p = 0; p < np; ++p) {
      const double vp = evaluate_form(cat.forms[cat.magnitude_eq(b, p)], x);
      flag("v_min bus " + std::to_string(c.buses[b].id), lim.v_lo[b] - vp);
      flag("v_max bus " + std::to_string(c.buses[b].id), vp - lim.v_hi[b]);
    }
  }

  for (int k = 0; k < c.n_branch(); ++k) {
    for (int d = 0; d < 2; ++d) {
      for (int p = 0; p < np; ++p) {
        const double smax = lim.flow_s_max[(2 * k + d) * np + p];
        if (smax <= 0.0) continue;
        const double pf = evaluate_form(cat.forms[cat.flow_eq(k, d == 0, p, false)], x);
        const double qf = evaluate_form(cat.forms[cat.flow_eq(k, d == 0, p, true)], x);
        flag("s_max branch " + std::to_string(k) + (d == 0 ? " fwd" : " rev"),
             pf * pf + qf * qf - smax * smax);
      }
    }
  }

  rep.in_psi = rep.max_equation_residual <= residual_tol && rep.limit_violations.empty();
  return rep;
}

}  // namespace uaopf
