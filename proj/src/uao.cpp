#include "uaopf/uao.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace uaopf {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Failed: return "failed";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sparse quadratic function v^T Q v + q.v + r on a support of decision vars.
struct QFunc {
  std::string name;
  std::vector<int> vars;
  MatrixXd Q;  // symmetric, |vars| x |vars|; zero-size means affine
  VectorXd q;
  double r = 0.0;

  double value(const VectorXd& v) const {
    const int n = static_cast<int>(vars.size());
    VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = v[vars[i]];
    double val = r + q.dot(s);
    if (Q.size() > 0) val += s.dot(Q * s);
    return val;
  }
  VectorXd grad_support(const VectorXd& v) const {
    const int n = static_cast<int>(vars.size());
    VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = v[vars[i]];
    VectorXd g = q;
    if (Q.size() > 0) g += 2.0 * (Q * s);
    return g;
  }
  void add_gradient(const VectorXd& v, double w, VectorXd& g) const {
    const VectorXd gs = grad_support(v);
    for (std::size_t i = 0; i < vars.size(); ++i) g[vars[i]] += w * gs[static_cast<int>(i)];
  }
  void add_hessian(double w, MatrixXd& H) const {
    if (Q.size() == 0) return;
    for (std::size_t i = 0; i < vars.size(); ++i)
      for (std::size_t j = 0; j < vars.size(); ++j)
        H(vars[i], vars[j]) += w * 2.0 * Q(static_cast<int>(i), static_cast<int>(j));
  }
  void add_outer(const VectorXd& v, double w, MatrixXd& H) const {
    const VectorXd gs = grad_support(v);
    for (std::size_t i = 0; i < vars.size(); ++i)
      for (std::size_t j = 0; j < vars.size(); ++j)
        H(vars[i], vars[j]) += w * gs[static_cast<int>(i)] * gs[static_cast<int>(j)];
  }
};

// Lift a quadratic on global state indices into decision space, folding
// pinned coordinates (reference-bus phasors) into the affine/constant part.
QFunc lift_quadratic(const MatrixXd& P, const VectorXd& B, double c,
                     const std::vector<int>& support_global,
                     const std::map<int, int>& decision_of, const VectorXd& pinned_value,
                     const std::vector<bool>& pinned) {
  const int n = static_cast<int>(support_global.size());
  std::vector<int> free_slots, pin_slots;
  for (int i = 0; i < n; ++i) {
    if (pinned[support_global[i]]) pin_slots.push_back(i);
    else free_slots.push_back(i);
  }
  QFunc f;
  f.r = c;
  for (int i : pin_slots) {
    const double xi = pinned_value[support_global[i]];
    f.r += B[i] * xi;
    for (int j : pin_slots) f.r += xi * P(i, j) * pinned_value[support_global[j]];
  }
  const int m = static_cast<int>(free_slots.size());
  f.vars.resize(m);
  f.q = VectorXd::Zero(m);
  f.Q = MatrixXd::Zero(m, m);
  for (int a = 0; a < m; ++a) {
    const int i = free_slots[a];
    f.vars[a] = decision_of.at(support_global[i]);
    f.q[a] = B[i];
    for (int j : pin_slots) f.q[a] += 2.0 * P(i, j) * pinned_value[support_global[j]];
    for (int b = 0; b < m; ++b) f.Q(a, b) = P(i, free_slots[b]);
  }
  if (f.Q.lpNorm<Eigen::Infinity>() == 0.0) f.Q.resize(0, 0);
  return f;
}

QFunc lift_form(const QuadraticForm& form, const std::map<int, int>& decision_of,
                const VectorXd& pinned_value, const std::vector<bool>& pinned) {
  const int n = static_cast<int>(form.support.size());
  return lift_quadratic(form.A, VectorXd::Zero(n), 0.0, form.support, decision_of, pinned_value,
                        pinned);
}

// Append "- v[aux]" to a lifted function, turning h(x) into h(x) - aux.
void subtract_aux(QFunc& f, int aux) {
  f.vars.push_back(aux);
  VectorXd q2(f.q.size() + 1);
  q2.head(f.q.size()) = f.q;
  q2[f.q.size()] = -1.0;
  f.q = q2;
  if (f.Q.size() > 0) {
    MatrixXd Q2 = MatrixXd::Zero(f.Q.rows() + 1, f.Q.cols() + 1);
    Q2.topLeftCorner(f.Q.rows(), f.Q.cols()) = f.Q;
    f.Q = Q2;
  }
}

// ---------------------------------------------------------------------------
// Primal barrier method for convex QCQPs with box bounds.
// ---------------------------------------------------------------------------

struct BarrierProblem {
  QFunc objective;
  std::vector<QFunc> cons;  // f_i(v) <= 0, all convex
  VectorXd lb, ub;          // +-inf where absent
};

struct BarrierOutcome {
  VectorXd v;
  double objective = 0.0;
  SolveStatus status = SolveStatus::Failed;
  double kkt_stat = kInf;
  double gap = kInf;
  int iterations = 0;
  std::string message;
};

bool strictly_feasible(const BarrierProblem& pb, const VectorXd& v) {
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] <= pb.lb[i] || v[i] >= pb.ub[i]) return false;
  }
  for (const auto& c : pb.cons) {
    if (c.value(v) >= 0.0) return false;
  }
  return true;
}

double barrier_value(const BarrierProblem& pb, const VectorXd& v, double mu) {
  double val = pb.objective.value(v);
  for (const auto& c : pb.cons) {
    const double f = c.value(v);
    if (f >= 0.0) return kInf;
    val -= mu * std::log(-f);
  }
  for (int i = 0; i < v.size(); ++i) {
    if (std::isfinite(pb.lb[i])) {
      const double d = v[i] - pb.lb[i];
      if (d <= 0.0) return kInf;
      val -= mu * std::log(d);
    }
    if (std::isfinite(pb.ub[i])) {
      const double d = pb.ub[i] - v[i];
      if (d <= 0.0) return kInf;
      val -= mu * std::log(d);
    }
  }
  return val;
}

void barrier_derivatives(const BarrierProblem& pb, const VectorXd& v, double mu, VectorXd& g,
                         MatrixXd& H) {
  const int n = static_cast<int>(v.size());
  g = VectorXd::Zero(n);
  H = MatrixXd::Zero(n, n);
  pb.objective.add_gradient(v, 1.0, g);
  pb.objective.add_hessian(1.0, H);
  for (const auto& c : pb.cons) {
    const double f = c.value(v);
    const double inv = 1.0 / (-f);
    c.add_gradient(v, mu * inv, g);
    c.add_hessian(mu * inv, H);
    c.add_outer(v, mu * inv * inv, H);
  }
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(pb.lb[i])) {
      const double d = v[i] - pb.lb[i];
      g[i] -= mu / d;
      H(i, i) += mu / (d * d);
    }
    if (std::isfinite(pb.ub[i])) {
      const double d = pb.ub[i] - v[i];
      g[i] += mu / d;
      H(i, i) += mu / (d * d);
    }
  }
}

int constraint_multiplicity(const BarrierProblem& pb) {
  int m = static_cast<int>(pb.cons.size());
  for (int i = 0; i < pb.lb.size(); ++i) {
    if (std::isfinite(pb.lb[i])) ++m;
    if (std::isfinite(pb.ub[i])) ++m;
  }
  return m;
}

// Newton centering for a fixed mu.  Returns half the squared Newton
// decrement at exit, which bounds the centering suboptimality under
// self-concordance (the raw gradient norm is meaningless near the boundary).
double center(const BarrierProblem& pb, VectorXd& v, double mu, const BarrierOptions& opt,
              int& iters) {
  VectorXd g;
  MatrixXd H;
  double half_decrement = kInf;
  for (int it = 0; it < opt.max_inner; ++it) {
    barrier_derivatives(pb, v, mu, g, H);

    double ridge = 0.0;
    VectorXd step;
    for (int attempt = 0; attempt < 12; ++attempt) {
      MatrixXd Hr = H;
      if (ridge > 0.0) Hr.diagonal().array() += ridge;
      Eigen::LDLT<MatrixXd> ldlt(Hr);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(-g);
        if (step.allFinite() && g.dot(step) < 0.0) break;
      }
      ridge = ridge == 0.0 ? 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff()) : ridge * 100.0;
      step.resize(0);
    }
    if (step.size() == 0) return half_decrement;

    half_decrement = -0.5 * g.dot(step);
    const double fv = barrier_value(pb, v, mu);
    if (half_decrement <= opt.inner_tolerance * (1.0 + std::abs(fv))) return half_decrement;

    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const VectorXd cand = v + t * step;
      const double fc = barrier_value(pb, cand, mu);
      if (fc <= fv + opt.line_search_alpha * t * g.dot(step)) {
        v = cand;
        moved = true;
        break;
      }
      t *= opt.line_search_beta;
    }
    if (!moved) return half_decrement;  // stalled at numerical precision
    ++iters;
  }
  return half_decrement;
}

BarrierOutcome solve_barrier(const BarrierProblem& pb, const VectorXd& start,
                             const BarrierOptions& opt) {
  BarrierOutcome out;
  VectorXd v = start;
  if (!strictly_feasible(pb, v)) {
    out.message = "barrier start not strictly feasible";
    return out;
  }
  const int m = std::max(1, constraint_multiplicity(pb));
  double mu = opt.initial_mu;
  double centering = kInf;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    centering = center(pb, v, mu, opt, out.iterations);
    const double obj = pb.objective.value(v);
    if (m * mu <= opt.gap_tolerance * (1.0 + std::abs(obj))) break;
    mu *= opt.mu_factor;
  }
  out.v = v;
  out.objective = pb.objective.value(v);
  // Suboptimality certificate: duality gap m*mu plus the centering residual.
  out.gap = m * mu + std::max(0.0, centering);
  out.kkt_stat = out.gap / (1.0 + std::abs(out.objective));
  const bool gap_ok = out.kkt_stat <= 10.0 * opt.gap_tolerance;
  out.status = gap_ok ? SolveStatus::Optimal : SolveStatus::MaxIterations;
  return out;
}

// Phase 1: minimize t subject to f_i(v) <= t to locate a strict interior
// point; boxes must already hold strictly at the seed.
std::optional<VectorXd> find_interior(const BarrierProblem& pb, const VectorXd& seed,
                                      const BarrierOptions& opt, std::string& note) {
  if (strictly_feasible(pb, seed)) return seed;
  const int n = static_cast<int>(seed.size());
  BarrierProblem aux;
  aux.lb = VectorXd::Constant(n + 1, -kInf);
  aux.ub = VectorXd::Constant(n + 1, kInf);
  aux.lb.head(n) = pb.lb;
  aux.ub.head(n) = pb.ub;
  aux.objective.vars = {n};
  aux.objective.q = VectorXd::Ones(1);
  for (const auto& c : pb.cons) {
    QFunc ext = c;
    ext.vars.push_back(n);
    VectorXd q2(ext.q.size() + 1);
    q2.head(ext.q.size()) = ext.q;
    q2[ext.q.size()] = -1.0;
    ext.q = q2;
    if (ext.Q.size() > 0) {
      MatrixXd Q2 = MatrixXd::Zero(ext.Q.rows() + 1, ext.Q.cols() + 1);
      Q2.topLeftCorner(ext.Q.rows(), ext.Q.cols()) = ext.Q;
      ext.Q = Q2;
    }
    aux.cons.push_back(std::move(ext));
  }
  double worst = 0.0;
  for (const auto& c : pb.cons) worst = std::max(worst, c.value(seed));
  VectorXd w(n + 1);
  w.head(n) = seed;
  w[n] = worst + 1.0;

  BarrierOptions popt = opt;
  popt.gap_tolerance = 1e-9;
  const int m = std::max(1, constraint_multiplicity(aux));
  double mu = 1.0;
  int iters = 0;
  for (int outer = 0; outer < popt.max_outer; ++outer) {
    center(aux, w, mu, popt, iters);
    VectorXd cand = w.head(n);
    bool ok = true;
    for (const auto& c : pb.cons) {
      if (c.value(cand) >= -1e-10) {
        ok = false;
        break;
      }
    }
    if (ok && strictly_feasible(pb, cand)) return cand;
    if (m * mu <= popt.gap_tolerance * (1.0 + std::abs(w[n]))) break;
    mu *= popt.mu_factor;
  }
  note = "phase-1 infeasibility level " + format_double(w[n]);
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Theta assembly and the convex OPF.
// ---------------------------------------------------------------------------

ThetaSet build_theta(const NetworkCase& c, const FormCatalog& cat, const SurrogateBundle& bundle,
                     const OperationalLimits& limits) {
  for (int eq : trained_equations(cat)) {
    auto it = bundle.by_equation.find(eq);
    if (it == bundle.by_equation.end()) {
      throw ValidationError("missing surrogate for equation " + std::to_string(eq));
    }
    for (int v : it->second.support) {
      if (v < 0 || v >= c.state_dim()) {
        throw ValidationError("surrogate support outside the case state space");
      }
    }
  }
  return ThetaSet{c, cat, bundle, limits};
}

namespace {

struct GenSlot {
  int bus = -1, phase = 0;
  double p_min = 0, p_max = 0, q_min = 0, q_max = 0, c2 = 0, c1 = 0, c0 = 0;
};

std::vector<GenSlot> gen_slots(const NetworkCase& c) {
  std::map<std::pair<int, int>, GenSlot> slots;
  for (const auto& g : c.generators) {
    const int b = c.bus_index(g.bus);
    for (std::size_t i = 0; i < g.phases.size(); ++i) {
      auto key = std::make_pair(b, g.phases[i]);
      if (slots.count(key)) {
        throw ValidationError("multiple generators on one (bus, phase) are not supported by the "
                              "OPF solvers");
      }
      GenSlot s;
      s.bus = b;
      s.phase = g.phases[i];
      s.p_min = g.p_min[i];
      s.p_max = g.p_max[i];
      s.q_min = g.q_min[i];
      s.q_max = g.q_max[i];
      s.c2 = g.c2;
      s.c1 = g.c1;
      s.c0 = g.c0;
      slots[key] = s;
    }
  }
  std::vector<GenSlot> out;
  for (auto& [k, v] : slots) out.push_back(v);
  return out;
}

}  // namespace

VectorXd clamp_forecast_to_envelope(const NetworkCase& c, const FormCatalog& cat,
                                    const VectorXd& u) {
  VectorXd out = u;
  for (int b = 0; b < c.n_bus(); ++b) {
    const auto& bus = c.buses[b];
    if (!bus.stochastic) continue;
    for (int p = 0; p < c.phase_count; ++p) {
      const int eq_p = cat.injection_eq(b, p, false);
      const int eq_q = cat.injection_eq(b, p, true);
      out[eq_p] = std::clamp(out[eq_p], bus.stochastic->p_min[p], bus.stochastic->p_max[p]);
      out[eq_q] = std::clamp(out[eq_q], bus.stochastic->q_min[p], bus.stochastic->q_max[p]);
    }
  }
  return out;
}

OpfSolution solve_uao_opf(const ThetaSet& theta, const ScenarioInput& forecast_in,
                          const BarrierOptions& opt) {
  const NetworkCase& c = theta.network;
  const FormCatalog& cat = theta.catalog;
  OpfSolution sol;
  if (forecast_in.z_fixed.size() != cat.injection_count() ||
      forecast_in.u.size() != cat.injection_count()) {
    sol.message = "scenario vectors must span the injection equations";
    return sol;
  }
  ScenarioInput forecast = forecast_in;
  forecast.u = clamp_forecast_to_envelope(c, cat, forecast_in.u);

  const int ref = c.reference_bus();
  const int np = c.phase_count;

  // Pinned coordinates: reference-bus phasors.
  VectorXd pinned_value = flat_start(c);
  std::vector<bool> pinned(c.state_dim(), false);
  for (int p = 0; p < np; ++p) {
    pinned[c.var_e(ref, p)] = true;
    pinned[c.var_f(ref, p)] = true;
  }

  // Decision vector: free state coords, then generator injection auxiliaries
  // (p and q per generator slot), then flow pairs, then magnitude auxiliaries.
  std::map<int, int> decision_of;
  int nv = 0;
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      decision_of[c.var_e(b, p)] = nv++;
      decision_of[c.var_f(b, p)] = nv++;
    }
  }

  const std::vector<GenSlot> gens = gen_slots(c);
  std::map<std::pair<int, int>, std::pair<int, int>> gen_aux;  // (bus,phase) -> (p idx, q idx)
  for (const auto& g : gens) {
    gen_aux[{g.bus, g.phase}] = {nv, nv + 1};
    nv += 2;
  }
  struct FlowAux {
    int branch, dir, phase;
    int p_idx, q_idx;
    double s_max;
  };
  std::vector<FlowAux> flow_aux;
  for (int k = 0; k < c.n_branch(); ++k) {
    if (c.branches[k].s_max <= 0.0) continue;
    for (int d = 0; d < 2; ++d) {
      for (int p = 0; p < np; ++p) {
        flow_aux.push_back({k, d, p, nv, nv + 1, c.branches[k].s_max});
        nv += 2;
      }
    }
  }
  struct MagAux {
    int bus, phase, idx;
  };
  std::vector<MagAux> mag_aux;
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;  // reference magnitude is fixed by convention
    for (int p = 0; p < np; ++p) {
      mag_aux.push_back({b, p, nv});
      ++nv;
    }
  }

  BarrierProblem pb;
  pb.lb = VectorXd::Constant(nv, -kInf);
  pb.ub = VectorXd::Constant(nv, kInf);

  // State coordinates are bounded through the magnitude constraints; loose
  // explicit boxes keep phase 1 well posed.
  double vmax_all = 0.0;
  for (const auto& bus : c.buses) vmax_all = std::max(vmax_all, bus.v_max);
  const double xbox = 2.0 * std::sqrt(vmax_all);
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      for (int var : {c.var_e(b, p), c.var_f(b, p)}) {
        pb.lb[decision_of[var]] = -xbox;
        pb.ub[decision_of[var]] = xbox;
      }
    }
  }

  VectorXd start = VectorXd::Zero(nv);
  const VectorXd x_flat = flat_start(c);
  for (auto& [gvar, dvar] : decision_of) start[dvar] = x_flat[gvar];

  // Generator auxiliaries: y = z_fixed + u_tilde + dispatch, boxed by the
  // dispatch bounds; cost is quadratic in the auxiliary.
  QFunc objective;
  objective.r = 0.0;
  std::vector<std::tuple<GenSlot, int, double>> cost_terms;  // slot, aux idx, offset
  double cost_const = 0.0;
  for (const auto& g : gens) {
    const int eq_p = cat.injection_eq(g.bus, g.phase, false);
    const int eq_q = cat.injection_eq(g.bus, g.phase, true);
    const double base_p = forecast.z_fixed[eq_p] + forecast.u[eq_p];
    const double base_q = forecast.z_fixed[eq_q] + forecast.u[eq_q];
    auto [ip, iq] = gen_aux[{g.bus, g.phase}];
    pb.lb[ip] = base_p + g.p_min;
    pb.ub[ip] = base_p + g.p_max;
    pb.lb[iq] = base_q + g.q_min;
    pb.ub[iq] = base_q + g.q_max;
    start[ip] = 0.5 * (pb.lb[ip] + pb.ub[ip]);
    start[iq] = 0.5 * (pb.lb[iq] + pb.ub[iq]);
    cost_terms.emplace_back(g, ip, base_p);
    cost_const += g.c0;
  }
  {  // assemble the quadratic objective over the gen auxiliaries
    std::vector<int> vars;
    for (auto& [g, ip, off] : cost_terms) vars.push_back(ip);
    objective.vars = vars;
    const int m = static_cast<int>(vars.size());
    objective.Q = MatrixXd::Zero(m, m);
    objective.q = VectorXd::Zero(m);
    objective.r = cost_const;
    for (int i = 0; i < m; ++i) {
      const auto& [g, ip, off] = cost_terms[i];
      // c2 (y - off)^2 + c1 (y - off) = c2 y^2 + (c1 - 2 c2 off) y + const
      objective.Q(i, i) = g.c2;
      objective.q[i] = g.c1 - 2.0 * g.c2 * off;
      objective.r += g.c2 * off * off - g.c1 * off;
    }
    if (objective.Q.lpNorm<Eigen::Infinity>() == 0.0) objective.Q.resize(0, 0);
  }
  pb.objective = objective;

  // Surrogate inequalities for every injection equation.
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      for (bool reactive : {false, true}) {
        const int eq = cat.injection_eq(b, p, reactive);
        const Surrogate& s = theta.surrogates.by_equation.at(eq);
        QFunc f = lift_quadratic(s.P, s.B, s.c, s.support, decision_of, pinned_value, pinned);
        auto it = gen_aux.find({b, p});
        if (it != gen_aux.end()) {
          subtract_aux(f, reactive ? it->second.second : it->second.first);
        } else {
          f.r -= forecast.z_fixed[eq] + forecast.u[eq];
        }
        f.name = std::string(reactive ? "h_q" : "h_p") + " bus " +
                 std::to_string(c.buses[b].id) + " ph " + std::to_string(p);
        pb.cons.push_back(std::move(f));
      }
    }
  }

  // Flow surrogates plus the thermal circle on the auxiliaries.
  for (const auto& fa : flow_aux) {
    for (bool reactive : {false, true}) {
      const int eq = cat.flow_eq(fa.branch, fa.dir == 0, fa.phase, reactive);
      const Surrogate& s = theta.surrogates.by_equation.at(eq);
      QFunc f = lift_quadratic(s.P, s.B, s.c, s.support, decision_of, pinned_value, pinned);
      subtract_aux(f, reactive ? fa.q_idx : fa.p_idx);
      f.name = std::string(reactive ? "h_qflow" : "h_pflow") + " branch " +
               std::to_string(fa.branch) + (fa.dir == 0 ? " fwd" : " rev") + " ph " +
               std::to_string(fa.phase);
      pb.cons.push_back(std::move(f));
    }
    QFunc circle;
    circle.vars = {fa.p_idx, fa.q_idx};
    circle.Q = MatrixXd::Identity(2, 2);
    circle.q = VectorXd::Zero(2);
    circle.r = -fa.s_max * fa.s_max;
    circle.name = "s_max branch " + std::to_string(fa.branch) + (fa.dir == 0 ? " fwd" : " rev") +
                  " ph " + std::to_string(fa.phase);
    pb.cons.push_back(std::move(circle));
    start[fa.p_idx] = 0.0;
    start[fa.q_idx] = 0.0;
  }

  // Native magnitude constraints e^2 + f^2 <= v with v boxed.
  for (const auto& ma : mag_aux) {
    const auto& bus = c.buses[ma.bus];
    pb.lb[ma.idx] = bus.v_min;
    pb.ub[ma.idx] = bus.v_max;
    start[ma.idx] = 0.5 * (bus.v_min + bus.v_max);
    QFunc f = lift_form(cat.forms[cat.magnitude_eq(ma.bus, ma.phase)], decision_of, pinned_value,
                        pinned);
    subtract_aux(f, ma.idx);
    f.name = "v_aux bus " + std::to_string(bus.id) + " ph " + std::to_string(ma.phase);
    pb.cons.push_back(std::move(f));
  }

  // Degenerate boxes would break the barrier; nudge them into thin intervals.
  for (int i = 0; i < nv; ++i) {
    if (std::isfinite(pb.lb[i]) && std::isfinite(pb.ub[i])) {
      if (pb.ub[i] - pb.lb[i] < 1e-9) {
        const double mid = 0.5 * (pb.lb[i] + pb.ub[i]);
        pb.lb[i] = mid - 5e-10;
        pb.ub[i] = mid + 5e-10;
      }
      start[i] = std::clamp(start[i], pb.lb[i] + 0.25 * (pb.ub[i] - pb.lb[i]),
                            pb.ub[i] - 0.25 * (pb.ub[i] - pb.lb[i]));
    }
  }

  std::string note;
  auto interior = find_interior(pb, start, opt, note);
  if (!interior) {
    sol.status = SolveStatus::Infeasible;
    sol.message = "no strictly feasible point: " + note;
    return sol;
  }

  BarrierOutcome bo = solve_barrier(pb, *interior, opt);
  sol.status = bo.status;
  sol.objective = bo.objective;
  sol.kkt_residual = bo.kkt_stat;
  sol.iterations = bo.iterations;
  sol.message = bo.message;

  sol.x = pinned_value;
  for (auto& [gvar, dvar] : decision_of) sol.x[gvar] = bo.v[dvar];
  for (const auto& g : gens) {
    auto [ip, iq] = gen_aux[{g.bus, g.phase}];
    const int eq_p = cat.injection_eq(g.bus, g.phase, false);
    const int eq_q = cat.injection_eq(g.bus, g.phase, true);
    DispatchEntry d;
    d.bus = g.bus;
    d.phase = g.phase;
    d.p = bo.v[ip] - forecast.z_fixed[eq_p] - forecast.u[eq_p];
    d.q = bo.v[iq] - forecast.z_fixed[eq_q] - forecast.u[eq_q];
    sol.dispatch.push_back(d);
  }

  // Tightest constraint slacks for the report.
  std::vector<std::pair<double, std::string>> slacks;
  for (const auto& con : pb.cons) slacks.emplace_back(-con.value(bo.v), con.name);
  std::sort(slacks.begin(), slacks.end());
  for (std::size_t i = 0; i < slacks.size() && i < 8; ++i) {
    sol.binding.push_back({slacks[i].second, slacks[i].first});
  }

  // One-sided relaxation diagnostic: true magnitudes below v_min.
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      const double v = evaluate_form(cat.forms[cat.magnitude_eq(b, p)], sol.x);
      if (v < c.buses[b].v_min - 1e-6) {
        sol.v_lower_diagnostic.push_back("bus " + std::to_string(c.buses[b].id) + " ph " +
                                         std::to_string(p) + " v=" + format_double(v));
      }
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Nonconvex ACOPF reference: augmented Lagrangian over the exact equations
// with Rockafellar-style treatment of the inequality bounds.
// ---------------------------------------------------------------------------

namespace {

struct AcopfModel {
  // Free variables: non-reference phasors in global order.
  std::vector<int> free_vars;
  std::vector<int> free_index_of;  // global var -> free idx or -1
  VectorXd x_template;             // pinned values filled

  struct CostTerm {
    QuadraticForm form;  // injection form of the generator row
    double y_given = 0.0;
    double c2 = 0, c1 = 0, c0 = 0;
  };
  struct BoundTerm {
    QuadraticForm form;
    double lo = 0.0, hi = 0.0;  // on form value
  };
  struct CircleTerm {
    QuadraticForm p_form, q_form;
    double s_max = 0.0;
  };
  std::vector<CostTerm> cost;
  std::vector<QuadraticForm> eq_forms;  // g(x) = eq_rhs
  VectorXd eq_rhs;
  std::vector<BoundTerm> bounds;
  std::vector<CircleTerm> circles;
};

VectorXd full_state(const AcopfModel& mo, const VectorXd& xf) {
  VectorXd x = mo.x_template;
  for (std::size_t i = 0; i < mo.free_vars.size(); ++i) x[mo.free_vars[i]] = xf[static_cast<int>(i)];
  return x;
}

void scatter_gradient(const AcopfModel& mo, const VectorXd& g_full, VectorXd& g) {
  for (std::size_t i = 0; i < mo.free_vars.size(); ++i) g[static_cast<int>(i)] += g_full[mo.free_vars[i]];
}

// value, gradient and Hessian contributions of w * s(g(x)) for smooth scalar
// wrappers s; helpers below specialize s.
void add_form_outer(const AcopfModel& mo, const QuadraticForm& form, const VectorXd& x, double w,
                    MatrixXd& H) {
  const VectorXd g_full = form_gradient(form, x);
  std::vector<std::pair<int, double>> nz;
  for (int v : form.support) {
    const int fi = mo.free_index_of[v];
    if (fi >= 0 && g_full[v] != 0.0) nz.emplace_back(fi, g_full[v]);
  }
  for (auto& [i, gi] : nz)
    for (auto& [j, gj] : nz) H(i, j) += w * gi * gj;
}

void add_form_hessian(const AcopfModel& mo, const QuadraticForm& form, double w, MatrixXd& H) {
  const int n = static_cast<int>(form.support.size());
  for (int a = 0; a < n; ++a) {
    const int ia = mo.free_index_of[form.support[a]];
    if (ia < 0) continue;
    for (int b = 0; b < n; ++b) {
      const int ib = mo.free_index_of[form.support[b]];
      if (ib < 0) continue;
      H(ia, ib) += w * 2.0 * form.A(a, b);
    }
  }
}

struct AlState {
  VectorXd lambda_eq;
  std::vector<double> lambda_lo, lambda_hi;  // bounds multipliers
  std::vector<double> lambda_circle;
  double beta = 10.0;
};

// Augmented Lagrangian value/gradient/Hessian at xf.
double al_eval(const AcopfModel& mo, const AlState& st, const VectorXd& xf, VectorXd* grad,
               MatrixXd* hess) {
  const VectorXd x = full_state(mo, xf);
  double val = 0.0;
  if (grad) grad->setZero();
  if (hess) hess->setZero();

  for (const auto& t : mo.cost) {
    const double z = evaluate_form(t.form, x) - t.y_given;
    val += t.c2 * z * z + t.c1 * z + t.c0;
    if (grad) {
      VectorXd gf = (2.0 * t.c2 * z + t.c1) * form_gradient(t.form, x);
      scatter_gradient(mo, gf, *grad);
    }
    if (hess) {
      add_form_outer(mo, t.form, x, 2.0 * t.c2, *hess);
      add_form_hessian(mo, t.form, 2.0 * t.c2 * z + t.c1, *hess);
    }
  }

  for (std::size_t j = 0; j < mo.eq_forms.size(); ++j) {
    const double cj = evaluate_form(mo.eq_forms[j], x) - mo.eq_rhs[static_cast<int>(j)];
    const double lam = st.lambda_eq[static_cast<int>(j)];
    val += lam * cj + 0.5 * st.beta * cj * cj;
    const double w = lam + st.beta * cj;
    if (grad) {
      VectorXd gf = w * form_gradient(mo.eq_forms[j], x);
      scatter_gradient(mo, gf, *grad);
    }
    if (hess) {
      add_form_outer(mo, mo.eq_forms[j], x, st.beta, *hess);
      add_form_hessian(mo, mo.eq_forms[j], w, *hess);
    }
  }

  auto ineq_term = [&](const QuadraticForm& form, double cval, double lam, double sign) {
    // constraint sign*(g - bound) <= 0 handled as c = sign*(g - bound)
    const double t = lam + st.beta * cval;
    if (t > 0.0) {
      val += (t * t - lam * lam) / (2.0 * st.beta);
      if (grad) {
        VectorXd gf = t * sign * form_gradient(form, full_state(mo, xf));
        scatter_gradient(mo, gf, *grad);
      }
      if (hess) {
        add_form_outer(mo, form, full_state(mo, xf), st.beta, *hess);
        add_form_hessian(mo, form, t * sign, *hess);
      }
    } else {
      val += -lam * lam / (2.0 * st.beta);
    }
  };

  for (std::size_t j = 0; j < mo.bounds.size(); ++j) {
    const double g = evaluate_form(mo.bounds[j].form, x);
    ineq_term(mo.bounds[j].form, g - mo.bounds[j].hi, st.lambda_hi[j], 1.0);
    ineq_term(mo.bounds[j].form, mo.bounds[j].lo - g, st.lambda_lo[j], -1.0);
  }

  for (std::size_t j = 0; j < mo.circles.size(); ++j) {
    const auto& ct = mo.circles[j];
    const double p = evaluate_form(ct.p_form, x);
    const double q = evaluate_form(ct.q_form, x);
    const double cval = p * p + q * q - ct.s_max * ct.s_max;
    const double t = st.lambda_circle[j] + st.beta * cval;
    if (t > 0.0) {
      val += (t * t - st.lambda_circle[j] * st.lambda_circle[j]) / (2.0 * st.beta);
      if (grad) {
        VectorXd gf = t * (2.0 * p * form_gradient(ct.p_form, x) +
                           2.0 * q * form_gradient(ct.q_form, x));
        scatter_gradient(mo, gf, *grad);
      }
      if (hess) {
        VectorXd gp = form_gradient(ct.p_form, x), gq = form_gradient(ct.q_form, x);
        VectorXd gc = 2.0 * p * gp + 2.0 * q * gq;
        std::vector<std::pair<int, double>> nz;
        for (int v = 0; v < gc.size(); ++v) {
          const int fi = mo.free_index_of[v];
          if (fi >= 0 && gc[v] != 0.0) nz.emplace_back(fi, gc[v]);
        }
        for (auto& [a, ga] : nz)
          for (auto& [b, gb] : nz) (*hess)(a, b) += st.beta * ga * gb;
        add_form_outer(mo, ct.p_form, x, t * 2.0, *hess);
        add_form_outer(mo, ct.q_form, x, t * 2.0, *hess);
        add_form_hessian(mo, ct.p_form, t * 2.0 * p, *hess);
        add_form_hessian(mo, ct.q_form, t * 2.0 * q, *hess);
      }
    } else {
      val += -st.lambda_circle[j] * st.lambda_circle[j] / (2.0 * st.beta);
    }
  }
  return val;
}

bool newton_minimize(const AcopfModel& mo, const AlState& st, VectorXd& xf, int max_iter,
                     double tol) {
  const int n = static_cast<int>(xf.size());
  VectorXd g(n);
  MatrixXd H(n, n);
  for (int it = 0; it < max_iter; ++it) {
    const double f = al_eval(mo, st, xf, &g, &H);
    if (g.lpNorm<Eigen::Infinity>() <= tol * (1.0 + std::abs(f))) return true;
    double ridge = 0.0;
    VectorXd step;
    for (int attempt = 0; attempt < 14; ++attempt) {
      MatrixXd Hr = H;
      if (ridge > 0.0) Hr.diagonal().array() += ridge;
      Eigen::LDLT<MatrixXd> ldlt(Hr);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(-g);
        if (step.allFinite() && g.dot(step) < 0.0) break;
      }
      ridge = ridge == 0.0 ? 1e-8 * (1.0 + H.diagonal().cwiseAbs().maxCoeff()) : ridge * 10.0;
      step.resize(0);
    }
    if (step.size() == 0) return false;
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 50; ++ls) {
      const VectorXd cand = xf + t * step;
      const double fc = al_eval(mo, st, cand, nullptr, nullptr);
      if (std::isfinite(fc) && fc <= f + 1e-4 * t * g.dot(step)) {
        xf = cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) return g.lpNorm<Eigen::Infinity>() <= std::sqrt(tol) * (1.0 + std::abs(f));
  }
  VectorXd gg(n);
  const double f = al_eval(mo, st, xf, &gg, nullptr);
  return gg.lpNorm<Eigen::Infinity>() <= 100.0 * tol * (1.0 + std::abs(f));
}

}  // namespace

OpfSolution solve_acopf(const NetworkCase& c, const FormCatalog& cat, const ScenarioInput& given,
                        const AcopfOptions& opt) {
  OpfSolution sol;
  if (given.z_fixed.size() != cat.injection_count() || given.u.size() != cat.injection_count()) {
    sol.message = "scenario vectors must span the injection equations";
    return sol;
  }
  const int ref = c.reference_bus();
  const int np = c.phase_count;

  AcopfModel mo;
  mo.x_template = flat_start(c);
  mo.free_index_of.assign(c.state_dim(), -1);
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      for (int v : {c.var_e(b, p), c.var_f(b, p)}) {
        mo.free_index_of[v] = static_cast<int>(mo.free_vars.size());
        mo.free_vars.push_back(v);
      }
    }
  }

  const std::vector<GenSlot> gens = gen_slots(c);
  std::map<std::pair<int, int>, const GenSlot*> gen_at;
  for (const auto& g : gens) gen_at[{g.bus, g.phase}] = &g;

  std::vector<double> eq_rhs;
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      for (bool reactive : {false, true}) {
        const int eq = cat.injection_eq(b, p, reactive);
        const double y_given = given.z_fixed[eq] + given.u[eq];
        const auto git = gen_at.find({b, p});
        if (git != gen_at.end()) {
          const GenSlot& g = *git->second;
          const double lo = reactive ? g.q_min : g.p_min;
          const double hi = reactive ? g.q_max : g.p_max;
          if (!reactive) {
            mo.cost.push_back({cat.forms[eq], y_given, g.c2, g.c1, g.c0});
          }
          if (hi - lo <= 1e-12) {
            if (b != ref) {
              mo.eq_forms.push_back(cat.forms[eq]);
              eq_rhs.push_back(y_given + lo);
            }
          } else {
            mo.bounds.push_back({cat.forms[eq], y_given + lo, y_given + hi});
          }
        } else if (b != ref) {
          mo.eq_forms.push_back(cat.forms[eq]);
          eq_rhs.push_back(y_given);
        }
      }
    }
  }
  mo.eq_rhs = Eigen::Map<VectorXd>(eq_rhs.data(), static_cast<int>(eq_rhs.size()));

  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      mo.bounds.push_back({cat.forms[cat.magnitude_eq(b, p)], c.buses[b].v_min, c.buses[b].v_max});
    }
  }
  for (int k = 0; k < c.n_branch(); ++k) {
    if (c.branches[k].s_max <= 0.0) continue;
    for (int d = 0; d < 2; ++d) {
      for (int p = 0; p < np; ++p) {
        mo.circles.push_back({cat.forms[cat.flow_eq(k, d == 0, p, false)],
                              cat.forms[cat.flow_eq(k, d == 0, p, true)], c.branches[k].s_max});
      }
    }
  }

  const int nfree = static_cast<int>(mo.free_vars.size());
  RandomStream rng(opt.seed);

  OpfSolution best;
  best.status = SolveStatus::Failed;
  for (int attempt = 0; attempt < opt.starts; ++attempt) {
    VectorXd xf(nfree);
    const VectorXd flat = flat_start(c);
    for (int i = 0; i < nfree; ++i) xf[i] = flat[mo.free_vars[i]];
    if (attempt > 0) {
      RandomStream sub = rng.fork(attempt);
      for (int i = 0; i < nfree; ++i) xf[i] += sub.next_uniform(-0.08, 0.08);
    }

    AlState st;
    st.lambda_eq = VectorXd::Zero(static_cast<int>(mo.eq_forms.size()));
    st.lambda_lo.assign(mo.bounds.size(), 0.0);
    st.lambda_hi.assign(mo.bounds.size(), 0.0);
    st.lambda_circle.assign(mo.circles.size(), 0.0);
    st.beta = 10.0;

    double prev_infeas = kInf;
    bool converged = false;
    int total_outer = 0;
    for (int outer = 0; outer < opt.max_outer; ++outer) {
      ++total_outer;
      const double inner_tol = std::max(1e-11, 1e-4 * std::pow(0.25, outer));
      newton_minimize(mo, st, xf, opt.max_inner, inner_tol);

      const VectorXd x = full_state(mo, xf);
      double infeas = 0.0;
      for (std::size_t j = 0; j < mo.eq_forms.size(); ++j) {
        const double cj = evaluate_form(mo.eq_forms[j], x) - mo.eq_rhs[static_cast<int>(j)];
        st.lambda_eq[static_cast<int>(j)] += st.beta * cj;
        infeas = std::max(infeas, std::abs(cj));
      }
      for (std::size_t j = 0; j < mo.bounds.size(); ++j) {
        const double g = evaluate_form(mo.bounds[j].form, x);
        st.lambda_hi[j] = std::max(0.0, st.lambda_hi[j] + st.beta * (g - mo.bounds[j].hi));
        st.lambda_lo[j] = std::max(0.0, st.lambda_lo[j] + st.beta * (mo.bounds[j].lo - g));
        infeas = std::max(infeas, std::max(g - mo.bounds[j].hi, mo.bounds[j].lo - g));
      }
      for (std::size_t j = 0; j < mo.circles.size(); ++j) {
        const double p = evaluate_form(mo.circles[j].p_form, x);
        const double q = evaluate_form(mo.circles[j].q_form, x);
        const double cv = p * p + q * q - mo.circles[j].s_max * mo.circles[j].s_max;
        st.lambda_circle[j] = std::max(0.0, st.lambda_circle[j] + st.beta * cv);
        infeas = std::max(infeas, cv);
      }

      if (infeas <= opt.equality_tolerance) {
        // Stationarity of the Lagrangian at the final multipliers.
        VectorXd g(nfree);
        AlState probe = st;
        probe.beta = 1e-12;  // beta->0 leaves L = f0 + lambda.c
        al_eval(mo, probe, xf, &g, nullptr);
        double obj_now = 0.0;
        for (const auto& t : mo.cost) {
          const double z = evaluate_form(t.form, full_state(mo, xf)) - t.y_given;
          obj_now += t.c2 * z * z + t.c1 * z + t.c0;
        }
        if (g.lpNorm<Eigen::Infinity>() <= opt.kkt_tolerance * (1.0 + std::abs(obj_now))) {
          converged = true;
          break;
        }
        if (outer > 6 && infeas <= 1e-10) {
          converged = g.lpNorm<Eigen::Infinity>() <= 1e-5 * (1.0 + std::abs(obj_now));
          if (converged) break;
        }
      }
      if (infeas > 0.25 * prev_infeas) st.beta = std::min(st.beta * 5.0, 1e10);
      prev_infeas = infeas;
    }

    if (!converged) continue;
    const VectorXd x = full_state(mo, xf);
    double obj = 0.0;
    for (const auto& t : mo.cost) {
      const double z = evaluate_form(t.form, x) - t.y_given;
      obj += t.c2 * z * z + t.c1 * z + t.c0;
    }
    if (best.status != SolveStatus::Optimal || obj < best.objective) {
      best.status = SolveStatus::Optimal;
      best.objective = obj;
      best.x = x;
      best.iterations = total_outer;
      VectorXd g(nfree);
      AlState probe = st;
      probe.beta = 1e-12;
      al_eval(mo, probe, xf, &g, nullptr);
      best.kkt_residual = g.lpNorm<Eigen::Infinity>();
      best.dispatch.clear();
      for (const auto& gslot : gens) {
        DispatchEntry d;
        d.bus = gslot.bus;
        d.phase = gslot.phase;
        const int eq_p = cat.injection_eq(gslot.bus, gslot.phase, false);
        const int eq_q = cat.injection_eq(gslot.bus, gslot.phase, true);
        d.p = evaluate_form(cat.forms[eq_p], x) - given.z_fixed[eq_p] - given.u[eq_p];
        d.q = evaluate_form(cat.forms[eq_q], x) - given.z_fixed[eq_q] - given.u[eq_q];
        best.dispatch.push_back(d);
      }
    }
  }
  if (best.status != SolveStatus::Optimal) {
    best.message = "all starts failed to converge";
  }
  return best;
}

PredictResult predict_response(const NetworkCase& c, const FormCatalog& cat,
                               const SurrogateBundle& bundle, const VectorXd& y_tilde,
                               const VectorXd& x0, const PowerFlowOptions& opt) {
  PredictResult res;
  if (y_tilde.size() != cat.injection_count()) {
    res.message = "target vector must span the injection equations";
    return res;
  }
  const int ref = c.reference_bus();
  const int np = c.phase_count;

  std::vector<int> eqs, free_vars;
  for (int b = 0; b < c.n_bus(); ++b) {
    if (b == ref) continue;
    for (int p = 0; p < np; ++p) {
      eqs.push_back(cat.injection_eq(b, p, false));
      eqs.push_back(cat.injection_eq(b, p, true));
      free_vars.push_back(c.var_e(b, p));
      free_vars.push_back(c.var_f(b, p));
    }
  }
  const int m = static_cast<int>(eqs.size());
  std::vector<const Surrogate*> model(m);
  for (int k = 0; k < m; ++k) {
    auto it = bundle.by_equation.find(eqs[k]);
    if (it == bundle.by_equation.end()) {
      res.message = "missing surrogate for equation " + std::to_string(eqs[k]);
      return res;
    }
    model[k] = &it->second;
  }

  VectorXd x = x0;
  pin_reference(c, x);
  auto residual = [&](const VectorXd& xc) {
    VectorXd r(m);
    for (int k = 0; k < m; ++k) r[k] = model[k]->evaluate(xc) - y_tilde[eqs[k]];
    return r;
  };
  VectorXd r = residual(x);
  double rnorm = r.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (rnorm <= opt.tolerance) {
      res.converged = true;
      break;
    }
    MatrixXd J = MatrixXd::Zero(m, m);
    for (int k = 0; k < m; ++k) {
      const VectorXd gs = model[k]->gradient_on_support(x);
      for (std::size_t i = 0; i < model[k]->support.size(); ++i) {
        const int gv = model[k]->support[i];
        auto pos = std::lower_bound(free_vars.begin(), free_vars.end(), gv);
        if (pos != free_vars.end() && *pos == gv) {
          J(k, static_cast<int>(pos - free_vars.begin())) = gs[static_cast<int>(i)];
        }
      }
    }
    Eigen::FullPivLU<MatrixXd> lu(J);
    if (lu.rank() < m) {
      res.message = "singular surrogate Jacobian at iteration " + std::to_string(it);
      break;
    }
    const VectorXd step = lu.solve(-r);
    double scale = 1.0;
    VectorXd x_new, r_new;
    double rnorm_new = rnorm;
    for (int h = 0; h <= opt.max_step_halvings; ++h) {
      x_new = x;
      for (std::size_t i = 0; i < free_vars.size(); ++i) {
        x_new[free_vars[i]] += scale * step[static_cast<int>(i)];
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
      res.message = "diverged";
      break;
    }
  }
  if (!res.converged && rnorm <= opt.tolerance) res.converged = true;
  res.x = x;
  res.max_residual = rnorm;
  if (!res.converged && res.message.empty()) res.message = "no convergence";
  return res;
}

ThetaPoint lift_theta_point(const ThetaSet& theta, const VectorXd& x, const VectorXd& y) {
  const FormCatalog& cat = theta.catalog;
  ThetaPoint pt;
  pt.x = x;
  pt.y = y;
  pt.flow = VectorXd::Zero(cat.flow_count());
  for (int e = 0; e < cat.flow_count(); ++e) {
    pt.flow[e] = evaluate_form(cat.forms[cat.injection_count() + e], x);
  }
  pt.v = VectorXd::Zero(cat.magnitude_count());
  for (int b = 0; b < cat.n_bus; ++b) {
    for (int p = 0; p < cat.phases; ++p) {
      pt.v[b * cat.phases + p] =
          evaluate_form(cat.forms[cat.magnitude_eq(b, p)], x);
    }
  }
  return pt;
}

ThetaReport check_theta_membership(const ThetaSet& theta, const ThetaPoint& pt,
                                   double tolerance) {
  const NetworkCase& c = theta.network;
  const FormCatalog& cat = theta.catalog;
  const OperationalLimits& lim = theta.limits;
  ThetaReport rep;
  const int np = c.phase_count;

  auto push = [&](const std::string& name, double slack) {
    rep.slacks.push_back({name, slack});
    rep.min_slack = std::min(rep.min_slack, slack);
  };

  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      const int k = b * np + p;
      for (bool reactive : {false, true}) {
        const int eq = cat.injection_eq(b, p, reactive);
        const Surrogate& s = theta.surrogates.by_equation.at(eq);
        push((reactive ? "h_q bus " : "h_p bus ") + std::to_string(c.buses[b].id) + " ph " +
                 std::to_string(p),
             pt.y[eq] - s.evaluate(pt.x));
      }
      push("p_max bus " + std::to_string(c.buses[b].id),
           lim.p_hi[k] - pt.y[cat.injection_eq(b, p, false)]);
      push("p_min bus " + std::to_string(c.buses[b].id),
           pt.y[cat.injection_eq(b, p, false)] - lim.p_lo[k]);
      push("q_max bus " + std::to_string(c.buses[b].id),
           lim.q_hi[k] - pt.y[cat.injection_eq(b, p, true)]);
      push("q_min bus " + std::to_string(c.buses[b].id),
           pt.y[cat.injection_eq(b, p, true)] - lim.q_lo[k]);
      const double v_aux = pt.v[k];
      const double v_state = evaluate_form(cat.forms[cat.magnitude_eq(b, p)], pt.x);
      push("v_aux bus " + std::to_string(c.buses[b].id), v_aux - v_state);
      push("v_max bus " + std::to_string(c.buses[b].id), lim.v_hi[b] - v_aux);
      push("v_min bus " + std::to_string(c.buses[b].id), v_aux - lim.v_lo[b]);
    }
  }
  for (int k = 0; k < c.n_branch(); ++k) {
    if (c.branches[k].s_max <= 0.0) continue;
    for (int d = 0; d < 2; ++d) {
      for (int p = 0; p < np; ++p) {
        const double sm = c.branches[k].s_max;
        const int ep = cat.flow_eq(k, d == 0, p, false);
        const int eq_ = cat.flow_eq(k, d == 0, p, true);
        const double pf = pt.flow[ep - cat.injection_count()];
        const double qf = pt.flow[eq_ - cat.injection_count()];
        push("s_max branch " + std::to_string(k), sm * sm - pf * pf - qf * qf);
        push("h_pflow branch " + std::to_string(k),
             pf - theta.surrogates.by_equation.at(ep).evaluate(pt.x));
        push("h_qflow branch " + std::to_string(k),
             qf - theta.surrogates.by_equation.at(eq_).evaluate(pt.x));
      }
    }
  }
  rep.in_theta = rep.min_slack >= -tolerance;
  return rep;
}

ThetaReport check_theta_membership(const ThetaSet& theta, const VectorXd& x, const VectorXd& y,
                                   double tolerance) {
  return check_theta_membership(theta, lift_theta_point(theta, x, y), tolerance);
}

}  // namespace uaopf
