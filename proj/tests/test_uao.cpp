#include <doctest.h>

#include <cmath>
#include <complex>

#include "support/oracles.hpp"
#include "uaopf/uao.hpp"

using namespace uaopf;

namespace {

NetworkCase data_case(const char* name) {
  return load_case_file(std::string(UAOPF_DATA_DIR) + name);
}

struct Fixture {
  NetworkCase c;
  FormCatalog cat;
  OperationalLimits limits;
  UncertaintyDataSet ds;
  SurrogateBundle bundle;
  ThetaSet theta;

  Fixture(const char* name, int count, double eps, double lo = 0.9, double hi = 1.1,
          std::uint64_t seed = 6)
      : c(data_case(name)), cat(assemble_quadratic_forms(c)), limits(build_limits(c)) {
    auto profiles = sample_profiles(c, cat, SampleConfig{count, seed, lo, hi});
    ForecastModel m;
    m.eps_max = eps;
    ds = generate_uncertainty_dataset(c, cat, profiles, m);
    bundle = fit_all_surrogates(cat, ds,
                                eps > 0.0 ? RegressionMode::UncertaintyAware
                                          : RegressionMode::Deterministic,
                                {}, 4);
    theta = build_theta(c, cat, bundle, limits);
  }

  ScenarioInput base_scenario(double u2 = 0.0) const {
    ScenarioInput s;
    s.z_fixed = VectorXd::Zero(cat.injection_count());
    s.u = VectorXd::Zero(cat.injection_count());
    for (int b = 0; b < c.n_bus(); ++b) {
      for (int p = 0; p < c.phase_count; ++p) {
        s.z_fixed[cat.injection_eq(b, p, false)] = -c.buses[b].pd[p];
        s.z_fixed[cat.injection_eq(b, p, true)] = -c.buses[b].qd[p];
      }
    }
    if (u2 != 0.0) s.u[cat.injection_eq(1, 0, false)] = u2;
    return s;
  }
};

// 2-bus closed-form PF with an end shunt: solve for |V2|^2 from
// |conj(a) m - S2|^2 = |y_s|^2 m with a = y_s + y_sh, then back out V2.
struct TwoBusShunt {
  bool exists = false;
  std::complex<double> v2;
};
TwoBusShunt two_bus_with_shunt(std::complex<double> ys, std::complex<double> ysh,
                               std::complex<double> s2) {
  const std::complex<double> a = ys + ysh;
  const double A = std::norm(a);
  const double B = -(2.0 * (a * s2).real() + std::norm(ys));
  const double C = std::norm(s2);
  const double disc = B * B - 4.0 * A * C;
  TwoBusShunt out;
  if (disc < 0.0) return out;
  const double m = (-B + std::sqrt(disc)) / (2.0 * A);
  out.exists = true;
  out.v2 = (std::conj(a) * m - s2) / std::conj(ys);
  return out;
}

}  // namespace

TEST_CASE("build_theta rejects missing surrogates") {
  Fixture fx("/case2.json", 40, 0.0);
  SurrogateBundle incomplete = fx.bundle;
  incomplete.by_equation.erase(incomplete.by_equation.begin());
  CHECK_THROWS_WITH_AS(build_theta(fx.c, fx.cat, incomplete, fx.limits),
                       doctest::Contains("missing surrogate"), ValidationError);
}

TEST_CASE("training points inside Psi lift into Theta") {
  Fixture fx("/case5.json", 200, 0.3, 1.0, 1.0);  // unscaled demands stay inside the base boxes
  int checked = 0;
  for (std::size_t k = 0; k < fx.ds.points.size(); ++k) {
    const auto& pt = fx.ds.points[k];
    const VectorXd y = pt.z + pt.u_actual;
    // the theorem covers D inside Psi; raw PF solutions outside Omega are not members
    if (!check_membership_psi(fx.c, fx.cat, fx.limits, pt.x, y).in_psi) continue;
    ThetaReport rep = check_theta_membership(fx.theta, pt.x, y, 1e-6);
    CHECK(rep.in_theta);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("every training point satisfies every surrogate inequality") {
  Fixture fx("/case5.json", 200, 0.3, 0.9, 1.1);
  for (const auto& pt : fx.ds.points) {
    const VectorXd y = pt.z + pt.u_actual;
    for (const auto& [eq, s] : fx.bundle.by_equation) {
      const double target = eq < fx.cat.injection_count()
                                ? y[eq]
                                : evaluate_form(fx.cat.forms[eq], pt.x);
      CHECK(s.evaluate(pt.x) - target <= 1e-6);
    }
  }
}

TEST_CASE("convex combinations of Theta members stay inside") {
  Fixture fx("/case5.json", 150, 0.3, 1.0, 1.0);
  std::vector<const UncertaintyDataPoint*> members;
  for (const auto& pt : fx.ds.points) {
    if (check_membership_psi(fx.c, fx.cat, fx.limits, pt.x, pt.z + pt.u_actual).in_psi) {
      members.push_back(&pt);
    }
  }
  REQUIRE(members.size() >= 2);
  RandomStream rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto& a = *members[rng.next_u64() % members.size()];
    const auto& b = *members[rng.next_u64() % members.size()];
    ThetaPoint pa = lift_theta_point(fx.theta, a.x, a.z + a.u_actual);
    ThetaPoint pb = lift_theta_point(fx.theta, b.x, b.z + b.u_actual);
    REQUIRE(check_theta_membership(fx.theta, pa, 1e-6).in_theta);
    REQUIRE(check_theta_membership(fx.theta, pb, 1e-6).in_theta);
    const double lam = rng.next_unit();
    ThetaPoint mid;
    mid.x = lam * pa.x + (1.0 - lam) * pb.x;
    mid.y = lam * pa.y + (1.0 - lam) * pb.y;
    mid.flow = lam * pa.flow + (1.0 - lam) * pb.flow;
    mid.v = lam * pa.v + (1.0 - lam) * pb.v;
    ThetaReport rep = check_theta_membership(fx.theta, mid, 1e-10);
    CHECK(rep.in_theta);
  }
}

TEST_CASE("membership report size matches the hand count") {
  Fixture fx("/case2.json", 40, 0.0, 1.0, 1.0);
  const auto& pt = fx.ds.points[0];
  ThetaReport rep = check_theta_membership(fx.theta, pt.x, pt.z + pt.u_actual);
  // per (bus, phase): 2 surrogate rows + 4 injection bounds + 3 magnitude
  // slacks; no finite thermal limits on this case
  CHECK(rep.slacks.size() == 2u * 9u);
}

TEST_CASE("omega violations are named in the membership report") {
  Fixture fx("/case2.json", 50, 0.0, 1.0, 1.0);
  const auto& pt = fx.ds.points[0];
  VectorXd y = pt.z + pt.u_actual;
  y[fx.cat.injection_eq(1, 0, false)] = 5.0;  // far outside the width-zero load box
  ThetaReport rep = check_theta_membership(fx.theta, pt.x, y, 1e-6);
  CHECK_FALSE(rep.in_theta);
  bool named = false;
  for (const auto& s : rep.slacks) {
    if (s.name.find("p_max bus 2") == 0 && s.slack < 0.0) named = true;
  }
  CHECK(named);
}

TEST_CASE("uam reproduces training states from their own targets") {
  Fixture fx("/case5.json", 200, 0.0, 0.9, 1.1);
  const auto& pt = fx.ds.points[3];
  // eps = 0: targets equal actual injections, so the prediction must land on
  // the stored state up to solver and fit tolerance.
  PredictResult pr = predict_response(fx.c, fx.cat, fx.bundle, pt.z + pt.u_actual, flat_start(fx.c));
  REQUIRE(pr.converged);
  CHECK((pr.x - pt.x).lpNorm<Eigen::Infinity>() <= 2e-2);
  CHECK(pr.max_residual <= 1e-8);
}

TEST_CASE("uam prediction beats naive power flow under forecast error") {
  Fixture fx("/case5.json", 400, 0.3, 0.9, 1.1);
  auto held = sample_profiles(fx.c, fx.cat, SampleConfig{40, 4242, 0.9, 1.1});
  ForecastModel m;
  m.eps_max = 0.3;
  UncertaintyDataSet hd = generate_uncertainty_dataset(fx.c, fx.cat, held, m);
  double err_uam = 0.0, err_naive = 0.0;
  int used = 0;
  for (const auto& pt : hd.points) {
    const VectorXd y_tilde =
        pt.z + clamp_forecast_to_envelope(fx.c, fx.cat, pt.u_forecast);
    PredictResult pr = predict_response(fx.c, fx.cat, fx.bundle, y_tilde, flat_start(fx.c));
    InjectionVector inj = InjectionVector::zero(fx.cat);
    inj.y = pt.z + pt.u_forecast;  // the naive path trusts the raw forecast
    PowerFlowResult nf = solve_power_flow(fx.c, fx.cat, inj, flat_start(fx.c));
    if (!pr.converged || !nf.converged) continue;
    err_uam += (pr.x - pt.x).lpNorm<Eigen::Infinity>();
    err_naive += (nf.x - pt.x).lpNorm<Eigen::Infinity>();
    ++used;
  }
  REQUIRE(used >= 30);
  MESSAGE("uam mean error ", err_uam / used, " naive mean error ", err_naive / used);
  CHECK(err_uam / used < err_naive / used);
}

TEST_CASE("uam jacobian matches finite differences") {
  Fixture fx("/case3_line.json", 100, 0.0);
  // surrogate gradients back the Newton matrix; compare against differences
  RandomStream rng(3);
  VectorXd x = flat_start(fx.c);
  for (int i = 0; i < x.size(); ++i) x[i] += rng.next_uniform(-0.05, 0.05);
  pin_reference(fx.c, x);
  for (const auto& [eq, s] : fx.bundle.by_equation) {
    if (eq >= fx.cat.injection_count()) continue;
    const VectorXd g = s.gradient_on_support(x);
    for (std::size_t i = 0; i < s.support.size(); ++i) {
      const double fd = oracle::central_difference(
          [&](const VectorXd& xx) { return s.evaluate(xx); }, x, s.support[i]);
      if (std::abs(fd) > 1e-7) {
        CHECK(g[static_cast<int>(i)] == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("flat target on a shunt-free case predicts a flat state") {
  Fixture fx("/case2.json", 60, 0.0, 0.9, 1.1);
  const VectorXd zero = VectorXd::Zero(fx.cat.injection_count());
  PredictResult pr = predict_response(fx.c, fx.cat, fx.bundle, zero, flat_start(fx.c));
  REQUIRE(pr.converged);
  // the surrogate system at the flat state reproduces zero injections to fit
  // accuracy, so the prediction stays near flat
  CHECK((pr.x - flat_start(fx.c)).lpNorm<Eigen::Infinity>() <= 5e-2);
}

TEST_CASE("uao-opf on the 2-bus case matches a brute-force grid") {
  Fixture fx("/case2.json", 300, 0.0, 0.85, 1.15);
  ScenarioInput sc = fx.base_scenario();
  OpfSolution sol = solve_uao_opf(fx.theta, sc);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.kkt_residual <= 1e-6);

  // brute force over (e2, f2): minimal feasible slack dispatch closed-form
  const auto& hp2 = fx.bundle.by_equation.at(fx.cat.injection_eq(1, 0, false));
  const auto& hq2 = fx.bundle.by_equation.at(fx.cat.injection_eq(1, 0, true));
  const auto& hp1 = fx.bundle.by_equation.at(fx.cat.injection_eq(0, 0, false));
  const auto& hq1 = fx.bundle.by_equation.at(fx.cat.injection_eq(0, 0, true));
  const auto& gen = fx.c.generators[0];
  VectorXd x = flat_start(fx.c);
  auto objective_at = [&](double e2, double f2) {
    x[fx.c.var_e(1, 0)] = e2;
    x[fx.c.var_f(1, 0)] = f2;
    if (hp2.evaluate(x) > -0.5 + 1e-12) return 1e30;
    if (hq2.evaluate(x) > -0.2 + 1e-12) return 1e30;
    if (e2 * e2 + f2 * f2 > 1.21) return 1e30;
    if (e2 * e2 + f2 * f2 < 0.81) return 1e30;
    if (hq1.evaluate(x) > gen.q_max[0]) return 1e30;
    const double zp = std::max(hp1.evaluate(x), gen.p_min[0]);
    if (zp > gen.p_max[0]) return 1e30;
    return gen.c2 * zp * zp + gen.c1 * zp + gen.c0;
  };
  double best = 1e30, be = 1.0, bf = 0.0;
  for (double step : {1e-2, 1e-4, 1e-6}) {
    const double e_lo = step == 1e-2 ? 0.90 : be - 120.0 * step;
    const double e_hi = step == 1e-2 ? 1.10 : be + 120.0 * step;
    const double f_lo = step == 1e-2 ? -0.20 : bf - 120.0 * step;
    const double f_hi = step == 1e-2 ? 0.10 : bf + 120.0 * step;
    for (double e2 = e_lo; e2 <= e_hi; e2 += step) {
      for (double f2 = f_lo; f2 <= f_hi; f2 += step) {
        const double obj = objective_at(e2, f2);
        if (obj < best) {
          best = obj;
          be = e2;
          bf = f2;
        }
      }
    }
  }
  REQUIRE(best < 1e29);
  CHECK(std::abs(sol.objective - best) <= 1e-3);
}

TEST_CASE("binding generator bound makes the uao infeasible") {
  Fixture fx("/case2.json", 100, 0.0, 0.9, 1.1);
  NetworkCase tight = fx.c;
  tight.generators[0].p_max[0] = 0.1;  // below what serving the load requires
  FormCatalog cat2 = assemble_quadratic_forms(tight);
  ThetaSet theta2 = build_theta(tight, cat2, fx.bundle, build_limits(tight));
  OpfSolution sol = solve_uao_opf(theta2, fx.base_scenario());
  CHECK(sol.status == SolveStatus::Infeasible);
  CHECK_FALSE(sol.message.empty());
}

TEST_CASE("acopf on a zero-load shunt-free case idles at flat voltage") {
  const std::string text = R"({
    "phases": 1,
    "buses": [
      {"id": 1, "type": "reference", "pd": [0.0], "qd": [0.0], "vmin": 1.0, "vmax": 1.0},
      {"id": 2, "type": "load", "pd": [0.0], "qd": [0.0], "vmin": 0.81, "vmax": 1.21}
    ],
    "branches": [{"from": 1, "to": 2, "g": [1.0], "b": [-10.0]}],
    "generators": [{"bus": 1, "p_min": [0.0], "p_max": [2.0], "q_min": [-2.0], "q_max": [2.0],
                    "cost": [0.1, 20.0, 3.5]}]
  })";
  NetworkCase c = load_case(text);
  FormCatalog cat = assemble_quadratic_forms(c);
  ScenarioInput sc;
  sc.z_fixed = VectorXd::Zero(cat.injection_count());
  sc.u = sc.z_fixed;
  OpfSolution sol = solve_acopf(c, cat, sc);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(3.5).epsilon(1e-6));
  CHECK(sol.x.isApprox(flat_start(c), 1e-6));
  CHECK(sol.kkt_residual <= 1e-6);
}

TEST_CASE("acopf matches a dispatch-and-voltage grid on the 2-bus case") {
  NetworkCase c = data_case("/case2_dispatch.json");
  FormCatalog cat = assemble_quadratic_forms(c);
  ScenarioInput sc;
  sc.z_fixed = VectorXd::Zero(cat.injection_count());
  sc.u = VectorXd::Zero(cat.injection_count());
  sc.z_fixed[cat.injection_eq(1, 0, false)] = -0.6;
  sc.z_fixed[cat.injection_eq(1, 0, true)] = -0.2;
  sc.u[cat.injection_eq(1, 0, false)] = 0.2;

  OpfSolution sol = solve_acopf(c, cat, sc);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.kkt_residual <= 1e-6);

  // oracle: grid over bus-2 dispatch, closed-form PF, cost both generators
  const std::complex<double> ys(1.0, -8.0), ysh(0.0, 0.01);
  const auto& g1 = c.generators[0];
  const auto& g2 = c.generators[1];
  double best = 1e30;
  double zbest = 0.0, qbest = 0.0;
  for (double step : {1e-2, 1e-4}) {
    const double zlo = step == 1e-2 ? 0.0 : std::max(0.0, zbest - 120.0 * step);
    const double zhi = step == 1e-2 ? 0.5 : std::min(0.5, zbest + 120.0 * step);
    const double qlo = step == 1e-2 ? -0.5 : std::max(-0.5, qbest - 120.0 * step);
    const double qhi = step == 1e-2 ? 0.5 : std::min(0.5, qbest + 120.0 * step);
    for (double zp = zlo; zp <= zhi + 1e-12; zp += step) {
      for (double zq = qlo; zq <= qhi + 1e-12; zq += step) {
        const std::complex<double> s2(-0.6 + 0.2 + zp, -0.2 + zq);
        const TwoBusShunt pf = two_bus_with_shunt(ys, ysh, s2);
        if (!pf.exists) continue;
        const double m = std::norm(pf.v2);
        if (m < 0.81 || m > 1.21) continue;
        // slack injection from the complex model
        const std::complex<double> i1 = (ys + ysh) * 1.0 - ys * pf.v2;
        const std::complex<double> s1 = std::conj(i1);
        if (s1.real() < g1.p_min[0] - 1e-9 || s1.real() > g1.p_max[0] + 1e-9) continue;
        if (s1.imag() < g1.q_min[0] - 1e-9 || s1.imag() > g1.q_max[0] + 1e-9) continue;
        const double cost = g1.c2 * s1.real() * s1.real() + g1.c1 * s1.real() + g1.c0 +
                            g2.c2 * zp * zp + g2.c1 * zp + g2.c0;
        if (cost < best) {
          best = cost;
          zbest = zp;
          qbest = zq;
        }
      }
    }
  }
  REQUIRE(best < 1e29);
  CHECK(std::abs(sol.objective - best) <= 1e-3);
}

TEST_CASE("acopf objective differs between actual and forecast injections") {
  NetworkCase c = data_case("/case5.json");
  FormCatalog cat = assemble_quadratic_forms(c);
  ScenarioInput actual;
  actual.z_fixed = VectorXd::Zero(cat.injection_count());
  actual.u = VectorXd::Zero(cat.injection_count());
  for (int b = 0; b < c.n_bus(); ++b) {
    actual.z_fixed[cat.injection_eq(b, 0, false)] = -c.buses[b].pd[0];
    actual.z_fixed[cat.injection_eq(b, 0, true)] = -c.buses[b].qd[0];
  }
  actual.u[cat.injection_eq(1, 0, false)] = 1.2;
  actual.u[cat.injection_eq(4, 0, false)] = 0.5;
  ScenarioInput forecast = actual;
  forecast.u[cat.injection_eq(1, 0, false)] = 1.2 * 1.25;  // 25% over-forecast
  forecast.u[cat.injection_eq(4, 0, false)] = 0.5 * 0.8;

  OpfSolution s1 = solve_acopf(c, cat, actual);
  OpfSolution s2 = solve_acopf(c, cat, forecast);
  REQUIRE(s1.status == SolveStatus::Optimal);
  REQUIRE(s2.status == SolveStatus::Optimal);
  CHECK(std::abs(s1.objective - s2.objective) > 1e-3);
}

TEST_CASE("uao relaxation undercuts the acopf when its solution lies in Theta") {
  Fixture fx("/case5.json", 400, 0.0, 0.9, 1.1);
  RandomStream rng(77);
  auto tests = sample_profiles(fx.c, fx.cat, SampleConfig{5, 31337, 0.9, 1.1});
  for (const auto& pr : tests) {
    ScenarioInput sc{pr.pre.z, pr.pre.u};
    OpfSolution exact = solve_acopf(fx.c, fx.cat, sc);
    OpfSolution relaxed = solve_uao_opf(fx.theta, sc);
    if (exact.status != SolveStatus::Optimal || relaxed.status != SolveStatus::Optimal) continue;
    // lift the acopf solution; the property is conditional on containment
    VectorXd y(fx.cat.injection_count());
    for (int eq = 0; eq < fx.cat.injection_count(); ++eq) {
      y[eq] = evaluate_form(fx.cat.forms[eq], exact.x);
    }
    ThetaReport rep = check_theta_membership(fx.theta, exact.x, y, 1e-6);
    if (!rep.in_theta) continue;
    CHECK(relaxed.objective <= exact.objective + 1e-4 * (1.0 + std::abs(exact.objective)));
  }
}

TEST_CASE("uao reports true magnitudes that undercut v_min") {
  // One-sided magnitude relaxation: the solver may settle on states whose
  // true squared magnitude is below v_min; the diagnostic must say so.
  Fixture fx("/case2.json", 200, 0.0, 0.85, 1.15);
  NetworkCase strict = fx.c;
  strict.buses[1].v_min = 1.05;  // force the pinch
  FormCatalog cat2 = assemble_quadratic_forms(strict);
  ThetaSet theta2 = build_theta(strict, cat2, fx.bundle, build_limits(strict));
  OpfSolution sol = solve_uao_opf(theta2, fx.base_scenario());
  if (sol.status == SolveStatus::Optimal) {
    const double v = evaluate_form(cat2.forms[cat2.magnitude_eq(1, 0)], sol.x);
    if (v < 1.05 - 1e-6) {
      CHECK_FALSE(sol.v_lower_diagnostic.empty());
    }
  }
}
