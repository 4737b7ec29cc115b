#include "uaopf/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace uaopf {

using nlohmann::json;

std::vector<Profile> sample_profiles(const NetworkCase& c, const FormCatalog& cat,
                                     const SampleConfig& cfg) {
  if (cfg.count < 1) throw ValidationError("profile count must be >= 1");
  if (!(cfg.range_lo > 0.0) || cfg.range_lo > cfg.range_hi) {
    throw ValidationError("demand scaling range requires 0 < lo <= hi");
  }
  bool any_demand = false, any_stochastic = false;
  for (const auto& bus : c.buses) {
    for (double d : bus.pd) any_demand |= d != 0.0;
    for (double d : bus.qd) any_demand |= d != 0.0;
    if (bus.stochastic) any_stochastic = true;
  }
  if (!any_demand && !any_stochastic) {
    throw ValidationError("case has no demands and no stochastic buses to sample");
  }

  const int np = c.phase_count;
  RandomStream root(cfg.seed);
  std::vector<Profile> out;
  out.reserve(cfg.count);
  for (int k = 0; k < cfg.count; ++k) {
    RandomStream rng = root.fork(static_cast<std::uint64_t>(k) + 1);
    Profile pr;
    pr.substream = rng.next_u64();
    pr.pre = InjectionVector::zero(cat);
    for (int b = 0; b < c.n_bus(); ++b) {
      const auto& bus = c.buses[b];
      for (int p = 0; p < np; ++p) {
        const double sp = rng.next_uniform(cfg.range_lo, cfg.range_hi);
        const double sq = rng.next_uniform(cfg.range_lo, cfg.range_hi);
        pr.pre.z[cat.injection_eq(b, p, false)] = -bus.pd[p] * sp;
        pr.pre.z[cat.injection_eq(b, p, true)] = -bus.qd[p] * sq;
        if (bus.stochastic) {
          const auto& s = *bus.stochastic;
          if (bus.has_stochastic_p(p)) {
            pr.pre.u[cat.injection_eq(b, p, false)] = rng.next_uniform(s.p_min[p], s.p_max[p]);
          }
          if (bus.has_stochastic_q(p)) {
            pr.pre.u[cat.injection_eq(b, p, true)] = rng.next_uniform(s.q_min[p], s.q_max[p]);
          }
        }
      }
    }
    pr.pre.y = pr.pre.z + pr.pre.u;
    out.push_back(std::move(pr));
  }
  return out;
}

VectorXd apply_forecast_error(const VectorXd& u, const ForecastModel& model, RandomStream& rng) {
  model.validate();
  VectorXd ut = u;
  for (int i = 0; i < u.size(); ++i) {
    const double delta = rng.next_uniform(-model.eps_max, model.eps_max);
    ut[i] = u[i] * (1.0 + delta);
  }
  return ut;
}

VectorXd apply_forecast_error(const VectorXd& u, const ForecastModel& model) {
  RandomStream rng(model.seed);
  return apply_forecast_error(u, model, rng);
}

DispatchDraw dispatch_policy(const NetworkCase& c, double target_p, double target_q,
                             double jitter, RandomStream& rng) {
  const int np = c.phase_count;
  const int ref = c.reference_bus();
  DispatchDraw d;
  d.z_p = VectorXd::Zero(c.n_bus() * np);
  d.z_q = VectorXd::Zero(c.n_bus() * np);

  struct Unit {
    int bus, phase;
    double p_min, p_max, q_min, q_max, c1, c2;
  };
  std::vector<Unit> units;
  for (const auto& g : c.generators) {
    const int b = c.bus_index(g.bus);
    if (b == ref) continue;
    for (std::size_t i = 0; i < g.phases.size(); ++i) {
      // Tiny synthetic curvature keeps the lambda allocation single-valued
      // for linear-cost units; the true cost is untouched.
      units.push_back({b, g.phases[i], g.p_min[i], g.p_max[i], g.q_min[i], g.q_max[i], g.c1,
                       std::max(g.c2, 1e-6)});
    }
  }
  if (units.empty()) return d;

  double p_floor = 0.0, p_ceil = 0.0;
  for (const auto& u : units) {
    p_floor += u.p_min;
    p_ceil += u.p_max;
  }
  const double target = std::clamp(target_p, p_floor, p_ceil);

  auto allocation = [&](double lambda) {
    double total = 0.0;
    for (const auto& u : units) {
      total += std::clamp((lambda - u.c1) / (2.0 * u.c2), u.p_min, u.p_max);
    }
    return total;
  };
  double lo = units[0].c1, hi = units[0].c1;
  for (const auto& u : units) {
    lo = std::min(lo, u.c1 + 2.0 * u.c2 * u.p_min);
    hi = std::max(hi, u.c1 + 2.0 * u.c2 * u.p_max);
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (allocation(mid) < target) lo = mid;
    else hi = mid;
  }
  const double lambda = 0.5 * (lo + hi);

  double q_floor = 0.0, q_ceil = 0.0;
  for (const auto& u : units) {
    q_floor += u.q_min;
    q_ceil += u.q_max;
  }
  const double qt = std::clamp(target_q, q_floor, q_ceil);
  const double qspan = q_ceil - q_floor;
  const double qfrac = qspan > 0.0 ? (qt - q_floor) / qspan : 0.0;

  for (const auto& u : units) {
    double zp = std::clamp((lambda - u.c1) / (2.0 * u.c2), u.p_min, u.p_max);
    double zq = u.q_min + qfrac * (u.q_max - u.q_min);
    zp += rng.next_uniform(-1.0, 1.0) * jitter * (u.p_max - u.p_min);
    zq += rng.next_uniform(-1.0, 1.0) * jitter * (u.q_max - u.q_min);
    zp = std::clamp(zp, u.p_min, u.p_max);
    zq = std::clamp(zq, u.q_min, u.q_max);
    d.z_p[u.bus * np + u.phase] += zp;
    d.z_q[u.bus * np + u.phase] += zq;
  }
  return d;
}

namespace {

struct SolvedPoint {
  bool ok = false;
  UncertaintyDataPoint point;
};

SolvedPoint solve_profile(const NetworkCase& c, const FormCatalog& cat, const Profile& pr,
                          const ForecastModel& model, const GenerationConfig& cfg) {
  const int np = c.phase_count;
  RandomStream rng(pr.substream);

  InjectionVector inj = pr.pre;
  VectorXd u_tilde = apply_forecast_error(inj.u, model, rng);

  // Perceived net load drives the dispatch rule; reality (u) drives the PF.
  double perceived_p = 0.0, perceived_q = 0.0;
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      perceived_p += -inj.z[cat.injection_eq(b, p, false)] - u_tilde[cat.injection_eq(b, p, false)];
      perceived_q += -inj.z[cat.injection_eq(b, p, true)] - u_tilde[cat.injection_eq(b, p, true)];
    }
  }
  DispatchDraw dd = dispatch_policy(c, cfg.dispatch_share * perceived_p,
                                    cfg.dispatch_share * perceived_q, cfg.dispatch_jitter, rng);
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < np; ++p) {
      inj.z[cat.injection_eq(b, p, false)] += dd.z_p[b * np + p];
      inj.z[cat.injection_eq(b, p, true)] += dd.z_q[b * np + p];
    }
  }
  inj.y = inj.z + inj.u;

  PowerFlowResult pf = solve_power_flow(c, cat, inj, flat_start(c), cfg.pf);
  SolvedPoint sp;
  if (!pf.converged) return sp;

  UncertaintyDataPoint pt;
  pt.x = pf.x;
  pt.u_actual = inj.u;
  pt.u_forecast = u_tilde;
  pt.z = inj.z;
  // Reference rows absorb the mismatch; record their realized values.
  const int ref = c.reference_bus();
  for (int p = 0; p < np; ++p) {
    for (bool reactive : {false, true}) {
      const int eq = cat.injection_eq(ref, p, reactive);
      pt.z[eq] = evaluate_form(cat.forms[eq], pf.x) - pt.u_actual[eq];
    }
  }
  sp.ok = true;
  sp.point = std::move(pt);
  return sp;
}

}  // namespace

UncertaintyDataSet generate_uncertainty_dataset(const NetworkCase& c, const FormCatalog& cat,
                                                const std::vector<Profile>& profiles,
                                                const ForecastModel& model,
                                                const GenerationConfig& cfg) {
  model.validate();
  UncertaintyDataSet ds;
  ds.header.kind = "uncertainty_dataset";
  ds.header.case_hash = case_hash(c);
  ds.header.requested = static_cast<int>(profiles.size());
  ds.header.eps_max = model.eps_max;

  std::vector<SolvedPoint> solved(profiles.size());
  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    for (std::size_t k = 0; k < profiles.size(); ++k) {
      solved[k] = solve_profile(c, cat, profiles[k], model, cfg);
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= profiles.size()) return;
        solved[k] = solve_profile(c, cat, profiles[k], model, cfg);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Merge in profile-index order so output is scheduling-independent.
  for (auto& sp : solved) {
    if (sp.ok) ds.points.push_back(std::move(sp.point));
    else ++ds.header.dropped;
  }
  const double frac =
      profiles.empty() ? 0.0 : static_cast<double>(ds.points.size()) / profiles.size();
  if (frac < cfg.min_converged_fraction) {
    throw ValidationError("only " + std::to_string(ds.points.size()) + " of " +
                          std::to_string(profiles.size()) +
                          " profiles converged (below minimum fraction)");
  }
  return ds;
}

DataSet UncertaintyDataSet::project() const {
  DataSet out;
  out.header = header;
  out.header.kind = "dataset";
  out.points.reserve(points.size());
  for (const auto& p : points) {
    out.points.push_back({p.x, p.z + p.u_actual});
  }
  return out;
}

DataSet generate_dataset(const NetworkCase& c, const FormCatalog& cat,
                         const std::vector<Profile>& profiles, const GenerationConfig& cfg) {
  ForecastModel exact;
  exact.eps_max = 0.0;
  return generate_uncertainty_dataset(c, cat, profiles, exact, cfg).project();
}

namespace {

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vec_from_json(const json& a) {
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

std::string serialize_uncertainty_dataset(const UncertaintyDataSet& ds) {
  std::ostringstream out;
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(ds.header.case_hash));
  json h;
  h["kind"] = ds.header.kind;
  h["case_hash"] = std::string(hash_hex);
  h["seed"] = ds.header.seed;
  h["requested"] = ds.header.requested;
  h["dropped"] = ds.header.dropped;
  h["eps_max"] = ds.header.eps_max;
  h["range"] = {ds.header.range_lo, ds.header.range_hi};
  h["count"] = ds.points.size();
  out << h.dump() << "\n";
  for (const auto& p : ds.points) {
    json r;
    r["x"] = vec_to_json(p.x);
    r["y"] = vec_to_json(p.z + p.u_actual);
    r["z"] = vec_to_json(p.z);
    r["u"] = vec_to_json(p.u_actual);
    r["u_tilde"] = vec_to_json(p.u_forecast);
    out << r.dump() << "\n";
  }
  return out.str();
}

UncertaintyDataSet parse_uncertainty_dataset(const std::string& text, const NetworkCase& c,
                                             const FormCatalog& cat) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset file is empty");
  json h;
  try {
    h = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad dataset header: ") + e.what());
  }
  UncertaintyDataSet ds;
  ds.header.kind = h.value("kind", "uncertainty_dataset");
  ds.header.case_hash = std::stoull(h.value("case_hash", std::string("0")), nullptr, 16);
  ds.header.seed = h.value("seed", std::uint64_t{0});
  ds.header.requested = h.value("requested", 0);
  ds.header.dropped = h.value("dropped", 0);
  ds.header.eps_max = h.value("eps_max", 0.0);
  if (h.contains("range")) {
    ds.header.range_lo = h["range"][0].get<double>();
    ds.header.range_hi = h["range"][1].get<double>();
  }
  if (ds.header.case_hash != case_hash(c)) {
    throw ValidationError("dataset was generated from a different case (hash mismatch)");
  }

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json r;
    try {
      r = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    UncertaintyDataPoint p;
    p.x = vec_from_json(r.at("x"));
    p.z = vec_from_json(r.at("z"));
    p.u_actual = vec_from_json(r.at("u"));
    p.u_forecast = vec_from_json(r.at("u_tilde"));
    if (p.x.size() != c.state_dim() || p.z.size() != cat.injection_count()) {
      throw ValidationError("dataset line " + std::to_string(lineno) + ": dimension mismatch");
    }
    // Re-verify the stored point is a power-flow solution.
    const VectorXd y = p.z + p.u_actual;
    const int ref = c.reference_bus();
    for (int b = 0; b < c.n_bus(); ++b) {
      for (int ph = 0; ph < c.phase_count; ++ph) {
        for (bool reactive : {false, true}) {
          const int eq = cat.injection_eq(b, ph, reactive);
          if (b == ref) continue;
          const double res = std::abs(evaluate_form(cat.forms[eq], p.x) - y[eq]);
          if (res > 1e-6) {
            throw ValidationError("dataset line " + std::to_string(lineno) +
                                  ": stored point violates the power-flow equations (residual " +
                                  format_double(res) + ")");
          }
        }
      }
    }
    for (int i = 0; i < p.u_actual.size(); ++i) {
      if (std::abs(p.u_forecast[i] - p.u_actual[i]) >
          ds.header.eps_max * std::abs(p.u_actual[i]) + 1e-12) {
        throw ValidationError("dataset line " + std::to_string(lineno) +
                              ": forecast outside the declared error bound");
      }
    }
    ds.points.push_back(std::move(p));
  }
  return ds;
}

void save_uncertainty_dataset(const UncertaintyDataSet& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << serialize_uncertainty_dataset(ds);
}

UncertaintyDataSet load_uncertainty_dataset(const std::string& path, const NetworkCase& c,
                                            const FormCatalog& cat) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_uncertainty_dataset(ss.str(), c, cat);
}

std::uint64_t dataset_hash(const UncertaintyDataSet& ds) {
  Fnv1a h;
  h.update(serialize_uncertainty_dataset(ds));
  return h.value();
}

}  // namespace uaopf
