#include "uaopf/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace uaopf {

using nlohmann::json;

std::pair<double, double> compute_error_metrics(const std::vector<ScenarioResult>& results) {
  if (results.empty()) throw ValidationError("no scenario results to average");
  double e1 = 0.0, e2 = 0.0;
  for (const auto& r : results) {
    if (!(r.c1 > 0.0)) {
      throw ValidationError("reference cost must be positive (case " + std::to_string(r.index) +
                            ")");
    }
    e1 += std::abs(r.c1 - r.c2) / r.c1;
    e2 += std::abs(r.c1 - r.c3) / r.c1;
  }
  const double n = static_cast<double>(results.size());
  return {e1 / n, e2 / n};
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["case_path"] = cfg.case_path;
  j["training_profiles"] = cfg.training_profiles;
  j["test_cases"] = cfg.test_cases;
  j["eps_max"] = cfg.eps_max;
  j["range"] = {cfg.range_lo, cfg.range_hi};
  j["train_seed"] = cfg.train_seed;
  j["test_seed"] = cfg.test_seed;
  j["full_support"] = cfg.regression.full_support;
  j["dispatch_jitter"] = cfg.generation.dispatch_jitter;
  return j;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const NetworkCase c = load_case_file(cfg.case_path);
  const FormCatalog cat = assemble_quadratic_forms(c);
  const OperationalLimits limits = build_limits(c);

  Report rep;
  rep.case_hash_hex = hex64(case_hash(c));
  rep.config_echo = config_json(cfg).dump();

  // Training: profiles -> uncertainty dataset -> uncertainty-aware surrogates.
  SampleConfig sample;
  sample.count = cfg.training_profiles;
  sample.seed = cfg.train_seed;
  sample.range_lo = cfg.range_lo;
  sample.range_hi = cfg.range_hi;
  const std::vector<Profile> profiles = sample_profiles(c, cat, sample);

  ForecastModel model;
  model.eps_max = cfg.eps_max;
  model.seed = cfg.train_seed;

  GenerationConfig gen = cfg.generation;
  gen.threads = cfg.threads;
  UncertaintyDataSet ds = generate_uncertainty_dataset(c, cat, profiles, model, gen);
  ds.header.seed = cfg.train_seed;
  ds.header.range_lo = cfg.range_lo;
  ds.header.range_hi = cfg.range_hi;
  rep.pf_points = static_cast<long long>(ds.points.size());
  rep.pf_dropped = ds.header.dropped;
  rep.dataset_hash_hex = hex64(dataset_hash(ds));

  SurrogateBundle bundle =
      fit_all_surrogates(cat, ds, RegressionMode::UncertaintyAware, cfg.regression, cfg.threads);
  for (const auto& [eq, s] : bundle.by_equation) rep.regression_iterations += s.iterations;
  {
    Fnv1a h;
    h.update(serialize_bundle(bundle));
    rep.surrogate_hash_hex = hex64(h.value());
  }

  const ThetaSet theta = build_theta(c, cat, bundle, limits);

  // Held-out test draws from a disjoint seed stream.
  SampleConfig test_sample = sample;
  test_sample.count = cfg.test_cases;
  test_sample.seed = cfg.test_seed;
  const std::vector<Profile> tests = sample_profiles(c, cat, test_sample);

  rep.cases.resize(tests.size());
  std::atomic<long long> opf_iters{0};
  auto run_case = [&](std::size_t i) {
    const Profile& pr = tests[i];
    RandomStream rng(pr.substream);
    ForecastModel test_model;
    test_model.eps_max = cfg.eps_max;
    const VectorXd u_tilde = apply_forecast_error(pr.pre.u, test_model, rng);

    ScenarioResult sr;
    sr.index = static_cast<int>(i);
    const ScenarioInput with_actual{pr.pre.z, pr.pre.u};
    const ScenarioInput with_forecast{pr.pre.z, u_tilde};

    OpfSolution s1 = solve_acopf(c, cat, with_actual, cfg.acopf);
    OpfSolution s2 = solve_acopf(c, cat, with_forecast, cfg.acopf);
    OpfSolution s3 = solve_uao_opf(theta, with_forecast, cfg.barrier);
    sr.c1 = s1.objective;
    sr.c2 = s2.objective;
    sr.c3 = s3.objective;
    sr.s1 = s1.status;
    sr.s2 = s2.status;
    sr.s3 = s3.status;
    opf_iters += s1.iterations + s2.iterations + s3.iterations;
    rep.cases[i] = sr;
  };
  if (cfg.threads <= 1) {
    for (std::size_t i = 0; i < tests.size(); ++i) run_case(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tests.size()) return;
        run_case(i);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < cfg.threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  rep.opf_iterations = opf_iters.load();

  std::vector<ScenarioResult> included;
  for (const auto& r : rep.cases) {
    if (r.included()) included.push_back(r);
    else ++rep.excluded;
  }
  rep.included = static_cast<int>(included.size());
  if (!included.empty()) {
    auto [e1, e2] = compute_error_metrics(included);
    rep.e1 = e1;
    rep.e2 = e2;
  }
  return rep;
}

std::string report_to_json(const Report& r) {
  json j;
  j["e1"] = r.e1;
  j["e2"] = r.e2;
  j["included"] = r.included;
  j["excluded"] = r.excluded;
  j["case_hash"] = r.case_hash_hex;
  j["dataset_hash"] = r.dataset_hash_hex;
  j["surrogate_hash"] = r.surrogate_hash_hex;
  j["effort"] = {{"pf_points", r.pf_points},
                 {"pf_dropped", r.pf_dropped},
                 {"regression_iterations", r.regression_iterations},
                 {"opf_iterations", r.opf_iterations}};
  j["config"] = json::parse(r.config_echo.empty() ? "{}" : r.config_echo);
  json rows = json::array();
  for (const auto& sc : r.cases) {
    json row;
    row["case"] = sc.index;
    row["c1"] = sc.c1;
    row["c2"] = sc.c2;
    row["c3"] = sc.c3;
    row["status1"] = to_string(sc.s1);
    row["status2"] = to_string(sc.s2);
    row["status3"] = to_string(sc.s3);
    row["included"] = sc.included();
    rows.push_back(row);
  }
  j["cases"] = rows;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const Report& r) {
  std::ostringstream out;
  out << "case,c1,c2,c3\n";
  for (const auto& sc : r.cases) {
    if (!sc.included()) continue;  // excluded cases are listed in the JSON report
    out << sc.index << ',' << format_double(sc.c1) << ',' << format_double(sc.c2) << ','
        << format_double(sc.c3) << "\n";
  }
  return out.str();
}

void emit_report(const Report& r, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open report path for writing: " + path);
  out << (format == ReportFormat::Json ? report_to_json(r) : report_to_csv(r));
  if (!out) throw ParseError("failed writing report: " + path);
}

}  // namespace uaopf
