// Command-line surface: gen-data, train, pf, opf, experiment.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uaopf/experiment.hpp"

namespace {

using namespace uaopf;

int log_level = 1;  // 0 quiet, 1 info, 2 debug

void info(const std::string& msg) {
  if (log_level >= 1) std::cerr << msg << "\n";
}

int cmd_gen_data(const std::string& case_path, int count, std::uint64_t seed, double eps,
                 double range_lo, double range_hi, int threads, const std::string& out_path) {
  const NetworkCase c = load_case_file(case_path);
  const FormCatalog cat = assemble_quadratic_forms(c);
  SampleConfig sample{count, seed, range_lo, range_hi};
  ForecastModel model;
  model.eps_max = eps;
  model.seed = seed;
  GenerationConfig gen;
  gen.threads = threads;
  auto profiles = sample_profiles(c, cat, sample);
  UncertaintyDataSet ds = generate_uncertainty_dataset(c, cat, profiles, model, gen);
  ds.header.seed = seed;
  ds.header.range_lo = range_lo;
  ds.header.range_hi = range_hi;
  save_uncertainty_dataset(ds, out_path);
  info("wrote " + std::to_string(ds.points.size()) + " points (" +
       std::to_string(ds.header.dropped) + " dropped) to " + out_path);
  return 0;
}

int cmd_train(const std::string& case_path, const std::string& data_path, const std::string& mode,
              bool full_support, int threads, const std::string& out_path) {
  const NetworkCase c = load_case_file(case_path);
  const FormCatalog cat = assemble_quadratic_forms(c);
  UncertaintyDataSet ds = load_uncertainty_dataset(data_path, c, cat);
  RegressionConfig rc;
  rc.full_support = full_support;
  const RegressionMode m =
      mode == "ua" ? RegressionMode::UncertaintyAware : RegressionMode::Deterministic;
  SurrogateBundle bundle = fit_all_surrogates(cat, ds, m, rc, threads);
  save_bundle(bundle, out_path);
  int unconverged = 0;
  double worst = 0.0;
  for (const auto& [eq, s] : bundle.by_equation) {
    if (!s.converged) ++unconverged;
    worst = std::max(worst, s.max_training_violation);
  }
  info("trained " + std::to_string(bundle.by_equation.size()) + " surrogates (" +
       std::to_string(unconverged) + " hit the iteration cap, max violation " +
       format_double(worst) + ") to " + out_path);
  return unconverged == 0 ? 0 : 2;
}

int cmd_pf(const std::string& case_path, const std::string& out_path) {
  const NetworkCase c = load_case_file(case_path);
  const FormCatalog cat = assemble_quadratic_forms(c);
  InjectionVector inj = InjectionVector::zero(cat);
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < c.phase_count; ++p) {
      inj.z[cat.injection_eq(b, p, false)] = -c.buses[b].pd[p];
      inj.z[cat.injection_eq(b, p, true)] = -c.buses[b].qd[p];
    }
  }
  inj.y = inj.z + inj.u;
  PowerFlowResult res = solve_power_flow(c, cat, inj, flat_start(c));
  nlohmann::json j;
  j["converged"] = res.converged;
  j["iterations"] = res.iterations;
  j["max_residual"] = res.max_residual;
  std::vector<double> xv(res.x.data(), res.x.data() + res.x.size());
  j["x"] = xv;
  nlohmann::json mags = nlohmann::json::array();
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < c.phase_count; ++p) {
      mags.push_back(evaluate_form(cat.forms[cat.magnitude_eq(b, p)], res.x));
    }
  }
  j["v_squared"] = mags;
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << text;
  }
  return res.converged ? 0 : 1;
}

int cmd_opf(const std::string& case_path, const std::string& surrogate_path,
            const std::string& forecast_path, const std::string& out_path) {
  const NetworkCase c = load_case_file(case_path);
  const FormCatalog cat = assemble_quadratic_forms(c);
  const OperationalLimits limits = build_limits(c);

  ScenarioInput scenario;
  scenario.z_fixed = VectorXd::Zero(cat.injection_count());
  scenario.u = VectorXd::Zero(cat.injection_count());
  for (int b = 0; b < c.n_bus(); ++b) {
    for (int p = 0; p < c.phase_count; ++p) {
      scenario.z_fixed[cat.injection_eq(b, p, false)] = -c.buses[b].pd[p];
      scenario.z_fixed[cat.injection_eq(b, p, true)] = -c.buses[b].qd[p];
      // Without an explicit forecast, stochastic injections sit at the middle
      // of their configured interval.
      if (c.buses[b].stochastic) {
        const auto& s = *c.buses[b].stochastic;
        scenario.u[cat.injection_eq(b, p, false)] = 0.5 * (s.p_min[p] + s.p_max[p]);
        scenario.u[cat.injection_eq(b, p, true)] = 0.5 * (s.q_min[p] + s.q_max[p]);
      }
    }
  }
  if (!forecast_path.empty()) {
    std::ifstream in(forecast_path);
    if (!in) throw ParseError("cannot open forecast file: " + forecast_path);
    nlohmann::json jf = nlohmann::json::parse(in);
    for (const auto& entry : jf.at("injections")) {
      const int b = c.bus_index(entry.at("bus").get<Index>());
      const int p = entry.value("phase", 0);
      if (entry.contains("p")) scenario.u[cat.injection_eq(b, p, false)] = entry.at("p").get<double>();
      if (entry.contains("q")) scenario.u[cat.injection_eq(b, p, true)] = entry.at("q").get<double>();
    }
  }

  OpfSolution sol;
  if (surrogate_path.empty()) {
    sol = solve_acopf(c, cat, scenario);
  } else {
    SurrogateBundle bundle = load_bundle(surrogate_path);
    if (bundle.case_hash != 0 && bundle.case_hash != case_hash(c)) {
      throw ValidationError("surrogate bundle was trained on a different case (hash mismatch)");
    }
    ThetaSet theta = build_theta(c, cat, bundle, limits);
    sol = solve_uao_opf(theta, scenario);
  }

  nlohmann::json j;
  j["status"] = to_string(sol.status);
  j["objective"] = sol.objective;
  j["kkt_residual"] = sol.kkt_residual;
  nlohmann::json disp = nlohmann::json::array();
  for (const auto& d : sol.dispatch) {
    disp.push_back({{"bus", c.buses[d.bus].id}, {"phase", d.phase}, {"p", d.p}, {"q", d.q}});
  }
  j["dispatch"] = disp;
  nlohmann::json slacks = nlohmann::json::array();
  for (const auto& s : sol.binding) slacks.push_back({{"constraint", s.name}, {"slack", s.slack}});
  j["tightest_constraints"] = slacks;
  if (!sol.v_lower_diagnostic.empty()) j["v_lower_diagnostic"] = sol.v_lower_diagnostic;
  if (!sol.message.empty()) j["message"] = sol.message;
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << text;
  }
  return sol.status == SolveStatus::Optimal ? 0 : 1;
}

int cmd_experiment(ExperimentConfig cfg, bool paper_scale, const std::string& out_json,
                   const std::string& out_csv) {
  if (paper_scale) {
    cfg.training_profiles = 5000;
    cfg.test_cases = 50;
  }
  Report rep = run_experiment(cfg);
  if (!out_json.empty()) emit_report(rep, ReportFormat::Json, out_json);
  if (!out_csv.empty()) emit_report(rep, ReportFormat::Csv, out_csv);
  std::cout << "E1 = " << format_double(100.0 * rep.e1) << "%  E2 = "
            << format_double(100.0 * rep.e2) << "%  (" << rep.included << " cases, "
            << rep.excluded << " excluded)\n";
  if (rep.included == 0) return 1;
  return rep.excluded == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven convex relaxation toolkit for uncertainty-aware three-phase OPF"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::uint64_t seed = 1;
  int threads = 1;
  app.add_option("--seed", seed, "global random seed")->envname("UAOPF_SEED");
  app.add_option("--threads", threads, "worker threads")->envname("UAOPF_THREADS");
  app.add_option("--log-level", log_level, "0=quiet, 1=info, 2=debug")->envname("UAOPF_LOG_LEVEL");

  auto* gen = app.add_subcommand("gen-data", "sample profiles, solve PF, write a dataset");
  std::string case_path, out_path;
  int count = 500;
  double eps = 0.3, range_lo = 0.8, range_hi = 1.2;
  gen->add_option("--case", case_path, "case file")->required()->envname("UAOPF_CASE");
  gen->add_option("--count", count, "number of profiles")->envname("UAOPF_COUNT");
  gen->add_option("--eps", eps, "max relative forecast error")->envname("UAOPF_EPS");
  gen->add_option("--range", [&range_lo, &range_hi](const std::vector<std::string>& vals) {
        const auto comma = vals[0].find(',');
        if (comma == std::string::npos) return false;
        range_lo = parse_double(vals[0].substr(0, comma));
        range_hi = parse_double(vals[0].substr(comma + 1));
        return true;
      }, "demand scaling interval lo,hi")->envname("UAOPF_RANGE");
  gen->add_option("--out", out_path, "output dataset path")->required()->envname("UAOPF_OUT");

  auto* train = app.add_subcommand("train", "fit surrogates from a dataset");
  std::string data_path, mode = "ua";
  bool full_support = false;
  train->add_option("--case", case_path, "case file")->required()->envname("UAOPF_CASE");
  train->add_option("--data", data_path, "dataset path")->required()->envname("UAOPF_DATA");
  train->add_option("--mode", mode, "det or ua")->check(CLI::IsMember({"det", "ua"}))->envname("UAOPF_MODE");
  train->add_flag("--full-support", full_support, "train P over the full state vector")->envname("UAOPF_FULL_SUPPORT");
  train->add_option("--out", out_path, "output bundle path")->required()->envname("UAOPF_OUT");

  auto* pf = app.add_subcommand("pf", "solve the base-demand power flow");
  pf->add_option("--case", case_path, "case file")->required()->envname("UAOPF_CASE");
  pf->add_option("--out", out_path, "solution path (stdout if omitted)")->envname("UAOPF_OUT");

  auto* opf = app.add_subcommand("opf", "solve an OPF (UaO with --surrogates, else ACOPF)");
  std::string surrogate_path, forecast_path;
  opf->add_option("--case", case_path, "case file")->required()->envname("UAOPF_CASE");
  opf->add_option("--surrogates", surrogate_path, "surrogate bundle (UaO mode)")->envname("UAOPF_SURROGATES");
  opf->add_option("--forecast", forecast_path, "forecast injections JSON")->envname("UAOPF_FORECAST");
  opf->add_option("--out", out_path, "report path (stdout if omitted)")->envname("UAOPF_OUT");

  auto* exp = app.add_subcommand("experiment", "run the three-scenario study");
  ExperimentConfig cfg;
  bool paper_scale = false;
  std::string out_csv;
  exp->add_option("--case", cfg.case_path, "case file")->required()->envname("UAOPF_CASE");
  exp->add_option("--train-count", cfg.training_profiles, "training profiles")->envname("UAOPF_TRAIN_COUNT");
  exp->add_option("--test-count", cfg.test_cases, "test cases")->envname("UAOPF_TEST_COUNT");
  exp->add_option("--eps", cfg.eps_max, "max relative forecast error")->envname("UAOPF_EPS");
  exp->add_flag("--paper-scale", paper_scale, "use 5000 profiles / 50 test cases")->envname("UAOPF_PAPER_SCALE");
  exp->add_flag("--full-support", cfg.regression.full_support,
                "train surrogates over the full state vector")
      ->envname("UAOPF_FULL_SUPPORT");
  exp->add_option("--out", out_path, "JSON report path")->envname("UAOPF_OUT");
  exp->add_option("--csv", out_csv, "CSV per-case table path")->envname("UAOPF_CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(case_path, count, seed, eps, range_lo, range_hi,
                                           threads, out_path);
    if (train->parsed()) return cmd_train(case_path, data_path, mode, full_support, threads,
                                          out_path);
    if (pf->parsed()) return cmd_pf(case_path, out_path);
    if (opf->parsed()) return cmd_opf(case_path, surrogate_path, forecast_path, out_path);
    if (exp->parsed()) {
      cfg.train_seed = seed == 1 ? cfg.train_seed : seed;
      cfg.test_seed = cfg.train_seed ^ 0x9e3779b97f4a7c15ULL;
      cfg.threads = threads;
      return cmd_experiment(cfg, paper_scale, out_path, out_csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
