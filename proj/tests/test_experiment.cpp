#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uaopf/experiment.hpp"

using namespace uaopf;

namespace {

ScenarioResult row(int idx, double c1, double c2, double c3) {
  ScenarioResult r;
  r.index = idx;
  r.c1 = c1;
  r.c2 = c2;
  r.c3 = c3;
  r.s1 = r.s2 = r.s3 = SolveStatus::Optimal;
  return r;
}

}  // namespace

TEST_CASE("error metrics follow the defining formula") {
  std::vector<ScenarioResult> rs;
  for (int i = 0; i < 4; ++i) rs.push_back(row(i, 100.0, 110.0, 100.0));
  auto [e1, e2] = compute_error_metrics(rs);
  CHECK(e1 == doctest::Approx(0.10));
  CHECK(e2 == doctest::Approx(0.0));

  auto [f1, f2] = compute_error_metrics({row(0, 1.0, 1.0, 2.0)});
  CHECK(f1 == doctest::Approx(0.0));
  CHECK(f2 == doctest::Approx(1.0));
}

TEST_CASE("error metric error paths") {
  CHECK_THROWS_AS(compute_error_metrics({}), ValidationError);
  CHECK_THROWS_WITH_AS(compute_error_metrics({row(0, 0.0, 1.0, 1.0)}),
                       doctest::Contains("positive"), ValidationError);
  CHECK_THROWS_AS(compute_error_metrics({row(0, -2.0, 1.0, 1.0)}), ValidationError);
}

TEST_CASE("metrics are invariant under uniform cost scaling") {
  std::vector<ScenarioResult> rs;
  RandomStream rng(5);
  for (int i = 0; i < 10; ++i) {
    const double c1 = rng.next_uniform(5.0, 50.0);
    rs.push_back(row(i, c1, c1 * rng.next_uniform(0.7, 1.3), c1 * rng.next_uniform(0.8, 1.2)));
  }
  auto [e1, e2] = compute_error_metrics(rs);
  std::vector<ScenarioResult> scaled = rs;
  for (auto& r : scaled) {
    r.c1 *= 7.0;
    r.c2 *= 7.0;
    r.c3 *= 7.0;
  }
  auto [s1, s2] = compute_error_metrics(scaled);
  CHECK(s1 == doctest::Approx(e1).epsilon(1e-12));
  CHECK(s2 == doctest::Approx(e2).epsilon(1e-12));
}

TEST_CASE("excluding a case changes the mean exactly as arithmetic predicts") {
  std::vector<ScenarioResult> rs;
  for (int i = 0; i < 5; ++i) rs.push_back(row(i, 10.0 + i, 11.0 + i, 9.5 + i));
  auto [e1_all, e2_all] = compute_error_metrics(rs);
  std::vector<ScenarioResult> dropped(rs.begin(), rs.end() - 1);
  auto [e1_drop, e2_drop] = compute_error_metrics(dropped);
  const auto& last = rs.back();
  const double n = 5.0;
  CHECK(e1_drop == doctest::Approx((e1_all * n - std::abs(last.c1 - last.c2) / last.c1) / (n - 1)));
  CHECK(e2_drop == doctest::Approx((e2_all * n - std::abs(last.c1 - last.c3) / last.c1) / (n - 1)));
}

TEST_CASE("experiment pipeline runs end to end and is deterministic") {
  ExperimentConfig cfg;
  cfg.case_path = std::string(UAOPF_DATA_DIR) + "/case5.json";
  cfg.training_profiles = 60;
  cfg.test_cases = 4;
  cfg.threads = 4;
  Report a = run_experiment(cfg);
  Report b = run_experiment(cfg);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(a.included + a.excluded == 4);
  CHECK(a.e1 >= 0.0);
  CHECK(a.e2 >= 0.0);
  CHECK_FALSE(a.case_hash_hex.empty());
  CHECK_FALSE(a.dataset_hash_hex.empty());
}

TEST_CASE("json report re-parses to the same values and csv counts included rows") {
  ExperimentConfig cfg;
  cfg.case_path = std::string(UAOPF_DATA_DIR) + "/case5.json";
  cfg.training_profiles = 50;
  cfg.test_cases = 3;
  cfg.threads = 4;
  Report rep = run_experiment(cfg);

  const std::string json_text = report_to_json(rep);
  auto parsed = nlohmann::json::parse(json_text);
  CHECK(parsed.at("e1").get<double>() == rep.e1);
  CHECK(parsed.at("e2").get<double>() == rep.e2);
  CHECK(parsed.at("included").get<int>() == rep.included);
  CHECK(parsed.at("cases").size() == rep.cases.size());
  CHECK(parsed.at("case_hash").get<std::string>() == rep.case_hash_hex);

  const std::string csv = report_to_csv(rep);
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == rep.included + 1);

  // hashes in the report match a recomputation from the inputs
  NetworkCase c = load_case_file(cfg.case_path);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(case_hash(c)));
  CHECK(rep.case_hash_hex == std::string(buf));
}

TEST_CASE("emit_report writes files") {
  ExperimentConfig cfg;
  cfg.case_path = std::string(UAOPF_DATA_DIR) + "/case2.json";
  cfg.training_profiles = 30;
  cfg.test_cases = 2;
  cfg.threads = 2;
  Report rep = run_experiment(cfg);
  const std::string jpath = "/tmp/uaopf_test_report.json";
  const std::string cpath = "/tmp/uaopf_test_report.csv";
  emit_report(rep, ReportFormat::Json, jpath);
  emit_report(rep, ReportFormat::Csv, cpath);
  std::ifstream jin(jpath);
  std::stringstream js;
  js << jin.rdbuf();
  CHECK(js.str() == report_to_json(rep));
  std::ifstream cin_(cpath);
  std::stringstream cs;
  cs << cin_.rdbuf();
  CHECK(cs.str() == report_to_csv(rep));
  CHECK_THROWS_AS(emit_report(rep, ReportFormat::Json, "/nonexistent_dir_zz/x.json"), ParseError);
}
