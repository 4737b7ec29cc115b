#include "uaopf/regression.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

namespace uaopf {

using nlohmann::json;

double Surrogate::evaluate(const VectorXd& x_full) const {
  const int n = static_cast<int>(support.size());
  VectorXd s(n);
  for (int i = 0; i < n; ++i) s[i] = x_full[support[i]];
  return s.dot(P * s) + B.dot(s) + c;
}

VectorXd Surrogate::gradient_on_support(const VectorXd& x_full) const {
  const int n = static_cast<int>(support.size());
  VectorXd s(n);
  for (int i = 0; i < n; ++i) s[i] = x_full[support[i]];
  return 2.0 * (P * s) + B;
}

MatrixXd project_psd(const MatrixXd& symmetric) {
  if (symmetric.rows() != symmetric.cols()) {
    throw ValidationError("project_psd requires a square matrix");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("project_psd: eigensolver did not converge");
  }
  if (es.eigenvalues().minCoeff() >= 0.0) return symmetric;
  VectorXd d = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<int> trained_equations(const FormCatalog& cat) {
  std::vector<int> eqs;
  for (int e = 0; e < cat.injection_count() + cat.flow_count(); ++e) eqs.push_back(e);
  return eqs;
}

EquationSamples extract_samples(const FormCatalog& cat, const UncertaintyDataSet& ds,
                                int equation, RegressionMode mode, bool full_support) {
  if (equation < 0 || equation >= cat.total()) throw ValidationError("unknown equation id");
  const QuadraticForm& form = cat.forms[equation];
  if (form.kind == FormKind::VoltageMagnitude) {
    throw ValidationError("magnitude equations are natively convex and are not trained");
  }
  if (ds.points.empty()) throw ValidationError("empty dataset");

  EquationSamples s;
  s.equation = equation;
  if (full_support) {
    const int dim = static_cast<int>(ds.points.front().x.size());
    s.support.resize(dim);
    for (int i = 0; i < dim; ++i) s.support[i] = i;
  } else {
    s.support = form.support;
  }
  const int N = static_cast<int>(ds.points.size());
  const int n = static_cast<int>(s.support.size());
  s.X.resize(N, n);
  s.y_actual.resize(N);
  s.y_objective.resize(N);
  const bool is_injection = equation < cat.injection_count();
  for (int k = 0; k < N; ++k) {
    const auto& p = ds.points[k];
    for (int i = 0; i < n; ++i) s.X(k, i) = p.x[s.support[i]];
    if (is_injection) {
      s.y_actual[k] = p.z[equation] + p.u_actual[equation];
      s.y_objective[k] = mode == RegressionMode::UncertaintyAware
                             ? p.z[equation] + p.u_forecast[equation]
                             : s.y_actual[k];
    } else {
      // Flow equations have no stochastic component; both targets coincide.
      s.y_actual[k] = evaluate_form(form, p.x);
      s.y_objective[k] = s.y_actual[k];
    }
  }
  return s;
}

namespace {

// theta layout: P upper triangle (row-major, i <= j), then B, then c.
struct ThetaLayout {
  int n = 0;
  int p_len = 0, total = 0;

  explicit ThetaLayout(int support_size)
      : n(support_size), p_len(support_size * (support_size + 1) / 2),
        total(p_len + support_size + 1) {}

  int p_index(int i, int j) const {  // i <= j
    return i * n - i * (i - 1) / 2 + (j - i);
  }
  int b_index(int i) const { return p_len + i; }
  int c_index() const { return p_len + n; }

  MatrixXd p_matrix(const VectorXd& theta) const {
    MatrixXd P(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) P(i, j) = P(j, i) = theta[p_index(i, j)];
    return P;
  }
  void set_p(VectorXd& theta, const MatrixXd& P) const {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) theta[p_index(i, j)] = P(i, j);
  }
  /// Frobenius weights of the P coordinates (1 on the diagonal, 2 off it).
  VectorXd p_weights() const {
    VectorXd w = VectorXd::Zero(total);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) w[p_index(i, j)] = i == j ? 1.0 : 2.0;
    return w;
  }
};

VectorXd feature_row(const ThetaLayout& lay, const Eigen::RowVectorXd& x) {
  VectorXd phi(lay.total);
  for (int i = 0; i < lay.n; ++i)
    for (int j = i; j < lay.n; ++j) {
      phi[lay.p_index(i, j)] = i == j ? x[i] * x[i] : 2.0 * x[i] * x[j];
    }
  for (int i = 0; i < lay.n; ++i) phi[lay.b_index(i)] = x[i];
  phi[lay.c_index()] = 1.0;
  return phi;
}

}  // namespace

Surrogate fit_equation(const EquationSamples& samples, const RegressionConfig& cfg) {
  const int N = static_cast<int>(samples.X.rows());
  const int n = static_cast<int>(samples.X.cols());
  if (N < 1) throw ValidationError("empty training set");
  const ThetaLayout lay(n);

  // Fit in centered, variance-scaled coordinates: raw voltage products are
  // nearly collinear with the linear and constant features, which stalls the
  // ADMM.  The diagonal congruence P = D^-1 P~ D^-1 preserves semidefiniteness,
  // so this is an exact reparametrization.
  VectorXd center(n), scale(n);
  for (int i = 0; i < n; ++i) {
    center[i] = samples.X.col(i).mean();
    const double var = (samples.X.col(i).array() - center[i]).square().sum() / std::max(1, N);
    scale[i] = std::max(std::sqrt(var), 1e-6);
  }
  MatrixXd Xn(N, n);
  for (int k = 0; k < N; ++k)
    for (int i = 0; i < n; ++i) Xn(k, i) = (samples.X(k, i) - center[i]) / scale[i];

  MatrixXd Phi(N, lay.total);
  for (int k = 0; k < N; ++k) Phi.row(k) = feature_row(lay, Xn.row(k)).transpose();

  const VectorXd& y_act = samples.y_actual;
  const VectorXd& y_obj = samples.y_objective;
  const VectorXd pw = lay.p_weights();

  const bool deficient = Eigen::ColPivHouseholderQR<MatrixXd>(Phi).rank() < lay.total;

  const MatrixXd PhiT_Phi = Phi.transpose() * Phi;
  const VectorXd PhiT_yobj = Phi.transpose() * y_obj;
  // Tiny Tikhonov term keeps the normal matrix invertible for degenerate data
  // (all states identical); it selects the minimum-norm optimum.
  const double reg = 1e-11 * (PhiT_Phi.trace() / lay.total + 1.0);

  double rho = cfg.rho;
  Eigen::LDLT<MatrixXd> solver;
  auto refactor = [&]() {
    MatrixXd M = (2.0 / N + rho) * PhiT_Phi;
    M.diagonal() += rho * pw;
    M.diagonal().array() += reg;
    solver.compute(M);
  };
  refactor();

  VectorXd theta = VectorXd::Zero(lay.total);
  VectorXd s = VectorXd::Zero(N);          // slack copy of the actual residual
  VectorXd w = VectorXd::Zero(N);          // its scaled dual
  MatrixXd Z = MatrixXd::Zero(n, n);       // PSD copy of P
  MatrixXd W = MatrixXd::Zero(n, n);       // its scaled dual

  Surrogate out;
  out.equation = samples.equation;
  out.support = samples.support;
  out.rank_deficient = deficient;

  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    // theta-step: smooth LS + proximity to the two consensus copies.
    VectorXd rhs = (2.0 / N) * PhiT_yobj + rho * (Phi.transpose() * (y_act + s - w));
    const MatrixXd ZW = Z - W;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) rhs[lay.p_index(i, j)] += rho * pw[lay.p_index(i, j)] * ZW(i, j);
    theta = solver.solve(rhs);

    const VectorXd r_act = Phi * theta - y_act;
    const MatrixXd P = lay.p_matrix(theta);

    const VectorXd s_old = s;
    const MatrixXd Z_old = Z;
    // Over-relaxation (alpha = 1.7) on the consensus updates.
    const double alpha = 1.7;
    const VectorXd r_hat = alpha * r_act + (1.0 - alpha) * s_old;
    const MatrixXd P_hat = alpha * P + (1.0 - alpha) * Z_old;
    s = (r_hat + w).cwiseMin(0.0);
    Z = project_psd(P_hat + W);

    w += r_hat - s;
    W += P_hat - Z;

    // Scaled residuals over both consensus constraints.
    const double pri = std::sqrt((r_act - s).squaredNorm() + (P - Z).squaredNorm());
    const double dual = rho * std::sqrt((Phi.transpose() * (s - s_old)).squaredNorm() +
                                        (Z - Z_old).squaredNorm());
    const double eps_pri = std::sqrt(static_cast<double>(N + n * n)) * cfg.eps_abs +
                           cfg.eps_rel * std::max({r_act.norm(), s.norm(), P.norm(), Z.norm()});
    const double eps_dual = std::sqrt(static_cast<double>(lay.total)) * cfg.eps_abs +
                            cfg.eps_rel * rho *
                                std::sqrt((Phi.transpose() * w).squaredNorm() + W.squaredNorm());
    if (pri <= eps_pri && dual <= eps_dual) {
      out.converged = true;
      ++it;
      break;
    }
    if (pri > cfg.rho_adapt_ratio * dual) {
      rho *= cfg.rho_adapt_factor;
      w /= cfg.rho_adapt_factor;
      W /= cfg.rho_adapt_factor;
      refactor();
    } else if (dual > cfg.rho_adapt_ratio * pri) {
      rho /= cfg.rho_adapt_factor;
      w *= cfg.rho_adapt_factor;
      W *= cfg.rho_adapt_factor;
      refactor();
    }
  }
  out.iterations = it;

  // Final iterate: use the PSD copy for P, map back to raw coordinates, then
  // restore exact feasibility of the training inequalities by shifting c down
  // by any residual violation.
  const MatrixXd Pn = project_psd(lay.p_matrix(theta));
  VectorXd Bn(n);
  for (int i = 0; i < n; ++i) Bn[i] = theta[lay.b_index(i)];
  const double cn = theta[lay.c_index()];

  out.P.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.P(i, j) = Pn(i, j) / (scale[i] * scale[j]);
  const VectorXd b_scaled = Bn.cwiseQuotient(scale);
  out.B = b_scaled - 2.0 * (out.P * center);
  out.c = cn + center.dot(out.P * center) - b_scaled.dot(center);

  double max_violation = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < N; ++k) {
    VectorXd xs = samples.X.row(k).transpose();
    const double h = xs.dot(out.P * xs) + out.B.dot(xs) + out.c;
    max_violation = std::max(max_violation, h - y_act[k]);
  }
  if (max_violation > 0.0) out.c -= max_violation;

  double obj = 0.0;
  max_violation = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < N; ++k) {
    VectorXd xs = samples.X.row(k).transpose();
    const double h = xs.dot(out.P * xs) + out.B.dot(xs) + out.c;
    const double m = h - y_obj[k];
    obj += m * m;
    max_violation = std::max(max_violation, h - y_act[k]);
  }
  out.objective = obj / N;
  out.max_training_violation = max_violation;
  return out;
}

Surrogate fit_surrogate(const FormCatalog& cat, const DataSet& ds, int equation,
                        const RegressionConfig& cfg) {
  // A deterministic dataset is the eps=0 projection of an uncertainty one.
  UncertaintyDataSet wrapped;
  wrapped.header = ds.header;
  wrapped.points.reserve(ds.points.size());
  for (const auto& p : ds.points) {
    UncertaintyDataPoint up;
    up.x = p.x;
    up.z = p.y;
    up.u_actual = VectorXd::Zero(p.y.size());
    up.u_forecast = up.u_actual;
    wrapped.points.push_back(std::move(up));
  }
  return fit_equation(extract_samples(cat, wrapped, equation, RegressionMode::Deterministic,
                                      cfg.full_support),
                      cfg);
}

Surrogate fit_surrogate_uncertainty(const FormCatalog& cat, const UncertaintyDataSet& ds,
                                    int equation, const RegressionConfig& cfg) {
  return fit_equation(extract_samples(cat, ds, equation, RegressionMode::UncertaintyAware,
                                      cfg.full_support),
                      cfg);
}

SurrogateBundle fit_all_surrogates(const FormCatalog& cat, const UncertaintyDataSet& ds,
                                   RegressionMode mode, const RegressionConfig& cfg,
                                   int threads) {
  SurrogateBundle bundle;
  bundle.case_hash = ds.header.case_hash;
  bundle.dataset_hash = dataset_hash(ds);
  bundle.mode = mode;
  bundle.full_support = cfg.full_support;

  const std::vector<int> eqs = trained_equations(cat);
  std::vector<Surrogate> fitted(eqs.size());
  auto fit_one = [&](std::size_t i) {
    fitted[i] = fit_equation(extract_samples(cat, ds, eqs[i], mode, cfg.full_support), cfg);
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < eqs.size(); ++i) fit_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= eqs.size()) return;
        fit_one(i);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < eqs.size(); ++i) bundle.by_equation[eqs[i]] = std::move(fitted[i]);
  return bundle;
}

std::string serialize_bundle(const SurrogateBundle& b) {
  std::ostringstream out;
  char hex[17];
  json h;
  h["kind"] = "surrogate_bundle";
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(b.case_hash));
  h["case_hash"] = std::string(hex);
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(b.dataset_hash));
  h["dataset_hash"] = std::string(hex);
  h["mode"] = b.mode == RegressionMode::UncertaintyAware ? "ua" : "det";
  h["full_support"] = b.full_support;
  h["count"] = b.by_equation.size();
  out << h.dump() << "\n";
  for (const auto& [eq, s] : b.by_equation) {
    json r;
    r["equation"] = eq;
    r["support"] = s.support;
    std::vector<double> pflat;
    for (int i = 0; i < s.P.rows(); ++i)
      for (int j = 0; j < s.P.cols(); ++j) pflat.push_back(s.P(i, j));
    r["P"] = pflat;
    std::vector<double> bflat(s.B.data(), s.B.data() + s.B.size());
    r["B"] = bflat;
    r["c"] = s.c;
    r["objective"] = s.objective;
    r["iterations"] = s.iterations;
    r["max_training_violation"] = s.max_training_violation;
    r["converged"] = s.converged;
    r["rank_deficient"] = s.rank_deficient;
    out << r.dump() << "\n";
  }
  return out.str();
}

SurrogateBundle parse_bundle(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("bundle file is empty");
  json h;
  try {
    h = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bad bundle header: ") + e.what());
  }
  SurrogateBundle b;
  b.case_hash = std::stoull(h.value("case_hash", std::string("0")), nullptr, 16);
  b.dataset_hash = std::stoull(h.value("dataset_hash", std::string("0")), nullptr, 16);
  b.mode = h.value("mode", std::string("det")) == "ua" ? RegressionMode::UncertaintyAware
                                                       : RegressionMode::Deterministic;
  b.full_support = h.value("full_support", false);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json r = json::parse(line);
    Surrogate s;
    s.equation = r.at("equation").get<int>();
    s.support = r.at("support").get<std::vector<int>>();
    const int n = static_cast<int>(s.support.size());
    const auto pflat = r.at("P").get<std::vector<double>>();
    if (static_cast<int>(pflat.size()) != n * n) throw ParseError("bundle P size mismatch");
    s.P.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s.P(i, j) = pflat[i * n + j];
    const auto bflat = r.at("B").get<std::vector<double>>();
    if (static_cast<int>(bflat.size()) != n) throw ParseError("bundle B size mismatch");
    s.B = Eigen::Map<const VectorXd>(bflat.data(), n);
    s.c = r.at("c").get<double>();
    s.objective = r.value("objective", 0.0);
    s.iterations = r.value("iterations", 0);
    s.max_training_violation = r.value("max_training_violation", 0.0);
    s.converged = r.value("converged", true);
    s.rank_deficient = r.value("rank_deficient", false);
    b.by_equation[s.equation] = std::move(s);
  }
  return b;
}

void save_bundle(const SurrogateBundle& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << serialize_bundle(b);
}

SurrogateBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open bundle file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_bundle(ss.str());
}

ContainmentReport validate_relaxation(const SurrogateBundle& b, const FormCatalog& cat,
                                      const DataSet& ds, double tolerance) {
  ContainmentReport rep;
  if (ds.points.empty()) return rep;
  const int N = static_cast<int>(ds.points.size());
  std::vector<int> joint_ok(N, 1);
  for (const auto& [eq, s] : b.by_equation) {
    EquationContainment ec;
    ec.equation = eq;
    ec.max_violation = -std::numeric_limits<double>::infinity();
    int contained = 0;
    double sum = 0.0;
    const bool is_injection = eq < cat.injection_count();
    for (int k = 0; k < N; ++k) {
      const auto& p = ds.points[k];
      const double y = is_injection ? p.y[eq] : evaluate_form(cat.forms[eq], p.x);
      const double v = s.evaluate(p.x) - y;
      ec.max_violation = std::max(ec.max_violation, v);
      sum += v;
      if (v <= tolerance) ++contained;
      else joint_ok[k] = 0;
    }
    ec.mean_violation = sum / N;
    ec.contained_fraction = static_cast<double>(contained) / N;
    rep.min_contained_fraction = std::min(rep.min_contained_fraction, ec.contained_fraction);
    rep.per_equation.push_back(ec);
  }
  int joint = 0;
  for (int k = 0; k < N; ++k) joint += joint_ok[k];
  rep.joint_contained_fraction = N > 0 ? static_cast<double>(joint) / N : 0.0;
  return rep;
}

}  // namespace uaopf
