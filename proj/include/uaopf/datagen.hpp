#pragma once

#include <string>
#include <vector>

#include "uaopf/powerflow.hpp"

namespace uaopf {

// ---------------------------------------------------------------------------
// Synthetic history generation.
//
// A profile is one operating scenario: demands scaled by i.i.d. uniform
// factors, stochastic injections drawn from their configured intervals.
// Generating a dataset turns profiles into solved operating points.  The
// dispatch of non-reference generators follows an economic merit-order rule
// driven by the *perceived* (forecast-based) net load, mirroring how
// historical operating data comes from decisions made on forecasts; the power
// flow itself is always solved with the actual stochastic injections.
// ---------------------------------------------------------------------------

struct ForecastModel {
  double eps_max = 0.30;     // |u_tilde - u| <= eps_max * |u| componentwise
  std::uint64_t seed = 0;

  void validate() const {
    if (eps_max < 0.0) throw ValidationError("forecast eps_max must be nonnegative");
  }
};

struct Profile {
  InjectionVector pre;        // z = -scaled demand (no dispatch yet), u drawn
  std::uint64_t substream = 0;// deterministic per-profile tag for later draws
};

struct SampleConfig {
  int count = 1;
  std::uint64_t seed = 1;
  double range_lo = 0.8, range_hi = 1.2;  // demand scaling interval
};

std::vector<Profile> sample_profiles(const NetworkCase& c, const FormCatalog& cat,
                                     const SampleConfig& cfg);

/// u_tilde_i = u_i * (1 + delta_i), delta_i ~ U(-eps_max, eps_max) i.i.d.
/// The overload with an explicit stream is used inside dataset generation so
/// per-profile substreams stay aligned.
VectorXd apply_forecast_error(const VectorXd& u, const ForecastModel& model);
VectorXd apply_forecast_error(const VectorXd& u, const ForecastModel& model, RandomStream& rng);

struct DataPoint {
  VectorXd x;
  VectorXd y;  // full injection-equation block, reference rows included
};

struct UncertaintyDataPoint {
  VectorXd x;
  VectorXd u_forecast, u_actual, z;  // y = z + u_actual
};

struct DatasetHeader {
  std::string kind;
  std::uint64_t case_hash = 0;
  std::uint64_t seed = 0;
  int requested = 0, dropped = 0;
  double eps_max = 0.0;
  double range_lo = 0.0, range_hi = 0.0;
};

struct DataSet {
  DatasetHeader header;
  std::vector<DataPoint> points;
};

struct UncertaintyDataSet {
  DatasetHeader header;
  std::vector<UncertaintyDataPoint> points;

  DataSet project() const;  // drop forecasts, keep (x, z + u)
};

struct GenerationConfig {
  double min_converged_fraction = 0.9;
  double dispatch_jitter = 0.05;   // fraction of per-phase capability range
  double dispatch_share = 1.0;     // fraction of perceived net load assigned
  int threads = 1;
  PowerFlowOptions pf;
};

DataSet generate_dataset(const NetworkCase& c, const FormCatalog& cat,
                         const std::vector<Profile>& profiles,
                         const GenerationConfig& cfg = {});

UncertaintyDataSet generate_uncertainty_dataset(const NetworkCase& c, const FormCatalog& cat,
                                                const std::vector<Profile>& profiles,
                                                const ForecastModel& model,
                                                const GenerationConfig& cfg = {});

// Line-delimited on-disk form: one JSON header record, then one record per
// point with fields x[], y[], z[], u[], u_tilde[].
std::string serialize_uncertainty_dataset(const UncertaintyDataSet& ds);
UncertaintyDataSet parse_uncertainty_dataset(const std::string& text, const NetworkCase& c,
                                             const FormCatalog& cat);
void save_uncertainty_dataset(const UncertaintyDataSet& ds, const std::string& path);
UncertaintyDataSet load_uncertainty_dataset(const std::string& path, const NetworkCase& c,
                                            const FormCatalog& cat);

std::uint64_t dataset_hash(const UncertaintyDataSet& ds);

/// Merit-order dispatch of non-reference generators against a target active
/// load, equal-marginal-cost allocation clipped to bounds.  Exposed for tests.
struct DispatchDraw {
  VectorXd z_p, z_q;  // per (bus, phase) additions to the deterministic part
};
DispatchDraw dispatch_policy(const NetworkCase& c, double target_p, double target_q,
                             double jitter, RandomStream& rng);

}  // namespace uaopf
