#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uaopf/common.hpp"

namespace uaopf {

// ---------------------------------------------------------------------------
// Network case model.
//
// A case is a balanced (|phases| = 1) or unbalanced (|phases| = 3) network
// given in per unit.  Branch admittances are stored directly as conductance/
// susceptance blocks; voltage bounds are on the squared magnitude.  The case
// is immutable after load_case and safe to share across threads.
// ---------------------------------------------------------------------------

enum class BusType { Reference, Load, Generator };

struct StochasticInterval {
  // Per-phase bounds of the stochastic injection u (active / reactive).
  std::vector<double> p_min, p_max, q_min, q_max;
};

struct BusRecord {
  Index id = 0;
  BusType type = BusType::Load;
  std::vector<double> pd, qd;      // per-phase base demand, positive = consumption
  double v_min = 0.0, v_max = 0.0; // squared-magnitude bounds (pu^2)
  std::optional<StochasticInterval> stochastic;
  // Optional explicit net-injection box (per phase); overrides the derived one.
  std::optional<std::vector<double>> y_p_min, y_p_max, y_q_min, y_q_max;

  bool has_stochastic_p(int phase) const {
    return stochastic && (stochastic->p_min[phase] != 0.0 || stochastic->p_max[phase] != 0.0);
  }
  bool has_stochastic_q(int phase) const {
    return stochastic && (stochastic->q_min[phase] != 0.0 || stochastic->q_max[phase] != 0.0);
  }
};

struct BranchRecord {
  Index from = 0, to = 0;
  MatrixXd g, b;            // series admittance block, |phases| x |phases|
  MatrixXd g_shunt, b_shunt;// shunt block applied at each end
  double s_max = 0.0;       // apparent-power limit per phase; 0 = unlimited
};

struct GeneratorRecord {
  Index bus = 0;
  std::vector<int> phases;  // indices into the case phase set
  std::vector<double> p_min, p_max, q_min, q_max; // per listed phase
  double c2 = 0.0, c1 = 0.0, c0 = 0.0;            // cost c2 z^2 + c1 z + c0
};

struct NetworkCase {
  double base_mva = 100.0;
  int phase_count = 1;
  std::vector<BusRecord> buses;
  std::vector<BranchRecord> branches;
  std::vector<GeneratorRecord> generators;

  int reference_bus() const; // index into buses
  int bus_index(Index id) const;

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_branch() const { return static_cast<int>(branches.size()); }

  /// Global state ordering: bus-major, phase-minor, e before f.
  int var_e(int bus, int phase) const { return 2 * (bus * phase_count + phase); }
  int var_f(int bus, int phase) const { return var_e(bus, phase) + 1; }
  int state_dim() const { return 2 * n_bus() * phase_count; }

  /// Buses adjacent to `bus` (excluding itself), ascending, deduplicated.
  std::vector<int> neighbors(int bus) const;
};

// Box limits over injections, directed branch flows, and squared voltages.
struct OperationalLimits {
  VectorXd p_lo, p_hi;     // length n_bus * phases, net active injection
  VectorXd q_lo, q_hi;     // length n_bus * phases
  VectorXd flow_s_max;     // length 2 * n_branch * phases, 0 = unlimited
  VectorXd v_lo, v_hi;     // length n_bus, squared magnitude
};

/// Parse and validate a case from JSON text.  Throws ParseError on malformed
/// input and ValidationError naming the violated invariant otherwise.
NetworkCase load_case(const std::string& text);

NetworkCase load_case_file(const std::string& path);

/// Serialize a case back to JSON; load_case(serialize_case(c)) == c field-wise.
std::string serialize_case(const NetworkCase& c);

/// Assemble the flattened limit set from bus demands, generator bounds and
/// stochastic intervals.  Buses with neither collapse to a width-zero box at
/// the negated demand.
OperationalLimits build_limits(const NetworkCase& c);

bool cases_equal(const NetworkCase& a, const NetworkCase& b);

std::uint64_t case_hash(const NetworkCase& c);

}  // namespace uaopf
