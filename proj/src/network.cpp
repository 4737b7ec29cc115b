#include "uaopf/network.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace uaopf {

using nlohmann::json;

int NetworkCase::reference_bus() const {
  for (int i = 0; i < n_bus(); ++i) {
    if (buses[i].type == BusType::Reference) return i;
  }
  throw ValidationError("case has no reference bus");
}

int NetworkCase::bus_index(Index id) const {
  for (int i = 0; i < n_bus(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw ValidationError("unknown bus id " + std::to_string(id));
}

std::vector<int> NetworkCase::neighbors(int bus) const {
  std::set<int> nb;
  for (const auto& br : branches) {
    int fi = bus_index(br.from);
    int ti = bus_index(br.to);
    if (fi == bus) nb.insert(ti);
    if (ti == bus) nb.insert(fi);
  }
  return {nb.begin(), nb.end()};
}

namespace {

std::vector<double> read_phase_array(const json& j, const std::string& key, int phases,
                                     const std::string& where) {
  if (!j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  const json& v = j.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != phases) {
    throw ParseError(where + ": field '" + key + "' must be an array of length " +
                     std::to_string(phases));
  }
  std::vector<double> out(phases);
  for (int p = 0; p < phases; ++p) {
    if (!v[p].is_number()) throw ParseError(where + ": '" + key + "' entry is not a number");
    out[p] = v[p].get<double>();
  }
  return out;
}

MatrixXd read_block(const json& j, const std::string& key, int phases, const std::string& where,
                    bool required) {
  if (!j.contains(key)) {
    if (required) throw ParseError(where + ": missing admittance block '" + key + "'");
    return MatrixXd::Zero(phases, phases);
  }
  const json& v = j.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != phases * phases) {
    throw ParseError(where + ": block '" + key + "' must be a row-major array of length " +
                     std::to_string(phases * phases));
  }
  MatrixXd m(phases, phases);
  for (int r = 0; r < phases; ++r)
    for (int c = 0; c < phases; ++c) m(r, c) = v[r * phases + c].get<double>();
  return m;
}

void validate(const NetworkCase& c) {
  if (c.phase_count != 1 && c.phase_count != 3) {
    throw ValidationError("phases must be 1 or 3");
  }
  if (c.buses.empty()) throw ValidationError("case has no buses");

  std::set<Index> ids;
  int refs = 0;
  for (const auto& bus : c.buses) {
    if (!ids.insert(bus.id).second) {
      throw ValidationError("duplicate bus id " + std::to_string(bus.id));
    }
    if (bus.type == BusType::Reference) ++refs;
    if (!(bus.v_min > 0.0) || bus.v_min > bus.v_max) {
      throw ValidationError("bus " + std::to_string(bus.id) +
                            ": voltage bounds require 0 < vmin <= vmax");
    }
    if (bus.type == BusType::Reference && bus.stochastic) {
      throw ValidationError("bus " + std::to_string(bus.id) +
                            ": reference bus cannot carry stochastic injections");
    }
    if (bus.stochastic) {
      for (int p = 0; p < c.phase_count; ++p) {
        if (bus.stochastic->p_min[p] > bus.stochastic->p_max[p] ||
            bus.stochastic->q_min[p] > bus.stochastic->q_max[p]) {
          throw ValidationError("bus " + std::to_string(bus.id) +
                                ": stochastic interval lower bound exceeds upper");
        }
      }
    }
  }
  if (refs != 1) {
    throw ValidationError("exactly one reference bus required, found " + std::to_string(refs));
  }

  for (std::size_t k = 0; k < c.branches.size(); ++k) {
    const auto& br = c.branches[k];
    const std::string where = "branch " + std::to_string(k);
    if (!ids.count(br.from) || !ids.count(br.to)) {
      throw ValidationError(where + ": endpoint references unknown bus");
    }
    if (br.from == br.to) throw ValidationError(where + ": self-loop");
    if (br.g.rows() != c.phase_count || br.g.cols() != c.phase_count ||
        br.b.rows() != c.phase_count || br.b.cols() != c.phase_count ||
        br.g_shunt.rows() != c.phase_count || br.b_shunt.rows() != c.phase_count) {
      throw ValidationError(where + ": admittance block dimension mismatch");
    }
    if (br.s_max < 0.0) throw ValidationError(where + ": thermal limit must be nonnegative");
  }

  for (std::size_t k = 0; k < c.generators.size(); ++k) {
    const auto& g = c.generators[k];
    const std::string where = "generator " + std::to_string(k);
    if (!ids.count(g.bus)) throw ValidationError(where + ": references unknown bus");
    if (g.phases.empty()) throw ValidationError(where + ": empty phase set");
    for (int p : g.phases) {
      if (p < 0 || p >= c.phase_count) throw ValidationError(where + ": phase out of range");
    }
    for (std::size_t i = 0; i < g.phases.size(); ++i) {
      if (g.p_min[i] > g.p_max[i] || g.q_min[i] > g.q_max[i]) {
        throw ValidationError(where + ": injection bounds require lower <= upper");
      }
    }
    if (g.c2 < 0.0) throw ValidationError(where + ": cost must be convex (c2 >= 0)");
  }
}

std::optional<std::vector<double>> read_optional_phase_array(const json& j, const std::string& key,
                                                             int phases, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  return read_phase_array(j, key, phases, where);
}

}  // namespace

NetworkCase load_case(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("case file is not valid JSON: ") + e.what());
  }

  NetworkCase c;
  if (!root.contains("phases")) throw ParseError("missing top-level 'phases'");
  c.phase_count = root.at("phases").get<int>();
  c.base_mva = root.value("base_mva", 100.0);
  const int np = c.phase_count;
  if (np != 1 && np != 3) throw ValidationError("phases must be 1 or 3");

  if (!root.contains("buses") || !root.at("buses").is_array()) {
    throw ParseError("missing 'buses' array");
  }
  for (const auto& jb : root.at("buses")) {
    BusRecord bus;
    const std::string where = "bus " + std::to_string(c.buses.size());
    if (!jb.contains("id")) throw ParseError(where + ": missing 'id'");
    bus.id = jb.at("id").get<Index>();
    std::string type = jb.value("type", "load");
    if (type == "reference") bus.type = BusType::Reference;
    else if (type == "load") bus.type = BusType::Load;
    else if (type == "generator") bus.type = BusType::Generator;
    else throw ParseError(where + ": unknown bus type '" + type + "'");
    bus.pd = read_phase_array(jb, "pd", np, where);
    bus.qd = read_phase_array(jb, "qd", np, where);
    if (!jb.contains("vmin") || !jb.contains("vmax")) {
      throw ParseError(where + ": missing 'vmin'/'vmax'");
    }
    bus.v_min = jb.at("vmin").get<double>();
    bus.v_max = jb.at("vmax").get<double>();
    if (jb.contains("stochastic")) {
      const json& js = jb.at("stochastic");
      StochasticInterval s;
      s.p_min = read_phase_array(js, "p_min", np, where + " stochastic");
      s.p_max = read_phase_array(js, "p_max", np, where + " stochastic");
      if (js.contains("q_min") || js.contains("q_max")) {
        s.q_min = read_phase_array(js, "q_min", np, where + " stochastic");
        s.q_max = read_phase_array(js, "q_max", np, where + " stochastic");
      } else {
        s.q_min.assign(np, 0.0);
        s.q_max.assign(np, 0.0);
      }
      bus.stochastic = std::move(s);
    }
    bus.y_p_min = read_optional_phase_array(jb, "y_p_min", np, where);
    bus.y_p_max = read_optional_phase_array(jb, "y_p_max", np, where);
    bus.y_q_min = read_optional_phase_array(jb, "y_q_min", np, where);
    bus.y_q_max = read_optional_phase_array(jb, "y_q_max", np, where);
    c.buses.push_back(std::move(bus));
  }

  if (root.contains("branches")) {
    for (const auto& jb : root.at("branches")) {
      BranchRecord br;
      const std::string where = "branch " + std::to_string(c.branches.size());
      if (!jb.contains("from") || !jb.contains("to")) {
        throw ParseError(where + ": missing 'from'/'to'");
      }
      br.from = jb.at("from").get<Index>();
      br.to = jb.at("to").get<Index>();
      br.g = read_block(jb, "g", np, where, true);
      br.b = read_block(jb, "b", np, where, true);
      br.g_shunt = read_block(jb, "g_shunt", np, where, false);
      br.b_shunt = read_block(jb, "b_shunt", np, where, false);
      br.s_max = jb.value("s_max", 0.0);
      c.branches.push_back(std::move(br));
    }
  }

  if (root.contains("generators")) {
    for (const auto& jg : root.at("generators")) {
      GeneratorRecord g;
      const std::string where = "generator " + std::to_string(c.generators.size());
      if (!jg.contains("bus")) throw ParseError(where + ": missing 'bus'");
      g.bus = jg.at("bus").get<Index>();
      if (jg.contains("phases")) {
        for (const auto& p : jg.at("phases")) g.phases.push_back(p.get<int>());
      } else {
        for (int p = 0; p < np; ++p) g.phases.push_back(p);
      }
      const int ng = static_cast<int>(g.phases.size());
      auto read_bounds = [&](const char* key) {
        if (!jg.contains(key)) throw ParseError(where + std::string(": missing '") + key + "'");
        const json& v = jg.at(key);
        if (!v.is_array() || static_cast<int>(v.size()) != ng) {
          throw ParseError(where + std::string(": '") + key + "' length must match phase list");
        }
        std::vector<double> out(ng);
        for (int i = 0; i < ng; ++i) out[i] = v[i].get<double>();
        return out;
      };
      g.p_min = read_bounds("p_min");
      g.p_max = read_bounds("p_max");
      g.q_min = read_bounds("q_min");
      g.q_max = read_bounds("q_max");
      if (!jg.contains("cost") || !jg.at("cost").is_array() || jg.at("cost").size() != 3) {
        throw ParseError(where + ": 'cost' must be [c2, c1, c0]");
      }
      g.c2 = jg.at("cost")[0].get<double>();
      g.c1 = jg.at("cost")[1].get<double>();
      g.c0 = jg.at("cost")[2].get<double>();
      c.generators.push_back(std::move(g));
    }
  }

  validate(c);
  return c;
}

NetworkCase load_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_case(ss.str());
}

std::string serialize_case(const NetworkCase& c) {
  json root;
  root["base_mva"] = c.base_mva;
  root["phases"] = c.phase_count;
  json buses = json::array();
  for (const auto& bus : c.buses) {
    json jb;
    jb["id"] = bus.id;
    jb["type"] = bus.type == BusType::Reference ? "reference"
               : bus.type == BusType::Generator ? "generator" : "load";
    jb["pd"] = bus.pd;
    jb["qd"] = bus.qd;
    jb["vmin"] = bus.v_min;
    jb["vmax"] = bus.v_max;
    if (bus.stochastic) {
      json js;
      js["p_min"] = bus.stochastic->p_min;
      js["p_max"] = bus.stochastic->p_max;
      js["q_min"] = bus.stochastic->q_min;
      js["q_max"] = bus.stochastic->q_max;
      jb["stochastic"] = js;
    }
    if (bus.y_p_min) jb["y_p_min"] = *bus.y_p_min;
    if (bus.y_p_max) jb["y_p_max"] = *bus.y_p_max;
    if (bus.y_q_min) jb["y_q_min"] = *bus.y_q_min;
    if (bus.y_q_max) jb["y_q_max"] = *bus.y_q_max;
    buses.push_back(jb);
  }
  root["buses"] = buses;

  json branches = json::array();
  for (const auto& br : c.branches) {
    json jb;
    jb["from"] = br.from;
    jb["to"] = br.to;
    auto flat = [&](const MatrixXd& m) {
      std::vector<double> v;
      for (int r = 0; r < m.rows(); ++r)
        for (int col = 0; col < m.cols(); ++col) v.push_back(m(r, col));
      return v;
    };
    jb["g"] = flat(br.g);
    jb["b"] = flat(br.b);
    jb["g_shunt"] = flat(br.g_shunt);
    jb["b_shunt"] = flat(br.b_shunt);
    jb["s_max"] = br.s_max;
    branches.push_back(jb);
  }
  root["branches"] = branches;

  json gens = json::array();
  for (const auto& g : c.generators) {
    json jg;
    jg["bus"] = g.bus;
    jg["phases"] = g.phases;
    jg["p_min"] = g.p_min;
    jg["p_max"] = g.p_max;
    jg["q_min"] = g.q_min;
    jg["q_max"] = g.q_max;
    jg["cost"] = {g.c2, g.c1, g.c0};
    gens.push_back(jg);
  }
  root["generators"] = gens;
  return root.dump(2) + "\n";
}

OperationalLimits build_limits(const NetworkCase& c) {
  const int np = c.phase_count;
  const int nbp = c.n_bus() * np;
  OperationalLimits lim;
  lim.p_lo = VectorXd::Zero(nbp);
  lim.p_hi = VectorXd::Zero(nbp);
  lim.q_lo = VectorXd::Zero(nbp);
  lim.q_hi = VectorXd::Zero(nbp);

  for (int b = 0; b < c.n_bus(); ++b) {
    const auto& bus = c.buses[b];
    for (int p = 0; p < np; ++p) {
      double plo = -bus.pd[p], phi = -bus.pd[p];
      double qlo = -bus.qd[p], qhi = -bus.qd[p];
      if (bus.stochastic) {
        plo += bus.stochastic->p_min[p];
        phi += bus.stochastic->p_max[p];
        qlo += bus.stochastic->q_min[p];
        qhi += bus.stochastic->q_max[p];
      }
      for (const auto& g : c.generators) {
        if (c.bus_index(g.bus) != b) continue;
        for (std::size_t i = 0; i < g.phases.size(); ++i) {
          if (g.phases[i] != p) continue;
          plo += g.p_min[i];
          phi += g.p_max[i];
          qlo += g.q_min[i];
          qhi += g.q_max[i];
        }
      }
      if (bus.y_p_min) plo = (*bus.y_p_min)[p];
      if (bus.y_p_max) phi = (*bus.y_p_max)[p];
      if (bus.y_q_min) qlo = (*bus.y_q_min)[p];
      if (bus.y_q_max) qhi = (*bus.y_q_max)[p];
      const int k = b * np + p;
      lim.p_lo[k] = plo;
      lim.p_hi[k] = phi;
      lim.q_lo[k] = qlo;
      lim.q_hi[k] = qhi;
      if (plo > phi || qlo > qhi) {
        throw ValidationError("bus " + std::to_string(bus.id) +
                              ": injection limits have lower > upper");
      }
    }
  }

  lim.flow_s_max = VectorXd::Zero(2 * c.n_branch() * np);
  for (int k = 0; k < c.n_branch(); ++k) {
    for (int d = 0; d < 2; ++d) {
      for (int p = 0; p < np; ++p) {
        lim.flow_s_max[(2 * k + d) * np + p] = c.branches[k].s_max;
      }
    }
  }

  lim.v_lo = VectorXd::Zero(c.n_bus());
  lim.v_hi = VectorXd::Zero(c.n_bus());
  for (int b = 0; b < c.n_bus(); ++b) {
    lim.v_lo[b] = c.buses[b].v_min;
    lim.v_hi[b] = c.buses[b].v_max;
  }
  return lim;
}

bool cases_equal(const NetworkCase& a, const NetworkCase& b) {
  return serialize_case(a) == serialize_case(b);
}

std::uint64_t case_hash(const NetworkCase& c) {
  Fnv1a h;
  h.update(serialize_case(c));
  return h.value();
}

}  // namespace uaopf
