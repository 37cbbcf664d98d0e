#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drbse/case_model.hpp"
#include "drbse/errors.hpp"
#include "drbse/rng.hpp"

namespace drbse {

enum class MeasurementKind {
  p_injection,  // bus
  q_injection,  // bus
  p_flow,       // branch, metered at the from end
  q_flow,       // branch, metered at the from end
  v_squared,    // bus
  pmu_angle,    // bus, direct synchronized angle
};

inline const char* kind_name(MeasurementKind k) {
  switch (k) {
    case MeasurementKind::p_injection: return "p_injection";
    case MeasurementKind::q_injection: return "q_injection";
    case MeasurementKind::p_flow: return "p_flow";
    case MeasurementKind::q_flow: return "q_flow";
    case MeasurementKind::v_squared: return "v_squared";
    case MeasurementKind::pmu_angle: return "pmu_angle";
  }
  return "?";
}

inline MeasurementKind kind_from_name(const std::string& s) {
  for (MeasurementKind k :
       {MeasurementKind::p_injection, MeasurementKind::q_injection, MeasurementKind::p_flow,
        MeasurementKind::q_flow, MeasurementKind::v_squared, MeasurementKind::pmu_angle})
    if (s == kind_name(k)) return k;
  throw SchemaError("unknown measurement kind '" + s + "'");
}

inline bool is_power_kind(MeasurementKind k) {
  return k == MeasurementKind::p_injection || k == MeasurementKind::q_injection ||
         k == MeasurementKind::p_flow || k == MeasurementKind::q_flow;
}

// pmu_angle is the one kind that is not linear in y; it joins in the second
// linear stage instead.
inline bool in_first_stage(MeasurementKind k) { return k != MeasurementKind::pmu_angle; }

struct Measurement {
  MeasurementKind kind;
  int bus = -1;     // for bus-attached kinds
  int branch = -1;  // for flow kinds, index into NetworkCase::branches
  double value = 0.0;
  double sigma = 0.0;
  double true_value = 0.0;
  bool is_bad = false;

  std::string describe(const NetworkCase& net) const {
    std::string s = kind_name(kind);
    if (branch >= 0) {
      const Branch& br = net.branches[branch];
      s += "(" + std::to_string(br.from) + "," + std::to_string(br.to) + ")";
    } else {
      s += "(" + std::to_string(bus) + ")";
    }
    return s;
  }
};

struct MeasurementSet {
  std::vector<Measurement> measurements;
  std::vector<int> zero_injections;  // bus ids carrying hard P=Q=0 constraints

  int size() const { return static_cast<int>(measurements.size()); }
};

// Nominal meter accuracy classes; estimators fall back to these when a
// scenario simulates exact (zero-noise) meters, since sigma must stay positive.
inline constexpr double kDefaultSigmaPower = 0.004;
inline constexpr double kDefaultSigmaVmag = 0.002;

struct NoiseSpec {
  double sigma_power = kDefaultSigmaPower;  // p.u., P/Q kinds
  double sigma_vmag = kDefaultSigmaVmag;    // p.u. on the voltage meter; also PMU angle (rad)
  std::uint64_t seed = 0;
};

struct BadDataTarget {
  MeasurementKind kind;
  int bus = -1;
  int from = -1, to = -1;  // flow kinds; circuit disambiguates parallel branches
  int circuit = 0;
  // When set, the corrupted reading is pinned to this value (in the
  // measurement's own units) instead of drawing a fresh gross error.
  std::optional<double> value;
};

struct BadDataSpec {
  double fraction = 0.0;
  std::vector<BadDataTarget> targets;  // when non-empty, overrides fraction
  double magnitude_factor = 100.0;
  std::uint64_t seed = 0;
};

// -------------------------------------------------------- linear-in-y terms

// One coefficient of a measurement expressed in the intermediate variables:
// U_i (index = bus position), or K_e / L_e (index = branch index, with L taken
// in the branch's case orientation).
struct PhysTerm {
  enum class Var { U, K, L };
  Var var;
  int index;
  double coef;
};

namespace detail {

inline void flow_terms(const NetworkCase& net, int e, bool at_from, bool reactive,
                       std::vector<PhysTerm>& out) {
  const Branch& br = net.branches[e];
  const double g = br.g, b = br.b, t = br.tap;
  const int uf = net.bus_pos(br.from), ut = net.bus_pos(br.to);
  if (!reactive) {
    if (at_from) {
      out.push_back({PhysTerm::Var::U, uf, g / (t * t)});
      out.push_back({PhysTerm::Var::K, e, -g / t});
      out.push_back({PhysTerm::Var::L, e, -b / t});
    } else {
      out.push_back({PhysTerm::Var::U, ut, g});
      out.push_back({PhysTerm::Var::K, e, -g / t});
      out.push_back({PhysTerm::Var::L, e, +b / t});
    }
  } else {
    if (at_from) {
      out.push_back({PhysTerm::Var::U, uf, -b / (t * t)});
      out.push_back({PhysTerm::Var::K, e, +b / t});
      out.push_back({PhysTerm::Var::L, e, -g / t});
    } else {
      out.push_back({PhysTerm::Var::U, ut, -b});
      out.push_back({PhysTerm::Var::K, e, +b / t});
      out.push_back({PhysTerm::Var::L, e, +g / t});
    }
  }
}

}  // namespace detail

// Terms of one measurement (or of an injection used as an equality row).
// Throws for pmu_angle, which has no y-space representation.
inline std::vector<PhysTerm> injection_terms(const NetworkCase& net, int bus_id, bool reactive) {
  std::vector<PhysTerm> out;
  const Bus& bus = net.buses[net.bus_pos(bus_id)];
  out.push_back({PhysTerm::Var::U, net.bus_pos(bus_id), reactive ? -bus.b_sh : bus.g_sh});
  for (int e : net.branches_at(bus_id))
    detail::flow_terms(net, e, net.branches[e].from == bus_id, reactive, out);
  return out;
}

inline std::vector<PhysTerm> meas_terms(const NetworkCase& net, const Measurement& m) {
  std::vector<PhysTerm> out;
  switch (m.kind) {
    case MeasurementKind::p_injection:
      return injection_terms(net, m.bus, false);
    case MeasurementKind::q_injection:
      return injection_terms(net, m.bus, true);
    case MeasurementKind::p_flow:
      detail::flow_terms(net, m.branch, true, false, out);
      return out;
    case MeasurementKind::q_flow:
      detail::flow_terms(net, m.branch, true, true, out);
      return out;
    case MeasurementKind::v_squared:
      out.push_back({PhysTerm::Var::U, net.bus_pos(m.bus), 1.0});
      return out;
    case MeasurementKind::pmu_angle:
      throw DomainError("pmu_angle has no first-stage linear form");
  }
  return out;
}

// Evaluates a term list at a polar state (vectors indexed by bus position).
inline double eval_terms(const NetworkCase& net, const std::vector<PhysTerm>& terms,
                         const Eigen::VectorXd& V, const Eigen::VectorXd& theta) {
  double acc = 0.0;
  for (const PhysTerm& t : terms) {
    switch (t.var) {
      case PhysTerm::Var::U: {
        acc += t.coef * V[t.index] * V[t.index];
        break;
      }
      case PhysTerm::Var::K: {
        const Branch& br = net.branches[t.index];
        int f = net.bus_pos(br.from), to = net.bus_pos(br.to);
        acc += t.coef * V[f] * V[to] * std::cos(theta[f] - theta[to]);
        break;
      }
      case PhysTerm::Var::L: {
        const Branch& br = net.branches[t.index];
        int f = net.bus_pos(br.from), to = net.bus_pos(br.to);
        acc += t.coef * V[f] * V[to] * std::sin(theta[f] - theta[to]);
        break;
      }
    }
  }
  return acc;
}

inline Eigen::VectorXd true_v(const NetworkCase& net) {
  Eigen::VectorXd v(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) v[i] = net.buses[i].v_true;
  return v;
}

inline Eigen::VectorXd true_theta(const NetworkCase& net) {
  Eigen::VectorXd t(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) t[i] = net.buses[i].theta_true;
  return t;
}

// ---------------------------------------------------------------- the plans

// The full plan per the experiment setup: V^2 at all buses, P/Q flow at the
// from terminal of every branch, P/Q injection at every bus that is not a
// zero-injection bus (those become equality constraints instead).
inline std::vector<Measurement> full_plan(const NetworkCase& net,
                                          const std::vector<int>& pmu_buses = {}) {
  std::vector<Measurement> plan;
  for (const Bus& b : net.buses)
    if (!b.is_zero_injection) {
      plan.push_back({MeasurementKind::p_injection, b.id});
      plan.push_back({MeasurementKind::q_injection, b.id});
    }
  for (int e = 0; e < net.n_branches(); ++e) {
    Measurement m;
    m.kind = MeasurementKind::p_flow;
    m.branch = e;
    plan.push_back(m);
    m.kind = MeasurementKind::q_flow;
    plan.push_back(m);
  }
  for (const Bus& b : net.buses) plan.push_back({MeasurementKind::v_squared, b.id});
  for (int id : pmu_buses) {
    if (!net.has_bus(id)) throw ValidationError("pmu bus " + std::to_string(id) + " not in case");
    plan.push_back({MeasurementKind::pmu_angle, id});
  }
  return plan;
}

// Fills true values from the solved case state; value starts at true_value.
inline MeasurementSet true_measurements(const NetworkCase& net, std::vector<Measurement> plan,
                                        const NoiseSpec& noise = {}) {
  const Eigen::VectorXd V = true_v(net), TH = true_theta(net);
  MeasurementSet ms;
  for (Measurement m : plan) {
    if (m.branch >= 0 && (m.branch >= net.n_branches()))
      throw ValidationError("plan references missing branch " + std::to_string(m.branch));
    if (m.bus >= 0 && !net.has_bus(m.bus))
      throw ValidationError("plan references missing bus " + std::to_string(m.bus));
    const double sp = noise.sigma_power > 0.0 ? noise.sigma_power : kDefaultSigmaPower;
    const double sv = noise.sigma_vmag > 0.0 ? noise.sigma_vmag : kDefaultSigmaVmag;
    if (m.kind == MeasurementKind::pmu_angle) {
      m.true_value = TH[net.bus_pos(m.bus)];
      m.sigma = sv;
    } else {
      m.true_value = eval_terms(net, meas_terms(net, m), V, TH);
      m.sigma = is_power_kind(m.kind) ? sp : sv;
    }
    m.value = m.true_value;
    m.is_bad = false;
    ms.measurements.push_back(m);
  }
  for (const Bus& b : net.buses) {
    if (!b.is_zero_injection) continue;
    for (const Measurement& m : ms.measurements)
      if ((m.kind == MeasurementKind::p_injection || m.kind == MeasurementKind::q_injection) &&
          m.bus == b.id)
        throw ValidationError("zero-injection bus " + std::to_string(b.id) +
                              " must not carry injection measurements");
    ms.zero_injections.push_back(b.id);
  }
  return ms;
}

// Gaussian noise per kind. The voltage meter reads V: noise is drawn in V and
// then squared into the stored V^2 value.
inline MeasurementSet apply_noise(MeasurementSet ms, const NoiseSpec& spec) {
  RngStream rng(spec.seed, "noise");
  for (Measurement& m : ms.measurements) {
    const double g = rng.next_gaussian();
    switch (m.kind) {
      case MeasurementKind::v_squared: {
        const double vmeter = std::sqrt(m.true_value) + g * spec.sigma_vmag;
        m.value = vmeter * vmeter;
        break;
      }
      case MeasurementKind::pmu_angle:
        m.value = m.true_value + g * spec.sigma_vmag;
        break;
      default:
        m.value = m.true_value + g * spec.sigma_power;
    }
  }
  return ms;
}

inline int find_measurement(const NetworkCase& net, const MeasurementSet& ms,
                            const BadDataTarget& t) {
  int circuit = 0;
  for (int i = 0; i < ms.size(); ++i) {
    const Measurement& m = ms.measurements[i];
    if (m.kind != t.kind) continue;
    if (m.branch >= 0) {
      const Branch& br = net.branches[m.branch];
      if (br.from == t.from && br.to == t.to) {
        if (circuit++ == t.circuit) return i;
      }
    } else if (m.bus == t.bus) {
      return i;
    }
  }
  throw ValidationError(std::string("bad-data target not found: ") + kind_name(t.kind));
}

inline MeasurementSet inject_bad_data(const NetworkCase& net, MeasurementSet ms,
                                      const BadDataSpec& spec) {
  std::vector<int> chosen;
  if (!spec.targets.empty()) {
    for (const BadDataTarget& t : spec.targets) {
      const int i = find_measurement(net, ms, t);
      if (t.value) {
        ms.measurements[i].value = *t.value;
        ms.measurements[i].is_bad = true;
      } else {
        chosen.push_back(i);
      }
    }
  } else {
    const int n = ms.size();
    const int k = static_cast<int>(spec.fraction * n);
    RngStream sel(spec.seed, "bad-data-selection");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {  // partial Fisher-Yates
      const int j = i + static_cast<int>(sel.next_below(n - i));
      std::swap(idx[i], idx[j]);
    }
    chosen.assign(idx.begin(), idx.begin() + k);
    std::sort(chosen.begin(), chosen.end());
  }
  RngStream mag(spec.seed, "bad-data-magnitude");
  for (int i : chosen) {
    Measurement& m = ms.measurements[i];
    m.value += mag.next_gaussian() * spec.magnitude_factor * m.sigma;
    m.is_bad = true;
  }
  return ms;
}

// Injection and V^2 (and PMU) measurements belong to the bus's home area; flow
// measurements follow the from bus. Returns per-area index lists into ms.
inline std::vector<std::vector<int>> partition_measurements(const NetworkCase& net,
                                                            const MeasurementSet& ms,
                                                            const AreaPartition& part) {
  std::vector<std::vector<int>> by_area(part.area_count);
  for (int i = 0; i < ms.size(); ++i) {
    const Measurement& m = ms.measurements[i];
    const int home_bus = m.branch >= 0 ? net.branches[m.branch].from : m.bus;
    by_area[part.area_of(home_bus) - 1].push_back(i);
  }
  return by_area;
}

// ------------------------------------------------------------------ JSON i/o

inline json measurements_to_json(const NetworkCase& net, const MeasurementSet& ms) {
  json jm = json::array();
  for (const Measurement& m : ms.measurements) {
    json e = {{"kind", kind_name(m.kind)},
              {"value", m.value},
              {"sigma", m.sigma},
              {"true_value", m.true_value},
              {"is_bad", m.is_bad}};
    if (m.branch >= 0) {
      const Branch& br = net.branches[m.branch];
      e["from"] = br.from;
      e["to"] = br.to;
      int circuit = 0;
      for (int k = 0; k < m.branch; ++k)
        if (net.branches[k].from == br.from && net.branches[k].to == br.to) ++circuit;
      if (circuit > 0) e["circuit"] = circuit;
    } else {
      e["bus"] = m.bus;
    }
    jm.push_back(e);
  }
  return {{"measurements", jm}, {"zero_injections", ms.zero_injections}};
}

inline MeasurementSet measurements_from_json(const NetworkCase& net, const json& j) {
  MeasurementSet ms;
  try {
    for (const json& e : j.at("measurements")) {
      Measurement m;
      m.kind = kind_from_name(e.at("kind").get<std::string>());
      if (e.contains("bus")) {
        m.bus = e.at("bus").get<int>();
      } else {
        const int from = e.at("from").get<int>(), to = e.at("to").get<int>();
        int want = e.value("circuit", 0), circuit = 0;
        m.branch = -1;
        for (int k = 0; k < net.n_branches(); ++k)
          if (net.branches[k].from == from && net.branches[k].to == to && circuit++ == want) {
            m.branch = k;
            break;
          }
        if (m.branch < 0)
          throw SchemaError("measurement references unknown branch (" + std::to_string(from) +
                            "," + std::to_string(to) + ")");
      }
      m.value = e.at("value").get<double>();
      m.sigma = e.at("sigma").get<double>();
      m.true_value = e.at("true_value").get<double>();
      m.is_bad = e.at("is_bad").get<bool>();
      ms.measurements.push_back(m);
    }
    ms.zero_injections = j.at("zero_injections").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("measurement JSON malformed: ") + e.what());
  }
  return ms;
}

}  // namespace drbse
