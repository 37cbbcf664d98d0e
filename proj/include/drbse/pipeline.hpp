#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drbse/admm_stage1.hpp"
#include "drbse/admm_stage2.hpp"
#include "drbse/centralized.hpp"
#include "drbse/matpower.hpp"
#include "drbse/measurement.hpp"
#include "drbse/rng.hpp"

namespace drbse {

struct Metrics {
  double s_v = 0.0;
  double s_theta = 0.0;
};

// Mean absolute state error; the angle mean excludes the reference bus.
inline Metrics compute_metrics(const NetworkCase& net, const VectorXd& V, const VectorXd& theta) {
  Metrics m;
  const int n = net.n_buses();
  const int ref = net.bus_pos(net.reference_bus);
  for (int i = 0; i < n; ++i) {
    m.s_v += std::abs(V[i] - net.buses[i].v_true);
    if (i != ref) m.s_theta += std::abs(theta[i] - net.buses[i].theta_true);
  }
  m.s_v /= n;
  m.s_theta /= (n - 1);
  return m;
}

struct OutlierEntry {
  int stage = 1;
  std::string location;
  double value = 0.0;
};

struct DrbseResult {
  VectorXd V;      // assembled from each bus's home-area copy
  VectorXd theta;
  Metrics metrics;
  StageResult stage1, stage2;
  bool stage2_ran = false;
  double max_copy_disagreement = 0.0;   // across shared buses after stage 2
  double max_equality_violation = 0.0;  // over areas and iterations
  std::vector<OutlierEntry> outliers;
  MessageBus bus;
  int n_areas = 1;
};

struct ExperimentConfig {
  std::string plan = "full";
  std::vector<int> pmu_buses;
  NoiseSpec noise;
  BadDataSpec bad_data;
  SolverParams params;
  std::uint64_t seed = 0;
  bool force = false;  // run downstream stages even if a stage did not converge
};

inline std::uint64_t derive_trial_seed(std::uint64_t master, std::uint64_t trial) {
  return RngStream(master, "trial", trial).next_u64();
}

// Builds the measurement scenario: plan -> true values -> noise -> bad data,
// each from its own named stream of the master seed.
inline MeasurementSet make_scenario(const NetworkCase& net, const ExperimentConfig& cfg) {
  if (cfg.plan != "full")
    throw ValidationError("unknown measurement plan '" + cfg.plan + "'");
  NoiseSpec noise = cfg.noise;
  noise.seed = cfg.seed;
  BadDataSpec bad = cfg.bad_data;
  bad.seed = cfg.seed;
  MeasurementSet ms = true_measurements(net, full_plan(net, cfg.pmu_buses), noise);
  ms = apply_noise(std::move(ms), noise);
  ms = inject_bad_data(net, std::move(ms), bad);
  return ms;
}

// The three-step distributed pipeline over the simulated synchronous bus.
inline DrbseResult run_drbse(const NetworkCase& net, const AreaPartition& part,
                             const std::vector<AreaView>& views, const MeasurementSet& ms,
                             const SolverParams& params, const std::vector<int>& pmu_buses = {},
                             bool force = false, const std::vector<int>& order = {}) {
  if (params.lambda <= 0.0) throw ValidationError("lambda must be positive");
  DrbseResult res;
  res.n_areas = static_cast<int>(views.size());
  const auto by_area = partition_measurements(net, ms, part);

  std::vector<Stage1Area> s1;
  s1.reserve(views.size());
  for (size_t a = 0; a < views.size(); ++a)
    s1.emplace_back(net, part, views[a], ms, by_area[a], params);

  res.stage1 = run_stage1(s1, res.bus, params, order);
  for (const Stage1Area& a : s1)
    res.max_equality_violation = std::max(res.max_equality_violation, a.equality_violation());
  for (const Stage1Area& a : s1) {
    const Stage1System& sys = a.system();
    for (int i = 0; i < a.o().size(); ++i)
      if (a.o()[i] != 0.0)
        res.outliers.push_back(
            {1, ms.measurements[sys.meas_index[i]].describe(net), a.o()[i] * sys.unit_scale[i]});
  }

  res.V = VectorXd::Ones(net.n_buses());
  res.theta = VectorXd::Zero(net.n_buses());
  if (!res.stage1.converged && !force) {
    res.metrics = compute_metrics(net, res.V, res.theta);
    return res;
  }

  // intermediate transformation: purely local, nothing crosses the bus
  const std::size_t posted_before = res.bus.log().size();
  std::vector<ConsensusGroup> groups = consensus_groups(part, views);
  std::vector<Stage2Area> s2;
  s2.reserve(views.size());
  for (size_t a = 0; a < views.size(); ++a) {
    Stage2Area area(net, part, views[a], groups, pmu_buses, params);
    VectorXd u = nonlinear_transform(s1[a].y(), s1[a].layout(), area.ulayout());
    area.set_u(u);
    for (size_t slot = 0; slot < area.ulayout().pmu_buses.size(); ++slot) {
      const int bus_id = area.ulayout().pmu_buses[slot];
      for (int mi : by_area[a]) {
        const Measurement& m = ms.measurements[mi];
        if (m.kind == MeasurementKind::pmu_angle && m.bus == bus_id)
          area.set_pmu_row(static_cast<int>(slot), m.value, m.sigma);
      }
    }
    s2.push_back(std::move(area));
  }
  res.bus.deliver("transform", 0);
  if (res.bus.log().size() != posted_before)
    throw ProtocolError("the nonlinear transformation must not exchange messages");

  res.stage2 = run_stage2(s2, res.bus, params, order);
  res.stage2_ran = true;

  for (const Stage2Area& a : s2) {
    const IntermediateLayout& ul = a.ulayout();
    for (int i = 0; i < a.o().size(); ++i) {
      if (a.o()[i] == 0.0) continue;
      std::string loc;
      const int nb = static_cast<int>(ul.bus_ids.size());
      const int nbr = static_cast<int>(ul.branches.size());
      if (i < nb) {
        loc = "alpha(" + std::to_string(ul.bus_ids[i]) + ")";
      } else if (i < nb + 2 * nbr) {
        const OrientedBranch& ob = ul.branches[(i - nb) / 2];
        loc = ((i - nb) % 2 == 0 ? "alpha(" : "theta(") + std::to_string(ob.from) + "," +
              std::to_string(ob.to) + ")";
      } else {
        loc = "pmu(" + std::to_string(ul.pmu_buses[i - nb - 2 * nbr]) + ")";
      }
      res.outliers.push_back({2, loc, a.o()[i]});
    }
  }

  if (res.stage2.converged || force) {
    for (size_t a = 0; a < views.size(); ++a)
      for (const auto& [id, st] : s2[a].home_state(views[a])) {
        res.V[net.bus_pos(id)] = st.v;
        res.theta[net.bus_pos(id)] = st.theta;
      }
    for (const ConsensusGroup& g : groups) {
      double amin = 1e300, amax = -1e300, tmin = 1e300, tmax = -1e300;
      for (int member : g.members) {
        const Stage2Area& area = s2[member - 1];
        amin = std::min(amin, area.copy_value_alpha(g.bus));
        amax = std::max(amax, area.copy_value_alpha(g.bus));
        tmin = std::min(tmin, area.copy_value_theta(g.bus));
        tmax = std::max(tmax, area.copy_value_theta(g.bus));
      }
      res.max_copy_disagreement =
          std::max({res.max_copy_disagreement, amax - amin, tmax - tmin});
    }
  }
  res.metrics = compute_metrics(net, res.V, res.theta);
  return res;
}

// ----------------------------------------------------------------- reporting

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void write_trace_csv(const std::string& path, const std::string& stage,
                            const std::vector<TraceRow>& trace, int n_areas) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write trace file " + path);
  out << "stage,iteration,delta,r_inf,d_inf";
  for (int a = 1; a <= n_areas; ++a) out << ",j_area" << a;
  out << "\n";
  for (const TraceRow& row : trace) {
    out << stage << "," << row.iteration << "," << format_double(row.delta) << ","
        << format_double(row.r_inf) << "," << format_double(row.d_inf);
    for (double j : row.objectives) out << "," << format_double(j);
    out << "\n";
  }
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json bad = {{"fraction", cfg.bad_data.fraction},
              {"magnitude_factor", cfg.bad_data.magnitude_factor}};
  if (!cfg.bad_data.targets.empty()) {
    json jt = json::array();
    for (const BadDataTarget& t : cfg.bad_data.targets) {
      json e = {{"kind", kind_name(t.kind)}};
      if (t.bus >= 0) e["bus"] = t.bus;
      if (t.from >= 0) {
        e["from"] = t.from;
        e["to"] = t.to;
        if (t.circuit > 0) e["circuit"] = t.circuit;
      }
      if (t.value) e["value"] = *t.value;
      jt.push_back(e);
    }
    bad["targets"] = jt;
  }
  return {{"plan", cfg.plan},
          {"pmu_buses", cfg.pmu_buses},
          {"noise", {{"sigma_power", cfg.noise.sigma_power}, {"sigma_vmag", cfg.noise.sigma_vmag}}},
          {"bad_data", bad},
          {"lambda", cfg.params.lambda},
          {"rho_f", cfg.params.rho_f},
          {"rho_s", cfg.params.rho_s},
          {"epsilon", cfg.params.epsilon},
          {"max_iter", cfg.params.max_iter},
          {"sigma_u", cfg.params.sigma_u},
          {"row_scaling", cfg.params.scaling == RowScaling::none
                              ? "none"
                              : cfg.params.scaling == RowScaling::relative_sigma
                                    ? "relative-sigma"
                                    : "inverse-sigma"},
          {"full_identity_augmentation", cfg.params.full_identity_augmentation},
          {"seed", cfg.seed}};
}

inline json build_report(const NetworkCase& net, const ExperimentConfig& cfg,
                         const DrbseResult& res, const std::vector<std::string>& trace_paths,
                         const json& timing = nullptr) {
  json per_bus = json::array();
  for (int i = 0; i < net.n_buses(); ++i)
    per_bus.push_back({{"id", net.buses[i].id},
                       {"v_est", res.V[i]},
                       {"theta_est", res.theta[i]},
                       {"v_true", net.buses[i].v_true},
                       {"theta_true", net.buses[i].theta_true}});
  json stages = json::array();
  stages.push_back({{"stage", 1},
                    {"iterations", res.stage1.iterations},
                    {"converged", res.stage1.converged},
                    {"trace_path", trace_paths.size() > 0 ? json(trace_paths[0]) : json(nullptr)}});
  if (res.stage2_ran)
    stages.push_back(
        {{"stage", 2},
         {"iterations", res.stage2.iterations},
         {"converged", res.stage2.converged},
         {"trace_path", trace_paths.size() > 1 ? json(trace_paths[1]) : json(nullptr)}});
  json messages = json::array();
  for (const auto& [pair, tally] : res.bus.totals())
    messages.push_back({{"from", pair.first},
                        {"to", pair.second},
                        {"count", tally.first},
                        {"bytes", tally.second}});
  json outliers = json::array();
  for (const OutlierEntry& o : res.outliers)
    outliers.push_back({{"stage", o.stage}, {"location", o.location}, {"value", o.value}});
  json rep = {{"config", config_to_json(cfg)},
              {"per_bus", per_bus},
              {"metrics", {{"s_v", res.metrics.s_v}, {"s_theta", res.metrics.s_theta}}},
              {"stages", stages},
              {"messages", messages},
              {"outliers", outliers},
              {"max_copy_disagreement", res.max_copy_disagreement},
              {"max_equality_violation", res.max_equality_violation}};
  if (!timing.is_null()) rep["timing"] = timing;
  return rep;
}

// -------------------------------------------------------------------- sweeps

struct SweepRow {
  std::string method;
  double fraction = 0.0;
  double mean_s_v = 0.0;
  double mean_s_theta = 0.0;
  int ok_trials = 0;
  int failed_trials = 0;
};

struct SweepDetail {
  std::string method;
  double fraction = 0.0;
  int trial = 0;
  double s_v = 0.0;
  double s_theta = 0.0;
  bool ok = false;
};

struct SweepOutput {
  std::vector<SweepRow> summary;
  std::vector<SweepDetail> detail;
};

inline SweepOutput sweep_bad_data(const NetworkCase& net, const AreaPartition& part,
                                  const std::vector<AreaView>& views, const ExperimentConfig& base,
                                  const std::vector<double>& fractions, int trials) {
  SweepOutput out;
  const std::vector<std::string> methods{"drbse", "wls", "wls_lnrt"};
  std::map<std::pair<std::string, double>, std::vector<Metrics>> bucket;
  std::map<std::pair<std::string, double>, int> failures;

  int trial_counter = 0;
  for (double frac : fractions) {
    for (int trial = 0; trial < trials; ++trial, ++trial_counter) {
      ExperimentConfig cfg = base;
      cfg.seed = derive_trial_seed(base.seed, trial_counter);
      cfg.bad_data.fraction = frac;
      cfg.bad_data.targets.clear();
      const MeasurementSet ms = make_scenario(net, cfg);
      for (const std::string& method : methods) {
        SweepDetail d{method, frac, trial, 0.0, 0.0, false};
        try {
          Metrics m;
          if (method == "drbse") {
            DrbseResult r = run_drbse(net, part, views, ms, cfg.params, cfg.pmu_buses);
            if (!r.stage1.converged || !r.stage2.converged)
              throw NumericalError("distributed stage did not converge");
            m = r.metrics;
          } else if (method == "wls") {
            CentralEstimate e = gauss_newton_wls(net, ms);
            if (!e.converged) throw NumericalError("WLS diverged");
            m = compute_metrics(net, e.V, e.theta);
          } else {
            CentralEstimate e = wls_lnrt(net, ms);
            if (!e.converged) throw NumericalError("WLS+LNRT diverged");
            m = compute_metrics(net, e.V, e.theta);
          }
          d.s_v = m.s_v;
          d.s_theta = m.s_theta;
          d.ok = true;
          bucket[{method, frac}].push_back(m);
        } catch (const Error&) {
          failures[{method, frac}]++;
        }
        out.detail.push_back(d);
      }
    }
  }
  for (double frac : fractions)
    for (const std::string& method : methods) {
      SweepRow row{method, frac, 0.0, 0.0, 0, failures[{method, frac}]};
      for (const Metrics& m : bucket[{method, frac}]) {
        row.mean_s_v += m.s_v;
        row.mean_s_theta += m.s_theta;
        ++row.ok_trials;
      }
      if (row.ok_trials > 0) {
        row.mean_s_v /= row.ok_trials;
        row.mean_s_theta /= row.ok_trials;
      }
      out.summary.push_back(row);
    }
  return out;
}

inline void write_sweep_csv(const std::string& path, const SweepOutput& sweep) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write sweep file " + path);
  out << "method,fraction,mean_s_v,mean_s_theta,ok_trials,failed_trials\n";
  for (const SweepRow& r : sweep.summary)
    out << r.method << "," << format_double(r.fraction) << "," << format_double(r.mean_s_v) << ","
        << format_double(r.mean_s_theta) << "," << r.ok_trials << "," << r.failed_trials << "\n";
}

inline void write_sweep_detail_csv(const std::string& path, const SweepOutput& sweep) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write sweep detail file " + path);
  out << "method,fraction,trial,s_v,s_theta,ok\n";
  for (const SweepDetail& d : sweep.detail)
    out << d.method << "," << format_double(d.fraction) << "," << d.trial << ","
        << format_double(d.s_v) << "," << format_double(d.s_theta) << "," << (d.ok ? 1 : 0)
        << "\n";
}

}  // namespace drbse
