#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drbse/pipeline.hpp"

namespace drbse {

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path);
  out << text;
}

inline AreaPartition partition_for(const NetworkCase& net, const std::string& areas_path) {
  AreaPartition part;
  if (!areas_path.empty()) {
    part = partition_from_json(json::parse(slurp(areas_path)));
  } else if (!net.areas.empty()) {
    for (auto [bus, area] : net.areas) {
      part.assignment[bus] = area;
      part.area_count = std::max(part.area_count, area);
    }
  } else {
    for (const Bus& b : net.buses) part.assignment[b.id] = 1;
    part.area_count = 1;
  }
  return part;
}

inline void scenario_into(const json& j, ExperimentConfig& cfg) {
  cfg.plan = j.value("plan", std::string("full"));
  if (j.contains("pmu_buses")) cfg.pmu_buses = j.at("pmu_buses").get<std::vector<int>>();
  if (j.contains("noise")) {
    cfg.noise.sigma_power = j.at("noise").value("sigma_power", cfg.noise.sigma_power);
    cfg.noise.sigma_vmag = j.at("noise").value("sigma_vmag", cfg.noise.sigma_vmag);
  }
  if (j.contains("bad_data")) {
    const json& b = j.at("bad_data");
    cfg.bad_data.fraction = b.value("fraction", 0.0);
    cfg.bad_data.magnitude_factor = b.value("magnitude_factor", 100.0);
    if (b.contains("targets"))
      for (const json& t : b.at("targets")) {
        BadDataTarget tgt;
        tgt.kind = kind_from_name(t.at("kind").get<std::string>());
        tgt.bus = t.value("bus", -1);
        tgt.from = t.value("from", -1);
        tgt.to = t.value("to", -1);
        tgt.circuit = t.value("circuit", 0);
        if (t.contains("value")) tgt.value = t.at("value").get<double>();
        cfg.bad_data.targets.push_back(tgt);
      }
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
}

struct ParamFlags {
  void attach(CLI::App* cmd, ExperimentConfig& cfg) {
    cmd->add_option("--lambda", cfg.params.lambda, "robust penalty weight");
    cmd->add_option("--rho-f", cfg.params.rho_f, "first-stage consensus penalty");
    cmd->add_option("--rho-s", cfg.params.rho_s, "second-stage consensus penalty");
    cmd->add_option("--epsilon", cfg.params.epsilon, "consensus stopping tolerance");
    cmd->add_option("--max-iter", cfg.params.max_iter, "iteration cap per stage");
    cmd->add_option("--sigma-u", cfg.params.sigma_u, "second-stage residual scale");
    cmd->add_option_function<std::string>(
           "--row-scaling",
           [&cfg](const std::string& s) {
             if (s == "none")
               cfg.params.scaling = RowScaling::none;
             else if (s == "relative-sigma")
               cfg.params.scaling = RowScaling::relative_sigma;
             else if (s == "inverse-sigma")
               cfg.params.scaling = RowScaling::inverse_sigma;
             else
               throw CLI::ValidationError("--row-scaling", "unknown mode " + s);
           },
           "measurement row scaling: none, relative-sigma, inverse-sigma")
        ->default_str("relative-sigma");
    cmd->add_flag("--full-identity", cfg.params.full_identity_augmentation,
                  "augment the gain on every diagonal entry, not just consensus slots");
  }
};

}  // namespace detail

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"distributed robust bilinear state estimation simulator"};
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors, "report failures as machine-readable JSON");

  std::string case_path, areas_path, scenario_path, meas_path, out_dir = ".", out_file;
  std::uint64_t seed = 0;
  bool timing = false;
  ExperimentConfig cfg;
  detail::ParamFlags flags;

  // estimate
  CLI::App* est = app.add_subcommand("estimate", "run the distributed pipeline on one scenario");
  est->add_option("--case", case_path, "case JSON")->required();
  est->add_option("--areas", areas_path, "partition JSON");
  est->add_option("--scenario", scenario_path, "scenario spec JSON");
  est->add_option("--measurements", meas_path, "materialized measurement set JSON");
  est->add_option("--seed", seed, "master seed");
  est->add_option("--out", out_dir, "output directory");
  est->add_option("--pmu", cfg.pmu_buses, "buses with direct angle measurements");
  est->add_flag("--force", cfg.force, "run downstream stages even without convergence");
  est->add_flag("--timing", timing, "include wall-clock timing in the report");
  flags.attach(est, cfg);

  // generate
  CLI::App* gen = app.add_subcommand("generate", "materialize a measurement scenario");
  gen->add_option("--case", case_path, "case JSON")->required();
  gen->add_option("--scenario", scenario_path, "scenario spec JSON");
  gen->add_option("--seed", seed, "master seed");
  gen->add_option("--out", out_file, "output measurement JSON")->required();

  // sweep
  std::vector<double> fractions{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  int trials = 20;
  CLI::App* swp = app.add_subcommand("sweep", "bad-data sweep over methods");
  swp->add_option("--case", case_path, "case JSON")->required();
  swp->add_option("--areas", areas_path, "partition JSON");
  swp->add_option("--fractions", fractions, "bad data fractions")->delimiter(',');
  swp->add_option("--trials", trials, "trials per fraction");
  swp->add_option("--seed", seed, "master seed");
  swp->add_option("--out", out_file, "output CSV")->required();
  flags.attach(swp, cfg);

  // compare
  CLI::App* cmp = app.add_subcommand("compare", "side-by-side states of all methods");
  cmp->add_option("--case", case_path, "case JSON")->required();
  cmp->add_option("--areas", areas_path, "partition JSON");
  cmp->add_option("--scenario", scenario_path, "scenario spec JSON");
  cmp->add_option("--seed", seed, "master seed");
  cmp->add_option("--out", out_file, "output CSV")->required();
  flags.attach(cmp, cfg);

  // convert-case
  std::string m_path;
  int reference = 1;
  CLI::App* cnv = app.add_subcommand("convert-case", "MATPOWER text to canonical case JSON");
  cnv->add_option("input", m_path, "MATPOWER .m case file")->required();
  cnv->add_option("--out", out_file, "output case JSON");
  cnv->add_option("--reference", reference, "estimation reference bus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*cnv) {
      NetworkCase net = parse_matpower_case(detail::slurp(m_path), reference);
      std::string text = save_case_json(net) + "\n";
      if (out_file.empty()) {
        std::cout << text;
      } else {
        detail::spit(out_file, text);
        std::cout << "wrote " << out_file << " (" << net.n_buses() << " buses, "
                  << net.n_branches() << " branches)\n";
      }
      return 0;
    }

    NetworkCase net = load_case_json(detail::slurp(case_path));
    cfg.seed = seed;
    if (!scenario_path.empty()) {
      detail::scenario_into(json::parse(detail::slurp(scenario_path)), cfg);
      if (est->count("--seed") || gen->count("--seed")) cfg.seed = seed;
    }

    if (*gen) {
      MeasurementSet ms = make_scenario(net, cfg);
      detail::spit(out_file, measurements_to_json(net, ms).dump(1) + "\n");
      std::cout << "wrote " << out_file << " (" << ms.size() << " measurements)\n";
      return 0;
    }

    AreaPartition part = detail::partition_for(net, areas_path);
    std::vector<AreaView> views = build_partition(net, part);

    if (*est) {
      MeasurementSet ms = meas_path.empty()
                              ? make_scenario(net, cfg)
                              : measurements_from_json(net, json::parse(detail::slurp(meas_path)));
      const auto t0 = std::chrono::steady_clock::now();
      DrbseResult res = run_drbse(net, part, views, ms, cfg.params, cfg.pmu_buses, cfg.force);
      const auto t1 = std::chrono::steady_clock::now();
      std::filesystem::create_directories(out_dir);
      std::vector<std::string> trace_names{"trace_stage1.csv"};
      write_trace_csv(out_dir + "/trace_stage1.csv", "1", res.stage1.trace, res.n_areas);
      if (res.stage2_ran) {
        trace_names.push_back("trace_stage2.csv");
        write_trace_csv(out_dir + "/trace_stage2.csv", "2", res.stage2.trace, res.n_areas);
      }
      json jt = nullptr;
      if (timing)
        jt = {{"wall_ms",
               std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0}};
      json rep = build_report(net, cfg, res, trace_names, jt);
      detail::spit(out_dir + "/report.json", rep.dump(1) + "\n");
      std::cout << "s_v=" << res.metrics.s_v << " s_theta=" << res.metrics.s_theta
                << " stage1_iters=" << res.stage1.iterations
                << " stage2_iters=" << (res.stage2_ran ? res.stage2.iterations : 0)
                << " converged=" << (res.stage1.converged && res.stage2.converged ? "yes" : "no")
                << "\n";
      if (!res.stage1.converged || (res.stage2_ran && !res.stage2.converged)) return 2;
      return 0;
    }

    if (*swp) {
      SweepOutput sw = sweep_bad_data(net, part, views, cfg, fractions, trials);
      write_sweep_csv(out_file, sw);
      std::string detail_path = out_file;
      const auto dot = detail_path.rfind('.');
      detail_path = detail_path.substr(0, dot == std::string::npos ? detail_path.size() : dot) +
                    "_trials.csv";
      write_sweep_detail_csv(detail_path, sw);
      std::cout << "wrote " << out_file << " and " << detail_path << "\n";
      return 0;
    }

    if (*cmp) {
      MeasurementSet ms = make_scenario(net, cfg);
      DrbseResult dist = run_drbse(net, part, views, ms, cfg.params, cfg.pmu_buses, cfg.force);
      CentralEstimate central = centralized_rbse(net, ms, cfg.params, cfg.pmu_buses);
      CentralEstimate wls = gauss_newton_wls(net, ms);
      CentralEstimate lnrt = wls_lnrt(net, ms);
      std::ofstream out(out_file);
      if (!out) throw Error("io", "cannot write " + out_file);
      out << "bus,v_true,theta_true,v_wls,theta_wls,v_wls_lnrt,theta_wls_lnrt,"
             "v_crbse,theta_crbse,v_drbse,theta_drbse\n";
      for (int i = 0; i < net.n_buses(); ++i) {
        out << net.buses[i].id << "," << format_double(net.buses[i].v_true) << ","
            << format_double(net.buses[i].theta_true) << "," << format_double(wls.V[i]) << ","
            << format_double(wls.theta[i]) << "," << format_double(lnrt.V[i]) << ","
            << format_double(lnrt.theta[i]) << "," << format_double(central.V[i]) << ","
            << format_double(central.theta[i]) << "," << format_double(dist.V[i]) << ","
            << format_double(dist.theta[i]) << "\n";
      }
      std::cout << "wrote " << out_file << "\n";
      return 0;
    }
  } catch (const Error& e) {
    if (json_errors) {
      json je = {{"error", {{"type", e.kind()}, {"message", e.what()}}}};
      std::cout << je.dump() << "\n";
    } else {
      std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    }
    return 1;
  } catch (const std::exception& e) {
    if (json_errors) {
      json je = {{"error", {{"type", "internal"}, {"message", e.what()}}}};
      std::cout << je.dump() << "\n";
    } else {
      std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
  }
  return 0;
}

}  // namespace drbse
