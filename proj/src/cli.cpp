#include <sls/cli.hpp>

#include <sls/serialize.hpp>
#include <sls/verify.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace sls::cli {
namespace {

namespace fs = std::filesystem;

struct ScenarioSpec {
  std::string kind = "random";  // impulse | random | worst_case_row | file
  Index node = 0;               // impulse
  double value = 1.0;           // impulse
  Index time = 0;               // impulse
  std::uint64_t seed = 0;       // random
  double amplitude = 0.0;       // random; defaults to the configured w_max
  Index row = 0;                // worst_case_row
  std::string path;             // file
};

struct ExperimentConfig {
  std::string system_file;  // empty when the chain generator is used
  Index chain_n = 0;
  double chain_alpha = 0.0;
  double chain_rho = 0.0;
  Index T = 0;
  Index d = 0;
  Json bounds;  // expanded against the system dimensions on demand
  SolveOptions<double> solver;
  double pd_alpha = 0.0;  // 0 = scale-aware default
  double pd_epsilon = 1e-4;
  Index pd_max_rounds = 500;
  Index horizon = 0;
  double input_limit = 0.0;  // 0 = actuators unconstrained
  ScenarioSpec scenario;
  std::string out_dir = "out";
  fs::path base;  // config file directory; relative paths resolve against it
};

ExperimentConfig parse_config(const std::string& path) {
  const Json j = load_json(path);
  ExperimentConfig cfg;
  cfg.base = fs::path(path).parent_path();
  const Json& system = j.at("system");
  if (system.contains("file")) {
    cfg.system_file = system.at("file").get<std::string>();
  } else {
    const Json& chain = system.at("chain");
    cfg.chain_n = chain.at("n").get<Index>();
    cfg.chain_alpha = chain.at("alpha").get<double>();
    cfg.chain_rho = chain.at("rho").get<double>();
  }
  cfg.T = j.at("T").get<Index>();
  cfg.d = j.at("d").get<Index>();
  cfg.bounds = j.at("bounds");
  if (j.contains("solver")) {
    const Json& s = j.at("solver");
    cfg.solver.tol = s.value("tol", cfg.solver.tol);
    cfg.solver.max_iter = s.value("max_iter", cfg.solver.max_iter);
  }
  if (j.contains("primal_dual")) {
    const Json& p = j.at("primal_dual");
    cfg.pd_alpha = p.value("alpha", cfg.pd_alpha);
    cfg.pd_epsilon = p.value("epsilon", cfg.pd_epsilon);
    cfg.pd_max_rounds = p.value("max_rounds", cfg.pd_max_rounds);
  }
  if (j.contains("simulation")) {
    const Json& s = j.at("simulation");
    cfg.horizon = s.at("horizon").get<Index>();
    cfg.input_limit = s.value("input_limit", 0.0);
    if (s.contains("scenario")) {
      const Json& sc = s.at("scenario");
      cfg.scenario.kind = sc.at("kind").get<std::string>();
      cfg.scenario.node = sc.value("node", cfg.scenario.node);
      cfg.scenario.value = sc.value("value", cfg.scenario.value);
      cfg.scenario.time = sc.value("time", cfg.scenario.time);
      cfg.scenario.seed = sc.value("seed", cfg.scenario.seed);
      cfg.scenario.amplitude = sc.value("amplitude", cfg.scenario.amplitude);
      cfg.scenario.row = sc.value("row", cfg.scenario.row);
      cfg.scenario.path = sc.value("path", cfg.scenario.path);
    }
  }
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (cfg.T < 1) throw std::runtime_error("config: T must be at least 1");
  if (cfg.d < 0) throw std::runtime_error("config: d must be nonnegative");
  if (cfg.pd_epsilon <= 0) throw std::runtime_error("config: primal_dual.epsilon must be positive");
  if (cfg.input_limit < 0) throw std::runtime_error("config: simulation.input_limit must be nonnegative");
  return cfg;
}

LinearSystem<double> load_system(const ExperimentConfig& cfg) {
  if (!cfg.system_file.empty()) return system_from_json<double>(load_json((cfg.base / cfg.system_file).string()));
  return make_chain_system<double>(cfg.chain_n, cfg.chain_alpha, cfg.chain_rho);
}

RobustSpec<double> build_spec(const ExperimentConfig& cfg, const LinearSystem<double>& sys) {
  Json with_horizon = cfg.bounds;
  with_horizon["T"] = cfg.T;
  return spec_from_json<double>(with_horizon, sys.n(), sys.m());
}

fs::path resolve_out_dir(const ExperimentConfig& cfg, const std::string& override_dir) {
  const fs::path dir = override_dir.empty() ? cfg.base / cfg.out_dir : fs::path(override_dir);
  fs::create_directories(dir);
  return dir;
}

double uniform_w_max(const RobustSpec<double>& spec) {
  return spec.disturbance.q.size() ? spec.disturbance.q.maxCoeff() : 0.0;
}

std::vector<Vec<double>> build_disturbance(const ExperimentConfig& cfg, const LinearSystem<double>& sys,
                                           const FirResponse<double>& phi, const RobustSpec<double>& spec,
                                           std::uint64_t seed, bool seed_overridden) {
  if (cfg.horizon < 1) throw std::runtime_error("config: simulation.horizon must be at least 1");
  const Index n = sys.n();
  std::vector<Vec<double>> w(static_cast<size_t>(cfg.horizon), Vec<double>::Zero(n));
  const ScenarioSpec& sc = cfg.scenario;
  if (sc.kind == "impulse") {
    if (sc.node < 0 || sc.node >= n) throw std::runtime_error("config: impulse node out of range");
    if (sc.time < 0 || sc.time >= cfg.horizon) throw std::runtime_error("config: impulse time out of range");
    w[static_cast<size_t>(sc.time)](sc.node) = sc.value;
  } else if (sc.kind == "random") {
    Rng rng(seed_overridden ? seed : sc.seed);
    const double amp = sc.amplitude > 0.0 ? sc.amplitude : uniform_w_max(spec);
    for (auto& wt : w)
      for (Index i = 0; i < n; ++i) wt(i) = amp * rng.symmetric();
  } else if (sc.kind == "worst_case_row") {
    if (sc.row < 0 || sc.row >= spec.p()) throw std::runtime_error("config: worst-case row out of range");
    const auto attack = worst_case_disturbance(phi, spec, sc.row);
    const size_t steps = std::min(attack.w_seq.size(), w.size());
    for (size_t t = 0; t < steps; ++t) w[t] = attack.w_seq[t];
  } else if (sc.kind == "file") {
    const Json arr = load_json((cfg.base / sc.path).string());
    const size_t steps = std::min(arr.size(), w.size());
    for (size_t t = 0; t < steps; ++t) {
      w[t] = vector_from_json<double>(arr[t]);
      if (w[t].size() != n) throw std::runtime_error("config: disturbance file dimension mismatch");
    }
  } else {
    throw std::runtime_error("config: unknown scenario kind '" + sc.kind + "'");
  }
  return w;
}

void print_infeasibility(const SynthesisResult<double>& result) {
  std::cout << "status=" << to_string(result.status) << '\n';
  if (!result.note.empty())
    std::cout << result.note << '\n';
  else
    std::cout << "certificate mass: state=" << result.infeasible_state_mass
              << " input=" << result.infeasible_input_mass << " dynamics=" << result.infeasible_dynamics_mass
              << '\n';
}

int cmd_synth(const std::string& config_path, const std::string& mode, double alpha_flag, double eps_flag,
              const std::string& out_flag, bool with_compensators) {
  const ExperimentConfig cfg = parse_config(config_path);
  const auto sys = load_system(cfg);
  const auto spec = build_spec(cfg, sys);
  const auto mask = locality_support(sys, cfg.T, cfg.d);
  const fs::path out = resolve_out_dir(cfg, out_flag);

  SynthesisResult<double> result;
  if (mode == "centralized") {
    SynthesisOptions<double> opt;
    opt.solver = cfg.solver;
    result = synthesize_centralized(sys, spec, mask, opt);
  } else if (mode == "distributed") {
    RunOptions<double> opt;
    opt.alpha = alpha_flag > 0.0 ? alpha_flag : cfg.pd_alpha;
    opt.epsilon = eps_flag > 0.0 ? eps_flag : cfg.pd_epsilon;
    opt.max_rounds = cfg.pd_max_rounds;
    opt.solver = cfg.solver;
    const auto dist = run_distributed(sys, spec, mask, opt);
    {
      std::ofstream trace_out(out / "trace.csv");
      write_trace_csv(trace_out, dist.trace);
    }
    std::cout << "rounds=" << dist.rounds << " converged=" << (dist.converged ? "yes" : "no") << '\n';
    result = dist.synthesis;
  } else {
    std::cerr << "unknown --mode '" << mode << "' (expected centralized or distributed)\n";
    return kExitUsage;
  }

  if (result.status != SolveStatus::optimal) {
    print_infeasibility(result);
    return kExitInfeasible;
  }

  save_json((out / "phi.json").string(), response_to_json(result.phi));
  save_json((out / "certificate.json").string(), certificate_to_json(result.cert));
  if (with_compensators) {
    for (Index i = 0; i < sys.n(); ++i) {
      try {
        const auto comp = synthesize_compensator(sys, mask, i, cfg.T, cfg.solver);
        Json cj;
        cj["saturated_node"] = i;
        cj["phi_bar"] = response_to_json(comp.phi_bar);
        save_json((out / ("comp_" + std::to_string(i) + ".json")).string(), cj);
      } catch (const std::runtime_error& err) {
        std::cerr << "warning: " << err.what() << '\n';
      }
    }
  }
  std::cout << "status=optimal cost=" << csv_number(result.cost) << '\n';
  return kExitOk;
}

int cmd_verify(const std::string& config_path, const std::string& phi_path, Index row_flag,
               const std::string& model_path, Index grid, const std::string& out_flag) {
  const ExperimentConfig cfg = parse_config(config_path);
  const auto sys = load_system(cfg);
  const auto spec = build_spec(cfg, sys);
  const auto phi = response_from_json<double>(load_json(phi_path));
  if (phi.n() != sys.n() || phi.m() != sys.m() || phi.horizon != cfg.T)
    throw std::runtime_error("verify: response file does not match the configured system");
  const fs::path out = resolve_out_dir(cfg, out_flag);

  const Vec<double> slack = check_robust_feasibility(phi, spec);
  Index binding_row = 0;
  slack.minCoeff(&binding_row);
  const Index row = row_flag >= 0 ? row_flag : binding_row;
  if (row >= spec.p()) throw std::runtime_error("verify: --row out of range");

  const auto attack = worst_case_disturbance(phi, spec, row);

  // The attacked row's signed response peaks at t = T when the worst-case
  // sequence w(0..T-1) is played; extend with zeros to show the decay.
  const Index tail = std::max<Index>(2 * cfg.T, 8);
  std::vector<Vec<double>> w_padded = attack.w_seq;
  w_padded.resize(static_cast<size_t>(cfg.T + tail), Vec<double>::Zero(sys.n()));
  const auto traj = simulate_closed_loop(phi, w_padded);
  const std::string attack_name = "worst_w_row" + std::to_string(row) + ".csv";
  {
    std::ofstream attack_out(out / attack_name);
    std::vector<std::pair<std::string, std::vector<double>>> cols;
    std::vector<double> ticks(attack.w_seq.size());
    for (size_t t = 0; t < ticks.size(); ++t) ticks[t] = static_cast<double>(t);
    cols.emplace_back("t", std::move(ticks));
    for (Index i = 0; i < sys.n(); ++i) {
      std::vector<double> col(attack.w_seq.size());
      for (size_t t = 0; t < col.size(); ++t) col[t] = attack.w_seq[t](i);
      cols.emplace_back("w" + std::to_string(i + 1), std::move(col));
    }
    write_plot_data(attack_out, cols, {{"row", std::to_string(row)}});
  }
  {
    std::ofstream resp_out(out / ("row_response_row" + std::to_string(row) + ".csv"));
    std::vector<double> ticks(traj.x_seq.size()), value(traj.x_seq.size()), bound(traj.x_seq.size());
    for (size_t t = 0; t < traj.x_seq.size(); ++t) {
      ticks[t] = static_cast<double>(t);
      Vec<double> xu(sys.n() + sys.m());
      xu << traj.x_seq[t], traj.u_seq[t];
      value[t] = spec.performance.P.row(row).dot(xu);
      bound[t] = spec.performance.q(row);
    }
    write_plot_data<double>(resp_out, {{"t", ticks}, {"response", value}, {"bound", bound}},
                            {{"row", std::to_string(row)}, {"achieved", csv_number(attack.achieved_value)}});
  }
  {
    std::ofstream audit_out(out / "audit.csv");
    const Vec<double> worst = spec.performance.q - slack;
    std::vector<std::string> refs(static_cast<size_t>(spec.p()));
    refs[static_cast<size_t>(row)] = attack_name;
    write_audit_csv(audit_out, spec.performance.q, worst, slack, refs);
  }

  if (!model_path.empty()) {
    const Mat<double> A_hat = matrix_from_json<double>(load_json(model_path).at("A"));
    const auto report = small_gain_margin(sys, A_hat, phi, grid);
    std::cout << "model-error margin=" << csv_number(report.margin)
              << " grid_bound=" << csv_number(report.truncation_bound) << " verdict=" << to_string(report.verdict)
              << '\n';
  }

  const double min_slack = slack.minCoeff();
  std::cout << "rows=" << spec.p() << " min_slack=" << csv_number(min_slack) << " binding_row=" << binding_row
            << '\n';
  if (min_slack < -1e-6) {
    for (Index r = 0; r < slack.size(); ++r)
      if (slack(r) < -1e-6) std::cout << "violation row=" << r << " slack=" << csv_number(slack(r)) << '\n';
    return kExitViolation;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::string& phi_path, const std::string& comp_dir,
                 std::uint64_t seed, bool seed_overridden, const std::string& out_flag) {
  const ExperimentConfig cfg = parse_config(config_path);
  const auto sys = load_system(cfg);
  const auto spec = build_spec(cfg, sys);
  const auto phi = response_from_json<double>(load_json(phi_path));
  if (phi.n() != sys.n() || phi.m() != sys.m())
    throw std::runtime_error("simulate: response file does not match the configured system");
  const fs::path out = resolve_out_dir(cfg, out_flag);

  const auto w_seq = build_disturbance(cfg, sys, phi, spec, seed, seed_overridden);
  const double limit = cfg.input_limit > 0.0 ? cfg.input_limit : 1e18;
  const auto box = symmetric_input_box<double>(sys.m(), limit);

  std::vector<Compensator<double>> comps;
  if (!comp_dir.empty()) {
    for (Index i = 0; i < sys.n(); ++i) {
      const fs::path file = fs::path(comp_dir) / ("comp_" + std::to_string(i) + ".json");
      if (!fs::exists(file)) continue;
      const Json cj = load_json(file.string());
      Compensator<double> comp;
      comp.saturated_node = cj.at("saturated_node").get<Index>();
      comp.phi_bar = response_from_json<double>(cj.at("phi_bar"));
      comp.reset();
      comps.push_back(std::move(comp));
    }
    if (comps.empty()) std::cerr << "warning: no compensators found in " << comp_dir << "; naive fallback\n";
  }

  SaturationRecord<double> rec_naive, rec_comp;
  const auto naive = run_naive_saturated(sys, phi, box, w_seq, cfg.horizon, &rec_naive);
  const auto comp = run_compensated(sys, phi, comps, box, w_seq, cfg.horizon, &rec_comp);
  for (const auto& line : rec_comp.log) std::cerr << "note: " << line << '\n';

  {
    std::ofstream naive_out(out / "naive.csv");
    write_trajectory_csv(naive_out, naive, &rec_naive);
    std::ofstream comp_out(out / "compensated.csv");
    write_trajectory_csv(comp_out, comp, &rec_comp);
  }

  Index last_event = -1;
  for (const auto* rec : {&rec_naive, &rec_comp})
    for (size_t t = 0; t < rec->sat_flags.size(); ++t)
      for (char f : rec->sat_flags[t])
        if (f) last_event = std::max(last_event, static_cast<Index>(t));
  double e_naive = 0.0, e_comp = 0.0;
  for (size_t t = static_cast<size_t>(last_event + 1); t < naive.x_seq.size(); ++t) {
    e_naive += naive.x_seq[t].squaredNorm();
    e_comp += comp.x_seq[t].squaredNorm();
  }
  const double ratio = e_naive > 0.0 ? e_comp / e_naive : 1.0;
  std::cout << "last_saturation_step=" << last_event << " post_event_energy_naive=" << csv_number(e_naive)
            << " post_event_energy_compensated=" << csv_number(e_comp) << '\n';
  std::cout << "post-event energy ratio compensated/naive = " << csv_number(ratio) << '\n';
  return kExitOk;
}

int cmd_chain_gen(Index n, double alpha, double rho, const std::string& out_file) {
  const auto sys = make_chain_system<double>(n, alpha, rho);
  save_json(out_file, system_to_json(sys));
  std::cout << "wrote " << out_file << " (n=" << n << ")\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"distributed robust controller synthesis toolkit", "slskit"};
  app.require_subcommand(1);

  std::string config_path, out_flag, mode = "centralized";
  double alpha_flag = 0.0, eps_flag = 0.0;
  bool with_compensators = false;

  auto* synth = app.add_subcommand("synth", "synthesize a controller from a config");
  synth->add_option("config", config_path, "experiment config JSON")->required();
  synth->add_option("--mode", mode, "centralized|distributed")->capture_default_str();
  synth->add_option("--alpha", alpha_flag, "distributed dual step size (0 = scale-aware default)");
  synth->add_option("--eps", eps_flag, "distributed stopping tolerance");
  synth->add_option("--out", out_flag, "output directory (overrides config out_dir)");
  synth->add_flag("--with-compensators", with_compensators, "also write per-node saturation compensators");

  std::string phi_path, model_path;
  Index row_flag = -1, grid = 1024;
  auto* verify = app.add_subcommand("verify", "audit a synthesized response against its bounds");
  verify->add_option("config", config_path, "experiment config JSON")->required();
  verify->add_option("--phi", phi_path, "response JSON to audit")->required();
  verify->add_option("--row", row_flag, "performance row to attack (default: the binding row)");
  verify->add_option("--model", model_path, "internal-model JSON {\"A\": ...} for the gain report");
  verify->add_option("--grid", grid, "frequency-grid size for the gain report")->capture_default_str();
  verify->add_option("--out", out_flag, "output directory (overrides config out_dir)");

  std::string comp_dir;
  std::uint64_t seed = 0;
  auto* simulate = app.add_subcommand("simulate", "roll out the saturation scenario, naive vs compensated");
  simulate->add_option("config", config_path, "experiment config JSON")->required();
  simulate->add_option("--phi", phi_path, "response JSON to realize")->required();
  simulate->add_option("--compensators", comp_dir, "directory holding comp_<i>.json files");
  auto* seed_opt = simulate->add_option("--seed", seed, "override the random-scenario seed");
  simulate->add_option("--out", out_flag, "output directory (overrides config out_dir)");

  Index gen_n = 0;
  double gen_alpha = 0.0, gen_rho = 0.0;
  std::string gen_out;
  auto* chain_gen = app.add_subcommand("chain-gen", "write a chain system JSON");
  chain_gen->add_option("--n", gen_n, "node count")->required();
  chain_gen->add_option("--alpha", gen_alpha, "coupling scalar")->required();
  chain_gen->add_option("--rho", gen_rho, "scaling scalar")->required();
  chain_gen->add_option("--out", gen_out, "output file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << '\n';
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(synth)) return cmd_synth(config_path, mode, alpha_flag, eps_flag, out_flag, with_compensators);
    if (app.got_subcommand(verify))
      return cmd_verify(config_path, phi_path, row_flag, model_path, grid, out_flag);
    if (app.got_subcommand(simulate))
      return cmd_simulate(config_path, phi_path, comp_dir, seed, seed_opt->count() > 0, out_flag);
    if (app.got_subcommand(chain_gen)) return cmd_chain_gen(gen_n, gen_alpha, gen_rho, gen_out);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitConfig;
  }
  return kExitUsage;
}

}  // namespace sls::cli
