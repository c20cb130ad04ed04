// stiffinfer command-line front end.
//
// Exit status: 0 success, 1 invalid input, 2 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stiffinfer/io.hpp"
#include "stiffinfer/stiffinfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stiffinfer;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  int threads = 0;
  std::string config;
  std::vector<std::string> argv;
};

fs::path run_directory(const Globals& g, const std::string& fallback) {
  const fs::path dir = g.out.empty() ? fs::path("stiffinfer-runs") / fallback : fs::path(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

Scenario resolve_scenario(const Globals& g, const std::string& name) {
  Scenario s = g.config.empty() ? find_scenario(name) : load_scenario(g.config);
  s.validate();
  return s;
}

RunManifest start_manifest(const Globals& g, const std::string& command) {
  RunManifest m;
  m.command = command;
  m.arguments = g.argv;
  m.seeds["master"] = g.seed;
  return m;
}

json scenario_config(const Scenario& s) { return {{"scenario", s.name}, {"yaml", to_yaml(s)}}; }

std::string log10_label(double t) {
  std::ostringstream o;
  o << "1e" << std::fixed << std::setprecision(2) << std::log10(t);
  return o.str();
}

// ---------------------------------------------------------------------------

int cmd_mech_validate(const std::string& path) {
  json j{{"path", path}};
  try {
    const Mechanism m = load_mechanism(path);
    j["name"] = m.name;
    j["species"] = m.n_species();
    j["elements"] = m.n_elements();
    j["reactions"] = m.n_reactions();
    j["valid"] = true;
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const Error& e) {
    j["valid"] = false;
    j["error"] = e.what();
    std::cout << j.dump(2) << "\n";
    return 1;
  }
}

int cmd_scenario_show(const Globals& g, const std::string& name) {
  if (name == "list") {
    for (const auto& n : scenario_names()) std::cout << n << "\n";
    return 0;
  }
  std::cout << to_yaml(resolve_scenario(g, name));
  return 0;
}

struct SimulateArgs {
  std::string model = "robertson";
  std::optional<std::string> scenario;
  std::optional<double> t_end;
  std::optional<double> temperature;
  int per_decade = 20;
  bool sensitivity = false;
};

Scenario simulate_scenario(const Globals& g, const SimulateArgs& a) {
  if (!g.config.empty() || a.scenario) return resolve_scenario(g, a.scenario.value_or(""));
  if (a.model == "robertson") return scenario_robertson();
  Scenario s = scenario_h2_autoignition();
  if (a.model == "h2-adiabatic") return s;
  if (a.model == "h2-isothermal") {
    s.name = "h2-isothermal";
    s.description = "Hydrogen/oxygen mixture at fixed temperature and pressure";
    s.kind = ModelKind::isothermal;
    s.temperature = s.anchor_temperature;
    return s;
  }
  throw ValidationError("unknown model '" + a.model + "' (expected robertson, h2-adiabatic or h2-isothermal)");
}

int cmd_simulate(const Globals& g, SimulateArgs a) {
  Scenario s = simulate_scenario(g, a);
  if (a.temperature) {
    if (s.kind != ModelKind::isothermal) throw ValidationError("--temperature applies to isothermal models only");
    s.temperature = *a.temperature;
  }
  if (a.t_end) s.t_end = *a.t_end;
  if (!(s.t_end > 0.0)) throw ValidationError("--t-end must be positive");
  if (a.per_decade < 1) throw ValidationError("--per-decade must be at least 1");
  const double t_lo = std::min(std::pow(10.0, s.rank_window.log10_start), s.t_end);
  std::vector<double> times = t_lo < s.t_end ? log_grid(t_lo, s.t_end, a.per_decade) : std::vector<double>{s.t_end};
  times.back() = s.t_end;

  ReactorSystem sys = s.make_system();
  const Eigen::VectorXd y0 = s.truth.mu0;
  SensitivityTrajectory tr;
  if (a.sensitivity) tr = integrate_with_sensitivity(sys, y0, s.t_end, s.solver, times, Record::outputs_only);
  else tr.base = integrate(sys, y0, s.t_end, s.solver, times, Record::outputs_only);

  const fs::path dir = run_directory(g, "simulate-" + s.name);
  std::vector<std::string> header{"t"};
  for (const auto& sp : s.species) header.push_back(sp);
  header.push_back("T");
  const auto n = static_cast<Eigen::Index>(s.species.size());
  if (a.sensitivity)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) header.push_back("A_" + s.species[i] + "_" + s.species[j]);
  CsvWriter csv(dir / "trajectory.csv", header);
  auto row = [&](double t, const Eigen::VectorXd& y, double T, const Eigen::MatrixXd* A) {
    std::vector<double> r{t};
    for (Eigen::Index i = 0; i < n; ++i) r.push_back(std::max(y[i], 0.0));
    r.push_back(T);
    if (A)
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) r.push_back((*A)(i, j));
    csv.write(r);
  };
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  row(0.0, y0, sys.is_robertson() ? std::nan("") : sys.temperature(y0), a.sensitivity ? &I : nullptr);
  for (std::size_t k = 0; k < tr.base.size(); ++k)
    row(tr.base.times[k], tr.base.states[k], tr.base.temperatures[k], a.sensitivity ? &tr.A[k] : nullptr);
  csv.close();

  RunManifest m = start_manifest(g, "simulate");
  m.config = scenario_config(s);
  m.config["sensitivity"] = a.sensitivity;
  m.config["per_decade"] = a.per_decade;
  m.add_output(dir, "trajectory.csv");
  m.write(dir);
  std::cout << (dir / "trajectory.csv").string() << "\n";
  return 0;
}

struct RankArgs {
  std::vector<std::string> scenarios{"h2-autoignition"};
  std::optional<double> threshold;
};

int cmd_rank(const Globals& g, const RankArgs& a) {
  if (!g.config.empty() && a.scenarios.size() > 1) throw ValidationError("--config takes a single scenario");
  const fs::path dir = run_directory(g, "rank");
  RunManifest m = start_manifest(g, "rank");
  json summary;
  summary["threshold"] = json::object();
  summary["descent_times"] = json::object();
  summary["log10_descent_times"] = json::object();
  m.config["scenarios"] = json::array();
  for (const auto& name : a.scenarios) {
    const Scenario s = resolve_scenario(g, name);
    const auto r = rank_analysis(s, a.threshold);
    const std::string file = "rank-" + s.name + ".csv";
    std::vector<std::string> header{"t"};
    const auto nq = r.sigma_QAQ.front().size(), nw = r.sigma_WAW.front().size();
    for (Eigen::Index i = 0; i < nq; ++i) header.push_back("sigma_QAQ_" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < nw; ++i) header.push_back("sigma_WAW_" + std::to_string(i + 1));
    for (const char* c : {"rank_QAQ", "rank_WAW", "rank_A", "norm_QAW", "qaq_identity_error"}) header.emplace_back(c);
    CsvWriter csv(dir / file, header);
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      std::vector<double> row{r.times[k]};
      for (Eigen::Index i = 0; i < nq; ++i) row.push_back(r.sigma_QAQ[k][i]);
      for (Eigen::Index i = 0; i < nw; ++i) row.push_back(r.sigma_WAW[k][i]);
      row.push_back(static_cast<double>(r.rank_QAQ[k]));
      row.push_back(static_cast<double>(r.rank_WAW[k]));
      row.push_back(static_cast<double>(r.rank_A[k]));
      row.push_back(r.norm_QAW[k]);
      row.push_back(r.qaq_identity_error[k]);
      csv.write(row);
    }
    csv.close();
    m.add_output(dir, file);

    std::ostringstream key;
    if (s.kind == ModelKind::isothermal) key << s.temperature << " K";
    else key << s.name;
    json times = json::array(), logs = json::array();
    for (const auto& d : r.descents)
      if (d.block == "WAW") {
        times.push_back(d.time);
        logs.push_back(std::round(std::log10(d.time) * 100.0) / 100.0);
      }
    summary["descent_times"][key.str()] = times;
    summary["log10_descent_times"][key.str()] = logs;
    summary["threshold"][key.str()] = r.threshold;
    summary["rank_QAQ"][key.str()] = {{"min", *std::min_element(r.rank_QAQ.begin(), r.rank_QAQ.end())},
                                      {"max", *std::max_element(r.rank_QAQ.begin(), r.rank_QAQ.end())}};
    m.config["scenarios"].push_back(scenario_config(s));
  }
  summary["block"] = "WAW";
  write_json(dir / "rank_summary.json", summary);
  m.add_output(dir, "rank_summary.json");
  m.write(dir);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

json observation_json(const ObservationSummary& o) {
  return {{"t_obs", o.t_obs},       {"mode", to_string(o.mode)},
          {"n_members", o.n_members}, {"mu_obs", to_json(o.mu_obs)},
          {"s_obs", to_json(o.s_obs)}, {"Sigma_obs", to_json(o.Sigma_obs)},
          {"corr", to_json(o.corr)},  {"jittered", o.jittered},
          {"jitter", o.jitter},       {"min_eigenvalue", o.min_eigenvalue}};
}

json verdict_json(const std::vector<std::string>& species, const std::vector<FailureVerdict>& v) {
  json j = json::object();
  for (std::size_t i = 0; i < v.size(); ++i)
    j[species[i]] = {{"jsd_truth", v[i].jsd_truth}, {"jsd_prior", v[i].jsd_prior}, {"difference", v[i].difference},
                     {"failed", v[i].failed}};
  return j;
}

struct InferArgs {
  std::string scenario = "robertson";
  double t_obs = 1.0;
  std::string mode = "variance";
  std::optional<int> chains, draws, warmup;
  double threshold = 0.2;
  double base = 2.0;
  int bins = 64;
};

void apply_sampler_overrides(Scenario& s, const InferArgs& a) {
  if (a.chains) s.chains = *a.chains;
  if (a.draws) s.sampler.n_draws = *a.draws;
  if (a.warmup) s.sampler.n_warmup = *a.warmup;
  if (s.chains < 1) throw ValidationError("--chains must be at least 1");
  s.sampler.validate();
}

int cmd_infer(const Globals& g, const InferArgs& a) {
  Scenario s = resolve_scenario(g, a.scenario);
  apply_sampler_overrides(s, a);
  if (!(a.t_obs > 0.0)) throw ValidationError("--tobs must be positive");
  const auto mode = observation_mode_from_string(a.mode);
  const unsigned threads = resolve_threads(g.threads);
  const auto st = s.inference_settings(mode, g.seed, threads);
  const Eigen::MatrixXd truth = sample_truth(s.truth, seeds::truth(g.seed));
  const ReactorSystem sys = s.make_system();
  const auto obs = generate_observation(truth, sys, a.t_obs, mode, s.solver, threads);
  const auto res = sample_posterior(s.truth, sys, obs, st);
  const VerdictOptions vo{Support{-3.5, 3.5, a.bins}, a.threshold, a.base};
  const auto verdicts = inference_verdicts(res, vo);

  const fs::path dir = run_directory(g, "infer-" + s.name + "-" + log10_label(a.t_obs) + "-" + a.mode);
  std::vector<std::string> header{"chain", "draw"};
  for (const auto& sp : s.species) header.push_back(sp);
  {
    CsvWriter csv(dir / "draws.csv", header);
    for (std::size_t c = 0; c < res.draws.size(); ++c)
      for (Eigen::Index k = 0; k < res.draws[c].rows(); ++k) {
        std::vector<double> row{static_cast<double>(c), static_cast<double>(k)};
        for (Eigen::Index i = 0; i < res.draws[c].cols(); ++i) row.push_back(res.draws[c](k, i));
        csv.write(row);
      }
    csv.close();
  }
  {
    std::vector<std::string> th{"member"};
    for (const auto& sp : s.species) th.push_back(sp);
    CsvWriter csv(dir / "truth.csv", th);
    for (Eigen::Index k = 0; k < truth.rows(); ++k) {
      std::vector<double> row{static_cast<double>(k)};
      for (Eigen::Index i = 0; i < truth.cols(); ++i) row.push_back(truth(k, i));
      csv.write(row);
    }
    csv.close();
  }
  json report;
  report["scenario"] = s.name;
  report["species"] = s.species;
  report["observation"] = observation_json(obs);
  json chains = json::array();
  for (const auto& c : res.chains)
    chains.push_back({{"seed", c.seed},
                      {"step_size", c.step_size},
                      {"inv_metric", to_json(c.inv_metric)},
                      {"mean_accept_stat", c.mean_accept_stat()},
                      {"divergences", std::count(c.divergent.begin(), c.divergent.end(), 1)},
                      {"warmup_divergences", c.warmup_divergences},
                      {"flagged", c.flagged()}});
  report["chains"] = chains;
  report["diagnostics"] = {{"rhat", to_json(res.rhat)},
                           {"ess", to_json(res.ess)},
                           {"divergence_fraction", res.divergence_fraction},
                           {"flagged", res.flagged}};
  report["verdicts"] = verdict_json(s.species, verdicts);
  report["verdict_settings"] = {{"threshold", a.threshold}, {"base", a.base}, {"bins", a.bins}};
  write_json(dir / "report.json", report);

  RunManifest m = start_manifest(g, "infer");
  m.config = scenario_config(s);
  m.config["t_obs"] = a.t_obs;
  m.config["mode"] = a.mode;
  m.seeds["truth"] = seeds::truth(g.seed);
  for (int c = 0; c < s.chains; ++c) m.seeds["chains"].push_back(seeds::chain(g.seed, c));
  for (const char* f : {"draws.csv", "truth.csv", "report.json"}) m.add_output(dir, f);
  m.write(dir);
  std::cout << report["verdicts"].dump(2) << "\n";
  return 0;
}

struct JsdArgs {
  std::string draws, truth, prior;
  std::string scenario = "robertson";
  double threshold = 0.2;
  double base = 2.0;
  int bins = 64;
};

/// Normalized samples (phi - mu0) / s0 per species column of a CSV file.
std::vector<std::vector<double>> normalized_columns(const std::string& path, const Scenario& s) {
  const CsvTable t = read_csv(path);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.species.size(); ++i) {
    const auto c = t.column(s.species[i]);
    if (!c) throw ValidationError(path + ": missing column '" + s.species[i] + "'");
    auto v = t.numeric_column(*c);
    const auto k = static_cast<Eigen::Index>(i);
    for (double& x : v) x = (x - s.truth.mu0[k]) / s.truth.s0[k];
    out.push_back(std::move(v));
  }
  return out;
}

int cmd_jsd(const Globals& g, const JsdArgs& a) {
  const Scenario s = resolve_scenario(g, a.scenario);
  const Support sup{-3.5, 3.5, a.bins};
  const auto post = normalized_columns(a.draws, s);
  std::optional<std::vector<std::vector<double>>> truth, prior;
  if (!a.truth.empty()) truth = normalized_columns(a.truth, s);
  if (!a.prior.empty()) prior = normalized_columns(a.prior, s);
  json j;
  j["scenario"] = s.name;
  j["settings"] = {{"threshold", a.threshold}, {"base", a.base}, {"bins", a.bins}};
  j["truth_reference"] = truth ? a.truth : "exact truncated normal";
  j["prior_reference"] = prior ? a.prior : "exact uniform";
  std::vector<FailureVerdict> v;
  for (std::size_t i = 0; i < s.species.size(); ++i) {
    const auto T = truth ? estimate_marginal((*truth)[i], sup) : truncated_normal_marginal(sup);
    const auto P = prior ? estimate_marginal((*prior)[i], sup) : uniform_marginal(sup);
    v.push_back(failure_verdict(T, P, estimate_marginal(post[i], sup), a.threshold, a.base));
  }
  j["verdicts"] = verdict_json(s.species, v);
  const fs::path dir = run_directory(g, "jsd");
  write_json(dir / "jsd.json", j);
  RunManifest m = start_manifest(g, "jsd");
  m.config = {{"draws", a.draws}, {"truth", a.truth}, {"prior", a.prior}, {"scenario", s.name}};
  m.add_output(dir, "jsd.json");
  m.write(dir);
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SweepArgs {
  std::string scenario = "robertson";
  std::string mode = "variance";
  std::optional<double> start, stop, step;
  InferArgs sampler;
};

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  Scenario s = resolve_scenario(g, a.scenario);
  apply_sampler_overrides(s, a.sampler);
  LogGrid grid = s.t_obs;
  if (a.start) grid.log10_start = *a.start;
  if (a.stop) grid.log10_stop = *a.stop;
  if (a.step) grid.step = *a.step;
  const auto mode = observation_mode_from_string(a.mode);
  const unsigned threads = resolve_threads(g.threads);
  const fs::path dir = run_directory(g, "sweep-" + s.name + "-" + a.mode);
  const VerdictOptions vo{Support{-3.5, 3.5, a.sampler.bins}, a.sampler.threshold, a.sampler.base};

  CsvWriter csv(dir / "sweep.csv", {"t_obs", "species", "jsd_truth", "jsd_prior", "failed"});
  const auto times = grid.values();
  const auto r = failure_time_sweep(s, times, mode, g.seed, threads, vo, [&](std::size_t k, const SweepPoint& p) {
    for (std::size_t i = 0; i < p.verdicts.size(); ++i)
      csv.write({format_double(p.t_obs), s.species[i], format_double(p.verdicts[i].jsd_truth),
                 format_double(p.verdicts[i].jsd_prior), p.verdicts[i].failed ? "1" : "0"});
    std::cerr << "[" << k + 1 << "/" << times.size() << "] t_obs " << p.t_obs << "\n";
    return true;
  });
  csv.close();

  json ft;
  ft["scenario"] = s.name;
  ft["mode"] = a.mode;
  ft["seed"] = g.seed;
  ft["grid"] = {{"log10_start", grid.log10_start}, {"log10_stop", grid.log10_stop}, {"step", grid.step}};
  for (std::size_t i = 0; i < s.species.size(); ++i) {
    const auto& c = r.critical_time[i];
    ft["critical_time"][s.species[i]] = c ? json(*c) : json(nullptr);
    ft["log10_critical_time"][s.species[i]] = c ? json(std::log10(*c)) : json(nullptr);
  }
  json diag = json::array();
  for (const auto& p : r.points)
    diag.push_back({{"t_obs", p.t_obs},
                    {"rhat_max", p.rhat.maxCoeff()},
                    {"ess_min", p.ess.minCoeff()},
                    {"divergence_fraction", p.divergence_fraction},
                    {"step_sizes", p.step_sizes},
                    {"jittered", p.observation.jittered}});
  ft["diagnostics"] = diag;
  write_json(dir / "failure_times.json", ft);

  RunManifest m = start_manifest(g, "sweep");
  m.config = scenario_config(s);
  m.config["mode"] = a.mode;
  m.seeds["truth"] = seeds::truth(g.seed);
  for (int c = 0; c < s.chains; ++c) m.seeds["chains"].push_back(seeds::chain(g.seed, c));
  m.add_output(dir, "sweep.csv");
  m.add_output(dir, "failure_times.json");
  m.write(dir);
  std::cout << json{{"critical_time", ft["critical_time"]}}.dump(2) << "\n";
  return 0;
}

void add_verdict_options(CLI::App* c, InferArgs& a) {
  c->add_option("--threshold", a.threshold, "Failure threshold on the JSD difference (dimensionless)")
      ->capture_default_str();
  c->add_option("--base", a.base, "Logarithm base of the Jensen-Shannon distance")->capture_default_str();
  c->add_option("--bins", a.bins, "Histogram bins over the normalized support [-3.5, 3.5]")->capture_default_str();
}

void add_sampler_options(CLI::App* c, InferArgs& a) {
  c->add_option("--chains", a.chains, "Number of NUTS chains (count; default from scenario)");
  c->add_option("--draws", a.draws, "Post-warmup draws per chain (count; default from scenario)");
  c->add_option("--warmup", a.warmup, "Warmup iterations per chain (count; default from scenario)");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Initial-composition inference and information-loss analysis for stiff chemical kinetics"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  for (int i = 1; i < argc; ++i) g.argv.emplace_back(argv[i]);
  app.add_option("--seed", g.seed, "Master random seed (integer); truth and chain streams are derived from it")
      ->capture_default_str();
  app.add_option("--out", g.out, "Run directory for every output file (path; default stiffinfer-runs/<command>)");
  app.add_option("--threads", g.threads,
                 "Worker threads (count; 0 uses STIFFINFER_THREADS, else the hardware concurrency)")
      ->capture_default_str();
  app.add_option("--config", g.config, "Scenario YAML file replacing the named scenario (path)")
      ->check(CLI::ExistingFile);

  auto* mech = app.add_subcommand("mech", "Mechanism utilities");
  mech->require_subcommand(1);
  std::string mech_path;
  auto* mech_validate = mech->add_subcommand("validate", "Parse and validate a mechanism; prints counts as JSON");
  mech_validate->add_option("path", mech_path, "Mechanism YAML file (path)")->required();

  auto* scen = app.add_subcommand("scenario", "Scenario utilities");
  scen->require_subcommand(1);
  std::string show_name;
  auto* scen_show = scen->add_subcommand("show", "Print a scenario as YAML ('list' prints the names)");
  scen_show->add_option("name", show_name, "Scenario name")->required();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Integrate a model from its mean initial state; writes trajectory.csv");
  simulate->add_option("--model", sim.model, "Model: robertson, h2-adiabatic or h2-isothermal")
      ->check(CLI::IsMember({"robertson", "h2-adiabatic", "h2-isothermal"}))
      ->capture_default_str();
  simulate->add_option("--scenario", sim.scenario, "Named scenario instead of --model");
  simulate->add_option("--t-end", sim.t_end, "End time (s; default from scenario)");
  simulate->add_option("--temperature", sim.temperature, "Fixed temperature for isothermal models (K)");
  simulate->add_option("--per-decade", sim.per_decade, "Output points per decade of time (count)")
      ->capture_default_str();
  simulate->add_flag("--sensitivity", sim.sensitivity, "Also write the flattened sensitivity matrix A (dimensionless)");

  RankArgs rk;
  auto* rank = app.add_subcommand("rank", "Singular values and rank descents of the sensitivity blocks");
  rank->add_option("--scenario", rk.scenarios, "Scenario name (repeatable)")->capture_default_str();
  rank->add_option("--threshold", rk.threshold, "Numerical-rank threshold on singular values (dimensionless)");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Sample the posterior of the initial composition at one observation time");
  infer->add_option("--scenario", inf.scenario, "Scenario name")->capture_default_str();
  infer->add_option("--tobs", inf.t_obs, "Observation time (s)")->capture_default_str();
  infer->add_option("--mode", inf.mode, "Observation covariance: variance (diagonal) or covariance (full)")
      ->check(CLI::IsMember({"variance", "covariance"}))
      ->capture_default_str();
  add_sampler_options(infer, inf);
  add_verdict_options(infer, inf);

  JsdArgs js;
  auto* jsd = app.add_subcommand("jsd", "Failure verdicts of posterior draws against truth and prior");
  jsd->add_option("--draws", js.draws, "Posterior draws CSV with one column per species (path)")->required();
  jsd->add_option("--truth", js.truth, "Truth samples CSV (path; default exact truncated normal)");
  jsd->add_option("--prior", js.prior, "Prior samples CSV (path; default exact uniform on the box)");
  jsd->add_option("--scenario", js.scenario, "Scenario supplying species names and the normalization")
      ->capture_default_str();
  jsd->add_option("--threshold", js.threshold, "Failure threshold on the JSD difference (dimensionless)")
      ->capture_default_str();
  jsd->add_option("--base", js.base, "Logarithm base of the Jensen-Shannon distance")->capture_default_str();
  jsd->add_option("--bins", js.bins, "Histogram bins over the normalized support [-3.5, 3.5]")->capture_default_str();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Inference at every observation time of a log grid; critical failure times");
  sweep->add_option("--scenario", sw.scenario, "Scenario name")->capture_default_str();
  sweep->add_option("--mode", sw.mode, "Observation covariance: variance (diagonal) or covariance (full)")
      ->check(CLI::IsMember({"variance", "covariance"}))
      ->capture_default_str();
  sweep->add_option("--log10-start", sw.start, "First observation time (log10 s; default from scenario)");
  sweep->add_option("--log10-stop", sw.stop, "Last observation time (log10 s; default from scenario)");
  sweep->add_option("--log10-step", sw.step, "Grid spacing (decades; default from scenario)");
  add_sampler_options(sweep, sw.sampler);
  add_verdict_options(sweep, sw.sampler);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*mech_validate) return cmd_mech_validate(mech_path);
    if (*scen_show) return cmd_scenario_show(g, show_name);
    if (*simulate) return cmd_simulate(g, sim);
    if (*rank) return cmd_rank(g, rk);
    if (*infer) return cmd_infer(g, inf);
    if (*jsd) return cmd_jsd(g, js);
    if (*sweep) return cmd_sweep(g, sw);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const YAML::Exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
