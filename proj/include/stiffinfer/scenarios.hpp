#pragma once

// Named experiment setups. Every study constant lives here (or in the reactor
// defaults); commands and tests look scenarios up by name.

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stiffinfer/bayes.hpp"
#include "stiffinfer/constants.hpp"
#include "stiffinfer/errors.hpp"
#include "stiffinfer/mechanism.hpp"
#include "stiffinfer/nuts.hpp"
#include "stiffinfer/ode.hpp"
#include "stiffinfer/reactor.hpp"
#include "stiffinfer/thermo.hpp"

namespace stiffinfer {

/// Points 10^(start + k step), k = 0 .. round((stop - start) / step).
struct LogGrid {
  double log10_start = 0.0;
  double log10_stop = 0.0;
  double step = 0.1;

  std::size_t size() const { return static_cast<std::size_t>(std::lround((log10_stop - log10_start) / step)) + 1; }
  std::vector<double> values() const {
    if (!(step > 0.0) || log10_stop < log10_start) throw ValidationError("invalid log grid");
    std::vector<double> v;
    for (std::size_t k = 0; k < size(); ++k) v.push_back(std::pow(10.0, log10_start + static_cast<double>(k) * step));
    return v;
  }
  bool operator==(const LogGrid&) const = default;
};

enum class ModelKind { robertson, adiabatic_isobaric, isothermal };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::robertson: return "robertson";
    case ModelKind::adiabatic_isobaric: return "adiabatic-isobaric";
    case ModelKind::isothermal: return "isothermal";
  }
  return "";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "robertson") return ModelKind::robertson;
  if (s == "adiabatic-isobaric") return ModelKind::adiabatic_isobaric;
  if (s == "isothermal") return ModelKind::isothermal;
  throw ValidationError("unknown model kind '" + s + "'");
}

struct Scenario {
  std::string name;
  std::string description;
  ModelKind kind = ModelKind::robertson;
  std::string mechanism;           ///< bundled name or path; empty for Robertson
  RobertsonRates rates;
  double pressure = constants::one_atm;
  double anchor_temperature = 0.0; ///< h0 = h(mu0, T_anchor) for adiabatic reactors
  double temperature = 0.0;        ///< fixed T for isothermal reactors
  std::vector<std::string> species;
  TruthSpec truth;
  LogGrid t_obs;
  LogGrid rank_window;             ///< analysis grid for rank tracking
  double rank_threshold = 1e-6;
  double t_end = 1.0;
  SolverConfig solver;
  SolverConfig posterior_solver;
  NutsSettings sampler;
  int chains = 4;
  std::optional<Eigen::VectorXd> perturbation;
  std::string notes;

  std::shared_ptr<const Mechanism> load_mech() const {
    if (kind == ModelKind::robertson) return nullptr;
    if (mechanism.empty()) throw ValidationError("scenario '" + name + "' needs a mechanism");
    const std::filesystem::path p(mechanism);
    if (p.has_extension()) {
      if (!std::filesystem::exists(p)) throw ValidationError("mechanism file '" + mechanism + "' does not exist");
      return std::make_shared<const Mechanism>(load_mechanism(p));
    }
    return std::make_shared<const Mechanism>(load_bundled_mechanism(mechanism));
  }

  /// Initial enthalpy shared by every ensemble member (adiabatic reactors).
  double h0(const Mechanism& mech) const { return MixtureThermo(mech).enthalpy(truth.mu0, anchor_temperature); }

  ReactorSystem make_system(JacobianMethod method = JacobianMethod::analytic) const {
    switch (kind) {
      case ModelKind::robertson: return ReactorSystem(rates);
      case ModelKind::adiabatic_isobaric: {
        auto mech = load_mech();
        const double h = h0(*mech);
        ReactorSystem sys(mech, AdiabaticIsobaric{h, pressure}, method);
        sys.set_temperature_guess(anchor_temperature);
        return sys;
      }
      case ModelKind::isothermal: return ReactorSystem(load_mech(), Isothermal{temperature, pressure}, method);
    }
    throw ValidationError("unhandled model kind");
  }

  InferenceSettings inference_settings(ObservationMode mode, std::uint64_t seed, unsigned threads = 1) const {
    InferenceSettings st;
    st.nuts = sampler;
    st.chains = chains;
    st.mode = mode;
    st.truth_solver = solver;
    st.posterior_solver = posterior_solver;
    st.seed = seed;
    st.threads = threads;
    return st;
  }

  void validate() const {
    truth.validate();
    if (static_cast<Eigen::Index>(species.size()) != truth.size())
      throw ValidationError("scenario '" + name + "': species list and truth mean differ in length");
    if (kind == ModelKind::robertson && truth.size() != 3) throw ValidationError("the Robertson model has 3 species");
    if (kind == ModelKind::adiabatic_isobaric && !(anchor_temperature > 0.0))
      throw ValidationError("adiabatic scenario needs a positive anchor temperature");
    if (kind == ModelKind::isothermal && !(temperature > 0.0))
      throw ValidationError("isothermal scenario needs a positive temperature");
    if (!(pressure > 0.0)) throw ValidationError("pressure must be positive");
    if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
    if (!(rank_threshold > 0.0)) throw ValidationError("rank threshold must be positive");
    if (perturbation && perturbation->size() != truth.size()) throw ValidationError("perturbation length mismatch");
    solver.validate();
    posterior_solver.validate();
    sampler.validate();
    (void)t_obs.values();
    (void)rank_window.values();
    if (kind != ModelKind::robertson) {
      const auto mech = load_mech();
      if (mech->n_species() != species.size()) throw ValidationError("species count differs from the mechanism");
      for (std::size_t i = 0; i < species.size(); ++i)
        if (mech->species[i].name != species[i])
          throw ValidationError("species " + std::to_string(i) + " is '" + species[i] + "' but the mechanism has '" +
                                mech->species[i].name + "'");
    }
  }
};

namespace detail {

inline SolverConfig inference_solver_defaults() {
  SolverConfig c;
  c.rtol = 1e-6;
  c.sensitivity_error_control = false;
  return c;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

} // namespace detail

inline Scenario scenario_robertson() {
  Scenario s;
  s.name = "robertson";
  s.description = "Robertson autocatalytic system, initial-value inference";
  s.kind = ModelKind::robertson;
  s.species = {"A", "B", "C"};
  s.truth.mu0 = detail::vec({0.95, 5e-6, 0.05});
  s.truth.s0 = detail::vec({0.01, 1e-6, 0.01});
  s.t_obs = {-4.0, 0.0, 0.1};
  s.rank_window = {-6.0, 0.0, 0.05};
  s.t_end = 1.0;
  s.posterior_solver = detail::inference_solver_defaults();
  s.perturbation = detail::vec({1e-3, 1e-7, 1e-3});
  return s;
}

inline Scenario scenario_h2_autoignition() {
  Scenario s;
  s.name = "h2-autoignition";
  s.description = "Hydrogen/oxygen autoignition, adiabatic and isobaric";
  s.kind = ModelKind::adiabatic_isobaric;
  s.mechanism = "h2o2";
  s.anchor_temperature = 1200.0;
  s.species = {"H2", "H", "O", "O2", "OH", "H2O", "HO2", "H2O2", "N2"};
  s.truth.mu0 = detail::vec({0.1, 1e-3, 1e-3, 0.2, 1e-3, 1e-3, 1e-3, 1e-3, 0.694});
  s.truth.s0 = s.truth.mu0 / 10.0;
  s.t_obs = {-8.0, -1.0, 0.05};
  s.rank_window = {-8.0, -1.0, 0.05};
  s.t_end = 1e-1;
  s.posterior_solver = detail::inference_solver_defaults();
  return s;
}

inline std::string quench_name(double T_fix) {
  std::ostringstream name;
  name << "quench-" << T_fix << "K";
  return name.str();
}

/// Probe-sampled flame gas held at a fixed temperature. Without phi0 the
/// representative composition in data/quench_phi0.yaml is used.
inline Scenario scenario_quench(double T_fix, std::optional<Eigen::VectorXd> phi0 = std::nullopt) {
  Scenario s;
  s.name = quench_name(T_fix);
  s.description = "Flame sample quenched to a fixed temperature (isothermal)";
  s.kind = ModelKind::isothermal;
  s.mechanism = "h2o2";
  s.temperature = T_fix;
  s.species = {"H2", "H", "O", "O2", "OH", "H2O", "HO2", "H2O2", "N2"};
  if (!phi0) {
    const auto path = data_directory() / "quench_phi0.yaml";
    YAML::Node doc;
    try {
      doc = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
      throw ParseError(std::string("cannot read ") + path.string() + ": " + e.what(), 0, "quench_phi0");
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(9);
    for (std::size_t i = 0; i < s.species.size(); ++i) {
      const auto node = doc["composition"][s.species[i]];
      if (node) x[static_cast<Eigen::Index>(i)] = node.as<double>();
    }
    phi0 = x;
    s.notes = doc["provenance"] ? doc["provenance"].as<std::string>() : "";
  }
  s.truth.mu0 = *phi0;
  s.truth.s0 = s.truth.mu0 / 10.0;
  s.t_obs = {-7.0, 0.0, 0.05};
  s.rank_window = {-7.0, 0.0, 0.05};
  s.t_end = 1.0;
  s.posterior_solver = detail::inference_solver_defaults();
  return s;
}

/// Quench temperatures studied: rapid cooling to 200 K and 600 K, and the
/// uncooled sample temperature.
inline std::vector<double> quench_temperatures() { return {1075.5, 600.0, 200.0}; }

inline std::vector<std::string> scenario_names() {
  std::vector<std::string> v{"robertson", "h2-autoignition"};
  for (double T : quench_temperatures()) v.push_back(quench_name(T));
  return v;
}

inline Scenario find_scenario(const std::string& name) {
  if (name == "robertson") return scenario_robertson();
  if (name == "h2-autoignition") return scenario_h2_autoignition();
  for (double T : quench_temperatures())
    if (quench_name(T) == name) return scenario_quench(T);
  std::string known;
  for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
  throw ValidationError("unknown scenario '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// Config serialization (YAML key tree).

namespace detail {

inline void emit_vector(YAML::Emitter& out, const Eigen::VectorXd& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i];
  out << YAML::EndSeq;
}

inline void emit_solver(YAML::Emitter& out, const SolverConfig& c) {
  out << YAML::BeginMap;
  out << YAML::Key << "rtol" << YAML::Value << c.rtol;
  out << YAML::Key << "atol" << YAML::Value << c.atol;
  out << YAML::Key << "sensitivity_error_control" << YAML::Value << c.sensitivity_error_control;
  out << YAML::Key << "sensitivity_atol" << YAML::Value << c.sensitivity_atol;
  out << YAML::Key << "max_steps" << YAML::Value << c.max_steps;
  out << YAML::EndMap;
}

inline void emit_grid(YAML::Emitter& out, const LogGrid& g) {
  out << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "log10_start" << YAML::Value << g.log10_start;
  out << YAML::Key << "log10_stop" << YAML::Value << g.log10_stop;
  out << YAML::Key << "step" << YAML::Value << g.step;
  out << YAML::EndMap;
}

inline const std::vector<std::string>& scenario_keys() {
  static const std::vector<std::string> k{"name",   "description", "model",       "species", "truth",
                                          "t_obs",  "rank",        "t_end",       "solver",  "posterior_solver",
                                          "sampler", "perturbation", "notes"};
  return k;
}

inline void check_scenario_keys(const YAML::Node& n, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ParseError("unknown key '" + key + "'", kv.first.Mark().line + 1, where + key);
  }
}

template <typename T>
T get(const YAML::Node& n, const char* key, const std::string& where) {
  const auto v = n[key];
  if (!v) throw ParseError(std::string("missing key '") + key + "'", n.Mark().line + 1, where + key);
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError(std::string("invalid value for '") + key + "'", v.Mark().line + 1, where + key);
  }
}

template <typename T>
T get_or(const YAML::Node& n, const char* key, T fallback, const std::string& where) {
  return n[key] ? get<T>(n, key, where) : fallback;
}

inline Eigen::VectorXd get_vector(const YAML::Node& n, const char* key, const std::string& where) {
  const auto v = get<std::vector<double>>(n, key, where);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline LogGrid parse_grid(const YAML::Node& n, const std::string& where) {
  check_scenario_keys(n, {"log10_start", "log10_stop", "step", "threshold"}, where);
  return {get<double>(n, "log10_start", where), get<double>(n, "log10_stop", where), get<double>(n, "step", where)};
}

inline SolverConfig parse_solver(const YAML::Node& n, SolverConfig c, const std::string& where) {
  if (!n) return c;
  check_scenario_keys(n, {"rtol", "atol", "sensitivity_error_control", "sensitivity_atol", "max_steps"}, where);
  c.rtol = get_or<double>(n, "rtol", c.rtol, where);
  c.atol = get_or<double>(n, "atol", c.atol, where);
  c.sensitivity_error_control = get_or<bool>(n, "sensitivity_error_control", c.sensitivity_error_control, where);
  c.sensitivity_atol = get_or<double>(n, "sensitivity_atol", c.sensitivity_atol, where);
  c.max_steps = get_or<std::size_t>(n, "max_steps", c.max_steps, where);
  return c;
}

} // namespace detail

inline std::string to_yaml(const Scenario& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << s.name;
  out << YAML::Key << "description" << YAML::Value << s.description;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(s.kind);
  switch (s.kind) {
    case ModelKind::robertson:
      out << YAML::Key << "k1" << YAML::Value << s.rates.k1;
      out << YAML::Key << "k2" << YAML::Value << s.rates.k2;
      out << YAML::Key << "k3" << YAML::Value << s.rates.k3;
      break;
    case ModelKind::adiabatic_isobaric:
      out << YAML::Key << "mechanism" << YAML::Value << s.mechanism;
      out << YAML::Key << "anchor_temperature" << YAML::Value << s.anchor_temperature;
      out << YAML::Key << "pressure" << YAML::Value << s.pressure;
      break;
    case ModelKind::isothermal:
      out << YAML::Key << "mechanism" << YAML::Value << s.mechanism;
      out << YAML::Key << "temperature" << YAML::Value << s.temperature;
      out << YAML::Key << "pressure" << YAML::Value << s.pressure;
      break;
  }
  out << YAML::EndMap;
  out << YAML::Key << "species" << YAML::Value << YAML::Flow << s.species;
  out << YAML::Key << "truth" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mu0" << YAML::Value;
  detail::emit_vector(out, s.truth.mu0);
  out << YAML::Key << "s0" << YAML::Value;
  detail::emit_vector(out, s.truth.s0);
  out << YAML::Key << "n_truth" << YAML::Value << s.truth.n_truth;
  out << YAML::EndMap;
  out << YAML::Key << "t_obs" << YAML::Value;
  detail::emit_grid(out, s.t_obs);
  out << YAML::Key << "rank" << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "log10_start" << YAML::Value << s.rank_window.log10_start;
  out << YAML::Key << "log10_stop" << YAML::Value << s.rank_window.log10_stop;
  out << YAML::Key << "step" << YAML::Value << s.rank_window.step;
  out << YAML::Key << "threshold" << YAML::Value << s.rank_threshold;
  out << YAML::EndMap;
  out << YAML::Key << "t_end" << YAML::Value << s.t_end;
  out << YAML::Key << "solver" << YAML::Value;
  detail::emit_solver(out, s.solver);
  out << YAML::Key << "posterior_solver" << YAML::Value;
  detail::emit_solver(out, s.posterior_solver);
  out << YAML::Key << "sampler" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "warmup" << YAML::Value << s.sampler.n_warmup;
  out << YAML::Key << "draws" << YAML::Value << s.sampler.n_draws;
  out << YAML::Key << "chains" << YAML::Value << s.chains;
  out << YAML::Key << "delta_acc" << YAML::Value << s.sampler.delta_acc;
  out << YAML::Key << "max_tree_depth" << YAML::Value << s.sampler.max_tree_depth;
  out << YAML::EndMap;
  if (s.perturbation) {
    out << YAML::Key << "perturbation" << YAML::Value;
    detail::emit_vector(out, *s.perturbation);
  }
  if (!s.notes.empty()) out << YAML::Key << "notes" << YAML::Value << s.notes;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline Scenario scenario_from_yaml(const std::string& text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line + 1, "");
  }
  if (!doc.IsMap()) throw ParseError("scenario document must be a mapping", 1, "");
  detail::check_scenario_keys(doc, detail::scenario_keys(), "");
  Scenario s;
  s.name = detail::get<std::string>(doc, "name", "");
  s.description = detail::get_or<std::string>(doc, "description", "", "");
  const auto model = doc["model"];
  if (!model || !model.IsMap()) throw ParseError("missing 'model' mapping", doc.Mark().line + 1, "model");
  detail::check_scenario_keys(model, {"kind", "k1", "k2", "k3", "mechanism", "anchor_temperature", "temperature", "pressure"},
                              "model.");
  s.kind = model_kind_from_string(detail::get<std::string>(model, "kind", "model."));
  s.mechanism = detail::get_or<std::string>(model, "mechanism", "", "model.");
  s.rates.k1 = detail::get_or<double>(model, "k1", s.rates.k1, "model.");
  s.rates.k2 = detail::get_or<double>(model, "k2", s.rates.k2, "model.");
  s.rates.k3 = detail::get_or<double>(model, "k3", s.rates.k3, "model.");
  s.anchor_temperature = detail::get_or<double>(model, "anchor_temperature", 0.0, "model.");
  s.temperature = detail::get_or<double>(model, "temperature", 0.0, "model.");
  s.pressure = detail::get_or<double>(model, "pressure", s.pressure, "model.");
  s.species = detail::get<std::vector<std::string>>(doc, "species", "");
  const auto truth = doc["truth"];
  if (!truth) throw ParseError("missing 'truth' mapping", doc.Mark().line + 1, "truth");
  detail::check_scenario_keys(truth, {"mu0", "s0", "n_truth"}, "truth.");
  s.truth.mu0 = detail::get_vector(truth, "mu0", "truth.");
  s.truth.s0 = detail::get_vector(truth, "s0", "truth.");
  s.truth.n_truth = detail::get_or<std::size_t>(truth, "n_truth", s.truth.n_truth, "truth.");
  s.t_obs = detail::parse_grid(doc["t_obs"], "t_obs.");
  s.rank_window = detail::parse_grid(doc["rank"], "rank.");
  s.rank_threshold = detail::get_or<double>(doc["rank"], "threshold", s.rank_threshold, "rank.");
  s.t_end = detail::get<double>(doc, "t_end", "");
  s.solver = detail::parse_solver(doc["solver"], s.solver, "solver.");
  s.posterior_solver = detail::parse_solver(doc["posterior_solver"], detail::inference_solver_defaults(), "posterior_solver.");
  if (const auto smp = doc["sampler"]) {
    detail::check_scenario_keys(smp, {"warmup", "draws", "chains", "delta_acc", "max_tree_depth"}, "sampler.");
    s.sampler.n_warmup = detail::get_or<int>(smp, "warmup", s.sampler.n_warmup, "sampler.");
    s.sampler.n_draws = detail::get_or<int>(smp, "draws", s.sampler.n_draws, "sampler.");
    s.chains = detail::get_or<int>(smp, "chains", s.chains, "sampler.");
    s.sampler.delta_acc = detail::get_or<double>(smp, "delta_acc", s.sampler.delta_acc, "sampler.");
    s.sampler.max_tree_depth = detail::get_or<int>(smp, "max_tree_depth", s.sampler.max_tree_depth, "sampler.");
  }
  if (doc["perturbation"]) s.perturbation = detail::get_vector(doc, "perturbation", "");
  s.notes = detail::get_or<std::string>(doc, "notes", "", "");
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_yaml(ss.str());
}

} // namespace stiffinfer
