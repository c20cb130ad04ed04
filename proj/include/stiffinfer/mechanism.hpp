#pragma once

// Chemical reaction mechanisms: a Cantera-YAML subset parser, the validated
// in-memory model, and the element structure used for conserved-space
// construction.
//
// Supported subset: one ideal-gas phase, NASA7 thermo with two ranges,
// elementary / three-body / falloff (Lindemann or Troe) reactions with mass
// action kinetics. Anything else is rejected with a ParseError.

#include <yaml-cpp/yaml.h>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stiffinfer/constants.hpp"
#include "stiffinfer/errors.hpp"

namespace stiffinfer {

struct Element {
  std::string symbol;
  double atomic_mass = 0.0; ///< kg/kmol

  bool operator==(const Element&) const = default;
};

/// Two-range NASA 7-coefficient polynomial. Coefficients are in the usual
/// cp/R, h/RT, s/R convention.
struct Nasa7 {
  double t_min = 0.0;
  double t_mid = 0.0;
  double t_max = 0.0;
  std::array<double, 7> low{};
  std::array<double, 7> high{};

  bool operator==(const Nasa7&) const = default;
};

struct Species {
  std::string name;
  std::map<std::string, double> composition; ///< element symbol -> atom count
  double molar_mass = 0.0;                   ///< kg/kmol, derived from composition
  Nasa7 thermo;

  bool operator==(const Species&) const = default;
};

enum class RateKind { elementary, three_body, falloff };

/// Modified Arrhenius expression k = A T^b exp(-Ea / (R T)), stored in SI:
/// A in (m^3/kmol)^(order-1)/s, Ea in J/kmol.
struct Arrhenius {
  double A = 0.0;
  double b = 0.0;
  double Ea = 0.0;

  bool operator==(const Arrhenius&) const = default;
};

struct Troe {
  double A = 0.0;
  double T3 = 0.0;
  double T1 = 0.0;
  std::optional<double> T2;

  bool operator==(const Troe&) const = default;
};

struct StoichTerm {
  std::size_t species = 0;
  double coeff = 0.0;

  bool operator==(const StoichTerm&) const = default;
};

struct Reaction {
  std::string equation;
  std::vector<StoichTerm> reactants;
  std::vector<StoichTerm> products;
  RateKind kind = RateKind::elementary;
  Arrhenius rate;                    ///< high-pressure limit for falloff
  std::optional<Arrhenius> low_rate; ///< falloff only
  std::optional<Troe> troe;          ///< falloff only; absent means Lindemann
  std::map<std::string, double> efficiencies;
  double default_efficiency = 1.0;
  bool reversible = true;
  bool duplicate = false;

  /// Sum of reactant coefficients, plus one for an explicit third body.
  double reactant_order() const {
    double order = 0.0;
    for (const auto& t : reactants) order += t.coeff;
    return kind == RateKind::three_body ? order + 1.0 : order;
  }

  bool operator==(const Reaction&) const = default;
};

struct Mechanism {
  std::string name;
  std::vector<Element> elements;
  std::vector<Species> species;
  std::vector<Reaction> reactions;

  std::size_t n_species() const { return species.size(); }
  std::size_t n_elements() const { return elements.size(); }
  std::size_t n_reactions() const { return reactions.size(); }

  std::optional<std::size_t> find_species(std::string_view sp) const {
    for (std::size_t i = 0; i < species.size(); ++i)
      if (species[i].name == sp) return i;
    return std::nullopt;
  }

  std::size_t species_index(std::string_view sp) const {
    if (auto i = find_species(sp)) return *i;
    throw ValidationError("unknown species '" + std::string(sp) + "'");
  }

  Eigen::VectorXd molar_masses() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(species.size()));
    for (std::size_t i = 0; i < species.size(); ++i) w[static_cast<Eigen::Index>(i)] = species[i].molar_mass;
    return w;
  }

  bool operator==(const Mechanism&) const = default;
};

namespace detail {

inline std::optional<double> standard_atomic_mass(std::string_view symbol) {
  static const std::map<std::string, double, std::less<>> table = {
      {"H", 1.008},   {"He", 4.002602}, {"C", 12.011}, {"N", 14.007},
      {"O", 15.999},  {"F", 18.998403163}, {"Ne", 20.1797}, {"S", 32.06},
      {"Cl", 35.45},  {"Ar", 39.95},    {"Kr", 83.798}, {"Xe", 131.293},
      {"E", 5.485799090649e-4},
  };
  auto it = table.find(symbol);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

inline int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

inline YAML::Node require(const YAML::Node& parent, const char* key, const std::string& where) {
  YAML::Node n = parent[key];
  if (!n) throw ParseError(std::string("missing required field '") + key + "'", line_of(parent), where);
  return n;
}

template <typename T>
T scalar_as(const YAML::Node& n, const std::string& where) {
  if (!n.IsScalar()) throw ParseError("expected a scalar value", line_of(n), where);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError("cannot convert '" + n.Scalar() + "'", line_of(n), where);
  }
}

inline void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) {
  if (!map.IsMap()) throw ParseError("expected a mapping", line_of(map), where);
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key))
      throw ParseError("unsupported field '" + key + "'", line_of(kv.first), where);
  }
}

struct UnitSystem {
  double length = 1.0;   ///< metres per length unit
  double quantity = 1.0; ///< kmol per quantity unit
  double energy = constants::calorie * 1000.0; ///< (J/kmol) per activation-energy unit

  /// Multiplier converting a pre-exponential factor of the given order to SI.
  double rate_factor(double order) const {
    return std::pow(length * length * length / quantity, order - 1.0);
  }
};

inline UnitSystem parse_units(const YAML::Node& root) {
  UnitSystem u;
  const YAML::Node units = root["units"];
  if (!units) return u;
  check_keys(units, {"length", "time", "quantity", "activation-energy", "pressure", "energy", "mass"}, "units");
  if (auto n = units["length"]) {
    const auto s = scalar_as<std::string>(n, "units.length");
    if (s == "cm") u.length = 0.01;
    else if (s == "m") u.length = 1.0;
    else if (s == "mm") u.length = 1e-3;
    else throw ParseError("unsupported length unit '" + s + "'", line_of(n), "units.length");
  }
  if (auto n = units["time"]) {
    const auto s = scalar_as<std::string>(n, "units.time");
    if (s != "s") throw ParseError("unsupported time unit '" + s + "'", line_of(n), "units.time");
  }
  if (auto n = units["quantity"]) {
    const auto s = scalar_as<std::string>(n, "units.quantity");
    if (s == "mol") u.quantity = 1e-3;
    else if (s == "kmol") u.quantity = 1.0;
    else throw ParseError("unsupported quantity unit '" + s + "'", line_of(n), "units.quantity");
  }
  if (auto n = units["activation-energy"]) {
    const auto s = scalar_as<std::string>(n, "units.activation-energy");
    if (s == "cal/mol") u.energy = constants::calorie * 1e3;
    else if (s == "kcal/mol") u.energy = constants::calorie * 1e6;
    else if (s == "J/mol") u.energy = 1e3;
    else if (s == "kJ/mol") u.energy = 1e6;
    else if (s == "J/kmol") u.energy = 1.0;
    else if (s == "K") u.energy = constants::gas_constant;
    else throw ParseError("unsupported activation-energy unit '" + s + "'", line_of(n), "units.activation-energy");
  }
  return u;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

struct ParsedSide {
  std::vector<std::pair<std::string, double>> terms;
  bool third_body = false; // "+ M"
  bool falloff = false;    // "(+M)"
};

inline ParsedSide parse_side(std::string side, const std::string& where, int line) {
  ParsedSide out;
  static const std::regex falloff_re(R"(\(\s*\+\s*([A-Za-z0-9_]+)\s*\))");
  std::smatch m;
  if (std::regex_search(side, m, falloff_re)) {
    if (m[1].str() != "M")
      throw ParseError("species-specific falloff collider '" + m[1].str() + "' is not supported", line, where);
    out.falloff = true;
    side = std::regex_replace(side, falloff_re, "");
  }
  static const std::regex term_re(R"(^([0-9]*\.?[0-9]+)?\s*([A-Za-z][A-Za-z0-9_()\-,*]*)$)");
  std::stringstream ss(side);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    tok = trim(tok);
    if (tok.empty()) throw ParseError("empty stoichiometric term", line, where);
    std::smatch tm;
    if (!std::regex_match(tok, tm, term_re)) throw ParseError("cannot parse term '" + tok + "'", line, where);
    const double coeff = tm[1].matched ? std::stod(tm[1].str()) : 1.0;
    const std::string name = tm[2].str();
    if (name == "M") {
      if (tm[1].matched) throw ParseError("third body 'M' cannot carry a coefficient", line, where);
      out.third_body = true;
      continue;
    }
    if (!(coeff > 0.0)) throw ParseError("stoichiometric coefficient must be positive", line, where);
    auto it = std::find_if(out.terms.begin(), out.terms.end(), [&](const auto& t) { return t.first == name; });
    if (it != out.terms.end()) it->second += coeff;
    else out.terms.emplace_back(name, coeff);
  }
  return out;
}

inline std::string format_coeff(double c) {
  std::ostringstream os;
  os.precision(17);
  os << c;
  return os.str();
}

inline std::string side_text(const Mechanism& mech, const std::vector<StoichTerm>& terms, RateKind kind) {
  std::string s;
  for (const auto& t : terms) {
    if (!s.empty()) s += " + ";
    if (t.coeff != 1.0) s += format_coeff(t.coeff) + " ";
    s += mech.species[t.species].name;
  }
  if (kind == RateKind::three_body) s += " + M";
  if (kind == RateKind::falloff) s += " (+M)";
  return s;
}

inline Arrhenius parse_arrhenius(const YAML::Node& n, double factor, double energy, const std::string& where) {
  if (!n.IsMap()) throw ParseError("rate constant must be a mapping {A, b, Ea}", line_of(n), where);
  check_keys(n, {"A", "b", "Ea"}, where);
  Arrhenius r;
  r.A = scalar_as<double>(require(n, "A", where), where + ".A") * factor;
  r.b = scalar_as<double>(require(n, "b", where), where + ".b");
  r.Ea = scalar_as<double>(require(n, "Ea", where), where + ".Ea") * energy;
  return r;
}

inline void validate(const Mechanism& mech) {
  std::set<std::string> declared;
  for (const auto& e : mech.elements) {
    if (!(e.atomic_mass > 0.0)) throw ValidationError("element " + e.symbol + " has non-positive atomic mass");
    declared.insert(e.symbol);
  }
  for (const auto& sp : mech.species) {
    for (const auto& [el, count] : sp.composition) {
      if (!declared.contains(el))
        throw ValidationError("species " + sp.name + " references undeclared element " + el);
      if (count < 0.0) throw ValidationError("species " + sp.name + " has a negative atom count");
    }
    if (!(sp.molar_mass > 0.0)) throw ValidationError("species " + sp.name + " has non-positive molar mass");
    const auto& th = sp.thermo;
    if (!(th.t_min < th.t_mid && th.t_mid < th.t_max))
      throw ValidationError("species " + sp.name + " has non-contiguous NASA7 temperature ranges");
  }
  for (std::size_t r = 0; r < mech.reactions.size(); ++r) {
    const auto& rx = mech.reactions[r];
    for (const auto* side : {&rx.reactants, &rx.products})
      for (const auto& t : *side) {
        if (t.species >= mech.species.size())
          throw ValidationError("reaction " + std::to_string(r + 1) + " references an undeclared species");
        if (t.coeff < 0.0) throw ValidationError("reaction " + std::to_string(r + 1) + " has a negative coefficient");
      }
    if (rx.kind == RateKind::falloff && !rx.low_rate)
      throw ValidationError("falloff reaction " + std::to_string(r + 1) + " lacks low-pressure parameters");
    for (const auto& e : mech.elements) {
      double balance = 0.0;
      for (const auto& t : rx.products) {
        const auto& comp = mech.species[t.species].composition;
        if (auto it = comp.find(e.symbol); it != comp.end()) balance += t.coeff * it->second;
      }
      for (const auto& t : rx.reactants) {
        const auto& comp = mech.species[t.species].composition;
        if (auto it = comp.find(e.symbol); it != comp.end()) balance -= t.coeff * it->second;
      }
      if (balance != 0.0)
        throw ValidationError("reaction " + std::to_string(r + 1) + " (" + rx.equation + ") does not conserve element " +
                              e.symbol);
    }
    for (const auto& [name, eff] : rx.efficiencies) {
      if (!mech.find_species(name))
        throw ValidationError("reaction " + std::to_string(r + 1) + " has an efficiency for undeclared species " + name);
      if (eff < 0.0) throw ValidationError("reaction " + std::to_string(r + 1) + " has a negative efficiency");
    }
  }
}

} // namespace detail

/// Parse and validate a mechanism document.
inline Mechanism parse_mechanism(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line + 1, "document");
  }
  if (!root.IsMap()) throw ParseError("document must be a mapping", 1, "document");
  detail::check_keys(root, {"units", "elements", "phases", "species", "reactions", "description", "generator",
                            "cantera-version", "date", "input-files"},
                     "document");
  using detail::line_of;
  using detail::require;
  using detail::scalar_as;

  const detail::UnitSystem units = detail::parse_units(root);

  std::map<std::string, double> custom_masses;
  if (auto els = root["elements"]) {
    if (!els.IsSequence()) throw ParseError("'elements' must be a list", line_of(els), "elements");
    for (const auto& e : els) {
      detail::check_keys(e, {"symbol", "atomic-weight", "atomic-number", "entropy298"}, "elements");
      custom_masses[scalar_as<std::string>(require(e, "symbol", "elements"), "elements.symbol")] =
          scalar_as<double>(require(e, "atomic-weight", "elements"), "elements.atomic-weight");
    }
  }

  const YAML::Node phases = require(root, "phases", "document");
  if (!phases.IsSequence() || phases.size() == 0) throw ParseError("'phases' must be a non-empty list", line_of(phases), "phases");
  const YAML::Node phase = phases[0];
  if (!phase.IsMap()) throw ParseError("phase entry must be a mapping", line_of(phase), "phases[0]");
  Mechanism mech;
  if (auto n = phase["name"]) mech.name = scalar_as<std::string>(n, "phases[0].name");
  if (auto n = phase["thermo"]; !n || scalar_as<std::string>(n, "phases[0].thermo") != "ideal-gas")
    throw ParseError("only 'ideal-gas' phases are supported", line_of(n ? n : phase), "phases[0].thermo");
  if (auto n = phase["kinetics"]; n && scalar_as<std::string>(n, "phases[0].kinetics") != "gas")
    throw ParseError("only 'gas' kinetics is supported", line_of(n), "phases[0].kinetics");
  if (auto n = phase["reactions"]; n && !(n.IsScalar() && n.Scalar() == "all"))
    throw ParseError("only 'reactions: all' is supported", line_of(n), "phases[0].reactions");

  const YAML::Node phase_elements = require(phase, "elements", "phases[0]");
  if (!phase_elements.IsSequence()) throw ParseError("phase elements must be a list", line_of(phase_elements), "phases[0].elements");
  for (const auto& e : phase_elements) {
    const auto sym = scalar_as<std::string>(e, "phases[0].elements");
    double mass = 0.0;
    if (auto it = custom_masses.find(sym); it != custom_masses.end()) mass = it->second;
    else if (auto m = detail::standard_atomic_mass(sym)) mass = *m;
    else throw ParseError("unknown element '" + sym + "'", line_of(e), "phases[0].elements");
    mech.elements.push_back({sym, mass});
  }

  // Species definitions, in document order.
  const YAML::Node species_defs = require(root, "species", "document");
  if (!species_defs.IsSequence()) throw ParseError("'species' must be a list", line_of(species_defs), "species");
  std::map<std::string, Species> defined;
  std::vector<std::string> document_order;
  for (const auto& s : species_defs) {
    detail::check_keys(s, {"name", "composition", "thermo", "note", "transport", "equation-of-state", "size"}, "species");
    Species sp;
    sp.name = scalar_as<std::string>(require(s, "name", "species"), "species.name");
    const std::string where = "species " + sp.name;
    const YAML::Node comp = require(s, "composition", where);
    if (!comp.IsMap()) throw ParseError("composition must be a mapping", line_of(comp), where + ".composition");
    for (const auto& kv : comp)
      sp.composition[kv.first.as<std::string>()] = scalar_as<double>(kv.second, where + ".composition");
    const YAML::Node thermo = require(s, "thermo", where);
    detail::check_keys(thermo, {"model", "temperature-ranges", "data", "note", "reference-pressure"}, where + ".thermo");
    if (scalar_as<std::string>(require(thermo, "model", where + ".thermo"), where + ".thermo.model") != "NASA7")
      throw ParseError("only NASA7 thermo is supported", line_of(thermo), where + ".thermo.model");
    const YAML::Node ranges = require(thermo, "temperature-ranges", where + ".thermo");
    const YAML::Node data = require(thermo, "data", where + ".thermo");
    if (!ranges.IsSequence() || ranges.size() != 3 || !data.IsSequence() || data.size() != 2)
      throw ParseError("NASA7 thermo needs exactly two temperature ranges", line_of(thermo), where + ".thermo");
    sp.thermo.t_min = scalar_as<double>(ranges[0], where + ".thermo.temperature-ranges");
    sp.thermo.t_mid = scalar_as<double>(ranges[1], where + ".thermo.temperature-ranges");
    sp.thermo.t_max = scalar_as<double>(ranges[2], where + ".thermo.temperature-ranges");
    for (int r = 0; r < 2; ++r) {
      if (!data[r].IsSequence() || data[r].size() != 7)
        throw ParseError("NASA7 range needs 7 coefficients", line_of(data[r]), where + ".thermo.data");
      auto& dst = r == 0 ? sp.thermo.low : sp.thermo.high;
      for (std::size_t k = 0; k < 7; ++k) dst[k] = scalar_as<double>(data[r][k], where + ".thermo.data");
    }
    if (defined.contains(sp.name)) throw ParseError("duplicate species '" + sp.name + "'", line_of(s), where);
    document_order.push_back(sp.name);
    defined.emplace(sp.name, std::move(sp));
  }

  std::vector<std::string> phase_species = document_order;
  if (auto n = phase["species"]) {
    if (!n.IsSequence()) throw ParseError("phase species must be a list of names", line_of(n), "phases[0].species");
    phase_species.clear();
    for (const auto& s : n) phase_species.push_back(scalar_as<std::string>(s, "phases[0].species"));
  }
  for (const auto& name : phase_species) {
    auto it = defined.find(name);
    if (it == defined.end()) throw ParseError("phase lists undefined species '" + name + "'", line_of(phase), "phases[0].species");
    Species sp = it->second;
    double w = 0.0;
    for (const auto& [el, count] : sp.composition) {
      auto e = std::find_if(mech.elements.begin(), mech.elements.end(), [&](const Element& x) { return x.symbol == el; });
      if (e == mech.elements.end())
        throw ValidationError("species " + sp.name + " references undeclared element " + el);
      w += count * e->atomic_mass;
    }
    sp.molar_mass = w;
    mech.species.push_back(std::move(sp));
  }

  if (auto rxs = root["reactions"]) {
    if (!rxs.IsSequence()) throw ParseError("'reactions' must be a list", line_of(rxs), "reactions");
    std::size_t index = 0;
    for (const auto& r : rxs) {
      ++index;
      const std::string where = "reaction " + std::to_string(index);
      detail::check_keys(r, {"equation", "type", "rate-constant", "low-P-rate-constant", "high-P-rate-constant", "Troe",
                             "efficiencies", "default-efficiency", "duplicate", "note", "id"},
                         where);
      Reaction rx;
      const std::string eq = scalar_as<std::string>(require(r, "equation", where), where + ".equation");
      const int line = line_of(r);
      std::string lhs, rhs;
      if (auto p = eq.find("<=>"); p != std::string::npos) {
        lhs = eq.substr(0, p), rhs = eq.substr(p + 3);
      } else if (p = eq.find("=>"); p != std::string::npos) {
        lhs = eq.substr(0, p), rhs = eq.substr(p + 2), rx.reversible = false;
      } else if (p = eq.find('='); p != std::string::npos) {
        lhs = eq.substr(0, p), rhs = eq.substr(p + 1);
      } else {
        throw ParseError("equation has no reaction arrow", line, where + ".equation");
      }
      const auto left = detail::parse_side(lhs, where + ".equation", line);
      const auto right = detail::parse_side(rhs, where + ".equation", line);

      std::string type = "elementary";
      if (auto n = r["type"]) type = scalar_as<std::string>(n, where + ".type");
      if (type == "elementary") rx.kind = RateKind::elementary;
      else if (type == "three-body") rx.kind = RateKind::three_body;
      else if (type == "falloff") rx.kind = RateKind::falloff;
      else throw ParseError("unsupported reaction type '" + type + "'", line, where + ".type");

      const bool tb = left.third_body || right.third_body;
      const bool fo = left.falloff || right.falloff;
      if (left.third_body != right.third_body || left.falloff != right.falloff)
        throw ParseError("third body must appear on both sides", line, where + ".equation");
      if (rx.kind == RateKind::three_body && !tb)
        throw ParseError("three-body reaction needs '+ M' in its equation", line, where + ".equation");
      if (rx.kind == RateKind::falloff && !fo)
        throw ParseError("falloff reaction needs '(+M)' in its equation", line, where + ".equation");
      if (rx.kind == RateKind::elementary && (tb || fo))
        throw ParseError("elementary reaction cannot have a third body", line, where + ".equation");

      auto to_terms = [&](const detail::ParsedSide& side) {
        std::vector<StoichTerm> out;
        for (const auto& [name, coeff] : side.terms) {
          auto i = mech.find_species(name);
          if (!i) throw ValidationError(where + " (" + eq + ") references undeclared species " + name);
          out.push_back({*i, coeff});
        }
        return out;
      };
      rx.reactants = to_terms(left);
      rx.products = to_terms(right);

      double order = 0.0;
      for (const auto& t : rx.reactants) order += t.coeff;
      if (rx.kind == RateKind::falloff) {
        if (r["rate-constant"]) throw ParseError("falloff reactions use high-/low-P rate constants", line, where);
        rx.rate = detail::parse_arrhenius(require(r, "high-P-rate-constant", where), units.rate_factor(order),
                                          units.energy, where + ".high-P-rate-constant");
        rx.low_rate = detail::parse_arrhenius(require(r, "low-P-rate-constant", where), units.rate_factor(order + 1.0),
                                              units.energy, where + ".low-P-rate-constant");
        if (auto t = r["Troe"]) {
          detail::check_keys(t, {"A", "T3", "T1", "T2"}, where + ".Troe");
          Troe troe;
          troe.A = scalar_as<double>(require(t, "A", where + ".Troe"), where + ".Troe.A");
          troe.T3 = scalar_as<double>(require(t, "T3", where + ".Troe"), where + ".Troe.T3");
          troe.T1 = scalar_as<double>(require(t, "T1", where + ".Troe"), where + ".Troe.T1");
          if (auto t2 = t["T2"]) troe.T2 = scalar_as<double>(t2, where + ".Troe.T2");
          rx.troe = troe;
        }
      } else {
        if (r["low-P-rate-constant"] || r["high-P-rate-constant"] || r["Troe"])
          throw ParseError("falloff parameters on a non-falloff reaction", line, where);
        const double eff_order = rx.kind == RateKind::three_body ? order + 1.0 : order;
        rx.rate = detail::parse_arrhenius(require(r, "rate-constant", where), units.rate_factor(eff_order), units.energy,
                                          where + ".rate-constant");
      }
      if (auto e = r["efficiencies"]) {
        if (rx.kind == RateKind::elementary) throw ParseError("efficiencies on an elementary reaction", line, where);
        if (!e.IsMap()) throw ParseError("efficiencies must be a mapping", line_of(e), where + ".efficiencies");
        for (const auto& kv : e) {
          const auto name = kv.first.as<std::string>();
          if (!mech.find_species(name))
            throw ValidationError(where + " has an efficiency for undeclared species " + name);
          rx.efficiencies[name] = scalar_as<double>(kv.second, where + ".efficiencies");
        }
      }
      if (auto d = r["default-efficiency"]) rx.default_efficiency = scalar_as<double>(d, where + ".default-efficiency");
      if (auto d = r["duplicate"]) rx.duplicate = scalar_as<bool>(d, where + ".duplicate");
      rx.equation = detail::side_text(mech, rx.reactants, rx.kind) + (rx.reversible ? " <=> " : " => ") +
                    detail::side_text(mech, rx.products, rx.kind);
      mech.reactions.push_back(std::move(rx));
    }
  }

  detail::validate(mech);
  return mech;
}

inline Mechanism load_mechanism(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mechanism file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mechanism(ss.str());
}

/// Directory holding bundled data files. STIFFINFER_DATA_DIR in the
/// environment overrides the build-time location.
inline std::filesystem::path data_directory() {
  if (const char* env = std::getenv("STIFFINFER_DATA_DIR"); env && *env) return env;
#ifdef STIFFINFER_DATA_DIR
  return STIFFINFER_DATA_DIR;
#else
  return "data";
#endif
}

inline Mechanism load_bundled_mechanism(std::string_view name = "h2o2") {
  return load_mechanism(data_directory() / (std::string(name) + ".yaml"));
}

/// Canonical serialization: SI units, full double precision. Re-parsing the
/// output reproduces an identical Mechanism.
inline std::string to_canonical_yaml(const Mechanism& mech) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "units" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "length" << YAML::Value
      << "m" << YAML::Key << "time" << YAML::Value << "s" << YAML::Key << "quantity" << YAML::Value << "kmol"
      << YAML::Key << "activation-energy" << YAML::Value << "J/kmol" << YAML::EndMap;

  out << YAML::Key << "elements" << YAML::Value << YAML::BeginSeq;
  for (const auto& e : mech.elements)
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "symbol" << YAML::Value << e.symbol << YAML::Key
        << "atomic-weight" << YAML::Value << e.atomic_mass << YAML::EndMap;
  out << YAML::EndSeq;

  out << YAML::Key << "phases" << YAML::Value << YAML::BeginSeq << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << mech.name;
  out << YAML::Key << "thermo" << YAML::Value << "ideal-gas";
  out << YAML::Key << "elements" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& e : mech.elements) out << e.symbol;
  out << YAML::EndSeq;
  out << YAML::Key << "species" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& s : mech.species) out << s.name;
  out << YAML::EndSeq;
  out << YAML::Key << "kinetics" << YAML::Value << "gas";
  out << YAML::EndMap << YAML::EndSeq;

  out << YAML::Key << "species" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : mech.species) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << s.name;
    out << YAML::Key << "composition" << YAML::Value << YAML::Flow << YAML::BeginMap;
    for (const auto& [el, n] : s.composition) out << YAML::Key << el << YAML::Value << n;
    out << YAML::EndMap;
    out << YAML::Key << "thermo" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "model" << YAML::Value << "NASA7";
    out << YAML::Key << "temperature-ranges" << YAML::Value << YAML::Flow << YAML::BeginSeq << s.thermo.t_min
        << s.thermo.t_mid << s.thermo.t_max << YAML::EndSeq;
    out << YAML::Key << "data" << YAML::Value << YAML::BeginSeq;
    for (const auto* c : {&s.thermo.low, &s.thermo.high}) {
      out << YAML::Flow << YAML::BeginSeq;
      for (double v : *c) out << v;
      out << YAML::EndSeq;
    }
    out << YAML::EndSeq << YAML::EndMap << YAML::EndMap;
  }
  out << YAML::EndSeq;

  auto emit_rate = [&](const Arrhenius& a) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "A" << YAML::Value << a.A << YAML::Key << "b" << YAML::Value
        << a.b << YAML::Key << "Ea" << YAML::Value << a.Ea << YAML::EndMap;
  };
  out << YAML::Key << "reactions" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : mech.reactions) {
    out << YAML::BeginMap;
    out << YAML::Key << "equation" << YAML::Value << r.equation;
    if (r.kind == RateKind::three_body) out << YAML::Key << "type" << YAML::Value << "three-body";
    if (r.kind == RateKind::falloff) {
      out << YAML::Key << "type" << YAML::Value << "falloff";
      out << YAML::Key << "low-P-rate-constant" << YAML::Value;
      emit_rate(*r.low_rate);
      out << YAML::Key << "high-P-rate-constant" << YAML::Value;
      emit_rate(r.rate);
      if (r.troe) {
        out << YAML::Key << "Troe" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "A" << YAML::Value
            << r.troe->A << YAML::Key << "T3" << YAML::Value << r.troe->T3 << YAML::Key << "T1" << YAML::Value
            << r.troe->T1;
        if (r.troe->T2) out << YAML::Key << "T2" << YAML::Value << *r.troe->T2;
        out << YAML::EndMap;
      }
    } else {
      out << YAML::Key << "rate-constant" << YAML::Value;
      emit_rate(r.rate);
    }
    if (!r.efficiencies.empty()) {
      out << YAML::Key << "efficiencies" << YAML::Value << YAML::Flow << YAML::BeginMap;
      for (const auto& [name, e] : r.efficiencies) out << YAML::Key << name << YAML::Value << e;
      out << YAML::EndMap;
    }
    if (r.default_efficiency != 1.0) out << YAML::Key << "default-efficiency" << YAML::Value << r.default_efficiency;
    if (r.duplicate) out << YAML::Key << "duplicate" << YAML::Value << true;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

/// Element matrix C (n_s x n_e) with C(i,e) = n_{e,i} W_e / W_i: the mass
/// fraction of element e within species i. C^T phi is invariant under
/// reaction.
inline Eigen::MatrixXd element_matrix(const Mechanism& mech) {
  const auto ns = static_cast<Eigen::Index>(mech.n_species());
  const auto ne = static_cast<Eigen::Index>(mech.n_elements());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(ns, ne);
  for (Eigen::Index i = 0; i < ns; ++i) {
    const auto& sp = mech.species[static_cast<std::size_t>(i)];
    for (Eigen::Index e = 0; e < ne; ++e) {
      const auto& el = mech.elements[static_cast<std::size_t>(e)];
      if (auto it = sp.composition.find(el.symbol); it != sp.composition.end())
        C(i, e) = it->second * el.atomic_mass / sp.molar_mass;
    }
  }
  return C;
}

} // namespace stiffinfer
