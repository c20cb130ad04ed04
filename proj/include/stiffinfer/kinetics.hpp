#pragma once

// Mass-action gas kinetics: rates of progress, net molar production rates and
// their analytic derivatives with respect to concentrations and temperature.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "stiffinfer/constants.hpp"
#include "stiffinfer/errors.hpp"
#include "stiffinfer/mechanism.hpp"
#include "stiffinfer/thermo.hpp"

namespace stiffinfer {

/// Troe blending factor F(T, Pr) and its partial derivatives with respect to
/// log10(Pr) and T.
struct TroeFactor {
  double F = 1.0;
  double dlogF_dlogPr = 0.0;
  double dlogF_dT = 0.0;
};

inline TroeFactor troe_factor(const Troe& p, double T, double Pr) {
  constexpr double tiny = 1e-300;
  double Fc = 0.0, dFc = 0.0;
  if (p.T3 != 0.0) {
    const double e = std::exp(-T / p.T3);
    Fc += (1.0 - p.A) * e;
    dFc -= (1.0 - p.A) * e / p.T3;
  }
  if (p.T1 != 0.0) {
    const double e = std::exp(-T / p.T1);
    Fc += p.A * e;
    dFc -= p.A * e / p.T1;
  }
  if (p.T2) {
    const double e = std::exp(-*p.T2 / T);
    Fc += e;
    dFc += e * *p.T2 / (T * T);
  }
  const double L = std::log10(std::max(Fc, tiny));
  const double dL_dT = Fc > tiny ? dFc / (Fc * std::log(10.0)) : 0.0;
  const double logPr = std::log10(std::max(Pr, tiny));
  const double c = -0.4 - 0.67 * L;
  const double n = 0.75 - 1.27 * L;
  const double u = logPr + c;
  const double d = n - 0.14 * u;
  const double f1 = u / d;
  const double g = 1.0 + f1 * f1;
  const double logF = L / g;

  const double df1_du = n / (d * d);
  // f1 also depends on L through c and n.
  const double df1_dL = (-0.67 * d - u * (-1.27 + 0.14 * 0.67)) / (d * d);
  const double dlogF_df1 = -L * 2.0 * f1 / (g * g);

  TroeFactor out;
  out.F = std::pow(10.0, logF);
  out.dlogF_dlogPr = Pr > tiny ? dlogF_df1 * df1_du : 0.0;
  out.dlogF_dT = (1.0 / g + dlogF_df1 * df1_dL) * dL_dT;
  return out;
}

/// Scratch space for one evaluation context. Temperature-only quantities are
/// cached and reused while T is unchanged.
struct KineticsWorkspace {
  double T = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd kf, dlnkf; ///< forward (high-pressure for falloff) rate constants and d ln k / dT
  Eigen::VectorXd k0, dlnk0; ///< low-pressure limit (falloff only)
  Eigen::VectorXd inv_Kc, dlnKc;
  Eigen::VectorXd q;         ///< rates of progress, kmol/(m^3 s)
  Eigen::VectorXd g_RT, h_RT;
};

class Kinetics {
public:
  explicit Kinetics(const Mechanism& mech) : n_species_(mech.n_species()) {
    for (const auto& sp : mech.species) thermo_.push_back(sp.thermo);
    for (const auto& r : mech.reactions) {
      Rx rx;
      rx.kind = r.kind;
      rx.rate = r.rate;
      rx.low = r.low_rate.value_or(Arrhenius{});
      rx.troe = r.troe;
      rx.reversible = r.reversible;
      for (const auto& t : r.reactants) rx.reactants.push_back({static_cast<Eigen::Index>(t.species), t.coeff});
      for (const auto& t : r.products) rx.products.push_back({static_cast<Eigen::Index>(t.species), t.coeff});
      std::vector<double> nu(n_species_, 0.0);
      for (const auto& t : r.reactants) nu[t.species] -= t.coeff;
      for (const auto& t : r.products) nu[t.species] += t.coeff;
      for (std::size_t i = 0; i < n_species_; ++i) {
        if (nu[i] != 0.0) rx.net.push_back({static_cast<Eigen::Index>(i), nu[i]});
        rx.dnu += nu[i];
      }
      if (r.kind != RateKind::elementary) {
        rx.eff = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_species_), r.default_efficiency);
        for (const auto& [name, e] : r.efficiencies) rx.eff[static_cast<Eigen::Index>(mech.species_index(name))] = e;
      }
      reactions_.push_back(std::move(rx));
    }
  }

  std::size_t n_species() const { return n_species_; }
  std::size_t n_reactions() const { return reactions_.size(); }

  KineticsWorkspace make_workspace() const {
    KineticsWorkspace ws;
    const auto nr = static_cast<Eigen::Index>(reactions_.size());
    const auto ns = static_cast<Eigen::Index>(n_species_);
    ws.kf.resize(nr), ws.dlnkf.resize(nr), ws.k0.resize(nr), ws.dlnk0.resize(nr);
    ws.inv_Kc.resize(nr), ws.dlnKc.resize(nr), ws.q.resize(nr);
    ws.g_RT.resize(ns), ws.h_RT.resize(ns);
    return ws;
  }

  /// Forward rate constant of reaction r at T. For falloff reactions this is
  /// the effective constant at third-body concentration M.
  double forward_rate_constant(std::size_t r, double T, double M = 0.0) const {
    const auto& rx = reactions_[r];
    double k = arrhenius(rx.rate, T);
    if (rx.kind == RateKind::falloff) {
      const double Pr = arrhenius(rx.low, T) * M / k;
      const double F = rx.troe ? troe_factor(*rx.troe, T, Pr).F : 1.0;
      k *= Pr / (1.0 + Pr) * F;
    }
    return k;
  }

  /// Equilibrium constant in concentration units, (kmol/m^3)^dnu.
  double equilibrium_constant(std::size_t r, double T) const {
    const auto& rx = reactions_[r];
    double dg = 0.0;
    for (const auto& [i, nu] : rx.net) {
      const auto red = nasa7_reduced(thermo_[static_cast<std::size_t>(i)], T);
      dg += nu * (red.h_RT - red.s_R);
    }
    return std::exp(-dg + rx.dnu * std::log(constants::one_atm / (constants::gas_constant * T)));
  }

  /// Net molar production rates omega (kmol/(m^3 s)) at temperature T and
  /// concentrations c (kmol/m^3). When requested, also d omega / dc
  /// (n_s x n_s) and d omega / dT at fixed c.
  void production_rates(double T, const Eigen::Ref<const Eigen::VectorXd>& c, KineticsWorkspace& ws,
                        Eigen::Ref<Eigen::VectorXd> omega, Eigen::MatrixXd* domega_dc = nullptr,
                        Eigen::VectorXd* domega_dT = nullptr) const {
    if (!(T == ws.T)) update_temperature(T, ws);
    omega.setZero();
    if (domega_dc) domega_dc->setZero(static_cast<Eigen::Index>(n_species_), static_cast<Eigen::Index>(n_species_));
    if (domega_dT) domega_dT->setZero(static_cast<Eigen::Index>(n_species_));
    double dfwd[8], drev[8];
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      const auto& rx = reactions_[r];
      const auto ri = static_cast<Eigen::Index>(r);
      const double fwd = mass_action(rx.reactants, c, domega_dc ? dfwd : nullptr);
      const double rev = rx.reversible ? mass_action(rx.products, c, domega_dc ? drev : nullptr) : 0.0;
      const double kf = ws.kf[ri];
      const double kr = rx.reversible ? kf * ws.inv_Kc[ri] : 0.0;

      double kf_eff = kf, kr_eff = kr;
      double M = 0.0;
      double dq_dM = 0.0;      // partial of q with respect to [M]
      double dlnk_dT = ws.dlnkf[ri];
      if (rx.kind != RateKind::elementary) M = rx.eff.dot(c);
      if (rx.kind == RateKind::three_body) {
        kf_eff = kf * M, kr_eff = kr * M;
        dq_dM = kf * fwd - kr * rev;
      } else if (rx.kind == RateKind::falloff) {
        const double k0 = ws.k0[ri];
        const double Pr = k0 * M / kf;
        TroeFactor tf;
        if (rx.troe) tf = troe_factor(*rx.troe, T, Pr);
        const double blend = Pr / (1.0 + Pr);
        const double k = kf * blend * tf.F;
        kf_eff = k;
        kr_eff = rx.reversible ? k * ws.inv_Kc[ri] : 0.0;
        // dk/d[M] = k/M * dlnk/dlnPr written without dividing by M.
        const double dk_dPr = kf * tf.F * (1.0 / ((1.0 + Pr) * (1.0 + Pr)) + tf.dlogF_dlogPr / (1.0 + Pr));
        dq_dM = dk_dPr * (k0 / kf) * (fwd - (rx.reversible ? ws.inv_Kc[ri] * rev : 0.0));
        const double dlnPr_dT = ws.dlnk0[ri] - ws.dlnkf[ri];
        dlnk_dT = ws.dlnkf[ri] + dlnPr_dT / (1.0 + Pr) + std::log(10.0) * tf.dlogF_dT +
                  tf.dlogF_dlogPr * dlnPr_dT;
      }
      const double q = kf_eff * fwd - kr_eff * rev;
      ws.q[ri] = q;
      for (const auto& [i, nu] : rx.net) omega[i] += nu * q;

      if (domega_dc) {
        // dq/dc_j from the mass-action products.
        for (std::size_t a = 0; a < rx.reactants.size(); ++a) {
          const auto j = rx.reactants[a].species;
          const double d = kf_eff * dfwd[a];
          for (const auto& [i, nu] : rx.net) (*domega_dc)(i, j) += nu * d;
        }
        if (rx.reversible)
          for (std::size_t a = 0; a < rx.products.size(); ++a) {
            const auto j = rx.products[a].species;
            const double d = -kr_eff * drev[a];
            for (const auto& [i, nu] : rx.net) (*domega_dc)(i, j) += nu * d;
          }
        if (rx.kind != RateKind::elementary && dq_dM != 0.0)
          for (const auto& [i, nu] : rx.net) domega_dc->row(i) += (nu * dq_dM) * rx.eff.transpose();
      }
      if (domega_dT) {
        const double dq_dT = kf_eff * dlnk_dT * fwd - (rx.reversible ? kr_eff * (dlnk_dT - ws.dlnKc[ri]) * rev : 0.0);
        for (const auto& [i, nu] : rx.net) (*domega_dT)[i] += nu * dq_dT;
      }
    }
  }

private:
  struct Term {
    Eigen::Index species;
    double coeff;
  };
  struct Rx {
    RateKind kind = RateKind::elementary;
    Arrhenius rate, low;
    std::optional<Troe> troe;
    bool reversible = true;
    std::vector<Term> reactants, products, net;
    double dnu = 0.0;
    Eigen::VectorXd eff;
  };

  static double arrhenius(const Arrhenius& a, double T) {
    return a.A * std::exp(a.b * std::log(T) - a.Ea / (constants::gas_constant * T));
  }
  static double dln_arrhenius(const Arrhenius& a, double T) {
    return (a.b + a.Ea / (constants::gas_constant * T)) / T;
  }

  static double power(double c, double nu) {
    if (nu == 1.0) return c;
    if (nu == 2.0) return c * c;
    if (nu == 3.0) return c * c * c;
    return std::pow(std::max(c, 0.0), nu);
  }
  static double dpower(double c, double nu) {
    if (nu == 1.0) return 1.0;
    if (nu == 2.0) return 2.0 * c;
    if (nu == 3.0) return 3.0 * c * c;
    return nu * std::pow(std::max(c, 0.0), nu - 1.0);
  }

  /// Product of c_i^nu_i over the terms; optionally its partial derivative
  /// with respect to each term's species.
  static double mass_action(const std::vector<Term>& terms, const Eigen::Ref<const Eigen::VectorXd>& c, double* d) {
    double p = 1.0;
    for (const auto& t : terms) p *= power(c[t.species], t.coeff);
    if (d) {
      for (std::size_t a = 0; a < terms.size(); ++a) {
        double v = dpower(c[terms[a].species], terms[a].coeff);
        for (std::size_t b = 0; b < terms.size(); ++b)
          if (b != a) v *= power(c[terms[b].species], terms[b].coeff);
        d[a] = v;
      }
    }
    return p;
  }

  void update_temperature(double T, KineticsWorkspace& ws) const {
    ws.T = T;
    for (std::size_t i = 0; i < n_species_; ++i) {
      const auto red = nasa7_reduced(thermo_[i], T);
      ws.g_RT[static_cast<Eigen::Index>(i)] = red.h_RT - red.s_R;
      ws.h_RT[static_cast<Eigen::Index>(i)] = red.h_RT;
    }
    const double log_c0 = std::log(constants::one_atm / (constants::gas_constant * T));
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
      const auto& rx = reactions_[r];
      const auto ri = static_cast<Eigen::Index>(r);
      ws.kf[ri] = arrhenius(rx.rate, T);
      ws.dlnkf[ri] = dln_arrhenius(rx.rate, T);
      if (rx.kind == RateKind::falloff) {
        ws.k0[ri] = arrhenius(rx.low, T);
        ws.dlnk0[ri] = dln_arrhenius(rx.low, T);
      }
      double dg = 0.0, dh = 0.0;
      for (const auto& [i, nu] : rx.net) {
        dg += nu * ws.g_RT[i];
        dh += nu * ws.h_RT[i];
      }
      ws.inv_Kc[ri] = std::exp(dg - rx.dnu * log_c0);
      ws.dlnKc[ri] = (dh - rx.dnu) / T;
    }
  }

  std::size_t n_species_;
  std::vector<Nasa7> thermo_;
  std::vector<Rx> reactions_;
};

} // namespace stiffinfer
