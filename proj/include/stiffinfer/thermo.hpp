#pragma once

// Ideal-gas thermodynamics from NASA-7 polynomials.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "stiffinfer/constants.hpp"
#include "stiffinfer/errors.hpp"
#include "stiffinfer/mechanism.hpp"

namespace stiffinfer {

/// Dimensionless NASA-7 values: cp/R, h/(RT), s/R.
struct Nasa7Reduced {
  double cp_R = 0.0;
  double h_RT = 0.0;
  double s_R = 0.0;
};

inline const std::array<double, 7>& nasa7_coefficients(const Nasa7& poly, double T) {
  return T < poly.t_mid ? poly.low : poly.high;
}

inline Nasa7Reduced nasa7_reduced(const std::array<double, 7>& a, double T) {
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T;
  Nasa7Reduced r;
  r.cp_R = a[0] + a[1] * T + a[2] * T2 + a[3] * T3 + a[4] * T4;
  r.h_RT = a[0] + a[1] * T / 2 + a[2] * T2 / 3 + a[3] * T3 / 4 + a[4] * T4 / 5 + a[5] / T;
  r.s_R = a[0] * std::log(T) + a[1] * T + a[2] * T2 / 2 + a[3] * T3 / 3 + a[4] * T4 / 4 + a[6];
  return r;
}

inline Nasa7Reduced nasa7_reduced(const Nasa7& poly, double T) { return nasa7_reduced(nasa7_coefficients(poly, T), T); }

struct SpeciesProperties {
  double cp = 0.0; ///< J/(kg K)
  double h = 0.0;  ///< J/kg
  double s = 0.0;  ///< J/(kg K), at the reference pressure
  bool extrapolated = false;
};

/// Mass-specific cp, h, s of one species. Temperatures outside the fitted
/// range are evaluated on the nearest polynomial and flagged.
inline SpeciesProperties nasa7_properties(const Species& sp, double T) {
  const auto r = nasa7_reduced(sp.thermo, T);
  const double Rw = constants::gas_constant / sp.molar_mass;
  return {r.cp_R * Rw, r.h_RT * Rw * T, r.s_R * Rw, T < sp.thermo.t_min || T > sp.thermo.t_max};
}

/// Mixture-level evaluations. phi need not sum to one: every quantity here
/// is computed for the normalized composition phi / sum(phi).
class MixtureThermo {
public:
  explicit MixtureThermo(const Mechanism& mech) : W_(mech.molar_masses()) {
    for (const auto& sp : mech.species) thermo_.push_back(sp.thermo);
  }

  Eigen::Index size() const { return W_.size(); }
  const Eigen::VectorXd& molar_masses() const { return W_; }

  /// Species enthalpies (J/kg) and heat capacities (J/(kg K)) at T.
  void species_h_cp(double T, Eigen::Ref<Eigen::VectorXd> h, Eigen::Ref<Eigen::VectorXd> cp) const {
    for (Eigen::Index i = 0; i < W_.size(); ++i) {
      const auto r = nasa7_reduced(thermo_[static_cast<std::size_t>(i)], T);
      const double Rw = constants::gas_constant / W_[i];
      h[i] = r.h_RT * Rw * T;
      cp[i] = r.cp_R * Rw;
    }
  }

  double enthalpy(const Eigen::VectorXd& phi, double T) const {
    double h = 0.0;
    for (Eigen::Index i = 0; i < W_.size(); ++i) {
      const auto r = nasa7_reduced(thermo_[static_cast<std::size_t>(i)], T);
      h += phi[i] * r.h_RT * constants::gas_constant * T / W_[i];
    }
    return h / phi.sum();
  }

  double cp(const Eigen::VectorXd& phi, double T) const {
    double c = 0.0;
    for (Eigen::Index i = 0; i < W_.size(); ++i)
      c += phi[i] * nasa7_reduced(thermo_[static_cast<std::size_t>(i)], T).cp_R * constants::gas_constant / W_[i];
    return c / phi.sum();
  }

  /// Mean molar mass, kg/kmol.
  double mean_molar_mass(const Eigen::VectorXd& phi) const { return phi.sum() / (phi.array() / W_.array()).sum(); }

  double density(const Eigen::VectorXd& phi, double T, double P) const {
    return P * mean_molar_mass(phi) / (constants::gas_constant * T);
  }

  /// Solve h(phi, T) = h0 for T in [t_lo, t_hi]. Plain Newton from the
  /// guess first; on failure, Newton safeguarded by a bisection bracket.
  double temperature_from_enthalpy(const Eigen::VectorXd& phi, double h0, double T_guess, double t_lo = 200.0,
                                   double t_hi = 6000.0) const {
    auto residual = [&](double T) { return enthalpy(phi, T) - h0; };
    const double tol = 1e-13 * std::max(1.0, std::abs(h0));
    if (T_guess > t_lo && T_guess < t_hi) {
      double T = T_guess;
      for (int it = 0; it < 8; ++it) {
        const double f = residual(T);
        if (std::abs(f) <= tol) return T;
        const double next = T - f / cp(phi, T);
        if (!(next > t_lo && next < t_hi)) break;
        if (std::abs(next - T) <= 1e-14 * T) return next;
        T = next;
      }
    }
    if (residual(t_lo) > 0.0 || residual(t_hi) < 0.0)
      throw NumericalError("enthalpy " + std::to_string(h0) + " J/kg is not attainable in [" + std::to_string(t_lo) +
                           ", " + std::to_string(t_hi) + "] K");
    double lo = t_lo, hi = t_hi;
    double T = (T_guess > lo && T_guess < hi) ? T_guess : 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double f = residual(T);
      if (std::abs(f) <= tol) return T;
      if (f < 0.0) lo = T;
      else hi = T;
      double next = T - f / cp(phi, T);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - T) <= 1e-14 * T || hi - lo <= 1e-12 * T) return next;
      T = next;
    }
    return T;
  }

private:
  std::vector<Nasa7> thermo_;
  Eigen::VectorXd W_;
};

} // namespace stiffinfer
