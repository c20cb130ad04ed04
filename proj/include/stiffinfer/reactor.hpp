#pragma once

// Reactor models: right-hand side S(phi) and Jacobian dS/dphi for the
// adiabatic-isobaric and isothermal mechanism reactors and for the analytic
// Robertson system.
//
// Mechanism reactors use mass fractions phi as the only state. Temperature is
// derived (fixed, or recovered from the enthalpy constraint). All formulas are
// homogeneous of degree one in phi, so phi need not sum to one; densities and
// concentrations are evaluated for the normalized composition.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <variant>

#include "stiffinfer/constants.hpp"
#include "stiffinfer/errors.hpp"
#include "stiffinfer/kinetics.hpp"
#include "stiffinfer/mechanism.hpp"
#include "stiffinfer/thermo.hpp"

namespace stiffinfer {

/// Constant-pressure reactor without heat loss; h0 in J/kg, P in Pa.
struct AdiabaticIsobaric {
  double h0 = 0.0;
  double P = constants::one_atm;
};

/// Constant-temperature, constant-pressure reactor.
struct Isothermal {
  double T = 300.0;
  double P = constants::one_atm;
};

/// Robertson's autocatalytic test problem.
struct RobertsonRates {
  double k1 = 0.04;
  double k2 = 3e7;
  double k3 = 1e4;
};

using ReactorModel = std::variant<AdiabaticIsobaric, Isothermal, RobertsonRates>;

inline std::string model_kind(const ReactorModel& m) {
  if (std::holds_alternative<AdiabaticIsobaric>(m)) return "adiabatic-isobaric";
  if (std::holds_alternative<Isothermal>(m)) return "isothermal";
  return "robertson";
}

// ---------------------------------------------------------------------------
// Robertson system

inline Eigen::Vector3d robertson_rhs(const Eigen::Vector3d& y, const RobertsonRates& k = {}) {
  const double a = k.k1 * y[0];
  const double b = k.k2 * y[1] * y[1];
  const double c = k.k3 * y[1] * y[2];
  return {-a + c, a - b - c, b};
}

inline Eigen::Matrix3d robertson_jacobian(const Eigen::Vector3d& y, const RobertsonRates& k = {}) {
  Eigen::Matrix3d J;
  J << -k.k1, k.k3 * y[2], k.k3 * y[1],
       k.k1, -2.0 * k.k2 * y[1] - k.k3 * y[2], -k.k3 * y[1],
       0.0, 2.0 * k.k2 * y[1], 0.0;
  return J;
}

/// Closed-form spectrum of the Robertson Jacobian.
struct RobertsonEigen {
  Eigen::Vector3d lambda; ///< 0, (-E-Q)/2, (-E+Q)/2
  Eigen::Matrix3d L;      ///< left eigenvectors as rows
  double E = 0, F = 0, Q = 0, Q1 = 0, Q2 = 0, Q3 = 0;
};

inline RobertsonEigen robertson_eigen(const Eigen::Vector3d& y, const RobertsonRates& k = {}) {
  RobertsonEigen r;
  r.E = k.k1 + k.k3 * y[2] + 2.0 * k.k2 * y[1];
  r.F = 2.0 * k.k1 * k.k2 * y[1] + 2.0 * k.k2 * k.k3 * y[1] * y[1];
  const double disc = r.E * r.E - 4.0 * r.F;
  if (disc < 0.0)
    throw NumericalError("Robertson Jacobian has a complex spectrum (E^2 - 4F = " + std::to_string(disc) + ")");
  r.Q = std::sqrt(disc);
  r.Q1 = r.E / (2.0 * r.Q);
  r.Q2 = r.F / (k.k1 * r.Q);
  r.Q3 = k.k3 * y[1] / k.k1;
  r.lambda << 0.0, (-r.E - r.Q) / 2.0, (-r.E + r.Q) / 2.0;
  r.L << 1.0, 1.0, 1.0,
         r.Q1 - 0.5, r.Q1 - r.Q2 - 0.5, r.Q3 * (-r.Q1 + 0.5),
         -r.Q1 - 0.5, -r.Q1 + r.Q2 - 0.5, r.Q3 * (r.Q1 + 0.5);
  return r;
}

// ---------------------------------------------------------------------------

enum class JacobianMethod { analytic, finite_difference };

/// Thermodynamic state derived from a composition.
struct ThermoState {
  Eigen::VectorXd phi;
  double T = 0.0;
  double P = 0.0;
  double rho = 0.0;
  double h = 0.0;
};

/// An evaluation context for one reactor. Holds a temperature warm start and
/// kinetics scratch space, so a single instance must not be shared between
/// threads; copies are independent.
class ReactorSystem {
public:
  /// Robertson system (no mechanism).
  explicit ReactorSystem(RobertsonRates k = {}) : model_(k), n_(3) {}

  ReactorSystem(std::shared_ptr<const Mechanism> mech, ReactorModel model,
                JacobianMethod method = JacobianMethod::analytic)
      : mech_(std::move(mech)), model_(model), method_(method) {
    if (std::holds_alternative<RobertsonRates>(model_)) {
      n_ = 3;
      return;
    }
    if (!mech_) throw ValidationError("mechanism reactor needs a mechanism");
    kin_ = std::make_shared<const Kinetics>(*mech_);
    thermo_ = std::make_shared<const MixtureThermo>(*mech_);
    ws_ = kin_->make_workspace();
    n_ = static_cast<Eigen::Index>(mech_->n_species());
    W_ = mech_->molar_masses();
    omega_.resize(n_), c_.resize(n_), h_.resize(n_), cp_.resize(n_), dwdT_.resize(n_);
    if (auto* iso = std::get_if<Isothermal>(&model_)) T_cache_ = iso->T;
  }

  Eigen::Index size() const { return n_; }
  const ReactorModel& model() const { return model_; }
  const std::shared_ptr<const Mechanism>& mechanism() const { return mech_; }
  JacobianMethod jacobian_method() const { return method_; }
  void set_jacobian_method(JacobianMethod m) { method_ = m; }
  bool is_robertson() const { return std::holds_alternative<RobertsonRates>(model_); }
  double pressure() const {
    if (auto* a = std::get_if<AdiabaticIsobaric>(&model_)) return a->P;
    if (auto* i = std::get_if<Isothermal>(&model_)) return i->P;
    return 0.0;
  }

  /// Temperature belonging to phi (fixed, recovered from h0, or NaN for Robertson).
  double temperature(const Eigen::VectorXd& phi) {
    if (auto* a = std::get_if<AdiabaticIsobaric>(&model_)) {
      T_cache_ = thermo_->temperature_from_enthalpy(phi, a->h0, T_cache_);
      return T_cache_;
    }
    if (auto* i = std::get_if<Isothermal>(&model_)) return i->T;
    return std::numeric_limits<double>::quiet_NaN();
  }

  void set_temperature_guess(double T) { T_cache_ = T; }

  ThermoState state(const Eigen::VectorXd& phi) {
    ThermoState s;
    s.phi = phi;
    if (is_robertson()) return s;
    s.T = temperature(phi);
    s.P = pressure();
    s.rho = thermo_->density(phi, s.T, s.P);
    s.h = thermo_->enthalpy(phi, s.T);
    return s;
  }

  const MixtureThermo& thermo() const { return *thermo_; }
  const Kinetics& kinetics() const { return *kin_; }

  /// S(phi), 1/s.
  void rhs(const Eigen::VectorXd& phi, Eigen::Ref<Eigen::VectorXd> f) {
    if (auto* k = std::get_if<RobertsonRates>(&model_)) {
      f = robertson_rhs(Eigen::Vector3d(phi), *k);
      return;
    }
    const double T = temperature(phi);
    const double scale = prepare(phi, T);
    kin_->production_rates(T, c_, ws_, omega_);
    f = scale * W_.cwiseProduct(omega_);
    check_finite(f);
  }

  /// dS/dphi; also writes S(phi) into f when given.
  void jacobian(const Eigen::VectorXd& phi, Eigen::MatrixXd& J, Eigen::VectorXd* f = nullptr) {
    if (auto* k = std::get_if<RobertsonRates>(&model_)) {
      J = robertson_jacobian(Eigen::Vector3d(phi), *k);
      if (f) *f = robertson_rhs(Eigen::Vector3d(phi), *k);
      return;
    }
    if (method_ == JacobianMethod::finite_difference) {
      finite_difference_jacobian(phi, J);
      if (f) rhs(phi, *f);
      return;
    }
    const bool adiabatic = std::holds_alternative<AdiabaticIsobaric>(model_);
    const double T = temperature(phi);
    const double scale = prepare(phi, T); // n / C_tot
    const double Ctot = ctot_;
    kin_->production_rates(T, c_, ws_, omega_, &D_, adiabatic ? &dwdT_ : nullptr);
    // dS_i/dphi_j at fixed T.
    const Eigen::VectorXd Dc = D_ * c_;
    J.resize(n_, n_);
    for (Eigen::Index j = 0; j < n_; ++j)
      for (Eigen::Index i = 0; i < n_; ++i)
        J(i, j) = W_[i] / W_[j] * (omega_[i] / Ctot + D_(i, j) - Dc[i] / Ctot);
    if (adiabatic) {
      const double s = phi.sum();
      thermo_->species_h_cp(T, h_, cp_);
      const double h = phi.dot(h_) / s;
      const double cp = phi.dot(cp_) / s;
      Eigen::VectorXd dSdT = scale * W_.cwiseProduct(omega_ / T + dwdT_ - Dc / T);
      Eigen::VectorXd dTdphi = -(h_.array() - h).matrix() / (s * cp);
      J.noalias() += dSdT * dTdphi.transpose();
    }
    if (f) *f = scale * W_.cwiseProduct(omega_);
    check_finite(J);
  }

  /// Central differences of rhs, step max(1e-8, 1e-6 |phi_i|).
  void finite_difference_jacobian(const Eigen::VectorXd& phi, Eigen::MatrixXd& J) {
    J.resize(n_, n_);
    Eigen::VectorXd x = phi, fp(n_), fm(n_);
    const double T0 = T_cache_;
    for (Eigen::Index j = 0; j < n_; ++j) {
      const double step = std::max(1e-8, 1e-6 * std::abs(phi[j]));
      x[j] = phi[j] + step;
      rhs(x, fp);
      x[j] = phi[j] - step;
      rhs(x, fm);
      x[j] = phi[j];
      J.col(j) = (fp - fm) / (2.0 * step);
    }
    T_cache_ = T0;
  }

  /// Molar concentrations (kmol/m^3) at phi.
  Eigen::VectorXd concentrations(const Eigen::VectorXd& phi) {
    prepare(phi, temperature(phi));
    return c_;
  }

private:
  // Fills c_ and ctot_; returns n / C_tot = nRT/P.
  double prepare(const Eigen::VectorXd& phi, double T) {
    const double P = pressure();
    ctot_ = P / (constants::gas_constant * T);
    const double n = (phi.array() / W_.array()).sum();
    if (!(n > 0.0)) throw NumericalError("composition has non-positive total moles");
    c_ = (ctot_ / n) * (phi.array() / W_.array()).matrix();
    return n / ctot_;
  }

  template <typename M>
  static void check_finite(const M& m) {
    if (!m.allFinite()) throw NumericalError("non-finite reaction rate");
  }

  std::shared_ptr<const Mechanism> mech_;
  std::shared_ptr<const Kinetics> kin_;
  std::shared_ptr<const MixtureThermo> thermo_;
  ReactorModel model_;
  JacobianMethod method_ = JacobianMethod::analytic;
  Eigen::Index n_ = 0;
  KineticsWorkspace ws_;
  Eigen::VectorXd W_, omega_, c_, h_, cp_, dwdT_;
  Eigen::MatrixXd D_;
  double ctot_ = 0.0;
  double T_cache_ = 1000.0;
};

/// dphi/dt at the given state for a mechanism reactor or the Robertson model.
inline Eigen::VectorXd source_term(const ThermoState& state, const ReactorModel& model,
                                   std::shared_ptr<const Mechanism> mech) {
  ReactorSystem sys(std::move(mech), model);
  if (state.T > 0.0) sys.set_temperature_guess(state.T);
  Eigen::VectorXd f(sys.size());
  sys.rhs(state.phi, f);
  return f;
}

inline Eigen::MatrixXd jacobian(const ThermoState& state, const ReactorModel& model,
                                std::shared_ptr<const Mechanism> mech,
                                JacobianMethod method = JacobianMethod::analytic) {
  ReactorSystem sys(std::move(mech), model, method);
  if (state.T > 0.0) sys.set_temperature_guess(state.T);
  Eigen::MatrixXd J;
  sys.jacobian(state.phi, J);
  return J;
}

} // namespace stiffinfer
