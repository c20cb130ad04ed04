#pragma once

// Stiff integration with optional forward sensitivities.
//
// The method is the five-stage, L-stable, stiffly accurate SDIRK of order 4
// with an embedded order-3 solution (Hairer & Wanner, Solving ODEs II,
// table IV.6.16). Stages are solved by simplified Newton with the Jacobian
// frozen at the start of the step. Step size follows a PI controller.
//
// Sensitivities A = d y(t) / d y(0) use staggered internal differentiation:
// after the state step is accepted, the same Runge-Kutta scheme is applied
// to dA/dt = J(y) A with the Jacobian evaluated at each converged stage,
// which reproduces the derivative of the discrete map exactly (up to the
// Newton tolerance of the state stages).
//
// Dense output: quintic Hermite for the state (y, f, J f at both ends) and
// cubic Hermite for A (A, J A at both ends).

#include <Eigen/Dense>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stiffinfer/errors.hpp"

namespace stiffinfer {

struct SolverConfig {
  double rtol = 1e-8;
  double atol = 1e-14;            ///< absolute tolerance for every component unless atol_vector is set
  Eigen::VectorXd atol_vector;    ///< optional per-component absolute tolerances
  bool sensitivity_error_control = true;
  double sensitivity_atol = 1e-14; ///< absolute tolerance on entries of A
  std::size_t max_steps = 200000;
  double h_initial = 0.0;         ///< 0 selects automatically
  double h_max = std::numeric_limits<double>::infinity();
  std::string method = "sdirk4";

  void validate() const {
    if (!(rtol > 0.0 && rtol <= 1e-2)) throw ValidationError("rtol must lie in (0, 1e-2]");
    if (!(atol > 0.0)) throw ValidationError("atol must be positive");
    if (atol_vector.size() > 0 && !(atol_vector.array() > 0.0).all())
      throw ValidationError("per-component atol must be positive");
    if (!(sensitivity_atol > 0.0)) throw ValidationError("sensitivity atol must be positive");
    if (method != "sdirk4") throw ValidationError("unknown integration method '" + method + "'");
  }
};

struct SolverStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t newton_failures = 0;
  std::size_t rhs_evals = 0;
  std::size_t jacobian_evals = 0;
  std::size_t factorizations = 0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> derivatives;  ///< f(y)
  std::vector<Eigen::VectorXd> curvatures;   ///< J(y) f(y)
  std::vector<double> temperatures;          ///< NaN where not applicable
  bool dense = true;                         ///< false when only requested outputs were kept
  SolverStats stats;

  std::size_t size() const { return times.size(); }
  double t_end() const { return times.back(); }
};

struct SensitivityTrajectory {
  Trajectory base;
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> dA; ///< J A

  std::size_t size() const { return base.size(); }
};

enum class Record { every_step, outputs_only };

namespace detail {

struct Sdirk4Tableau {
  static constexpr double gamma = 0.25;
  static constexpr std::array<double, 5> c{0.25, 0.75, 11.0 / 20.0, 0.5, 1.0};
  static constexpr std::array<std::array<double, 5>, 5> a{{
      {0.25, 0, 0, 0, 0},
      {0.5, 0.25, 0, 0, 0},
      {17.0 / 50.0, -1.0 / 25.0, 0.25, 0, 0},
      {371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0},
      {25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25},
  }};
  static constexpr std::array<double, 5> b{25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25};
  static constexpr std::array<double, 5> bhat{59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0};
};

} // namespace detail

/// SDIRK4 integrator bound to one system instance. System must provide
///   Eigen::Index size();
///   void rhs(const Eigen::VectorXd& y, Eigen::Ref<Eigen::VectorXd> f);
///   void jacobian(const Eigen::VectorXd& y, Eigen::MatrixXd& J, Eigen::VectorXd* f);
/// and may provide double temperature(const Eigen::VectorXd&).
template <typename System>
class Sdirk4 {
  using T = detail::Sdirk4Tableau;

public:
  Sdirk4(System& sys, SolverConfig cfg) : sys_(sys), cfg_(std::move(cfg)), n_(sys.size()) {
    cfg_.validate();
    if (cfg_.atol_vector.size() > 0 && cfg_.atol_vector.size() != n_)
      throw ValidationError("atol vector length does not match the system size");
    atol_ = cfg_.atol_vector.size() ? cfg_.atol_vector : Eigen::VectorXd::Constant(n_, cfg_.atol);
    for (auto& z : Z_) z.resize(n_);
    for (auto& f : F_) f.resize(n_);
    rhs_.resize(n_), dz_.resize(n_), g_.resize(n_), sc_.resize(n_), err_.resize(n_);
  }

  /// Integrate y' = f(y) from y0 at t = 0 to t_end. Output times in (0, t_end]
  /// are hit exactly; with Record::outputs_only only t = 0, the output times
  /// and t_end are stored.
  SensitivityTrajectory run(const Eigen::VectorXd& y0, double t_end, const std::vector<double>& outputs,
                            bool with_sensitivity, Record record = Record::every_step) {
    if (y0.size() != n_) throw ValidationError("initial state has the wrong length");
    if (!(t_end > 0.0)) throw ValidationError("t_end must be positive");
    std::vector<double> stops;
    for (double t : outputs) {
      if (t < 0.0 || t > t_end) throw ValidationError("output time outside [0, t_end]");
      if (t > 0.0) stops.push_back(t);
    }
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
    if (stops.empty() || stops.back() < t_end) stops.push_back(t_end);

    sens_ = with_sensitivity;
    stats_ = {};
    SensitivityTrajectory out;
    out.base.dense = record == Record::every_step;

    Eigen::VectorXd y = y0;
    Eigen::VectorXd f(n_);
    Eigen::MatrixXd J;
    evaluate_jacobian(y, J, f);
    Eigen::MatrixXd A, JA;
    if (sens_) {
      A = Eigen::MatrixXd::Identity(n_, n_);
      JA = J;
      X_.fill(Eigen::MatrixXd(n_, n_));
      JX_.fill(Eigen::MatrixXd(n_, n_));
    }
    double t = 0.0;
    store(out, t, y, f, J * f, A, JA);

    double h = cfg_.h_initial > 0.0 ? cfg_.h_initial : initial_step(y, f, t_end);
    h = std::min({h, cfg_.h_max, stops.front()});
    double err_prev = 1.0;
    bool last_rejected = false;
    std::size_t next = 0;

    Eigen::VectorXd y_new(n_), f_new(n_);
    Eigen::MatrixXd J_new, A_new, JA_new;
    while (next < stops.size()) {
      if (stats_.steps + stats_.rejected >= cfg_.max_steps)
        throw NumericalError("maximum number of steps (" + std::to_string(cfg_.max_steps) + ") exceeded at t = " +
                             std::to_string(t));
      const double target = stops[next];
      bool hits = false;
      double h_step = h;
      if (t + h_step >= target) {
        h_step = target - t;
        hits = true;
      } else if (t + 2.0 * h_step > target) {
        h_step = 0.5 * (target - t); // avoid a sliver before the stop
      }
      if (h_step <= 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t) || h_step < 1e-300)
        throw NumericalError("step size underflow at t = " + std::to_string(t));

      double err = 0.0;
      if (!attempt(y, J, h_step, y_new, err)) {
        ++stats_.newton_failures;
        ++stats_.rejected;
        h = 0.25 * h_step;
        last_rejected = true;
        continue;
      }
      if (err <= 1.0 && sens_) {
        // The state step is acceptable; propagate A and fold its error in.
        const double errA = sensitivity_step(A, h_step, A_new);
        err = std::max(err, errA);
      }
      if (err > 1.0) {
        ++stats_.rejected;
        h = h_step * std::max(0.2, 0.9 * std::pow(err, -0.25));
        last_rejected = true;
        continue;
      }

      // Accepted.
      ++stats_.steps;
      evaluate_jacobian(y_new, J_new, f_new);
      if (sens_) JA_new.noalias() = J_new * A_new;
      const double t_new = hits ? target : t + h_step;
      if (record == Record::every_step || hits)
        store(out, t_new, y_new, f_new, J_new * f_new, A_new, JA_new);

      double fac;
      const double e = std::max(err, 1e-10);
      fac = 0.9 * std::pow(e, -0.7 / 4.0) * std::pow(err_prev, 0.4 / 4.0);
      fac = std::clamp(fac, 0.2, 5.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      err_prev = e;
      last_rejected = false;
      const double h_next = std::min(h_step * fac, cfg_.h_max);
      // Do not let a shortened landing step throttle the following ones.
      h = hits ? std::max(h_next, std::min(h, cfg_.h_max)) : h_next;

      t = t_new;
      y.swap(y_new);
      f.swap(f_new);
      J.swap(J_new);
      if (sens_) {
        A.swap(A_new);
        JA.swap(JA_new);
      }
      if (hits) ++next;
    }
    out.base.stats = stats_;
    return out;
  }

  const SolverStats& stats() const { return stats_; }

private:
  double wrms(const Eigen::VectorXd& v) const { return std::sqrt((v.array() / sc_.array()).square().mean()); }

  void evaluate_jacobian(const Eigen::VectorXd& y, Eigen::MatrixXd& J, Eigen::VectorXd& f) {
    sys_.jacobian(y, J, &f);
    ++stats_.jacobian_evals;
    ++stats_.rhs_evals;
  }

  double initial_step(const Eigen::VectorXd& y0, const Eigen::VectorXd& f0, double t_end) {
    sc_ = atol_.array() + cfg_.rtol * y0.array().abs();
    const double d0 = wrms(y0), d1 = wrms(f0);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_end);
    Eigen::VectorXd y1 = y0 + h0 * f0, f1(n_);
    try {
      sys_.rhs(y1, f1);
    } catch (const NumericalError&) {
      return 1e-3 * h0;
    }
    ++stats_.rhs_evals;
    const double d2 = wrms(f1 - f0) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    return std::min({100.0 * h0, h1, t_end});
  }

  /// One state step of size h from y with Jacobian J(y). Returns false on
  /// Newton failure; otherwise writes y_new and the scaled error norm.
  bool attempt(const Eigen::VectorXd& y, const Eigen::MatrixXd& J, double h, Eigen::VectorXd& y_new, double& err) {
    M_ = Eigen::MatrixXd::Identity(n_, n_) - (h * T::gamma) * J;
    lu_.compute(M_);
    ++stats_.factorizations;
    sc_ = atol_.array() + cfg_.rtol * y.array().abs();
    const double fnewt = std::max(10.0 * std::numeric_limits<double>::epsilon() / cfg_.rtol,
                                  std::min(0.03, std::sqrt(cfg_.rtol)));
    try {
      for (int i = 0; i < 5; ++i) {
        // rhs_ = y + h sum_{j<i} a_ij F_j
        rhs_ = y;
        for (int j = 0; j < i; ++j) rhs_.noalias() += (h * T::a[i][j]) * F_[j];
        // Predictor: explicit continuation with the previous stage slope.
        Eigen::VectorXd& Z = Z_[i];
        if (i == 0) Z = y;
        else Z = rhs_ + (h * T::gamma) * F_[i - 1];
        double eta = std::pow(std::max(eta_, std::numeric_limits<double>::epsilon()), 0.8);
        double norm_prev = 0.0;
        bool converged = false;
        for (int it = 0; it < 10; ++it) {
          sys_.rhs(Z, F_[i]);
          ++stats_.rhs_evals;
          g_ = rhs_ + (h * T::gamma) * F_[i] - Z;
          dz_ = lu_.solve(g_);
          Z += dz_;
          const double norm = wrms(dz_);
          if (!std::isfinite(norm)) return false;
          if (it > 0) {
            const double theta = norm / norm_prev;
            if (theta >= 0.99) return false;
            eta = theta / (1.0 - theta);
          }
          norm_prev = norm;
          if (eta * norm <= fnewt || norm <= 1e-3 * fnewt) {
            converged = true;
            break;
          }
        }
        if (!converged) return false;
        eta_ = eta;
        // Stage slope consistent with the converged stage value.
        F_[i] = (Z - rhs_) / (h * T::gamma);
      }
    } catch (const NumericalError&) {
      return false;
    }
    y_new = Z_[4];
    err_.setZero();
    for (int i = 0; i < 5; ++i) err_.noalias() += (h * (T::b[i] - T::bhat[i])) * F_[i];
    err_ = lu_.solve(err_);
    sc_ = atol_.array() + cfg_.rtol * y.array().abs().max(y_new.array().abs());
    err = wrms(err_);
    return std::isfinite(err);
  }

  /// Apply the scheme to dA/dt = J(y(t)) A over the accepted step. Returns the
  /// scaled error estimate of A (0 when not controlled).
  double sensitivity_step(const Eigen::MatrixXd& A, double h, Eigen::MatrixXd& A_new) {
    for (int i = 0; i < 5; ++i) {
      sys_.jacobian(Z_[i], Js_, nullptr);
      ++stats_.jacobian_evals;
      Ms_ = Eigen::MatrixXd::Identity(n_, n_) - (h * T::gamma) * Js_;
      lus_.compute(Ms_);
      ++stats_.factorizations;
      B_ = A;
      for (int j = 0; j < i; ++j) B_.noalias() += (h * T::a[i][j]) * JX_[j];
      X_[i] = lus_.solve(B_);
      JX_[i].noalias() = Js_ * X_[i];
    }
    A_new = X_[4];
    if (!cfg_.sensitivity_error_control) return 0.0;
    B_.setZero(n_, n_);
    for (int i = 0; i < 5; ++i) B_.noalias() += (h * (T::b[i] - T::bhat[i])) * JX_[i];
    B_ = lu_.solve(B_);
    const Eigen::ArrayXXd scale = cfg_.sensitivity_atol + cfg_.rtol * A.array().abs().max(A_new.array().abs());
    return std::sqrt((B_.array() / scale).square().mean());
  }

  void store(SensitivityTrajectory& out, double t, const Eigen::VectorXd& y, const Eigen::VectorXd& f,
             const Eigen::VectorXd& jf, const Eigen::MatrixXd& A, const Eigen::MatrixXd& JA) {
    out.base.times.push_back(t);
    out.base.states.push_back(y);
    out.base.derivatives.push_back(f);
    out.base.curvatures.push_back(jf);
    if constexpr (requires(System& s, const Eigen::VectorXd& v) { s.temperature(v); })
      out.base.temperatures.push_back(sys_.temperature(y));
    else
      out.base.temperatures.push_back(std::numeric_limits<double>::quiet_NaN());
    if (sens_) {
      out.A.push_back(A);
      out.dA.push_back(JA);
    }
  }

  System& sys_;
  SolverConfig cfg_;
  Eigen::Index n_;
  Eigen::VectorXd atol_;
  bool sens_ = false;
  SolverStats stats_;
  double eta_ = 1.0;

  std::array<Eigen::VectorXd, 5> Z_, F_;
  Eigen::VectorXd rhs_, dz_, g_, sc_, err_;
  Eigen::MatrixXd M_, Ms_, Js_, B_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_, lus_;
  std::array<Eigen::MatrixXd, 5> X_, JX_;
};

template <typename System>
Trajectory integrate(System& sys, const Eigen::VectorXd& y0, double t_end, const SolverConfig& cfg = {},
                     const std::vector<double>& outputs = {}, Record record = Record::every_step) {
  Sdirk4<System> solver(sys, cfg);
  return solver.run(y0, t_end, outputs, false, record).base;
}

template <typename System>
SensitivityTrajectory integrate_with_sensitivity(System& sys, const Eigen::VectorXd& y0, double t_end,
                                                 const SolverConfig& cfg = {}, const std::vector<double>& outputs = {},
                                                 Record record = Record::every_step) {
  Sdirk4<System> solver(sys, cfg);
  return solver.run(y0, t_end, outputs, true, record);
}

namespace detail {

inline std::size_t locate(const Trajectory& traj, double t) {
  if (traj.times.empty()) throw ValidationError("empty trajectory");
  if (t < traj.times.front() || t > traj.times.back())
    throw ValidationError("time " + std::to_string(t) + " outside the integrated range [" +
                          std::to_string(traj.times.front()) + ", " + std::to_string(traj.times.back()) + "]");
  auto it = std::upper_bound(traj.times.begin(), traj.times.end(), t);
  std::size_t k = static_cast<std::size_t>(it - traj.times.begin());
  return k == 0 ? 0 : k - 1;
}

inline std::optional<std::size_t> node_index(const Trajectory& traj, std::size_t k, double t) {
  if (traj.times[k] == t) return k;
  if (k + 1 < traj.times.size() && traj.times[k + 1] == t) return k + 1;
  return std::nullopt;
}

} // namespace detail

/// State at time t by dense output. Exact at stored nodes.
inline Eigen::VectorXd evaluate_at(const Trajectory& traj, double t) {
  const std::size_t k = detail::locate(traj, t);
  if (auto node = detail::node_index(traj, k, t)) return traj.states[*node];
  if (!traj.dense) throw ValidationError("trajectory stores outputs only; no dense evaluation at t = " + std::to_string(t));
  const double t0 = traj.times[k], t1 = traj.times[k + 1], h = t1 - t0;
  const double s = (t - t0) / h;
  // Quintic Hermite basis on [0, 1].
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  const double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
  const double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
  const double H2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5);
  const double H3 = 10 * s3 - 15 * s4 + 6 * s5;
  const double H4 = -4 * s3 + 7 * s4 - 3 * s5;
  const double H5 = 0.5 * (s3 - 2 * s4 + s5);
  return H0 * traj.states[k] + (H1 * h) * traj.derivatives[k] + (H2 * h * h) * traj.curvatures[k] +
         H3 * traj.states[k + 1] + (H4 * h) * traj.derivatives[k + 1] + (H5 * h * h) * traj.curvatures[k + 1];
}

inline Eigen::VectorXd evaluate_at(const SensitivityTrajectory& traj, double t) { return evaluate_at(traj.base, t); }

/// Sensitivity matrix at time t (cubic Hermite between nodes).
inline Eigen::MatrixXd sensitivity_at(const SensitivityTrajectory& traj, double t) {
  const std::size_t k = detail::locate(traj.base, t);
  if (auto node = detail::node_index(traj.base, k, t)) return traj.A[*node];
  if (!traj.base.dense)
    throw ValidationError("trajectory stores outputs only; no dense evaluation at t = " + std::to_string(t));
  const double t0 = traj.base.times[k], t1 = traj.base.times[k + 1], h = t1 - t0;
  const double s = (t - t0) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * traj.A[k] + ((s3 - 2 * s2 + s) * h) * traj.dA[k] + (-2 * s3 + 3 * s2) * traj.A[k + 1] +
         ((s3 - s2) * h) * traj.dA[k + 1];
}

} // namespace stiffinfer
