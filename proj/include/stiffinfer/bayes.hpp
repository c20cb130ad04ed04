#pragma once

// Initial-composition inference: truth ensembles, observation summaries,
// the Gaussian-likelihood posterior with a flat box prior, and the NUTS
// pipeline that samples it.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stiffinfer/errors.hpp"
#include "stiffinfer/nuts.hpp"
#include "stiffinfer/ode.hpp"
#include "stiffinfer/parallel.hpp"
#include "stiffinfer/reactor.hpp"

namespace stiffinfer {

struct TruthSpec {
  Eigen::VectorXd mu0;
  Eigen::VectorXd s0;
  std::size_t n_truth = 1000;

  Eigen::VectorXd lower() const { return mu0 - 3.0 * s0; }
  Eigen::VectorXd upper() const { return mu0 + 3.0 * s0; }
  Eigen::Index size() const { return mu0.size(); }

  void validate() const {
    if (mu0.size() == 0 || mu0.size() != s0.size()) throw ValidationError("truth mean and std must have equal, nonzero length");
    if (!(s0.array() > 0.0).all()) throw ValidationError("truth standard deviations must be positive");
    if (n_truth < 2) throw ValidationError("the truth ensemble needs at least two members");
  }
};

/// Random streams derived from one master seed.
namespace seeds {
inline std::uint64_t truth(std::uint64_t master) { return master; }
inline std::uint64_t chain(std::uint64_t master, int c) { return master + 1000u * static_cast<std::uint64_t>(c + 1); }
} // namespace seeds

/// n_truth x n draws from the componentwise truncated Gaussian (rejection).
inline Eigen::MatrixXd sample_truth(const TruthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  const Eigen::Index d = spec.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(spec.n_truth), d);
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    for (Eigen::Index i = 0; i < d; ++i) {
      double z;
      do z = n(rng);
      while (z < -3.0 || z > 3.0);
      X(r, i) = spec.mu0[i] + spec.s0[i] * z;
    }
  return X;
}

/// Integrates every ensemble member and returns its state at each requested
/// time (one n_members x n matrix per time).
inline std::vector<Eigen::MatrixXd> evolve_ensemble(const Eigen::MatrixXd& ensemble, const ReactorSystem& prototype,
                                                    const std::vector<double>& times, const SolverConfig& cfg = {},
                                                    unsigned threads = 1) {
  if (times.empty()) throw ValidationError("no observation times");
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() <= 0.0) throw ValidationError("observation times must be positive");
  std::vector<Eigen::MatrixXd> out(times.size(), Eigen::MatrixXd(ensemble.rows(), ensemble.cols()));
  threads = std::max(1u, threads);
  std::vector<ReactorSystem> systems(threads, prototype);
  parallel_for(static_cast<std::size_t>(ensemble.rows()), threads, [&](std::size_t m, unsigned w) {
    const Eigen::VectorXd y0 = ensemble.row(static_cast<Eigen::Index>(m)).transpose();
    Trajectory tr;
    try {
      tr = integrate(systems[w], y0, sorted.back(), cfg, sorted, Record::outputs_only);
    } catch (const Error& e) {
      throw NumericalError("ensemble member " + std::to_string(m) + ": " + e.what());
    }
    for (std::size_t k = 0; k < times.size(); ++k)
      out[k].row(static_cast<Eigen::Index>(m)) = evaluate_at(tr, times[k]).transpose();
  });
  return out;
}

enum class ObservationMode { variance, covariance };

inline std::string to_string(ObservationMode m) { return m == ObservationMode::variance ? "variance" : "covariance"; }

inline ObservationMode observation_mode_from_string(const std::string& s) {
  if (s == "variance") return ObservationMode::variance;
  if (s == "covariance") return ObservationMode::covariance;
  throw ValidationError("unknown observation mode '" + s + "' (expected variance or covariance)");
}

struct ObservationSummary {
  double t_obs = 0.0;
  ObservationMode mode = ObservationMode::variance;
  std::size_t n_members = 0;
  Eigen::VectorXd mu_obs;
  Eigen::VectorXd s_obs;
  Eigen::MatrixXd Sigma_obs; ///< diagonal in variance mode
  Eigen::MatrixXd corr;      ///< sample correlation (always full)
  bool jittered = false;
  double jitter = 0.0;
  double min_eigenvalue = 0.0; ///< of Sigma_obs before jitter
};

inline ObservationSummary summarize_observations(const Eigen::MatrixXd& X, double t_obs, ObservationMode mode) {
  if (X.rows() < 2) throw ValidationError("an observation summary needs at least two samples");
  ObservationSummary o;
  o.t_obs = t_obs;
  o.mode = mode;
  o.n_members = static_cast<std::size_t>(X.rows());
  o.mu_obs = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - o.mu_obs.transpose();
  Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
  o.s_obs = cov.diagonal().cwiseSqrt();
  o.corr = Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double s = o.s_obs[i] * o.s_obs[j];
      o.corr(i, j) = o.corr(j, i) = s > 0.0 ? cov(i, j) / s : 0.0;
    }
  o.Sigma_obs = mode == ObservationMode::variance ? Eigen::MatrixXd(cov.diagonal().asDiagonal()) : cov;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(o.Sigma_obs, Eigen::EigenvaluesOnly);
  o.min_eigenvalue = es.eigenvalues().minCoeff();
  // Identical members leave a zero trace; fall back to the squared mean.
  double scale = o.Sigma_obs.trace();
  if (!(scale > 0.0)) scale = o.mu_obs.squaredNorm() > 0.0 ? o.mu_obs.squaredNorm() : 1.0;
  if (o.min_eigenvalue <= 1e-12 * scale) {
    o.jittered = true;
    o.jitter = 1e-12 * scale;
    o.Sigma_obs.diagonal().array() += o.jitter;
  }
  return o;
}

inline ObservationSummary generate_observation(const Eigen::MatrixXd& ensemble, const ReactorSystem& prototype,
                                               double t_obs, ObservationMode mode, const SolverConfig& cfg = {},
                                               unsigned threads = 1) {
  if (!(t_obs > 0.0)) throw ValidationError("t_obs must be positive");
  const auto X = evolve_ensemble(ensemble, prototype, {t_obs}, cfg, threads);
  return summarize_observations(X.front(), t_obs, mode);
}

/// Componentwise scaled logistic map between the open box (lo, hi) and R^n.
class BoxTransform {
public:
  BoxTransform(Eigen::VectorXd lo, Eigen::VectorXd hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size() || !(lo_.array() < hi_.array()).all()) throw ValidationError("invalid box bounds");
  }

  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }
  Eigen::Index size() const { return lo_.size(); }
  Eigen::VectorXd center() const { return 0.5 * (lo_ + hi_); }

  Eigen::VectorXd to_box(const Eigen::VectorXd& z) const {
    if (z.size() != size()) throw ValidationError("transform input has the wrong length");
    if (!z.allFinite()) throw ValidationError("unconstrained point must be finite");
    Eigen::VectorXd x(size());
    for (Eigen::Index i = 0; i < size(); ++i) x[i] = lo_[i] + (hi_[i] - lo_[i]) * logistic(z[i]);
    return x;
  }

  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& x) const {
    if (x.size() != size()) throw ValidationError("transform input has the wrong length");
    Eigen::VectorXd z(size());
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (!(x[i] > lo_[i] && x[i] < hi_[i]))
        throw ValidationError("component " + std::to_string(i) + " is not strictly inside the box");
      const double u = (x[i] - lo_[i]) / (hi_[i] - lo_[i]);
      z[i] = std::log(u) - std::log1p(-u);
    }
    return z;
  }

  /// log |det d x / d z|; adds its gradient to grad when given.
  double log_jacobian(const Eigen::VectorXd& z, Eigen::VectorXd* grad = nullptr) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < size(); ++i) {
      s += std::log(hi_[i] - lo_[i]) - softplus(-z[i]) - softplus(z[i]);
      if (grad) (*grad)[i] += 1.0 - 2.0 * logistic(z[i]);
    }
    return s;
  }

  /// d x / d z, componentwise.
  Eigen::VectorXd dx_dz(const Eigen::VectorXd& z) const {
    Eigen::VectorXd d(size());
    for (Eigen::Index i = 0; i < size(); ++i) {
      const double s = logistic(z[i]);
      d[i] = (hi_[i] - lo_[i]) * s * (1.0 - s);
    }
    return d;
  }

private:
  static double logistic(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  static double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

  Eigen::VectorXd lo_, hi_;
};

/// Gaussian likelihood of R(phi0, t_obs) under the observation summary with a
/// flat prior on the box. Holds its own integration context; not thread safe.
class Posterior {
public:
  Posterior(ReactorSystem sys, ObservationSummary obs, BoxTransform box, SolverConfig cfg = {})
      : sys_(std::move(sys)), obs_(std::move(obs)), box_(std::move(box)), cfg_(std::move(cfg)) {
    if (obs_.mu_obs.size() != sys_.size() || box_.size() != sys_.size())
      throw ValidationError("observation, box and model dimensions differ");
    llt_.compute(obs_.Sigma_obs);
    if (llt_.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(obs_.Sigma_obs, Eigen::EigenvaluesOnly);
      throw NumericalError("observation covariance is singular (smallest eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
  }

  const ObservationSummary& observation() const { return obs_; }
  const BoxTransform& box() const { return box_; }

  /// Log density up to a constant at phi0 (inside the box) and its gradient.
  double log_density(const Eigen::VectorXd& phi0, Eigen::VectorXd* grad = nullptr) {
    for (Eigen::Index i = 0; i < phi0.size(); ++i)
      if (!(phi0[i] > box_.lower()[i] && phi0[i] < box_.upper()[i])) {
        if (grad) grad->setZero(phi0.size());
        return -std::numeric_limits<double>::infinity();
      }
    Eigen::VectorXd r;
    Eigen::MatrixXd A;
    if (grad) {
      const auto s = integrate_with_sensitivity(sys_, phi0, obs_.t_obs, cfg_, {}, Record::outputs_only);
      r = s.base.states.back() - obs_.mu_obs;
      A = s.A.back();
    } else {
      const auto tr = integrate(sys_, phi0, obs_.t_obs, cfg_, {}, Record::outputs_only);
      r = tr.states.back() - obs_.mu_obs;
    }
    const Eigen::VectorXd w = llt_.solve(r);
    if (grad) *grad = -A.transpose() * w;
    return -0.5 * r.dot(w);
  }

  /// Log density in unconstrained coordinates including the transform's log-Jacobian.
  double log_density_z(const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
    if (!z.allFinite()) throw NumericalError("non-finite unconstrained point");
    const Eigen::VectorXd phi0 = box_.to_box(z);
    Eigen::VectorXd g;
    const double lp = log_density(phi0, &g);
    grad = g.cwiseProduct(box_.dx_dz(z));
    return lp + box_.log_jacobian(z, &grad);
  }

private:
  ReactorSystem sys_;
  ObservationSummary obs_;
  BoxTransform box_;
  SolverConfig cfg_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct InferenceSettings {
  NutsSettings nuts;
  int chains = 4;
  ObservationMode mode = ObservationMode::variance;
  SolverConfig truth_solver;     ///< truth ensemble integration
  SolverConfig posterior_solver; ///< integrations inside the sampler
  std::uint64_t seed = 1;
  unsigned threads = 1;

  InferenceSettings() {
    posterior_solver.rtol = 1e-6;
    posterior_solver.sensitivity_error_control = false;
  }
};

struct InferenceResult {
  ObservationSummary observation;
  std::vector<PosteriorChain> chains;
  std::vector<Eigen::MatrixXd> draws;            ///< per chain, phi0 (n_draws x n)
  std::vector<Eigen::MatrixXd> normalized_draws; ///< per chain, (phi0 - mu0) / s0
  Eigen::VectorXd rhat;
  Eigen::VectorXd ess;
  double divergence_fraction = 0.0;
  bool flagged = false;

  /// Normalized draws of one component pooled over chains.
  std::vector<double> pooled_normalized(Eigen::Index component) const {
    std::vector<double> v;
    for (const auto& d : normalized_draws)
      for (Eigen::Index k = 0; k < d.rows(); ++k) v.push_back(d(k, component));
    return v;
  }
};

/// Samples the posterior for a given observation summary.
inline InferenceResult sample_posterior(const TruthSpec& spec, const ReactorSystem& prototype,
                                        const ObservationSummary& obs, const InferenceSettings& st) {
  if (st.chains < 1) throw ValidationError("need at least one chain");
  const BoxTransform box(spec.lower(), spec.upper());
  const Eigen::Index d = spec.size();
  InferenceResult res;
  res.observation = obs;
  res.chains.resize(static_cast<std::size_t>(st.chains));
  parallel_for(static_cast<std::size_t>(st.chains), st.threads, [&](std::size_t c, unsigned) {
    Posterior post(prototype, obs, box, st.posterior_solver);
    LogDensity f = [&post](const Eigen::VectorXd& z, Eigen::VectorXd& g) { return post.log_density_z(z, g); };
    Nuts sampler(f, d, st.nuts, seeds::chain(st.seed, static_cast<int>(c)));
    res.chains[c] = sampler.sample();
  });
  std::size_t div = 0, total = 0;
  for (const auto& ch : res.chains) {
    Eigen::MatrixXd phi(ch.draws.rows(), d);
    for (Eigen::Index k = 0; k < ch.draws.rows(); ++k) phi.row(k) = box.to_box(ch.draws.row(k).transpose()).transpose();
    Eigen::MatrixXd zn = (phi.rowwise() - spec.mu0.transpose()).array().rowwise() / spec.s0.transpose().array();
    res.draws.push_back(std::move(phi));
    res.normalized_draws.push_back(std::move(zn));
    div += static_cast<std::size_t>(std::count(ch.divergent.begin(), ch.divergent.end(), 1));
    total += ch.divergent.size();
  }
  res.divergence_fraction = total ? static_cast<double>(div) / total : 0.0;
  res.flagged = res.divergence_fraction > 0.05;
  res.rhat.resize(d);
  res.ess.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<std::vector<double>> per;
    for (const auto& ch : res.chains) per.emplace_back(ch.draws.col(i).data(), ch.draws.col(i).data() + ch.draws.rows());
    res.rhat[i] = split_rhat(per);
    res.ess[i] = effective_sample_size(per);
  }
  return res;
}

/// Truth ensemble -> observation summary -> posterior sampling.
inline InferenceResult run_inference(const TruthSpec& spec, const ReactorSystem& prototype, double t_obs,
                                     const InferenceSettings& st) {
  const Eigen::MatrixXd truth = sample_truth(spec, seeds::truth(st.seed));
  const auto obs = generate_observation(truth, prototype, t_obs, st.mode, st.truth_solver, st.threads);
  return sample_posterior(spec, prototype, obs, st);
}

} // namespace stiffinfer
