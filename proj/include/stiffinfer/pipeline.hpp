#pragma once

// End-to-end experiments: failure verdicts of an inference run, failure-time
// sweeps over observation times, and correlation tracking of the evolving
// truth ensemble.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stiffinfer/bayes.hpp"
#include "stiffinfer/manifold.hpp"
#include "stiffinfer/metrics.hpp"
#include "stiffinfer/scenarios.hpp"

namespace stiffinfer {

struct VerdictOptions {
  Support support;
  double threshold = 0.2;
  double base = 2.0;
};

/// Per-species verdicts for the pooled normalized posterior draws against the
/// exact truncated-normal truth and uniform prior marginals.
inline std::vector<FailureVerdict> inference_verdicts(const InferenceResult& res, const VerdictOptions& opt = {}) {
  const auto truth = truncated_normal_marginal(opt.support);
  const auto prior = uniform_marginal(opt.support);
  std::vector<FailureVerdict> out;
  const Eigen::Index d = res.normalized_draws.front().cols();
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto post = estimate_marginal(res.pooled_normalized(i), opt.support);
    out.push_back(failure_verdict(truth, prior, post, opt.threshold, opt.base));
  }
  return out;
}

struct SweepPoint {
  double t_obs = 0.0;
  ObservationSummary observation;
  std::vector<FailureVerdict> verdicts;
  Eigen::VectorXd rhat, ess;
  double divergence_fraction = 0.0;
  std::vector<double> step_sizes;
};

struct SweepResult {
  std::string scenario;
  ObservationMode mode = ObservationMode::variance;
  std::uint64_t seed = 0;
  std::vector<std::string> species;
  std::vector<SweepPoint> points;
  /// First grid time at which each species' verdict fired.
  std::vector<std::optional<double>> critical_time;
};

/// Called after each grid point; returning false ends the sweep early.
using SweepProgress = std::function<bool(std::size_t index, const SweepPoint&)>;

/// Runs the inference at every grid time. One truth ensemble (seeded by the
/// master seed) is evolved once and summarized at each time.
inline SweepResult failure_time_sweep(const Scenario& sc, const std::vector<double>& grid, ObservationMode mode,
                                      std::uint64_t seed, unsigned threads = 1, const VerdictOptions& opt = {},
                                      const SweepProgress& progress = {}) {
  if (grid.empty()) throw ValidationError("empty observation grid");
  const ReactorSystem sys = sc.make_system();
  const InferenceSettings st = sc.inference_settings(mode, seed, threads);
  const Eigen::MatrixXd truth = sample_truth(sc.truth, seeds::truth(seed));
  const auto evolved = evolve_ensemble(truth, sys, grid, sc.solver, threads);

  SweepResult r;
  r.scenario = sc.name;
  r.mode = mode;
  r.seed = seed;
  r.species = sc.species;
  r.critical_time.assign(sc.species.size(), std::nullopt);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    SweepPoint p;
    p.t_obs = grid[k];
    p.observation = summarize_observations(evolved[k], grid[k], mode);
    const auto res = sample_posterior(sc.truth, sys, p.observation, st);
    p.verdicts = inference_verdicts(res, opt);
    p.rhat = res.rhat;
    p.ess = res.ess;
    p.divergence_fraction = res.divergence_fraction;
    for (const auto& c : res.chains) p.step_sizes.push_back(c.step_size);
    for (std::size_t i = 0; i < p.verdicts.size(); ++i)
      if (p.verdicts[i].failed && !r.critical_time[i]) r.critical_time[i] = grid[k];
    const bool go_on = !progress || progress(k, p);
    r.points.push_back(std::move(p));
    if (!go_on) break;
  }
  return r;
}

/// Conserved directions of a scenario's state: total mass for Robertson,
/// element mass fractions for mechanism reactors.
inline Eigen::MatrixXd conserved_matrix(const Scenario& sc) {
  if (sc.kind == ModelKind::robertson) return Eigen::MatrixXd::Ones(3, 1);
  return element_matrix(*sc.load_mech());
}

/// Sensitivity of the reference trajectory (from mu0 unless phi0 is given)
/// sampled on the scenario's rank window, with subspace ranks and descents.
inline RankReport rank_analysis(const Scenario& sc, std::optional<double> threshold = std::nullopt,
                                std::optional<Eigen::VectorXd> phi0 = std::nullopt) {
  const double thr = threshold.value_or(sc.rank_threshold);
  if (!(thr > 0.0)) throw ValidationError("rank threshold must be positive");
  const Eigen::VectorXd y0 = phi0.value_or(sc.truth.mu0);
  if (y0.size() != sc.truth.mu0.size()) throw ValidationError("initial state has the wrong length");
  ReactorSystem sys = sc.make_system();
  const auto times = sc.rank_window.values();
  const auto sens = integrate_with_sensitivity(sys, y0, times.back(), sc.solver, times, Record::outputs_only);
  return rank_descent_times(sens, conserved_basis(conserved_matrix(sc)), thr, times);
}

/// Correlation matrix of the evolved truth ensemble at each time.
inline std::vector<Eigen::MatrixXd> correlation_track(const Eigen::MatrixXd& ensemble, const ReactorSystem& sys,
                                                      const std::vector<double>& times, const SolverConfig& cfg = {},
                                                      unsigned threads = 1) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& X : evolve_ensemble(ensemble, sys, times, cfg, threads)) out.push_back(correlation_matrix(X));
  return out;
}

} // namespace stiffinfer
