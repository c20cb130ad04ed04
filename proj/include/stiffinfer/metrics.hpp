#pragma once

// Histogram marginals and divergences between them, plus the inference
// failure verdict.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stiffinfer/errors.hpp"

namespace stiffinfer {

/// Uniform binning of a 1-D normalized support.
struct Support {
  double lo = -3.5;
  double hi = 3.5;
  int bins = 64;

  double width() const { return (hi - lo) / bins; }
  double edge(int k) const { return lo + (hi - lo) * k / bins; }
  bool operator==(const Support&) const = default;
};

struct MarginalDensity {
  Support support;
  std::vector<double> prob; ///< mass per bin, sums to 1
  std::size_t n_samples = 0;
  std::size_t clipped = 0;  ///< samples outside the support folded into edge bins
};

inline MarginalDensity estimate_marginal(const std::vector<double>& samples, const Support& support = {}) {
  if (samples.empty()) throw ValidationError("cannot estimate a marginal from an empty sample");
  if (!(support.hi > support.lo) || support.bins < 1) throw ValidationError("invalid histogram support");
  MarginalDensity m;
  m.support = support;
  m.prob.assign(static_cast<std::size_t>(support.bins), 0.0);
  m.n_samples = samples.size();
  for (double x : samples) {
    if (!std::isfinite(x)) throw ValidationError("non-finite sample");
    int k = static_cast<int>(std::floor((x - support.lo) / support.width()));
    if (x < support.lo || x > support.hi) ++m.clipped;
    k = std::clamp(k, 0, support.bins - 1);
    m.prob[static_cast<std::size_t>(k)] += 1.0;
  }
  for (double& p : m.prob) p /= static_cast<double>(samples.size());
  return m;
}

inline MarginalDensity estimate_marginal(const Eigen::VectorXd& samples, const Support& support = {}) {
  return estimate_marginal(std::vector<double>(samples.data(), samples.data() + samples.size()), support);
}

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline MarginalDensity from_cdf(const Support& s, double a, double b, double (*cdf)(double, double, double)) {
  MarginalDensity m;
  m.support = s;
  m.prob.resize(static_cast<std::size_t>(s.bins));
  const double total = cdf(b, a, b) - cdf(a, a, b);
  for (int k = 0; k < s.bins; ++k) {
    const double l = std::clamp(s.edge(k), a, b), r = std::clamp(s.edge(k + 1), a, b);
    m.prob[static_cast<std::size_t>(k)] = (cdf(r, a, b) - cdf(l, a, b)) / total;
  }
  return m;
}

} // namespace detail

/// Exact bin masses of a standard normal truncated to [a, b].
inline MarginalDensity truncated_normal_marginal(const Support& s = {}, double a = -3.0, double b = 3.0) {
  return detail::from_cdf(s, a, b, [](double x, double, double) { return detail::normal_cdf(x); });
}

/// Exact bin masses of the uniform distribution on [a, b].
inline MarginalDensity uniform_marginal(const Support& s = {}, double a = -3.0, double b = 3.0) {
  return detail::from_cdf(s, a, b, [](double x, double lo, double hi) { return (x - lo) / (hi - lo); });
}

struct Divergence {
  double value = 0.0;
  bool empty_overlap = false;
  double excluded_mass = 0.0; ///< mass of P outside the common support
};

inline void require_same_binning(const MarginalDensity& P, const MarginalDensity& Q) {
  if (!(P.support == Q.support) || P.prob.size() != Q.prob.size())
    throw ValidationError("densities must share the same binning");
}

/// Sum over bins where both masses are nonzero of P log(P / Q).
inline Divergence kl_divergence(const MarginalDensity& P, const MarginalDensity& Q, double base = 10.0) {
  require_same_binning(P, Q);
  Divergence d;
  bool any = false;
  for (std::size_t k = 0; k < P.prob.size(); ++k) {
    const double p = P.prob[k], q = Q.prob[k];
    if (p > 0.0 && q > 0.0) {
      d.value += p * std::log(p / q);
      any = true;
    } else {
      d.excluded_mass += p;
    }
  }
  d.value /= std::log(base);
  d.empty_overlap = !any;
  return d;
}

inline double js_distance(const MarginalDensity& P, const MarginalDensity& Q, double base = 10.0) {
  require_same_binning(P, Q);
  MarginalDensity M = P;
  for (std::size_t k = 0; k < M.prob.size(); ++k) M.prob[k] = 0.5 * (P.prob[k] + Q.prob[k]);
  const double js = 0.5 * kl_divergence(P, M, base).value + 0.5 * kl_divergence(Q, M, base).value;
  return std::sqrt(std::max(js, 0.0));
}

struct FailureVerdict {
  double jsd_truth = 0.0; ///< D_JS(truth || posterior)
  double jsd_prior = 0.0; ///< D_JS(prior || posterior)
  double difference = 0.0;
  double threshold = 0.2;
  double base = 2.0;
  bool failed = false;
};

/// Inference has failed when the posterior is closer to the prior than to the
/// truth by more than the threshold.
inline FailureVerdict failure_verdict(const MarginalDensity& truth, const MarginalDensity& prior,
                                      const MarginalDensity& post, double threshold = 0.2, double base = 2.0) {
  FailureVerdict v;
  v.threshold = threshold;
  v.base = base;
  v.jsd_truth = js_distance(truth, post, base);
  v.jsd_prior = js_distance(prior, post, base);
  v.difference = v.jsd_truth - v.jsd_prior;
  v.failed = v.difference > threshold;
  return v;
}

/// Pearson correlation matrix of the rows of X (samples x variables).
/// Constant columns get zero off-diagonal correlation.
inline Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) throw ValidationError("correlation needs at least two samples");
  const Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
  Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double s = std::sqrt(cov(i, i) * cov(j, j));
      R(i, j) = R(j, i) = s > 0.0 ? std::clamp(cov(i, j) / s, -1.0, 1.0) : 0.0;
    }
  return R;
}

} // namespace stiffinfer
