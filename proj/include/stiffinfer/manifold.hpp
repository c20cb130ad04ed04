#pragma once

// Information-loss diagnostics: Jacobian eigen-analysis, conserved/reaction
// subspaces, block projections of the sensitivity matrix, numerical rank and
// rank-descent times.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stiffinfer/errors.hpp"
#include "stiffinfer/ode.hpp"

namespace stiffinfer {

struct EigenAnalysis {
  Eigen::VectorXcd lambda;          ///< ordered by |Re| descending
  Eigen::MatrixXcd L;               ///< left eigenvectors (rows, unit norm)
  double condition_number = 1.0;    ///< of the right eigenvector matrix
  bool ill_conditioned = false;     ///< condition number above 1e8
  std::optional<Eigen::VectorXcd> psi_perturbation;

  /// |Re lambda_1| / |Re lambda_k| for the slowest non-conserved mode k = n - n_conserved.
  double stiffness_ratio(Eigen::Index n_conserved) const {
    const Eigen::Index k = lambda.size() - n_conserved - 1;
    if (k < 0) return 1.0;
    return std::abs(lambda[0].real()) / std::abs(lambda[k].real());
  }

  /// Number of eigenvalues with |lambda| below rel * |lambda_1|.
  Eigen::Index count_near_zero(double rel) const {
    if (lambda.size() == 0) return 0;
    const double scale = std::abs(lambda[0]);
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
      if (std::abs(lambda[i]) < rel * scale) ++n;
    return n;
  }
};

inline EigenAnalysis eigen_analysis(const Eigen::MatrixXd& J, const std::optional<Eigen::VectorXd>& dphi0 = std::nullopt) {
  if (J.rows() != J.cols()) throw ValidationError("eigen_analysis needs a square matrix");
  const Eigen::Index n = J.rows();
  Eigen::EigenSolver<Eigen::MatrixXd> es(J, true);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue decomposition did not converge");
  const Eigen::VectorXcd ev = es.eigenvalues();
  const Eigen::MatrixXcd V = es.eigenvectors();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ra = std::abs(ev[a].real()), rb = std::abs(ev[b].real());
    if (ra != rb) return ra > rb;
    if (ev[a].real() != ev[b].real()) return ev[a].real() < ev[b].real();
    return ev[a].imag() > ev[b].imag();
  });

  EigenAnalysis out;
  out.lambda.resize(n);
  Eigen::MatrixXcd Vs(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.lambda[k] = ev[order[static_cast<std::size_t>(k)]];
    Vs.col(k) = V.col(order[static_cast<std::size_t>(k)]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Vs);
  const auto& s = svd.singularValues();
  out.condition_number = s[n - 1] > 0.0 ? s[0] / s[n - 1] : std::numeric_limits<double>::infinity();
  out.ill_conditioned = !(out.condition_number <= 1e8);
  out.L = Vs.fullPivLu().inverse();
  for (Eigen::Index k = 0; k < n; ++k) {
    out.L.row(k).normalize();
    // Fix the phase: largest-magnitude entry real and positive.
    Eigen::Index imax = 0;
    out.L.row(k).cwiseAbs().maxCoeff(&imax);
    const std::complex<double> p = out.L(k, imax);
    if (std::abs(p) > 0.0) out.L.row(k) *= std::conj(p) / std::abs(p);
  }
  if (dphi0) {
    if (dphi0->size() != n) throw ValidationError("perturbation length does not match the Jacobian");
    out.psi_perturbation = out.L * dphi0->cast<std::complex<double>>();
  }
  return out;
}

/// Orthonormal bases of the conserved space col(C) and of its complement.
struct SubspaceBasis {
  Eigen::MatrixXd Q; ///< n_s x n_e
  Eigen::MatrixXd W; ///< n_s x (n_s - n_e)
};

inline SubspaceBasis conserved_basis(const Eigen::MatrixXd& C) {
  const Eigen::Index n = C.rows(), m = C.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(C);
  if (rank_check.rank() != m)
    throw ValidationError("element matrix is rank deficient (rank " + std::to_string(rank_check.rank()) + " < " +
                          std::to_string(m) + ")");
  // Householder QR without pivoting keeps Q's span nested with C's columns;
  // signs are flipped so that Q = C R^{-1} with positive diag(R).
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
  Eigen::MatrixXd G = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < m; ++k)
    if (R(k, k) < 0.0) G.col(k) *= -1.0;
  return {G.leftCols(m), G.rightCols(n - m)};
}

struct SubspaceBlocks {
  Eigen::MatrixXd QAQ, QAW, WAQ, WAW;
};

inline SubspaceBlocks subspace_blocks(const Eigen::MatrixXd& A, const SubspaceBasis& b) {
  if (A.rows() != b.Q.rows() || A.cols() != b.Q.rows()) throw ValidationError("sensitivity matrix size mismatch");
  const Eigen::MatrixXd AQ = A * b.Q, AW = A * b.W;
  return {b.Q.transpose() * AQ, b.Q.transpose() * AW, b.W.transpose() * AQ, b.W.transpose() * AW};
}

struct NumericalRank {
  Eigen::Index rank = 0;
  Eigen::VectorXd singular_values; ///< descending
};

inline NumericalRank numerical_rank(const Eigen::MatrixXd& M, double threshold) {
  if (!(threshold > 0.0)) throw ValidationError("rank threshold must be positive");
  NumericalRank r;
  if (M.size() == 0) {
    r.singular_values.resize(0);
    return r;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  r.singular_values = svd.singularValues();
  r.rank = (r.singular_values.array() > threshold).count();
  return r;
}

struct RankDescent {
  std::string block;
  Eigen::Index old_rank = 0;
  Eigen::Index new_rank = 0;
  double time = 0.0;
};

struct RankReport {
  double threshold = 0.0;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> sigma_QAQ, sigma_WAW, sigma_A;
  std::vector<double> norm_QAW, norm_WAQ, qaq_identity_error;
  std::vector<Eigen::Index> rank_QAQ, rank_WAW, rank_A;
  std::vector<RankDescent> descents;

  /// Time of the k-th (1-based) descent of the named block, if it happened.
  std::optional<double> descent_time(const std::string& block, int k) const {
    int seen = 0;
    for (const auto& d : descents)
      if (d.block == block && ++seen == k) return d.time;
    return std::nullopt;
  }
};

namespace detail {

/// Crossing of sigma = threshold between two nodes by log-log interpolation.
inline double crossing_time(double t0, double s0, double t1, double s1, double thr) {
  if (!(t0 > 0.0) || !(s0 > 0.0) || !(s1 > 0.0) || s0 <= s1) return t1;
  const double a = (std::log(thr) - std::log(s0)) / (std::log(s1) - std::log(s0));
  return std::exp(std::log(t0) + std::clamp(a, 0.0, 1.0) * (std::log(t1) - std::log(t0)));
}

inline void record_descents(const std::string& name, const std::vector<double>& times,
                            const std::vector<Eigen::VectorXd>& sigma, const std::vector<Eigen::Index>& rank,
                            double thr, std::vector<RankDescent>& out) {
  if (times.empty()) return;
  Eigen::Index low = rank.front(); // lowest rank seen so far
  for (std::size_t k = 1; k < times.size(); ++k) {
    while (rank[k] < low) {
      // The singular value that takes the rank from low to low - 1.
      const Eigen::Index idx = low - 1;
      const double t = crossing_time(times[k - 1], sigma[k - 1][idx], times[k], sigma[k][idx], thr);
      out.push_back({name, low, low - 1, t});
      --low;
    }
  }
}

} // namespace detail

/// Singular values and ranks of the subspace blocks at every stored time of
/// the sensitivity trajectory (or at the given times, by dense output), and
/// the time of each rank descent, refined between nodes by log-log
/// interpolation of the crossing singular value.
inline RankReport rank_descent_times(const SensitivityTrajectory& sens, const SubspaceBasis& basis, double threshold,
                                     const std::vector<double>& times = {}) {
  RankReport r;
  r.threshold = threshold;
  r.times = times.empty() ? sens.base.times : times;
  for (double t : r.times) {
    const Eigen::MatrixXd A = sensitivity_at(sens, t);
    const auto blocks = subspace_blocks(A, basis);
    const auto rq = numerical_rank(blocks.QAQ, threshold);
    const auto rw = numerical_rank(blocks.WAW, threshold);
    const auto ra = numerical_rank(A, threshold);
    r.sigma_QAQ.push_back(rq.singular_values);
    r.sigma_WAW.push_back(rw.singular_values);
    r.sigma_A.push_back(ra.singular_values);
    r.rank_QAQ.push_back(rq.rank);
    r.rank_WAW.push_back(rw.rank);
    r.rank_A.push_back(ra.rank);
    r.norm_QAW.push_back(blocks.QAW.norm());
    r.norm_WAQ.push_back(blocks.WAQ.norm());
    r.qaq_identity_error.push_back((blocks.QAQ - Eigen::MatrixXd::Identity(blocks.QAQ.rows(), blocks.QAQ.cols())).norm());
  }
  detail::record_descents("QAQ", r.times, r.sigma_QAQ, r.rank_QAQ, threshold, r.descents);
  detail::record_descents("WAW", r.times, r.sigma_WAW, r.rank_WAW, threshold, r.descents);
  detail::record_descents("A", r.times, r.sigma_A, r.rank_A, threshold, r.descents);
  return r;
}

/// n log-spaced points per decade covering [t_lo, t_hi].
inline std::vector<double> log_grid(double t_lo, double t_hi, int per_decade) {
  if (!(t_lo > 0.0 && t_hi > t_lo) || per_decade <= 0) throw ValidationError("invalid log grid");
  const double a = std::log10(t_lo), b = std::log10(t_hi);
  const int n = static_cast<int>(std::lround((b - a) * per_decade));
  std::vector<double> g;
  for (int k = 0; k <= n; ++k) g.push_back(std::pow(10.0, a + (b - a) * k / n));
  g.front() = t_lo;
  g.back() = t_hi;
  return g;
}

} // namespace stiffinfer
