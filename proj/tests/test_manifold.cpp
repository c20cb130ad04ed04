#include <gtest/gtest.h>

#include "stiffinfer/manifold.hpp"
#include "stiffinfer/pipeline.hpp"
#include "stiffinfer/scenarios.hpp"

#include <map>

using namespace stiffinfer;

namespace {

const RankReport& quench_report(double T) {
  static std::map<double, RankReport> cache;
  auto it = cache.find(T);
  if (it == cache.end()) it = cache.emplace(T, rank_analysis(scenario_quench(T))).first;
  return it->second;
}

const RankReport& h2_report() {
  static const RankReport r = rank_analysis(scenario_h2_autoignition());
  return r;
}

} // namespace

TEST(EigenAnalysis, DiagonalOrderingAndLeftVectors) {
  const auto e = eigen_analysis(Eigen::Vector2d(-1, -2).asDiagonal().toDenseMatrix());
  EXPECT_DOUBLE_EQ(e.lambda[0].real(), -2.0);
  EXPECT_DOUBLE_EQ(e.lambda[1].real(), -1.0);
  Eigen::Matrix2d P;
  P << 0, 1, 1, 0;
  EXPECT_LT((e.L.real() - P).norm(), 1e-14);
  EXPECT_LT(e.L.imag().norm(), 1e-14);
}

TEST(EigenAnalysis, PermutedSimilarityKeepsOrder) {
  Eigen::Matrix3d P;
  P << 0, 0, 1, 1, 0, 0, 0, 1, 0;
  const Eigen::Matrix3d J = P * Eigen::Vector3d(-1, -5, -3).asDiagonal() * P.transpose();
  const auto e = eigen_analysis(J);
  EXPECT_NEAR(e.lambda[0].real(), -5, 1e-13);
  EXPECT_NEAR(e.lambda[1].real(), -3, 1e-13);
  EXPECT_NEAR(e.lambda[2].real(), -1, 1e-13);
  // L J = Lambda L.
  const Eigen::MatrixXcd LJ = e.L * J.cast<std::complex<double>>();
  const Eigen::MatrixXcd LL = e.lambda.asDiagonal() * e.L;
  EXPECT_LT((LJ - LL).norm(), 1e-12);
}

TEST(EigenAnalysis, RobertsonClosedForms) {
  const Eigen::Vector3d y(0.95, 5e-6, 0.05);
  const auto closed = robertson_eigen(y);
  const auto e = eigen_analysis(robertson_jacobian(y));
  // Closed forms are ordered 0, (-E-Q)/2, (-E+Q)/2; the analysis orders by |Re|.
  EXPECT_NEAR(e.lambda[0].real(), closed.lambda[1], 1e-8 * std::abs(closed.lambda[1]));
  EXPECT_NEAR(e.lambda[1].real(), closed.lambda[2], 1e-8 * std::abs(closed.lambda[2]));
  EXPECT_NEAR(e.lambda[2].real(), 0.0, 1e-8 * std::abs(closed.lambda[1]));
  // The conserved left vector is proportional to [1, 1, 1].
  const Eigen::Vector3cd l0 = e.L.row(2).transpose();
  EXPECT_LT((l0 - l0[0] * Eigen::Vector3cd::Ones()).norm(), 1e-8);
  EXPECT_FALSE(e.ill_conditioned);
}

TEST(EigenAnalysis, PerturbationProjection) {
  const Eigen::Vector3d y(0.95, 5e-6, 0.05);
  const Eigen::VectorXd d = Eigen::Vector3d(1e-3, 1e-7, 1e-3);
  const auto e = eigen_analysis(robertson_jacobian(y), d);
  ASSERT_TRUE(e.psi_perturbation);
  EXPECT_LT((*e.psi_perturbation - e.L * d.cast<std::complex<double>>()).norm(), 1e-18);
  EXPECT_THROW(eigen_analysis(robertson_jacobian(y), Eigen::VectorXd(Eigen::Vector2d(1, 2))), ValidationError);
}

TEST(EigenAnalysis, HydrogenEquilibriumHasThreeConservedModes) {
  const Scenario s = scenario_h2_autoignition();
  ReactorSystem sys = s.make_system();
  const auto tr = integrate(sys, s.truth.mu0, 1.0, {}, {1.0}, Record::outputs_only);
  Eigen::MatrixXd J;
  Eigen::VectorXd f(9);
  sys.jacobian(tr.states.back(), J, &f);
  const auto e = eigen_analysis(J);
  EXPECT_EQ(e.count_near_zero(1e-6), 3);
  EXPECT_GT(e.stiffness_ratio(3), 1.0);
}

TEST(ConservedBasis, RobertsonPlane) {
  const auto b = conserved_basis(conserved_matrix(scenario_robertson()));
  EXPECT_LT((b.Q - Eigen::Vector3d::Ones() / std::sqrt(3.0)).norm(), 1e-15);
  EXPECT_EQ(b.W.cols(), 2);
  EXPECT_LT((Eigen::RowVector3d::Ones() * b.W).norm(), 1e-14);
  EXPECT_LT((b.W.transpose() * b.W - Eigen::Matrix2d::Identity()).norm(), 1e-14);
}

TEST(ConservedBasis, HydrogenShapesAndOrthogonality) {
  const auto b = conserved_basis(conserved_matrix(scenario_h2_autoignition()));
  EXPECT_EQ(b.Q.rows(), 9);
  EXPECT_EQ(b.Q.cols(), 3);
  EXPECT_EQ(b.W.cols(), 6);
  EXPECT_LT((b.Q.transpose() * b.W).norm(), 1e-12);
}

TEST(ConservedBasis, RankDeficientRejected) {
  Eigen::MatrixXd C(3, 2);
  C << 1, 2, 1, 2, 1, 2;
  EXPECT_THROW(conserved_basis(C), ValidationError);
}

TEST(SubspaceBlocks, IdentitySensitivity) {
  const auto b = conserved_basis(conserved_matrix(scenario_h2_autoignition()));
  const auto k = subspace_blocks(Eigen::MatrixXd::Identity(9, 9), b);
  EXPECT_LT((k.QAQ - Eigen::Matrix3d::Identity()).norm(), 1e-14);
  EXPECT_LT((k.WAW - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-14);
  EXPECT_LT(k.QAW.norm(), 1e-14);
  EXPECT_LT(k.WAQ.norm(), 1e-14);
  EXPECT_THROW(subspace_blocks(Eigen::MatrixXd::Identity(3, 3), b), ValidationError);
}

TEST(NumericalRank, ConstructedCases) {
  const auto a = numerical_rank(Eigen::Matrix3d::Identity(), 1e-6);
  EXPECT_EQ(a.rank, 3);
  EXPECT_EQ(a.singular_values, Eigen::VectorXd(Eigen::Vector3d::Ones()));
  const auto b = numerical_rank(Eigen::Vector3d(1, 1e-9, 0).asDiagonal().toDenseMatrix(), 1e-6);
  EXPECT_EQ(b.rank, 1);
  EXPECT_THROW(numerical_rank(Eigen::Matrix3d::Identity(), 0.0), ValidationError);
}

TEST(RankDescent, RobertsonFirstDropWindow) {
  const auto r = rank_analysis(scenario_robertson());
  const auto t = r.descent_time("A", 1);
  ASSERT_TRUE(t);
  EXPECT_GE(*t, 1e-3);
  EXPECT_LE(*t, 1e-2);
  EXPECT_EQ(r.rank_A.front(), 3);
}

TEST(RankDescent, FrozenChemistryHasNoDescents) {
  Scenario s = scenario_robertson();
  s.rates = {0.0, 0.0, 0.0};
  const auto r = rank_analysis(s);
  EXPECT_TRUE(r.descents.empty());
}

TEST(RankDescent, HydrogenBlockIdentities) {
  const auto& r = h2_report();
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    EXPECT_LT(r.qaq_identity_error[k], 1e-7) << r.times[k];
    EXPECT_LT(r.norm_QAW[k], 1e-7) << r.times[k];
    EXPECT_EQ(r.rank_QAQ[k], 3);
    EXPECT_EQ(r.rank_A[k], 3 + r.rank_WAW[k]) << r.times[k];
  }
  EXPECT_EQ(r.rank_WAW.front(), 6);
  EXPECT_EQ(r.rank_WAW.back(), 0);
  EXPECT_LT(r.sigma_WAW.back()[0], 1e-3);
  for (std::size_t k = 1; k < r.times.size(); ++k) EXPECT_LE(r.rank_WAW[k], r.rank_WAW[k - 1]);
}

TEST(RankDescent, DescentsAreOrderedAndInsideWindow) {
  const auto& r = h2_report();
  int last = 7;
  double t_prev = 0.0;
  for (const auto& d : r.descents) {
    if (d.block != "WAW") continue;
    EXPECT_EQ(d.new_rank, d.old_rank - 1);
    EXPECT_LT(d.old_rank, last);
    EXPECT_GE(d.time, t_prev);
    EXPECT_GE(d.time, r.times.front());
    EXPECT_LE(d.time, r.times.back());
    last = static_cast<int>(d.old_rank);
    t_prev = d.time;
  }
}

TEST(RankDescent, QuenchThirdDescentLaterWhenColder) {
  const auto hot = quench_report(1075.5).descent_time("WAW", 3);
  const auto cold = quench_report(200.0).descent_time("WAW", 3);
  ASSERT_TRUE(hot && cold);
  EXPECT_GT(*cold, *hot);
}

// Singular values are numbered in descent order here: sigma_5 is the second
// largest and sigma_6 the largest.
TEST(RankDescent, QuenchColdSecondLargestStaysAboveThreshold) {
  const auto& r = quench_report(200.0);
  for (std::size_t k = 0; k < r.times.size(); ++k) EXPECT_GT(r.sigma_WAW[k][1], r.threshold) << r.times[k];
}

TEST(RankDescent, QuenchColdLargestIsConstant) {
  const auto& r = quench_report(200.0);
  double lo = 1e300, hi = 0.0;
  for (const auto& s : r.sigma_WAW) {
    lo = std::min(lo, s[0]);
    hi = std::max(hi, s[0]);
  }
  EXPECT_LT((hi - lo) / hi, 0.1);
}
