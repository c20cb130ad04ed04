#include <gtest/gtest.h>

#include "stiffinfer/bayes.hpp"
#include "stiffinfer/pipeline.hpp"
#include "stiffinfer/scenarios.hpp"

#include <numbers>

using namespace stiffinfer;

namespace {

// Variance of a standard normal truncated to [-3, 3].
const double kTruncVar = 1.0 - 6.0 * std::exp(-4.5) / std::sqrt(2.0 * std::numbers::pi) / std::erf(3.0 / std::sqrt(2.0));

ObservationSummary robertson_obs(double t, ObservationMode mode, std::size_t n = 400) {
  Scenario s = scenario_robertson();
  s.truth.n_truth = n;
  return generate_observation(sample_truth(s.truth, 1), s.make_system(), t, mode);
}

} // namespace

TEST(Truth, EnsembleStatistics) {
  TruthSpec spec = scenario_robertson().truth;
  spec.n_truth = 50000;
  const auto X = sample_truth(spec, 3);
  const Eigen::VectorXd mean = X.colwise().mean();
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(mean[i], spec.mu0[i], 4.0 * spec.s0[i] / std::sqrt(50000.0));
    const double var = (X.col(i).array() - mean[i]).square().sum() / 49999.0;
    EXPECT_NEAR(var / (spec.s0[i] * spec.s0[i]), kTruncVar, 0.03);
    EXPECT_GE(X.col(i).minCoeff(), spec.lower()[i]);
    EXPECT_LE(X.col(i).maxCoeff(), spec.upper()[i]);
  }
  EXPECT_EQ(sample_truth(spec, 3), X);
  EXPECT_NE(sample_truth(spec, 4), X);
}

TEST(Truth, DegenerateSpreadGivesIdenticalMembers) {
  TruthSpec spec = scenario_robertson().truth;
  spec.s0.setConstant(1e-30);
  spec.n_truth = 10;
  const auto X = sample_truth(spec, 1);
  for (Eigen::Index r = 0; r < X.rows(); ++r) EXPECT_EQ(X.row(r).transpose(), spec.mu0);
  const auto o = summarize_observations(X, 1.0, ObservationMode::covariance);
  EXPECT_TRUE(o.jittered);
  EXPECT_GT(o.Sigma_obs.llt().matrixL().toDenseMatrix().diagonal().minCoeff(), 0.0);
}

TEST(Truth, SpecValidation) {
  TruthSpec spec = scenario_robertson().truth;
  spec.s0[1] = 0.0;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = scenario_robertson().truth;
  spec.n_truth = 1;
  EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(Seeds, StreamsAreDistinct) {
  EXPECT_EQ(seeds::truth(7), 7u);
  EXPECT_EQ(seeds::chain(7, 0), 1007u);
  EXPECT_EQ(seeds::chain(7, 3), 4007u);
}

TEST(Observation, EarlyTimeReproducesTheTruth) {
  const auto o = robertson_obs(1e-12, ObservationMode::covariance);
  const auto spec = scenario_robertson().truth;
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(o.mu_obs[i], spec.mu0[i], 0.2 * spec.s0[i]);
  EXPECT_LT((o.corr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 0.15);
  EXPECT_FALSE(o.jittered);
}

TEST(Observation, CovarianceFollowsTheLinearisedMap) {
  Scenario s = scenario_robertson();
  s.truth.n_truth = 20000;
  auto sys = s.make_system();
  const auto o = generate_observation(sample_truth(s.truth, 2), sys, 1e-4, ObservationMode::covariance);
  const auto sens = integrate_with_sensitivity(sys, s.truth.mu0, 1e-4, {}, {}, Record::outputs_only);
  const Eigen::MatrixXd& A = sens.A.back();
  const Eigen::MatrixXd S0 = (s.truth.s0.array().square() * kTruncVar).matrix().asDiagonal();
  const Eigen::MatrixXd lin = A * S0 * A.transpose();
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(o.Sigma_obs(i, i) / lin(i, i), 1.0, 0.05) << i;
}

TEST(Observation, VarianceModeDropsOffDiagonals) {
  const auto v = robertson_obs(1e-2, ObservationMode::variance);
  const auto c = robertson_obs(1e-2, ObservationMode::covariance);
  EXPECT_EQ(v.mu_obs, c.mu_obs);
  EXPECT_EQ(Eigen::MatrixXd(c.Sigma_obs.diagonal().asDiagonal()), v.Sigma_obs);
  EXPECT_NE(c.Sigma_obs(0, 1), 0.0);
  EXPECT_THROW(robertson_obs(0.0, ObservationMode::variance), ValidationError);
  EXPECT_EQ(observation_mode_from_string("covariance"), ObservationMode::covariance);
  EXPECT_THROW(observation_mode_from_string("full"), ValidationError);
}

TEST(BoxTransform, CentreRoundTripAndJacobian) {
  const auto spec = scenario_robertson().truth;
  const BoxTransform box(spec.lower(), spec.upper());
  EXPECT_LT(box.to_unconstrained(box.center()).norm(), 1e-12);
  const Eigen::Vector3d z(-4.0, 0.3, 7.5);
  EXPECT_LT((box.to_unconstrained(box.to_box(z)) - z).norm(), 1e-9);
  // Quadrature of exp(log_jacobian) over R recovers the box width.
  const BoxTransform one(Eigen::VectorXd::Constant(1, 0.2), Eigen::VectorXd::Constant(1, 0.7));
  double integral = 0.0;
  const double h = 1e-3;
  for (double t = -40.0; t < 40.0; t += h) integral += h * std::exp(one.log_jacobian(Eigen::VectorXd::Constant(1, t)));
  EXPECT_NEAR(integral, 0.5, 1e-9);
  EXPECT_THROW(box.to_unconstrained(spec.upper()), ValidationError);
  EXPECT_THROW(BoxTransform(spec.upper(), spec.lower()), ValidationError);
}

TEST(Posterior, GradientMatchesFiniteDifferences) {
  const Scenario s = scenario_robertson();
  const auto o = robertson_obs(1e-2, ObservationMode::covariance);
  Posterior post(s.make_system(), o, BoxTransform(s.truth.lower(), s.truth.upper()), s.posterior_solver);
  const Eigen::Vector3d z(0.4, -0.7, 1.1);
  Eigen::VectorXd g;
  post.log_density_z(z, g);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double h = 1e-5;
    Eigen::VectorXd zp = z, zm = z, dummy;
    zp[i] += h;
    zm[i] -= h;
    const double fd = (post.log_density_z(zp, dummy) - post.log_density_z(zm, dummy)) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << i;
  }
}

TEST(Posterior, ZeroResidualHasZeroGradient) {
  const Scenario s = scenario_robertson();
  auto o = robertson_obs(1e-2, ObservationMode::variance);
  auto sys = s.make_system();
  const auto tr = integrate(sys, s.truth.mu0, 1e-2, s.posterior_solver, {}, Record::outputs_only);
  o.mu_obs = tr.states.back();
  Posterior post(s.make_system(), o, BoxTransform(s.truth.lower(), s.truth.upper()), s.posterior_solver);
  Eigen::VectorXd g;
  EXPECT_EQ(post.log_density(s.truth.mu0, &g), 0.0);
  EXPECT_EQ(g, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(post.log_density(s.truth.upper() * 1.01), -std::numeric_limits<double>::infinity());
}

TEST(Posterior, RejectsSingularCovariance) {
  const Scenario s = scenario_robertson();
  auto o = robertson_obs(1e-2, ObservationMode::variance);
  o.Sigma_obs(1, 1) = 0.0;
  EXPECT_THROW(Posterior(s.make_system(), o, BoxTransform(s.truth.lower(), s.truth.upper())), NumericalError);
  o = robertson_obs(1e-2, ObservationMode::variance);
  o.mu_obs = Eigen::Vector2d(1, 1);
  EXPECT_THROW(Posterior(s.make_system(), o, BoxTransform(s.truth.lower(), s.truth.upper())), ValidationError);
}

TEST(Inference, ShortRobertsonRunIsReproducible) {
  const Scenario s = scenario_robertson();
  auto st = s.inference_settings(ObservationMode::variance, 5, 1);
  st.chains = 2;
  st.nuts.n_warmup = 60;
  st.nuts.n_draws = 40;
  const auto a = run_inference(s.truth, s.make_system(), 1e-3, st);
  const auto b = run_inference(s.truth, s.make_system(), 1e-3, st);
  ASSERT_EQ(a.draws.size(), 2u);
  EXPECT_EQ(a.draws[0], b.draws[0]);
  EXPECT_EQ(a.draws[1], b.draws[1]);
  EXPECT_EQ(a.chains[1].seed, seeds::chain(5, 1));
  for (const auto& d : a.draws) {
    EXPECT_TRUE((d.rowwise() - s.truth.lower().transpose()).minCoeff() > 0.0);
    EXPECT_TRUE((d.rowwise() - s.truth.upper().transpose()).maxCoeff() < 0.0);
  }
  EXPECT_EQ(a.pooled_normalized(0).size(), 80u);
}

TEST(CorrelationTrack, StartsUncorrelated) {
  Scenario s = scenario_robertson();
  s.truth.n_truth = 300;
  const auto R = correlation_track(sample_truth(s.truth, 1), s.make_system(), {1e-10, 1.0});
  ASSERT_EQ(R.size(), 2u);
  EXPECT_LT((R[0] - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 0.2);
  // Quasi-steady B is slaved to C, so the pair becomes almost perfectly anti-correlated.
  EXPECT_LT(R[1](1, 2), -0.9);
}
