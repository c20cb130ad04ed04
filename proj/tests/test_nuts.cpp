#include <gtest/gtest.h>

#include "stiffinfer/nuts.hpp"

#include <random>

using namespace stiffinfer;

namespace {

LogDensity gaussian(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd P = cov.inverse();
  return [P](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    g = -P * z;
    return -0.5 * z.dot(P * z);
  };
}

std::vector<PosteriorChain> run_chains(const LogDensity& f, Eigen::Index d, int n, std::uint64_t seed,
                                       NutsSettings st = {}) {
  std::vector<PosteriorChain> out;
  for (int c = 0; c < n; ++c) out.push_back(Nuts(f, d, st, seed + 1000u * static_cast<std::uint64_t>(c + 1)).sample());
  return out;
}

std::vector<std::vector<double>> component(const std::vector<PosteriorChain>& chains, Eigen::Index i) {
  std::vector<std::vector<double>> v;
  for (const auto& c : chains) v.emplace_back(c.draws.col(i).data(), c.draws.col(i).data() + c.draws.rows());
  return v;
}

} // namespace

TEST(Nuts, StandardGaussianCalibration) {
  const auto chains = run_chains(gaussian(Eigen::Matrix3d::Identity()), 3, 4, 11);
  double acc = 0;
  Eigen::MatrixXd all(0, 3);
  for (const auto& c : chains) {
    acc += c.mean_accept_stat() / 4;
    Eigen::MatrixXd tmp(all.rows() + c.draws.rows(), 3);
    tmp << all, c.draws;
    all = tmp;
    EXPECT_FALSE(c.flagged());
  }
  EXPECT_NEAR(acc, 0.8, 0.05);
  const Eigen::RowVectorXd mean = all.colwise().mean();
  const Eigen::MatrixXd C = all.rowwise() - mean;
  const Eigen::MatrixXd cov = C.transpose() * C / static_cast<double>(all.rows() - 1);
  for (int i = 0; i < 3; ++i) {
    const double ess = effective_sample_size(component(chains, i));
    EXPECT_LT(std::abs(mean[i]), 4.0 / std::sqrt(ess)) << i;
    EXPECT_LT(split_rhat(component(chains, i)), 1.05);
  }
  EXPECT_LT((cov - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Nuts, StronglyCorrelatedGaussian) {
  Eigen::Matrix2d S;
  S << 1, 0.99, 0.99, 1;
  const auto chains = run_chains(gaussian(S), 2, 4, 5);
  Eigen::MatrixXd all(0, 2);
  for (const auto& c : chains) {
    Eigen::MatrixXd tmp(all.rows() + c.draws.rows(), 2);
    tmp << all, c.draws;
    all = tmp;
  }
  const Eigen::MatrixXd C = all.rowwise() - all.colwise().mean();
  const Eigen::MatrixXd cov = C.transpose() * C;
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.99, 0.02);
}

TEST(Nuts, SameSeedSameDraws) {
  const auto f = gaussian(Eigen::Matrix3d::Identity());
  NutsSettings st;
  st.n_warmup = 100;
  st.n_draws = 100;
  const auto a = Nuts(f, 3, st, 42).sample();
  const auto b = Nuts(f, 3, st, 42).sample();
  const auto c = Nuts(f, 3, st, 43).sample();
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_EQ(a.step_size, b.step_size);
  EXPECT_NE(a.draws, c.draws);
}

TEST(Nuts, DrawsStayInsideSupportOfTruncatedTarget) {
  // Zero density outside the unit ball (thrown errors count as zero density).
  LogDensity f = [](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    if (z.norm() >= 1.0) throw NumericalError("outside");
    g = -z;
    return -0.5 * z.squaredNorm();
  };
  NutsSettings st;
  st.init_radius = 0.5;
  st.n_warmup = 200;
  st.n_draws = 300;
  const auto ch = Nuts(f, 2, st, 3).sample();
  for (Eigen::Index k = 0; k < ch.draws.rows(); ++k) EXPECT_LT(ch.draws.row(k).norm(), 1.0);
}

TEST(Nuts, InitialisationErrors) {
  LogDensity nowhere = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g.setZero(2);
    return -std::numeric_limits<double>::infinity();
  };
  EXPECT_THROW(Nuts(nowhere, 2, {}, 1).sample(), NumericalError);
  const Eigen::VectorXd bad = Eigen::Vector3d::Zero();
  EXPECT_THROW(Nuts(gaussian(Eigen::Matrix2d::Identity()), 2, {}, 1).sample(&bad), ValidationError);
  NutsSettings st;
  st.delta_acc = 1.5;
  EXPECT_THROW(st.validate(), ValidationError);
}

TEST(Nuts, ImproperTargetIsReported) {
  // Flat density: the step size heuristic grows without bound.
  LogDensity flat = [](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    g.setZero(z.size());
    return 0.0;
  };
  EXPECT_THROW(Nuts(flat, 2, {}, 1).sample(), NumericalError);
}

TEST(Diagnostics, RhatAndEssOnIndependentDraws) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> chains(4, std::vector<double>(1000));
  for (auto& c : chains)
    for (double& x : c) x = n(rng);
  EXPECT_NEAR(split_rhat(chains), 1.0, 0.01);
  const double ess = effective_sample_size(chains);
  EXPECT_GT(ess, 3000);
  EXPECT_LT(ess, 5000);
  // A shifted chain is detected.
  for (double& x : chains[0]) x += 3.0;
  EXPECT_GT(split_rhat(chains), 1.1);
}

TEST(Diagnostics, AutocorrelatedChainHasLowEss) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> chains(4, std::vector<double>(2000));
  for (auto& c : chains) {
    double x = 0;
    for (double& v : c) v = x = 0.95 * x + n(rng);
  }
  // AR(1) with rho = 0.95 has ESS / N = (1 - rho) / (1 + rho) ~ 0.026.
  const double ess = effective_sample_size(chains);
  EXPECT_GT(ess, 0.5 * 0.0256 * 8000);
  EXPECT_LT(ess, 2.0 * 0.0256 * 8000);
}
