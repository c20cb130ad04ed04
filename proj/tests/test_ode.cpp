#include <gtest/gtest.h>

#include "stiffinfer/mechanism.hpp"
#include "stiffinfer/ode.hpp"
#include "stiffinfer/reactor.hpp"
#include "stiffinfer/thermo.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

using namespace stiffinfer;

namespace {

Eigen::VectorXd robertson_y0() { return Eigen::Vector3d(0.95, 5e-6, 0.05); }

std::shared_ptr<const Mechanism> h2o2() {
  static auto mech = std::make_shared<const Mechanism>(load_bundled_mechanism("h2o2"));
  return mech;
}

Eigen::VectorXd h2_phi0() {
  Eigen::VectorXd phi(9);
  phi << 0.1, 1e-3, 1e-3, 0.2, 1e-3, 1e-3, 1e-3, 1e-3, 0.694;
  return phi;
}

ReactorSystem h2_system() {
  const double h0 = MixtureThermo(*h2o2()).enthalpy(h2_phi0(), 1200.0);
  ReactorSystem sys(h2o2(), AdiabaticIsobaric{h0, constants::one_atm});
  sys.set_temperature_guess(1200.0);
  return sys;
}

// Classical adaptive Dormand-Prince 5(4), written independently of the
// library, used only to show that the Robertson problem is stiff.
std::size_t explicit_steps(const Eigen::Vector3d& y0, double t_end, double rtol, double atol, std::size_t cap) {
  static const double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
  static const double a[7][6] = {{},
                                 {1.0 / 5},
                                 {3.0 / 40, 9.0 / 40},
                                 {44.0 / 45, -56.0 / 15, 32.0 / 9},
                                 {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
                                 {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
                                 {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double e[7] = {71.0 / 57600, 0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
  (void)c;
  Eigen::Vector3d y = y0;
  double t = 0, h = 1e-6;
  std::size_t steps = 0;
  while (t < t_end && steps < cap) {
    h = std::min(h, t_end - t);
    Eigen::Vector3d k[7];
    for (int s = 0; s < 7; ++s) {
      Eigen::Vector3d ys = y;
      for (int j = 0; j < s; ++j) ys += h * a[s][j] * k[j];
      k[s] = robertson_rhs(ys);
    }
    Eigen::Vector3d y5 = y, err = Eigen::Vector3d::Zero();
    for (int s = 0; s < 6; ++s) y5 += h * a[6][s] * k[s];
    for (int s = 0; s < 7; ++s) err += h * e[s] * k[s];
    double en = 0;
    for (int i = 0; i < 3; ++i) en = std::max(en, std::abs(err[i]) / (atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]))));
    ++steps;
    if (en <= 1.0) {
      t += h;
      y = y5;
    }
    h *= std::clamp(0.9 * std::pow(std::max(en, 1e-10), -0.2), 0.2, 5.0);
  }
  return steps;
}

} // namespace

TEST(Tableau, OrderConditionsThroughFour) {
  using T = detail::Sdirk4Tableau;
  double s1 = 0, s2 = 0, s3 = 0, s4a = 0, s4b = 0, s4c = 0, s4d = 0, s3b = 0;
  for (int i = 0; i < 5; ++i) {
    double row = 0;
    for (int j = 0; j < 5; ++j) row += T::a[i][j];
    EXPECT_NEAR(row, T::c[i], 1e-15);
    s1 += T::b[i];
    s2 += T::b[i] * T::c[i];
    s3 += T::b[i] * T::c[i] * T::c[i];
    s4a += T::b[i] * std::pow(T::c[i], 3);
    double ac = 0, acc = 0, aac = 0;
    for (int j = 0; j < 5; ++j) {
      ac += T::a[i][j] * T::c[j];
      acc += T::a[i][j] * T::c[j] * T::c[j];
      double inner = 0;
      for (int k = 0; k < 5; ++k) inner += T::a[j][k] * T::c[k];
      aac += T::a[i][j] * inner;
    }
    s3b += T::b[i] * ac;
    s4b += T::b[i] * T::c[i] * ac;
    s4c += T::b[i] * acc;
    s4d += T::b[i] * aac;
  }
  EXPECT_NEAR(s1, 1.0, 1e-14);
  EXPECT_NEAR(s2, 1.0 / 2, 1e-14);
  EXPECT_NEAR(s3, 1.0 / 3, 1e-14);
  EXPECT_NEAR(s3b, 1.0 / 6, 1e-14);
  EXPECT_NEAR(s4a, 1.0 / 4, 1e-14);
  EXPECT_NEAR(s4b, 1.0 / 8, 1e-14);
  EXPECT_NEAR(s4c, 1.0 / 12, 1e-14);
  EXPECT_NEAR(s4d, 1.0 / 24, 1e-14);
  // Stiffly accurate: the last stage is the solution.
  for (int j = 0; j < 5; ++j) EXPECT_EQ(T::a[4][j], T::b[j]);
}

TEST(Integrate, RobertsonProfileShape) {
  ReactorSystem sys;
  const auto tr = integrate(sys, robertson_y0(), 1.0);
  double peak = 0;
  std::size_t ipeak = 0;
  for (std::size_t k = 0; k < tr.size(); ++k)
    if (tr.states[k][1] > peak) peak = tr.states[k][1], ipeak = k;
  EXPECT_GT(peak, 1e-5);
  EXPECT_LT(peak, 1e-4);
  EXPECT_LT(tr.states.back()[1], peak);
  EXPECT_GT(ipeak, 0u);
  for (std::size_t k = 1; k < tr.size(); ++k) {
    EXPECT_LE(tr.states[k][0], tr.states[k - 1][0] + 1e-15);
    EXPECT_GE(tr.states[k][2], tr.states[k - 1][2] - 1e-15);
    EXPECT_NEAR(tr.states[k].sum(), robertson_y0().sum(), 1e-10);
  }
}

TEST(Integrate, StationaryPointStaysPut) {
  ReactorSystem sys;
  const auto tr = integrate(sys, Eigen::Vector3d(0, 0, 1), 1.0);
  for (const auto& y : tr.states) EXPECT_EQ(y, Eigen::VectorXd(Eigen::Vector3d(0, 0, 1)));
}

TEST(Integrate, SelfConvergenceOnRobertson) {
  ReactorSystem sys;
  SolverConfig loose, tight;
  loose.rtol = 1e-6;
  tight.rtol = 1e-10;
  tight.atol = 1e-18;
  const auto a = integrate(sys, robertson_y0(), 1.0, loose).states.back();
  const auto b = integrate(sys, robertson_y0(), 1.0, tight).states.back();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-5 * std::abs(b[i])) << i;
}

TEST(Integrate, ErrorShrinksWithTolerance) {
  ReactorSystem sys;
  SolverConfig ref;
  ref.rtol = 1e-11;
  ref.atol = 1e-20;
  const auto yref = integrate(sys, robertson_y0(), 1.0, ref).states.back();
  double prev = 1.0;
  for (double rtol : {1e-5, 1e-7, 1e-9}) {
    SolverConfig c;
    c.rtol = rtol;
    const auto y = integrate(sys, robertson_y0(), 1.0, c).states.back();
    const double err = ((y - yref).array() / yref.array()).abs().maxCoeff();
    EXPECT_LT(err, prev) << rtol;
    prev = err;
  }
}

TEST(Integrate, HydrogenIgnitionConverges) {
  auto sys = h2_system();
  SolverConfig loose, tight;
  loose.rtol = 1e-6;
  tight.rtol = 1e-10;
  const auto a = integrate(sys, h2_phi0(), 1e-3, loose);
  const auto b = integrate(sys, h2_phi0(), 1e-3, tight);
  EXPECT_GT(b.temperatures.back(), 2000.0);
  EXPECT_NEAR(a.temperatures.back(), b.temperatures.back(), 1e-3 * b.temperatures.back());
}

TEST(Integrate, ExplicitMethodIsFarCostlier) {
  // Regression guard that the implicit path is what makes Robertson cheap.
  ReactorSystem sys;
  SolverConfig cfg;
  cfg.rtol = 1e-6;
  cfg.atol = 1e-10;
  const auto tr = integrate(sys, robertson_y0(), 1e3, cfg);
  const std::size_t implicit = tr.stats.steps + tr.stats.rejected;
  const std::size_t cap = 10000 * implicit;
  const std::size_t expl = explicit_steps(robertson_y0(), 1e3, cfg.rtol, cfg.atol, cap);
  EXPECT_GE(expl, cap) << "implicit " << implicit << " explicit " << expl;
}

TEST(Integrate, RejectsBadInput) {
  ReactorSystem sys;
  EXPECT_THROW(integrate(sys, robertson_y0(), -1.0), ValidationError);
  EXPECT_THROW(integrate(sys, Eigen::VectorXd::Ones(2), 1.0), ValidationError);
  EXPECT_THROW(integrate(sys, robertson_y0(), 1.0, {}, {2.0}), ValidationError);
  SolverConfig bad;
  bad.rtol = 0.5;
  EXPECT_THROW(integrate(sys, robertson_y0(), 1.0, bad), ValidationError);
  SolverConfig few;
  few.max_steps = 3;
  EXPECT_THROW(integrate(sys, robertson_y0(), 1.0, few), NumericalError);
}

TEST(Sensitivity, IdentityAtStart) {
  ReactorSystem sys;
  const auto s = integrate_with_sensitivity(sys, robertson_y0(), 1e-3);
  EXPECT_EQ(s.base.times.front(), 0.0);
  EXPECT_TRUE(s.A.front().isIdentity(0.0));
  auto h2 = h2_system();
  const auto s2 = integrate_with_sensitivity(h2, h2_phi0(), 1e-6);
  EXPECT_TRUE(s2.A.front().isIdentity(0.0));
}

TEST(Sensitivity, MatchesFrozenRobertsonOracle) {
  std::ifstream in(STIFFINFER_TEST_DATA_DIR "/robertson_sensitivity.json");
  ASSERT_TRUE(in);
  const auto oracle = nlohmann::json::parse(in);
  ReactorSystem sys;
  for (const auto& c : oracle["cases"]) {
    const double t = c["t"];
    const auto s = integrate_with_sensitivity(sys, robertson_y0(), t, {}, {t}, Record::outputs_only);
    const Eigen::MatrixXd& A = s.A.back();
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(s.base.states.back()[i], c["state"][i].get<double>(), 1e-9 * std::abs(c["state"][i].get<double>()));
      for (int j = 0; j < 3; ++j) {
        const double ref = c["A"][i][j];
        EXPECT_NEAR(A(i, j), ref, 1e-4 * std::abs(ref)) << "t " << t << " (" << i << "," << j << ")";
      }
    }
  }
}

TEST(Sensitivity, HydrogenConservedRowsStayIdentity) {
  auto sys = h2_system();
  const Eigen::MatrixXd C = element_matrix(*h2o2());
  const auto s = integrate_with_sensitivity(sys, h2_phi0(), 1e-1);
  for (const auto& A : s.A) EXPECT_LT((C.transpose() * A - C.transpose()).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Sensitivity, ProductRuleResidualIsQuadratic) {
  auto sys = h2_system();
  SolverConfig cfg;
  cfg.rtol = 1e-11;
  cfg.atol = 1e-18;
  const double t = 1e-5;
  const auto s = integrate_with_sensitivity(sys, h2_phi0(), t, cfg, {t}, Record::outputs_only);
  const Eigen::VectorXd R0 = s.base.states.back();
  // A direction in the reaction space (zero net element mass change): H2O2 -> 2 OH.
  Eigen::VectorXd d = Eigen::VectorXd::Zero(9);
  d[7] = -1.0;
  d[4] = 1.0;
  std::vector<double> res;
  for (double eps : {4e-5, 2e-5, 1e-5}) {
    const auto Rp = integrate(sys, h2_phi0() + eps * d, t, cfg, {t}, Record::outputs_only).states.back();
    res.push_back((Rp - R0 - s.A.back() * (eps * d)).norm());
  }
  EXPECT_NEAR(res[0] / res[1], 4.0, 0.8);
  EXPECT_NEAR(res[1] / res[2], 4.0, 0.8);
}

TEST(Conservation, RobertsonAndHydrogenTrajectories) {
  ReactorSystem rob;
  const auto r = integrate(rob, robertson_y0(), 1.0);
  for (const auto& y : r.states) EXPECT_NEAR(y.sum(), robertson_y0().sum(), 1e-10);

  auto sys = h2_system();
  const Eigen::MatrixXd C = element_matrix(*h2o2());
  const Eigen::VectorXd c0 = C.transpose() * h2_phi0();
  const auto tr = integrate(sys, h2_phi0(), 1e-1);
  const MixtureThermo thermo(*h2o2());
  const double h0 = thermo.enthalpy(h2_phi0(), 1200.0);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_LT((C.transpose() * tr.states[k] - c0).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(std::abs(thermo.enthalpy(tr.states[k], tr.temperatures[k]) - h0), 1e-6 * std::abs(h0));
  }
}

TEST(DenseOutput, NodesAndStartAreExact) {
  ReactorSystem sys;
  const auto tr = integrate(sys, robertson_y0(), 1.0);
  EXPECT_EQ(evaluate_at(tr, 0.0), robertson_y0());
  const std::size_t k = tr.size() / 2;
  EXPECT_EQ(evaluate_at(tr, tr.times[k]), tr.states[k]);
  EXPECT_THROW(evaluate_at(tr, 2.0), ValidationError);
  const auto outs = integrate(sys, robertson_y0(), 1.0, {}, {0.5}, Record::outputs_only);
  EXPECT_THROW(evaluate_at(outs, 0.25), ValidationError);
}

TEST(DenseOutput, AgreesWithReintegration) {
  ReactorSystem sys;
  SolverConfig cfg;
  const auto tr = integrate(sys, robertson_y0(), 1.0, cfg);
  for (double t : {3.3e-5, 7.7e-4, 0.0123, 0.456}) {
    const auto direct = integrate(sys, robertson_y0(), t, cfg, {t}, Record::outputs_only).states.back();
    const auto dense = evaluate_at(tr, t);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(dense[i], direct[i], 10 * cfg.rtol * std::abs(direct[i]) + 1e-13) << t;
  }
  auto h2 = h2_system();
  const auto th = integrate(h2, h2_phi0(), 1e-3, cfg);
  for (double t : {2.2e-7, 4.4e-5, 1.9e-4}) {
    const auto direct = integrate(h2, h2_phi0(), t, cfg, {t}, Record::outputs_only).states.back();
    const auto dense = evaluate_at(th, t);
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(dense[i], direct[i], 10 * cfg.rtol * std::abs(direct[i]) + 1e-12) << t;
  }
}

TEST(DenseOutput, SensitivityInterpolation) {
  ReactorSystem sys;
  const auto s = integrate_with_sensitivity(sys, robertson_y0(), 1e-2);
  const double t = 4.2e-3;
  const auto direct = integrate_with_sensitivity(sys, robertson_y0(), t, {}, {t}, Record::outputs_only);
  EXPECT_LT((sensitivity_at(s, t) - direct.A.back()).cwiseAbs().maxCoeff(), 1e-5);
}
