#include <gtest/gtest.h>

#include "stiffinfer/scenarios.hpp"

using namespace stiffinfer;

TEST(Scenarios, NamedPresetsValidate) {
  for (const auto& name : scenario_names()) {
    const Scenario s = find_scenario(name);
    EXPECT_EQ(s.name, name);
    EXPECT_NO_THROW(s.validate()) << name;
  }
  EXPECT_THROW(find_scenario("methane"), ValidationError);
}

TEST(Scenarios, RobertsonPreset) {
  const Scenario s = scenario_robertson();
  EXPECT_EQ(s.t_obs.size(), 41u);
  EXPECT_DOUBLE_EQ(s.t_obs.values().front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.t_obs.values().back(), 1.0);
  EXPECT_NEAR(s.truth.mu0.sum(), 1.0, 1e-5);
  EXPECT_DOUBLE_EQ(s.truth.lower()[0], 0.92);
  EXPECT_DOUBLE_EQ(s.truth.upper()[1], 8e-6);
  ASSERT_TRUE(s.perturbation);
  EXPECT_EQ(*s.perturbation, Eigen::Vector3d(1e-3, 1e-7, 1e-3));
  EXPECT_EQ(s.truth.n_truth, 1000u);
}

TEST(Scenarios, HydrogenPreset) {
  const Scenario s = scenario_h2_autoignition();
  EXPECT_EQ(s.t_obs.size(), 141u);
  EXPECT_NEAR(s.truth.mu0.sum(), 1.0, 1e-12);
  EXPECT_LT((s.truth.s0 - s.truth.mu0 / 10.0).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(s.anchor_temperature, 1200.0);
  EXPECT_EQ(s.species.front(), "H2");
  EXPECT_EQ(s.species.back(), "N2");
}

TEST(Scenarios, QuenchPresets) {
  EXPECT_EQ(quench_temperatures(), (std::vector<double>{1075.5, 600.0, 200.0}));
  for (double T : quench_temperatures()) {
    const Scenario s = scenario_quench(T);
    EXPECT_EQ(s.kind, ModelKind::isothermal);
    EXPECT_EQ(s.temperature, T);
    EXPECT_NEAR(s.truth.mu0.sum(), 1.0, 1e-12);
    EXPECT_FALSE(s.notes.empty()); // composition provenance is carried along
  }
  EXPECT_EQ(quench_name(1075.5), "quench-1075.5K");
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(9, 1.0 / 9);
  EXPECT_EQ(scenario_quench(600.0, x).truth.mu0, x);
}

TEST(Scenarios, GridArithmetic) {
  const LogGrid g{-7.0, 0.0, 0.05};
  const auto v = g.values();
  ASSERT_EQ(v.size(), 141u);
  EXPECT_DOUBLE_EQ(v[20], 1e-6);
  EXPECT_THROW((LogGrid{0.0, -1.0, 0.1}.values()), ValidationError);
}

TEST(ScenarioYaml, RoundTrip) {
  for (const auto& name : scenario_names()) {
    const Scenario a = find_scenario(name);
    const Scenario b = scenario_from_yaml(to_yaml(a));
    EXPECT_EQ(b.name, a.name);
    EXPECT_EQ(b.kind, a.kind);
    EXPECT_EQ(b.truth.mu0, a.truth.mu0);
    EXPECT_EQ(b.truth.s0, a.truth.s0);
    EXPECT_EQ(b.t_obs.values(), a.t_obs.values());
    EXPECT_EQ(b.rank_window.values(), a.rank_window.values());
    EXPECT_EQ(b.temperature, a.temperature);
    EXPECT_EQ(b.solver.rtol, a.solver.rtol);
    EXPECT_EQ(b.posterior_solver.atol, a.posterior_solver.atol);
    EXPECT_EQ(b.sampler.n_draws, a.sampler.n_draws);
    EXPECT_EQ(b.perturbation.has_value(), a.perturbation.has_value());
    EXPECT_EQ(to_yaml(b), to_yaml(a));
  }
}

TEST(ScenarioYaml, ErrorsNameTheKey) {
  const std::string good = to_yaml(scenario_robertson());
  try {
    scenario_from_yaml(good + "colour: blue\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  std::string bad = good;
  bad.replace(bad.find("t_end"), 5, "t_fin");
  EXPECT_THROW(scenario_from_yaml(bad), ParseError);
  EXPECT_THROW(scenario_from_yaml("name: [unclosed"), ParseError);
  EXPECT_THROW(scenario_from_yaml("- a\n- b\n"), ParseError);
}

TEST(ScenarioYaml, SemanticValidation) {
  Scenario s = scenario_robertson();
  s.species.pop_back();
  EXPECT_THROW(s.validate(), ValidationError);
  s = scenario_h2_autoignition();
  std::swap(s.species[0], s.species[1]);
  EXPECT_THROW(s.validate(), ValidationError);
  s = scenario_quench(600.0);
  s.temperature = -1.0;
  EXPECT_THROW(s.validate(), ValidationError);
}
