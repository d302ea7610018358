#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "helpers.hpp"
#include "zigam/effects.hpp"
#include "zigam/error.hpp"
#include "zigam/synth.hpp"
#include "zigam/util.hpp"

using namespace zigam;

namespace {

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// Three arms, zeros independent of the arm, arm shifts 1 and 2.5.
DiffSample three_arm_sample(std::size_t n, std::uint64_t seed, double p_zero) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd delta(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  std::vector<int> d(n);
  const double shift[3] = {0.0, 1.0, 2.5};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    x(k, 0) = z(rng);
    d[i] = static_cast<int>(i % 3);
    const double cont = 0.5 + x(k, 0) + shift[d[i]] + z(rng);
    delta[k] = u(rng) < p_zero ? 0.0 : cont;
  }
  return testutil::make_sample(delta, x, {"x"}, d, {"0", "A", "A&B"});
}

}  // namespace

TEST_CASE("hand case assembles to 2.1") {
  const EffectComponents c{0.8, 2.0, -0.1, 5.0};
  CHECK(assemble_effect(c) == 2.1);
  const double p_r = 0.2, p_0 = 0.3;
  const EffectComponents derived{1.0 - p_r, 2.0, p_r - p_0, 5.0};
  CHECK(std::abs(assemble_effect(derived) - 2.1) < 1e-15);
}

TEST_CASE("equal zero probabilities and no shift give a zero effect") {
  const auto s = three_arm_sample(600, 3, 0.3);
  ModelFormula f = testutil::linear_formula({"x"}, false);
  const auto m = fit_mixture(s, f, f);
  const auto e = counterfactual_effect(m, std::vector<double>{0.4}, 1);
  CHECK(e.components.p_diff == 0.0);
  CHECK(e.components.alpha_hat == 0.0);
  CHECK(e.point == 0.0);
}

TEST_CASE("point equals its components bit for bit") {
  const auto s = three_arm_sample(900, 5, 0.25);
  ModelFormula f = testutil::linear_formula({}, true);
  f.smooths.push_back(SmoothSpec::univariate("x", 8));
  const auto m = fit_mixture(s, f, f);
  for (double v : {-1.5, 0.0, 0.7, 2.0})
    for (int r : {1, 2}) {
      const std::vector<double> x{v};
      for (const auto& e : {counterfactual_effect(m, x, r), treatment_contrast(m, x, r, r == 1 ? 2 : 1)}) {
        const auto& c = e.components;
        CHECK(bit_equal(e.point, c.one_minus_p_r * c.alpha_hat - c.p_diff * c.mu0_hat));
      }
    }
}

TEST_CASE("contrast rules") {
  const auto s = three_arm_sample(600, 7, 0.3);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto m = fit_mixture(s, f, f);
  const std::vector<double> x{0.2};
  CHECK_THROWS_AS(treatment_contrast(m, x, 2, 2), Error);
  CHECK_THROWS_AS(counterfactual_effect(m, x, 0), Error);
  const auto base = treatment_contrast(m, x, 2, 0);
  const auto direct = counterfactual_effect(m, x, 2);
  CHECK(bit_equal(base.point, direct.point));
  CHECK(base.reference == 0);
  const auto ab = treatment_contrast(m, x, 2, 1);
  const auto b = counterfactual_effect(m, x, 1);
  CHECK(ab.point == doctest::Approx(direct.point - b.point).epsilon(1e-12));
}

TEST_CASE("contrast under equal zero probabilities scales the arm gap") {
  const double p = 0.3;
  const auto s = three_arm_sample(6000, 11, p);
  ModelFormula zero;
  zero.treatment_effects = false;
  const auto m = fit_mixture(s, zero, testutil::linear_formula({"x"}, true));
  const auto e = treatment_contrast(m, std::vector<double>{0.0}, 2, 1);
  CHECK(e.components.p_diff == 0.0);
  CHECK(e.point == e.components.alpha_hat);
  CHECK(std::abs(e.point - (1.0 - p) * 1.5) < 0.1);
}

TEST_CASE("plug-in effect matches the generator's analytic effect") {
  Scenario sc;
  sc.n = 6000;
  sc.n_periods = 2;
  sc.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false}};
  sc.mu.constant = 3.0;
  sc.mu.linear = {1.0};
  sc.alpha = {FunctionSpec{}, FunctionSpec{1.5, {0.5}}};
  sc.zero_intercept = {-0.8};
  sc.zero_shift = {0.0, -0.6};
  sc.zero_linear = {0.4};
  sc.seed = 17;
  const auto panel = generate(sc);
  const auto s = build_diff_samples(panel.data, 0).at(0);
  const auto f = testutil::linear_formula({"x"}, true);
  ModelFormula cont = f;
  cont.linear_by_treatment = {"x"};
  const auto m = fit_mixture(s, f, cont);
  for (double v : {-1.0, 0.0, 1.0}) {
    const std::vector<double> x{v};
    CHECK(std::abs(counterfactual_effect(m, x, 1).point - truth_effect(panel.truth, x, 1, 1)) < 0.15);
  }
}

TEST_CASE("effect profile: one estimate per period, untreated arm rejected") {
  Scenario sc;
  sc.n = 1500;
  sc.n_periods = 4;
  sc.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false}};
  sc.mu.linear = {0.5};
  sc.seed = 23;
  const auto panel = generate(sc);
  const auto samples = build_diff_samples(panel.data, 0);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto fits = fit_periods(samples, f, f);
  const auto prof = effect_profile(fits, std::vector<double>{0.0}, 1, "t");
  REQUIRE(prof.size() == 3);
  for (std::size_t k = 0; k < prof.size(); ++k) {
    CHECK(prof[k].period == panel.data.times()[k + 1]);
    CHECK(std::abs(prof[k].point) < 0.3);
  }
  CHECK_THROWS_AS(effect_profile(fits, std::vector<double>{0.0}, 0), Error);
  auto mixed = fits;
  mixed[1] = fit_mixture(samples[1], f, testutil::linear_formula({}, true));
  CHECK_THROWS_AS(effect_profile(mixed, std::vector<double>{0.0}, 1), Error);
}

TEST_CASE("effects are invariant to unit order") {
  const auto s = three_arm_sample(500, 29, 0.3);
  std::vector<std::size_t> perm(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 7 + 3) % perm.size();
  Eigen::VectorXd delta(static_cast<Eigen::Index>(perm.size()));
  Eigen::MatrixXd x(delta.size(), 1);
  std::vector<int> d(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    delta[static_cast<Eigen::Index>(i)] = s.delta[static_cast<Eigen::Index>(perm[i])];
    x(static_cast<Eigen::Index>(i), 0) = (*s.covariates)(static_cast<Eigen::Index>(perm[i]), 0);
    d[i] = s.treatment[perm[i]];
  }
  const auto t = testutil::make_sample(delta, x, {"x"}, d, s.treatment_labels);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto a = counterfactual_effect(fit_mixture(s, f, f), std::vector<double>{0.5}, 2);
  const auto b = counterfactual_effect(fit_mixture(t, f, f), std::vector<double>{0.5}, 2);
  CHECK(a.point == doctest::Approx(b.point).epsilon(1e-9));
}

TEST_CASE("effects csv has one row per estimate") {
  const auto s = three_arm_sample(300, 31, 0.3);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto m = fit_mixture(s, f, f);
  const std::vector<EffectEstimate> es{counterfactual_effect(m, std::vector<double>{0.0}, 1, "u1"),
                                       treatment_contrast(m, std::vector<double>{0.0}, 2, 1, "u1")};
  const auto csv = effects_csv(es, s.treatment_labels);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("A&B") != std::string::npos);
}
