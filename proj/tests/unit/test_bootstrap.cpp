#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "zigam/bootstrap.hpp"
#include "zigam/error.hpp"
#include "zigam/synth.hpp"

using namespace zigam;

namespace {

Scenario small_scenario(std::size_t n, std::uint64_t seed) {
  Scenario s;
  s.n = n;
  s.n_periods = 3;
  s.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false}};
  s.mu.linear = {0.8};
  s.alpha = {FunctionSpec{}, FunctionSpec{1.0}};
  s.zero_intercept = {-1.0};
  s.seed = seed;
  return s;
}

PipelineSpec linear_spec() {
  PipelineSpec p;
  p.zero_formula = testutil::linear_formula({"x"}, true);
  p.cont_formula = testutil::linear_formula({"x"}, true);
  return p;
}

std::vector<EffectTarget> two_targets() {
  return {{"a", {0.0}, 1, 0, 1}, {"b", {1.0}, 1, 0, 2}};
}

}  // namespace

TEST_CASE("type-7 quantiles of 1..100") {
  std::vector<double> d(100);
  std::iota(d.begin(), d.end(), 1.0);
  const auto [lo, hi] = percentile_band(d, 0.025, 0.975);
  CHECK(lo == doctest::Approx(3.475).epsilon(1e-12));
  CHECK(hi == doctest::Approx(97.525).epsilon(1e-12));
  CHECK(type7_quantile(d, 0.0) == 1.0);
  CHECK(type7_quantile(d, 1.0) == 100.0);
  CHECK(type7_quantile(d, 0.5) == 50.5);
}

TEST_CASE("constant draws give a degenerate band") {
  const std::vector<double> d(37, 4.25);
  const auto [lo, hi] = percentile_band(d, 0.025, 0.975);
  CHECK(lo == 4.25);
  CHECK(hi == 4.25);
  CHECK_THROWS_AS(type7_quantile(std::vector<double>{}, 0.5), Error);
}

TEST_CASE("band does not depend on draw order") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> d(250);
  for (auto& v : d) v = z(rng);
  const auto ref = percentile_band(d, 0.05, 0.95);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(d.begin(), d.end(), rng);
    const auto b = percentile_band(d, 0.05, 0.95);
    CHECK(b.first == ref.first);
    CHECK(b.second == ref.second);
  }
}

TEST_CASE("plan validation") {
  BootstrapPlan p;
  p.replicates = 1;
  CHECK_THROWS_AS(p.validate(), Error);
  p.replicates = 10;
  p.q_low = 0.9;
  p.q_high = 0.1;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.resample_unit = "row";
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("two replicates with a fixed seed are reproducible") {
  const auto data = generate(small_scenario(300, 5)).data;
  BootstrapPlan plan;
  plan.replicates = 2;
  plan.seed = 99;
  const auto targets = two_targets();
  const auto a = bootstrap_effects(data, linear_spec(), plan, targets);
  const auto b = bootstrap_effects(data, linear_spec(), plan, targets);
  REQUIRE(a.estimates.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(*a.estimates[j].ci_low == *b.estimates[j].ci_low);
    CHECK(*a.estimates[j].ci_high == *b.estimates[j].ci_high);
    CHECK(*a.estimates[j].ci_low <= *a.estimates[j].ci_high);
  }
  CHECK(a.draws == b.draws);
  plan.seed = 100;
  const auto c = bootstrap_effects(data, linear_spec(), plan, targets);
  CHECK(c.draws != a.draws);
}

TEST_CASE("worker count does not change the draws") {
  const auto data = generate(small_scenario(300, 7)).data;
  PipelineSpec spec = linear_spec();
  spec.cont_formula.linear.clear();
  spec.cont_formula.smooths.push_back(SmoothSpec::univariate("x", 6));
  BootstrapPlan plan;
  plan.replicates = 8;
  plan.seed = 4;
  const auto targets = two_targets();
  plan.workers = 1;
  const auto one = bootstrap_effects(data, spec, plan, targets);
  plan.workers = 3;
  const auto three = bootstrap_effects(data, spec, plan, targets);
  CHECK(one.draws == three.draws);
  CHECK(one.replicate_ids == three.replicate_ids);
  CHECK(draws_csv(one, targets) == draws_csv(three, targets));
}

TEST_CASE("fast lambda mode is flagged and deterministic") {
  const auto data = generate(small_scenario(300, 9)).data;
  PipelineSpec spec = linear_spec();
  spec.cont_formula.linear.clear();
  spec.cont_formula.smooths.push_back(SmoothSpec::univariate("x", 6));
  BootstrapPlan plan;
  plan.replicates = 5;
  plan.fast_lambda = true;
  const auto targets = two_targets();
  const auto a = bootstrap_effects(data, spec, plan, targets);
  CHECK(a.fast_lambda);
  CHECK(a.draws == bootstrap_effects(data, spec, plan, targets).draws);
}

TEST_CASE("identical units give a zero-width band") {
  // Every unit has the same covariate and the same outcome path.
  const std::size_t n = 40;
  std::vector<std::string> ids(n);
  std::vector<int> treat(n);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = "u" + std::to_string(i);
    treat[i] = static_cast<int>(i % 2);
    y(static_cast<Eigen::Index>(i), 0) = 10.0;
    y(static_cast<Eigen::Index>(i), 1) = 12.0;
  }
  const PanelDataset data(ids, {1, 2}, y, treat, {"0", "1"}, x, {"x"}, 1);
  PipelineSpec spec;
  spec.cont_formula = testutil::linear_formula({}, true);
  BootstrapPlan plan;
  plan.replicates = 20;
  const std::vector<EffectTarget> targets{{"t", {1.0}, 1, 0, 1}};
  const auto res = bootstrap_effects(data, spec, plan, targets);
  CHECK(*res.estimates[0].ci_high - *res.estimates[0].ci_low < 1e-12);
  CHECK(std::abs(res.estimates[0].point) < 1e-12);
}

TEST_CASE("bands narrow as the sample grows") {
  std::vector<double> small, large;
  const std::vector<EffectTarget> targets{{"t", {0.0}, 1, 0, 1}};
  PipelineSpec spec = linear_spec();
  BootstrapPlan plan;
  plan.replicates = 49;
  plan.fast_lambda = true;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    plan.seed = trial;
    for (auto [n, out] : {std::pair{std::size_t{500}, &small}, std::pair{std::size_t{2000}, &large}}) {
      const auto data = generate(small_scenario(n, 1000 + trial)).data;
      const auto r = bootstrap_effects(data, spec, plan, targets);
      out->push_back(*r.estimates[0].ci_high - *r.estimates[0].ci_low);
    }
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(large) < median(small));
}
