#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "zigam/error.hpp"
#include "zigam/synth.hpp"
#include "zigam/util.hpp"

using namespace zigam;

namespace {

Scenario base() {
  Scenario s;
  s.n = 400;
  s.n_periods = 4;
  s.treatment_start_index = 2;
  s.treatment_labels = {"0", "A", "B"};
  s.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false},
                  {"SIZE", CovariateLaw::Kind::LogNormal, 5.0, 1.0, true}};
  s.assign_intercept = {0.0, -0.3, 0.2};
  s.mu.linear = {1.0, 0.5};
  s.alpha = {FunctionSpec{}, FunctionSpec{1.0, {0.5}}, FunctionSpec{-0.5}};
  s.zero_shift = {0.0, -0.5, 0.4};
  s.slope_sd = 0.5;
  s.seed = 9;
  return s;
}

}  // namespace

TEST_CASE("null scenario has zero truth everywhere") {
  auto s = base();
  s.alpha.clear();
  s.zero_shift.clear();
  const TruthRecord truth(s);
  for (double x : {-2.0, 0.0, 1.5})
    for (double size : {20.0, 150.0})
      for (int r : {1, 2})
        for (std::size_t t = 1; t < 4; ++t) CHECK(truth_effect(truth, std::vector<double>{x, size}, r, t) == 0.0);
}

TEST_CASE("hand scenario gives 2.1") {
  Scenario s;
  s.n_periods = 2;
  s.treatment_start_index = 1;
  s.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false}};
  s.zero_intercept = {logit(0.3)};
  s.zero_shift = {0.0, logit(0.2) - logit(0.3)};
  s.mu.constant = 5.0;
  s.alpha = {FunctionSpec{}, FunctionSpec{2.0}};
  const TruthRecord truth(s);
  const std::vector<double> x{0.0};
  CHECK(truth.zero_prob(x, 1, 1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(truth.zero_prob(x, 0, 1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(truth_effect(truth, x, 1, 1) == doctest::Approx(2.1).epsilon(1e-12));
}

TEST_CASE("zero share per period and arm within three binomial SDs") {
  Scenario s;
  s.n = 5000;
  s.n_periods = 3;
  s.treatment_start_index = 1;
  s.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false}};
  s.zero_intercept = {logit(0.3)};
  s.zero_shift = {0.0, logit(0.15) - logit(0.3)};
  s.seed = 4;
  const auto panel = generate(s);
  for (const auto& sample : build_diff_samples(panel.data, 0)) {
    const auto shares = sample.zero_share_by_group();
    const auto counts = panel.data.group_counts();
    for (std::size_t r = 0; r < 2; ++r) {
      const double pi = r == 0 ? 0.3 : 0.15;
      const double sd = std::sqrt(pi * (1 - pi) / static_cast<double>(counts[r]));
      CHECK(std::abs(shares[r] - pi) < 3 * sd);
    }
  }
}

TEST_CASE("generation is a pure function of the scenario") {
  const auto a = generate(base());
  const auto b = generate(base());
  CHECK(a.data.fingerprint() == b.data.fingerprint());
  CHECK(a.slopes == b.slopes);
  auto s = base();
  s.seed = 10;
  CHECK(generate(s).data.fingerprint() != a.data.fingerprint());
}

TEST_CASE("potential outcomes agree before the treatment start and match the observed arm") {
  const auto g = generate(base());
  const auto& obs = g.data.outcomes();
  for (std::size_t i = 0; i < g.data.n_units(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index t = 0; t < 2; ++t)
      for (std::size_t r = 1; r < 3; ++r) CHECK(g.potential[r](ii, t) == g.potential[0](ii, t));
    CHECK(obs.row(ii) == g.potential[static_cast<std::size_t>(g.data.treatment()[i])].row(ii));
  }
}

TEST_CASE("rounded covariates and outcomes are integers") {
  auto s = base();
  s.round_outcomes = true;
  s.level_covariate = "SIZE";
  const auto g = generate(s);
  const auto size = g.data.covariates().col(1);
  CHECK((size.array() == size.array().round()).all());
  CHECK((g.data.outcomes().array() == g.data.outcomes().array().round()).all());
  CHECK((g.data.outcomes().col(0) - size).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariate laws standardize to their latent scale") {
  const CovariateLaw n{"n", CovariateLaw::Kind::Normal, 2.0, 4.0, false};
  CHECK(n.standardize(6.0) == 1.0);
  const CovariateLaw u{"u", CovariateLaw::Kind::Uniform, 0.0, 12.0, false};
  CHECK(u.standardize(6.0) == 0.0);
  CHECK(u.standardize(12.0) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  const CovariateLaw l{"l", CovariateLaw::Kind::LogNormal, 1.0, 0.5, false};
  CHECK(l.standardize(std::exp(1.5)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("function spec terms") {
  FunctionSpec f;
  f.constant = 1.0;
  f.linear = {2.0};
  f.sine = {0.0, 1.0};
  f.product = 3.0;
  f.bump = 0.5;
  const std::vector<double> z{1.0, 2.0};
  const double expect = 1.0 + 2.0 + std::sin(2.0) + 6.0 + 0.5 * std::exp(-2.5);
  CHECK(f.eval(z) == doctest::Approx(expect).epsilon(1e-14));
  const std::vector<double> short_z{1.0};
  CHECK_THROWS_AS(f.eval(short_z), Error);
}

TEST_CASE("scenario validation") {
  auto s = base();
  s.alpha.resize(2);
  CHECK_THROWS_AS(s.validate(), Error);
  s = base();
  s.treatment_start_index = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = base();
  s.spillover.assign(5, FunctionSpec{});
  CHECK_THROWS_AS(s.validate(), Error);
  s = base();
  s.covariates[0].b = -1.0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("grid layout assigns blocks and labels neighbourhoods") {
  Scenario s;
  s.n = 100;
  s.n_periods = 2;
  s.treatment_start_index = 1;
  s.grid = true;
  s.block_size = 5;
  s.treatment_labels = {"0", "5B", "ZRR", "ZRR&5B"};
  s.covariates = {{"x", CovariateLaw::Kind::Normal, 0.0, 1.0, false}};
  s.seed = 2;
  const auto g = generate(s);
  CHECK(g.edges.size() == 2 * 10 * 9);
  CHECK(g.wd.size() == 100);
  // Unit 12 (row 1, col 2) is interior to the first block.
  const auto& d = g.data.treatment();
  CHECK(d[0] == d[12]);
  CHECK(d[12] == d[24]);
}
