#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "zigam/error.hpp"
#include "zigam/mixture.hpp"
#include "zigam/util.hpp"

using namespace zigam;

namespace {

struct TwoPartTruth {
  double z0 = -0.5, zx = 0.8, zd = -0.4;  // logit P(zero)
  double c0 = 1.0, cx = 2.0, cd = 1.5;    // continuous mean
};

DiffSample two_part_sample(std::size_t n, std::uint64_t seed, const TwoPartTruth& t = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd delta(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    x(k, 0) = z(rng);
    d[i] = u(rng) < 0.5 ? 1 : 0;
    const double pz = inv_logit(t.z0 + t.zx * x(k, 0) + t.zd * d[i]);
    const double cont = t.c0 + t.cx * x(k, 0) + t.cd * d[i] + z(rng);
    delta[k] = u(rng) < pz ? 0.0 : cont;
  }
  return testutil::make_sample(delta, x, {"x"}, d);
}

double term_estimate(const GamFit& fit, const std::string& name, double* se) {
  for (const auto& t : term_pvalues(fit))
    if (t.term == name) {
      *se = t.se;
      return t.estimate;
    }
  FAIL("term not found: " << name);
  return 0.0;
}

}  // namespace

TEST_CASE("sample without zeros is sent to the continuous-only path") {
  Eigen::VectorXd delta(4);
  delta << 1, 2, 3, 4;
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  const auto s = testutil::make_sample(delta, x, {"x"});
  const auto f = testutil::linear_formula({"x"});
  try {
    fit_mixture(s, f, f);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
    CHECK(std::string(e.what()).find("continuous-only") != std::string::npos);
  }
  const auto c = fit_continuous_only(s, f);
  CHECK_FALSE(c.has_zero_part());
  CHECK(predict_zero_prob(c, std::vector<double>{1.0}, 0) == 0.0);
}

TEST_CASE("both parts recover generator parameters") {
  const TwoPartTruth truth;
  const auto f = testutil::linear_formula({"x"}, true);
  const std::vector<std::pair<std::string, double>> zero_terms{
      {"(Intercept)", truth.z0}, {"x", truth.zx}, {"D=1", truth.zd}};
  const std::vector<std::pair<std::string, double>> cont_terms{
      {"(Intercept)", truth.c0}, {"x", truth.cx}, {"D=1", truth.cd}};
  std::vector<int> zero_hits(3, 0), cont_hits(3, 0);
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    const auto s = two_part_sample(800, 100 + static_cast<std::uint64_t>(rep));
    const auto m = fit_mixture(s, f, f);
    for (std::size_t k = 0; k < 3; ++k) {
      double se = 0.0;
      const double ez = term_estimate(*m.zero_part, zero_terms[k].first, &se);
      zero_hits[k] += std::abs(ez - zero_terms[k].second) < 2 * se;
      const double ec = term_estimate(m.cont_part, cont_terms[k].first, &se);
      cont_hits[k] += std::abs(ec - cont_terms[k].second) < 2 * se;
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(zero_hits[k] >= 90);
    CHECK(cont_hits[k] >= 90);
  }
}

TEST_CASE("mixture log-likelihood is the sum of the parts") {
  const auto s = two_part_sample(600, 7);
  ModelFormula f = testutil::linear_formula({"x"}, true);
  f.smooths.push_back(SmoothSpec::univariate("x", 8));
  f.linear.clear();
  const auto m = fit_mixture(s, f, f);
  CHECK(m.log_likelihood() - (m.zero_part->log_likelihood + m.cont_part.log_likelihood) == 0.0);
  const double pointwise = mixture_loglik_pointwise(m, s);
  CHECK(pointwise == doctest::Approx(m.log_likelihood()).epsilon(1e-9));
  CHECK(m.n_zero_used == s.size());
  CHECK(m.n_cont_used == s.size() - s.zero_count());
}

TEST_CASE("zero probability is the inverse logit of the linear predictor") {
  // Balanced zeros with no covariate signal fit an intercept of exactly 0.
  Eigen::VectorXd delta(6);
  delta << 0, 0, 0, 1, 2, 3;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(6, 1);
  const auto s = testutil::make_sample(delta, x, {"x"});
  ModelFormula intercept_only;
  intercept_only.treatment_effects = false;
  const auto m = fit_mixture(s, intercept_only, intercept_only);
  CHECK(predict_zero_prob(m, std::vector<double>{0.0}, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(predict_zero_prob(m, std::vector<double>{0.0}, 2), Error);
}

TEST_CASE("intercept-only zero part predicts the sample share everywhere") {
  const std::size_t n = 1000;
  Eigen::VectorXd delta(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i), 0) = z(rng);
    delta[static_cast<Eigen::Index>(i)] = i < 260 ? 0.0 : 1.0 + z(rng);
  }
  const auto s = testutil::make_sample(delta, x, {"x"});
  ModelFormula zero;
  zero.treatment_effects = false;
  const auto m = fit_mixture(s, zero, testutil::linear_formula({"x"}));
  for (double v : {-3.0, 0.0, 2.5}) CHECK(predict_zero_prob(m, std::vector<double>{v}, 0) == doctest::Approx(0.26).epsilon(1e-8));
}

TEST_CASE("negative treatment shift lowers the treated zero probability") {
  TwoPartTruth t;
  t.zd = -0.147 * 4;
  const auto s = two_part_sample(4000, 31, t);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto m = fit_mixture(s, f, f);
  double se = 0.0;
  CHECK(term_estimate(*m.zero_part, "D=1", &se) < 0.0);
  for (double v : {-1.0, 0.0, 1.0}) {
    const std::vector<double> xv{v};
    CHECK(predict_zero_prob(m, xv, 1) < predict_zero_prob(m, xv, 0));
  }
}

TEST_CASE("continuous mean: control arm and treated differential") {
  const auto s = two_part_sample(500, 41);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto m = fit_mixture(s, f, f);
  const auto& fit = m.cont_part;
  const double b0 = fit.coefficients[fit.schema.find_term("(Intercept)")->first];
  const double bx = fit.coefficients[fit.schema.find_term("x")->first];
  const double bd = fit.coefficients[fit.schema.find_term("D=1")->first];
  for (double v : {-1.0, 0.3, 2.0}) {
    const std::vector<double> xv{v};
    CHECK(predict_cont_mean(m, xv, 0) == doctest::Approx(b0 + bx * v).epsilon(1e-12));
    CHECK(predict_cont_mean(m, xv, 1) - predict_cont_mean(m, xv, 0) == doctest::Approx(bd).epsilon(1e-10));
  }
}

TEST_CASE("linear prediction matches dense least squares on the nonzero rows") {
  const auto s = two_part_sample(400, 51);
  const auto f = testutil::linear_formula({"x"}, true);
  const auto m = fit_mixture(s, f, f);
  const auto rows = s.nonzero_rows();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::VectorXd y(X.rows());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    const auto r = static_cast<Eigen::Index>(k);
    X(r, 0) = 1.0;
    X(r, 1) = s.treatment[i] == 1 ? 1.0 : 0.0;
    X(r, 2) = (*s.covariates)(static_cast<Eigen::Index>(i), 0);
    y[r] = s.delta[static_cast<Eigen::Index>(i)];
  }
  const Eigen::VectorXd beta = (X.transpose() * X).inverse() * (X.transpose() * y);
  for (double v : {-2.0, 0.0, 1.7})
    for (int arm : {0, 1}) {
      const double hand = beta[0] + (arm == 1 ? beta[1] : 0.0) + beta[2] * v;
      CHECK(std::abs(predict_cont_mean(m, std::vector<double>{v}, arm) - hand) < 1e-10);
    }
}

TEST_CASE("treatment-specific smooth recovers 2 + sin(x)") {
  const std::size_t n = 5000;
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd delta(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    x(k, 0) = u(rng);
    d[i] = i % 2 == 0 ? 1 : 0;
    const double mu = 0.5 * x(k, 0);
    const double alpha = d[i] == 1 ? 2.0 + std::sin(x(k, 0)) : 0.0;
    delta[k] = (i % 5 == 0) ? 0.0 : mu + alpha + 0.5 * z(rng);
  }
  const auto s = testutil::make_sample(delta, x, {"x"}, d);
  ModelFormula cont;
  cont.treatment_effects = true;
  cont.smooths.push_back(SmoothSpec::univariate("x", 10));
  auto by = SmoothSpec::univariate("x", 10);
  by.by = SmoothSpec::By::Treatment;
  cont.smooths.push_back(by);
  const auto m = fit_continuous_only(s, cont);
  double worst = 0.0;
  for (double v = -2.5; v <= 2.5; v += 0.25) {
    const std::vector<double> xv{v};
    const double a = predict_cont_mean(m, xv, 1) - predict_cont_mean(m, xv, 0);
    worst = std::max(worst, std::abs(a - (2.0 + std::sin(v))));
  }
  CHECK(worst < 0.15);
}

TEST_CASE("period fits with reused smoothing parameters reproduce the originals") {
  const auto s = two_part_sample(500, 71);
  ModelFormula f;
  f.smooths.push_back(SmoothSpec::univariate("x", 8));
  const std::vector<DiffSample> samples{s, s};
  const auto fits = fit_periods(samples, f, f, 2);
  const auto lambdas = lambdas_of(fits);
  const auto again = fit_periods(samples, f, f, 1, &lambdas);
  for (std::size_t k = 0; k < fits.size(); ++k) {
    CHECK((again[k].cont_part.coefficients - fits[k].cont_part.coefficients).norm() < 1e-8);
    CHECK((again[k].zero_part->coefficients - fits[k].zero_part->coefficients).norm() < 1e-6);
  }
}
