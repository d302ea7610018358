#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "zigam/error.hpp"
#include "zigam/splines.hpp"

using namespace zigam;

namespace {

// Cox-de Boor recursion written out directly, one basis function at a time.
double naive_bspline(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) {
    const auto last = t.size() - 1;
    // Right-closed final interval so the boundary point is covered.
    if (t[static_cast<std::size_t>(i) + 1] == t[last] && x == t[last] && t[static_cast<std::size_t>(i)] < x)
      return 1.0;
    return (t[static_cast<std::size_t>(i)] <= x && x < t[static_cast<std::size_t>(i) + 1]) ? 1.0 : 0.0;
  }
  const auto ui = static_cast<std::size_t>(i);
  const auto up = static_cast<std::size_t>(p);
  double a = 0.0, b = 0.0;
  const double d1 = t[ui + up] - t[ui];
  const double d2 = t[ui + up + 1] - t[ui + 1];
  if (d1 > 0) a = (x - t[ui]) / d1 * naive_bspline(t, i, p - 1, x);
  if (d2 > 0) b = (t[ui + up + 1] - x) / d2 * naive_bspline(t, i + 1, p - 1, x);
  return a + b;
}

std::vector<double> cubic_knots() { return {0, 0, 0, 0, 0.2, 0.45, 0.7, 1, 1, 1, 1}; }

}  // namespace

TEST_CASE("degree zero basis is an indicator") {
  const std::vector<double> x{0.5}, knots{0, 1, 2};
  const auto b = bspline_basis(x, knots, 0);
  REQUIRE(b.cols() == 2);
  CHECK(b(0, 0) == 1.0);
  CHECK(b(0, 1) == 0.0);
}

TEST_CASE("cubic basis is a partition of unity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(100);
  for (auto& v : x) v = u(rng);
  const auto b = bspline_basis(x, cubic_knots(), 3);
  for (Eigen::Index i = 0; i < b.rows(); ++i) CHECK(std::abs(b.row(i).sum() - 1.0) < 1e-12);
  CHECK(b.minCoeff() >= 0.0);
}

TEST_CASE("basis matches naive recursion at knots and random points") {
  const auto knots = cubic_knots();
  std::vector<double> x{0.0, 0.2, 0.45, 0.7, 1.0};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) x.push_back(u(rng));
  const auto b = bspline_basis(x, knots, 3);
  for (std::size_t r = 0; r < x.size(); ++r)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      CHECK(b(static_cast<Eigen::Index>(r), j) ==
            doctest::Approx(naive_bspline(knots, static_cast<int>(j), 3, x[r])).epsilon(1e-12));
}

TEST_CASE("out of range points are clamped and flagged") {
  const std::vector<double> x{-0.5, 0.5, 1.5};
  std::vector<std::uint8_t> flags;
  const auto b = bspline_basis(x, cubic_knots(), 3, &flags);
  CHECK(flags == std::vector<std::uint8_t>{1, 0, 1});
  const std::vector<double> edge{0.0, 1.0};
  const auto be = bspline_basis(edge, cubic_knots(), 3);
  CHECK((b.row(0) - be.row(0)).norm() < 1e-15);
  CHECK((b.row(2) - be.row(1)).norm() < 1e-15);
}

TEST_CASE("too few knots is a config error") {
  const std::vector<double> x{0.5}, knots{0, 0, 1, 1};
  CHECK_THROWS_AS(bspline_basis(x, knots, 3), Error);
}

TEST_CASE("first difference penalty by hand") {
  Eigen::MatrixXd expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((difference_penalty(3, 1) - expect).norm() == 0.0);
  CHECK_THROWS_AS(difference_penalty(3, 3), Error);
}

TEST_CASE("difference penalties: null space, rank, symmetry") {
  for (int q = 4; q <= 20; ++q)
    for (int order = 1; order <= 3; ++order) {
      const auto s = difference_penalty(q, order);
      CHECK((s * Eigen::VectorXd::Ones(q)).norm() < 1e-12);
      CHECK((s - s.transpose()).norm() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
      const auto sv = svd.singularValues();
      int rank = 0;
      for (Eigen::Index k = 0; k < sv.size(); ++k) rank += sv[k] > 1e-9 * sv[0];
      CHECK(rank == q - order);
    }
}

TEST_CASE("quantile knots fall back when quantiles collide") {
  std::vector<double> x(200, 1.0);
  for (int k = 0; k < 10; ++k) x[static_cast<std::size_t>(k)] = static_cast<double>(k) / 10.0;
  const auto knots = quantile_knots(x, 8, 3);
  REQUIRE(knots.size() == 12);
  for (std::size_t k = 1; k < knots.size(); ++k) CHECK(knots[k] >= knots[k - 1]);
  for (std::size_t k = 4; k + 4 < knots.size(); ++k) CHECK(knots[k] > knots[k - 1]);
}

TEST_CASE("tensor of constant margins is the elementwise product") {
  DesignBlock a, b;
  MarginalBasis m;
  m.knots = {0.0, 1.0};
  m.degree = 0;
  a.margins = {m};
  b.margins = {m};
  a.basis = Eigen::MatrixXd(3, 1);
  a.basis << 1, 2, 3;
  b.basis = Eigen::MatrixXd(3, 1);
  b.basis << 4, 5, 6;
  a.penalties = {Eigen::MatrixXd::Zero(1, 1)};
  b.penalties = {Eigen::MatrixXd::Zero(1, 1)};
  const auto t = tensor_basis(a, b);
  REQUIRE(t.basis.cols() == 1);
  CHECK(t.basis(0, 0) == 4.0);
  CHECK(t.basis(1, 0) == 10.0);
  CHECK(t.basis(2, 0) == 18.0);
  CHECK(t.penalties.size() == 2);
}

TEST_CASE("tensor basis reproduces separable polynomials exactly") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(400), y(400);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng);
  const auto bx = univariate_block(x, 6);
  const auto by = univariate_block(y, 7);
  const auto t = tensor_basis(bx, by);
  CHECK(t.penalties.size() == 2);
  CHECK(t.dim() == 42);
  Eigen::VectorXd f(400);
  for (int i = 0; i < 400; ++i) {
    const auto k = static_cast<std::size_t>(i);
    f[i] = (1.0 + x[k] * x[k]) * (y[k] * y[k] * y[k] - 0.5 * y[k]);
  }
  const Eigen::VectorXd beta = t.basis.colPivHouseholderQr().solve(f);
  CHECK((t.basis * beta - f).cwiseAbs().maxCoeff() < 1e-10);
  for (const auto& s : t.penalties) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("centering constraint: column sums, masks and refit equivalence") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  const int n = 300;
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  const auto block = univariate_block(x, 10);
  std::vector<std::uint8_t> mask(n, 1);
  const auto c = apply_centering_constraint(block, mask);
  CHECK(c.dim() == block.dim() - 1);
  CHECK(c.basis.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
  // Constant functions are not representable after centering.
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd coef = c.basis.colPivHouseholderQr().solve(ones);
  CHECK((c.basis * coef - ones).norm() > 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd beta(c.dim());
    for (Eigen::Index k = 0; k < beta.size(); ++k) beta[k] = u(rng);
    CHECK(std::abs((c.basis * beta).mean()) < 1e-10);
  }

  // Masked version centres over the masked rows only.
  std::vector<std::uint8_t> half(n, 0);
  for (int i = 0; i < n; i += 2) half[static_cast<std::size_t>(i)] = 1;
  const auto ch = apply_centering_constraint(block, half);
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(ch.dim());
  for (int i = 0; i < n; i += 2) sums += ch.basis.row(i).transpose();
  CHECK(sums.cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(apply_centering_constraint(c, mask), Error);

  // mu + g(x): unconstrained basis vs intercept plus centred basis.
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 3.0 + std::sin(x[static_cast<std::size_t>(i)]) + noise(rng);
  const Eigen::VectorXd fit_u = block.basis * block.basis.colPivHouseholderQr().solve(y);
  Eigen::MatrixXd xc(n, c.dim() + 1);
  xc << ones, c.basis;
  const Eigen::VectorXd bc = xc.colPivHouseholderQr().solve(y);
  CHECK((xc * bc - fit_u).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(bc[0] == doctest::Approx(y.mean()).epsilon(1e-10));
}

TEST_CASE("smooth spec validation") {
  auto s = SmoothSpec::univariate("x", 3);
  CHECK_THROWS_AS(s.validate(), Error);
  auto t = SmoothSpec::tensor("a", "b");
  CHECK_NOTHROW(t.validate());
  CHECK(t.label() == "te(a,b)");
  t.by = SmoothSpec::By::Factor;
  CHECK_THROWS_AS(t.validate(), Error);
}
