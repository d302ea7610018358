#include "zigam/splines.hpp"

#include <algorithm>
#include <cmath>

#include "zigam/error.hpp"

namespace zigam {

SmoothSpec SmoothSpec::univariate(std::string covariate, int basis_dim) {
  SmoothSpec s;
  s.covariate = std::move(covariate);
  s.basis_dim = basis_dim;
  return s;
}

SmoothSpec SmoothSpec::tensor(std::string x, std::string y, int kx, int ky) {
  SmoothSpec s;
  s.kind = Kind::Tensor;
  s.covariate = std::move(x);
  s.covariate_y = std::move(y);
  s.basis_dim = kx;
  s.basis_dim_y = ky;
  return s;
}

void SmoothSpec::validate() const {
  if (covariate.empty()) fail(ErrorKind::Config, "smooth term without covariate");
  if (degree < 0) fail(ErrorKind::Config, "spline degree must be nonnegative");
  if (penalty_order < 1) fail(ErrorKind::Config, "penalty order must be at least 1");
  if (kind == Kind::Univariate) {
    if (basis_dim < 4 || basis_dim <= degree + 1)
      fail(ErrorKind::Config, "smooth of " + covariate + ": basis_dim must be >= 4 and > degree + 1");
    if (penalty_order >= basis_dim)
      fail(ErrorKind::Config, "smooth of " + covariate + ": penalty order must be below basis_dim");
  } else {
    if (covariate_y.empty()) fail(ErrorKind::Config, "tensor smooth needs two covariates");
    if (basis_dim < 4 || basis_dim_y < 4 || basis_dim <= degree || basis_dim_y <= degree)
      fail(ErrorKind::Config, "tensor smooth " + label() + ": margin dimensions must be >= 4");
    if (penalty_order >= std::min(basis_dim, basis_dim_y))
      fail(ErrorKind::Config, "tensor smooth " + label() + ": penalty order too large");
  }
  if (by == By::Factor && by_covariate.empty())
    fail(ErrorKind::Config, "factor-by smooth without by covariate");
}

std::string SmoothSpec::label() const {
  std::string base = kind == Kind::Univariate
                         ? "s(" + covariate + ")"
                         : std::string(interaction_only ? "ti(" : "te(") + covariate + "," + covariate_y + ")";
  return base;
}

// ---------------------------------------------------------------------------

namespace {

void check_knots(std::span<const double> knots, int degree) {
  if (degree < 0) fail(ErrorKind::Config, "spline degree must be nonnegative");
  const auto need = static_cast<std::size_t>(2 * (degree + 1));
  if (knots.size() < need)
    fail(ErrorKind::Config, "need at least 2(degree+1) = " + std::to_string(need) +
                                " knots, got " + std::to_string(knots.size()));
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (!(knots[k] >= knots[k - 1])) fail(ErrorKind::Config, "knots must be nondecreasing");
  }
  const auto d = static_cast<std::size_t>(degree);
  if (!(knots[d] < knots[knots.size() - 1 - d]))
    fail(ErrorKind::Config, "boundary knots must enclose a nonempty interval");
}

}  // namespace

Eigen::MatrixXd bspline_basis(std::span<const double> x,
                              std::span<const double> knots, int degree,
                              std::vector<std::uint8_t>* clamped) {
  check_knots(knots, degree);
  const int nb = static_cast<int>(knots.size()) - degree - 1;
  const double lo = knots[static_cast<std::size_t>(degree)];
  const double hi = knots[static_cast<std::size_t>(nb)];
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), nb);
  if (clamped) clamped->assign(x.size(), 0);
  std::vector<double> left(static_cast<std::size_t>(degree) + 1),
      right(static_cast<std::size_t>(degree) + 1), basis(static_cast<std::size_t>(degree) + 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double u = x[i];
    if (!(u >= lo && u <= hi)) {
      if (clamped) (*clamped)[i] = 1;
      u = u < lo ? lo : hi;
      if (std::isnan(x[i])) fail(ErrorKind::Data, "NaN passed to spline basis");
    }
    // knot span s with knots[s] <= u < knots[s+1], restricted to [degree, nb-1]
    int s;
    if (u >= hi) {
      s = nb - 1;
      while (s > degree && !(knots[static_cast<std::size_t>(s)] < knots[static_cast<std::size_t>(s) + 1])) --s;
    } else {
      const auto it = std::upper_bound(knots.begin() + degree, knots.begin() + nb + 1, u);
      s = static_cast<int>(it - knots.begin()) - 1;
    }
    basis[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      left[ju] = u - knots[static_cast<std::size_t>(s + 1 - j)];
      right[ju] = knots[static_cast<std::size_t>(s + j)] - u;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const auto ru = static_cast<std::size_t>(r);
        const double temp = basis[ru] / (right[ru + 1] + left[ju - ru]);
        basis[ru] = saved + right[ru + 1] * temp;
        saved = left[ju - ru] * temp;
      }
      basis[ju] = saved;
    }
    for (int j = 0; j <= degree; ++j)
      out(static_cast<Eigen::Index>(i), s - degree + j) = basis[static_cast<std::size_t>(j)];
  }
  return out;
}

Eigen::MatrixXd difference_penalty(int q, int order) {
  if (order < 0) fail(ErrorKind::Config, "difference order must be nonnegative");
  if (order >= q)
    fail(ErrorKind::Config, "difference order " + std::to_string(order) +
                                " needs more than " + std::to_string(order) + " coefficients");
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(q, q);
  for (int k = 0; k < order; ++k) {
    const auto rows = d.rows() - 1;
    Eigen::MatrixXd next = d.bottomRows(rows) - d.topRows(rows);
    d = std::move(next);
  }
  return d.transpose() * d;
}

namespace {

double type7_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] > v[k - 1])) return false;
  return true;
}

}  // namespace

std::vector<double> quantile_knots(std::span<const double> x, int basis_dim,
                                   int degree) {
  if (x.empty()) fail(ErrorKind::Data, "cannot place knots on an empty sample");
  const int n_interior = basis_dim - degree - 1;
  if (n_interior < 0) fail(ErrorKind::Config, "basis_dim must exceed degree");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (!(hi > lo)) fail(ErrorKind::Data, "covariate is constant; cannot place knots");

  auto interior_from = [&](const std::vector<double>& values) {
    std::vector<double> grid{lo};
    for (int j = 1; j <= n_interior; ++j)
      grid.push_back(type7_quantile(values, static_cast<double>(j) / (n_interior + 1)));
    grid.push_back(hi);
    return grid;
  };
  auto grid = interior_from(sorted);
  if (!strictly_increasing(grid)) {
    std::vector<double> uniq = sorted;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    grid = interior_from(uniq);
  }
  if (!strictly_increasing(grid)) {
    grid.clear();
    for (int j = 0; j <= n_interior + 1; ++j)
      grid.push_back(lo + (hi - lo) * static_cast<double>(j) / (n_interior + 1));
  }
  std::vector<double> knots;
  for (int k = 0; k < degree; ++k) knots.push_back(lo);
  knots.insert(knots.end(), grid.begin(), grid.end());
  for (int k = 0; k < degree; ++k) knots.push_back(hi);
  return knots;
}

Eigen::MatrixXd sum_to_zero_transform(const Eigen::VectorXd& column_sums) {
  const auto q = column_sums.size();
  if (q < 2) fail(ErrorKind::State, "cannot centre a single-column basis");
  Eigen::MatrixXd c = column_sums;
  if (c.norm() == 0.0) c.setOnes();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
  Eigen::MatrixXd full = qr.householderQ() * Eigen::MatrixXd::Identity(q, q);
  return full.rightCols(q - 1);
}

int MarginalBasis::dim() const {
  return constraint.size() > 0 ? static_cast<int>(constraint.cols()) : raw_dim();
}

Eigen::MatrixXd MarginalBasis::evaluate(std::span<const double> x,
                                        std::vector<std::uint8_t>* clamped) const {
  Eigen::MatrixXd b = bspline_basis(x, knots, degree, clamped);
  if (constraint.size() > 0) return b * constraint;
  return b;
}

namespace {

Eigen::MatrixXd row_kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) fail(ErrorKind::Shape, "tensor margins have different row counts");
  Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index k = 0; k < b.cols(); ++k)
      out.col(j * b.cols() + k) = a.col(j).cwiseProduct(b.col(k));
  return out;
}

}  // namespace

Eigen::MatrixXd DesignBlock::evaluate(
    const std::vector<std::span<const double>>& columns,
    std::vector<std::uint8_t>* clamped) const {
  if (columns.size() != margins.size())
    fail(ErrorKind::Shape, "basis evaluation needs one column per margin");
  std::vector<std::uint8_t> flags, margin_flags;
  Eigen::MatrixXd b = margins[0].evaluate(columns[0], &flags);
  for (std::size_t m = 1; m < margins.size(); ++m) {
    b = row_kronecker(b, margins[m].evaluate(columns[m], &margin_flags));
    for (std::size_t i = 0; i < flags.size(); ++i) flags[i] |= margin_flags[i];
  }
  if (clamped) *clamped = std::move(flags);
  if (constraint_applied) return b * constraint;
  return b;
}

DesignBlock univariate_block(std::span<const double> x, int basis_dim,
                             int degree, int penalty_order) {
  DesignBlock block;
  MarginalBasis margin;
  margin.knots = quantile_knots(x, basis_dim, degree);
  margin.degree = degree;
  block.basis = margin.evaluate(x, nullptr);
  block.penalties.push_back(difference_penalty(static_cast<int>(block.basis.cols()), penalty_order));
  block.margins.push_back(std::move(margin));
  return block;
}

DesignBlock tensor_basis(const DesignBlock& bx, const DesignBlock& by) {
  if (bx.margins.size() != 1 || by.margins.size() != 1)
    fail(ErrorKind::Usage, "tensor product needs two univariate blocks");
  if (bx.rows() != by.rows())
    fail(ErrorKind::Shape, "tensor margins have " + std::to_string(bx.rows()) + " and " +
                               std::to_string(by.rows()) + " rows");
  if (bx.penalties.size() != 1 || by.penalties.size() != 1)
    fail(ErrorKind::Usage, "tensor margins must carry exactly one penalty each");
  DesignBlock out;
  auto mx = bx.margins[0];
  auto my = by.margins[0];
  if (bx.constraint_applied) mx.constraint = bx.constraint;
  if (by.constraint_applied) my.constraint = by.constraint;
  out.margins = {mx, my};
  out.basis = row_kronecker(bx.basis, by.basis);
  const auto qx = bx.basis.cols();
  const auto qy = by.basis.cols();
  out.penalties.push_back(Eigen::MatrixXd::Zero(qx * qy, qx * qy));
  out.penalties.push_back(Eigen::MatrixXd::Zero(qx * qy, qx * qy));
  for (Eigen::Index a = 0; a < qx; ++a)
    for (Eigen::Index b = 0; b < qx; ++b)
      for (Eigen::Index k = 0; k < qy; ++k)
        out.penalties[0](a * qy + k, b * qy + k) = bx.penalties[0](a, b);
  for (Eigen::Index a = 0; a < qx; ++a)
    for (Eigen::Index k = 0; k < qy; ++k)
      for (Eigen::Index l = 0; l < qy; ++l)
        out.penalties[1](a * qy + k, a * qy + l) = by.penalties[0](k, l);
  return out;
}

DesignBlock apply_centering_constraint(const DesignBlock& block,
                                       std::span<const std::uint8_t> mask) {
  if (block.constraint_applied)
    fail(ErrorKind::State, "centering constraint already applied to this block");
  if (static_cast<Eigen::Index>(mask.size()) != block.rows())
    fail(ErrorKind::Shape, "constraint mask length differs from basis rows");
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(block.basis.cols());
  for (Eigen::Index i = 0; i < block.rows(); ++i)
    if (mask[static_cast<std::size_t>(i)]) sums += block.basis.row(i).transpose();
  DesignBlock out = block;
  out.constraint = sum_to_zero_transform(sums);
  out.constraint_applied = true;
  out.basis = block.basis * out.constraint;
  for (auto& s : out.penalties) s = out.constraint.transpose() * s * out.constraint;
  return out;
}

}  // namespace zigam
