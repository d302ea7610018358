#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zigam {

// Declarative configuration of one smooth term.
struct SmoothSpec {
  enum class Kind { Univariate, Tensor };
  enum class By { None, Treatment, Factor };

  Kind kind = Kind::Univariate;
  std::string covariate;    // univariate covariate, or first tensor margin
  std::string covariate_y;  // second tensor margin
  int basis_dim = 10;       // K, or first-margin dimension for tensors
  int basis_dim_y = 5;
  int degree = 3;
  int penalty_order = 2;
  // Tensor only: centre each margin first so the product carries no main
  // effects (used when the margins also enter as separate smooths).
  bool interaction_only = false;
  By by = By::None;
  std::string by_covariate;  // factor covariate when by == Factor

  static SmoothSpec univariate(std::string covariate, int basis_dim = 10);
  static SmoothSpec tensor(std::string x, std::string y, int kx = 5, int ky = 5);

  // Throws a config error when dimensions are inconsistent.
  void validate() const;
  std::string label() const;
  bool operator==(const SmoothSpec&) const = default;
};

// B-spline basis rows for x. Knots are nondecreasing with degree+1 repeats
// at each boundary. Points outside the boundary knots are clamped; when
// `clamped` is given it receives one flag per point.
Eigen::MatrixXd bspline_basis(std::span<const double> x,
                              std::span<const double> knots, int degree,
                              std::vector<std::uint8_t>* clamped = nullptr);

// S = D'D for the order-th difference matrix D on q coefficients.
Eigen::MatrixXd difference_penalty(int q, int order);

// Boundary knots at the sample range, interior knots at sample quantiles.
// Falls back to quantiles of the distinct values, then to even spacing,
// when quantiles collide.
std::vector<double> quantile_knots(std::span<const double> x, int basis_dim,
                                   int degree);

// Evaluation recipe for one margin of a smooth.
struct MarginalBasis {
  std::vector<double> knots;
  int degree = 3;
  // Optional margin-level sum-to-zero reparameterization (q_raw x q).
  Eigen::MatrixXd constraint;

  int raw_dim() const { return static_cast<int>(knots.size()) - degree - 1; }
  int dim() const;
  Eigen::MatrixXd evaluate(std::span<const double> x,
                           std::vector<std::uint8_t>* clamped) const;
};

// A realized penalized basis: n x q matrix plus its penalty components.
struct DesignBlock {
  std::vector<MarginalBasis> margins;  // one (univariate) or two (tensor)
  Eigen::MatrixXd basis;
  std::vector<Eigen::MatrixXd> penalties;
  Eigen::MatrixXd constraint;  // q_raw x q when constraint_applied
  bool constraint_applied = false;

  int dim() const { return static_cast<int>(basis.cols()); }
  Eigen::Index rows() const { return basis.rows(); }

  // Basis rows for new data, one column span per margin. Applies the same
  // constraint as the fitted block; out-of-range values are clamped.
  Eigen::MatrixXd evaluate(const std::vector<std::span<const double>>& columns,
                           std::vector<std::uint8_t>* clamped = nullptr) const;
};

// Univariate penalized B-spline block over x with quantile knots.
DesignBlock univariate_block(std::span<const double> x, int basis_dim,
                             int degree = 3, int penalty_order = 2);

// Row-wise Kronecker product of two univariate blocks with separate
// penalties S_x (x) I and I (x) S_y.
DesignBlock tensor_basis(const DesignBlock& bx, const DesignBlock& by);

// Reparameterizes the block so every column sums to zero over the masked
// rows. One dimension is absorbed via a QR decomposition of the column-sum
// vector and the penalties are transformed consistently.
DesignBlock apply_centering_constraint(const DesignBlock& block,
                                       std::span<const std::uint8_t> mask);

// Z with orthonormal columns spanning the complement of c (length q).
Eigen::MatrixXd sum_to_zero_transform(const Eigen::VectorXd& column_sums);

}  // namespace zigam
