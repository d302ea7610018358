#pragma once

// Internal REML machinery shared by the Gaussian and binomial fitters.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zigam/design.hpp"

namespace zigam::detail {

// Penalties grouped by the term they act on. Penalties of one term share a
// coefficient block, so the pseudo-determinant factorizes over blocks.
class PenaltyStructure {
 public:
  PenaltyStructure() = default;
  PenaltyStructure(const std::vector<Penalty>& penalties, Eigen::Index n_coef);

  // Dimension of the unpenalized space of sum_j lambda_j S_j.
  Eigen::Index null_dim() const { return null_dim_; }

  // log|S_lambda|_+ and, through `dlog`, lambda_j tr(S_lambda^+ S_j).
  double log_pdet(const Eigen::VectorXd& lambda, Eigen::VectorXd* dlog) const;

  // A += sum_j lambda_j S_j.
  void add_to(Eigen::MatrixXd& a, const Eigen::VectorXd& lambda) const;
  // beta' S_j beta for every penalty.
  Eigen::VectorXd quad_forms(const Eigen::VectorXd& beta) const;
  // tr(M S_j) for a symmetric p x p matrix M.
  Eigen::VectorXd traces(const Eigen::MatrixXd& m) const;

  std::size_t size() const { return penalties_.size(); }

 private:
  struct Block {
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
    std::vector<int> ids;
    Eigen::Index rank = 0;
    double log_pdet_unit = 0.0;  // log|S|_+ for single-penalty blocks
  };
  std::vector<Penalty> penalties_;
  std::vector<Block> blocks_;
  Eigen::Index null_dim_ = 0;
};

// Penalized least squares problem in sufficient-statistic form. For the
// binomial family X and y are the sqrt-weighted working design and response.
struct WorkingModel {
  const Eigen::MatrixXd* X = nullptr;
  const Eigen::VectorXd* y = nullptr;
  Eigen::MatrixXd XtX;
  Eigen::VectorXd Xty;
  const PenaltyStructure* penalties = nullptr;
  bool profiled_scale = true;  // false: scale known and equal to 1

  WorkingModel(const Eigen::MatrixXd& x, const Eigen::VectorXd& yv,
               const PenaltyStructure& ps, bool profiled);
};

struct RemlEval {
  bool ok = false;
  double score = 0.0;
  Eigen::VectorXd gradient;  // with respect to log(lambda)
  Eigen::VectorXd beta;
  double penalized_rss = 0.0;
  std::string message;
};

RemlEval evaluate_reml(const WorkingModel& model, const Eigen::VectorXd& rho,
                       bool want_gradient = true);

struct OptimizeResult {
  Eigen::VectorXd rho;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

// Quasi-Newton (BFGS) minimization within a box, with Armijo backtracking.
// `f` returns false when the point cannot be evaluated.
OptimizeResult minimize_box(
    const std::function<bool(const Eigen::VectorXd&, double&, Eigen::VectorXd&)>& f,
    Eigen::VectorXd rho, double lo, double hi, double tol, int max_iter);

// Symmetric eigen-solve based message for non positive-definite systems.
std::string conditioning_report(const Eigen::MatrixXd& a);

}  // namespace zigam::detail
