#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zigam/dataset.hpp"
#include "zigam/design.hpp"

namespace zigam {

enum class Family { Gaussian, BinomialLogit };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct FitOptions {
  // Fixed smoothing parameters, one per penalty. When absent they are
  // selected by REML.
  std::optional<Eigen::VectorXd> lambda;
  // Starting values of log(lambda) for the multi-start optimizer; each
  // start sets every component to the same value.
  std::vector<double> log_lambda_starts{-6.0, 0.0, 6.0};
  double log_lambda_min = -15.0;
  double log_lambda_max = 15.0;
  double reml_tolerance = 1e-7;
  int max_optimizer_iterations = 200;
  int max_irls_iterations = 100;
  int max_outer_iterations = 50;
};

// Optimizer trace for one start of the REML search.
struct StartDiagnostics {
  Eigen::VectorXd start;
  Eigen::VectorXd log_lambda;
  double score = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

class GamFit {
 public:
  Family family = Family::Gaussian;
  ModelSchema schema;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd lambda;
  // Bayesian posterior covariance (inverse penalized information times
  // scale). Empty for fits restored from JSON; see covariance_diag.
  Eigen::MatrixXd covariance;
  Eigen::VectorXd covariance_diag;
  Eigen::VectorXd coef_edf;
  std::vector<double> term_edf;
  double total_edf = 0.0;
  // tr(2F - FF) with F = (X'WX + S)^-1 X'WX; used as model df in comparisons.
  double total_edf1 = 0.0;
  double scale = 1.0;
  double reml_score = 0.0;
  double deviance = 0.0;
  double log_likelihood = 0.0;
  Eigen::Index n_obs = 0;
  int iterations = 0;
  bool lambda_fixed = false;
  std::vector<StartDiagnostics> starts;
  std::vector<std::string> warnings;

  double predict_link(const Eigen::RowVectorXd& row) const;
  Eigen::VectorXd predict_link(const Eigen::MatrixXd& design) const;
  double se_link(const Eigen::RowVectorXd& row) const;
  double coef_se(Eigen::Index k) const;
};

// Penalized regression on an explicit design. `penalties` are embedded at
// their offsets; `weights` are prior weights (empty means unit weights).
struct PenalizedProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<Penalty> penalties;
};

// Solves (X'X + sum lambda_j S_j) beta = X'y; throws a numerical error with
// the eigenvalue range when the system is not positive definite.
Eigen::VectorXd solve_penalized(const PenalizedProblem& problem,
                                const Eigen::VectorXd& lambda);

// Fits on the given rows. Gaussian models the outcome difference, the
// binomial family models the zero indicator.
GamFit fit_gam(const ModelFormula& formula, const DiffSample& sample,
               std::span<const std::size_t> rows, Family family,
               const FitOptions& options = {});

// Gaussian additive model on the rows with a nonzero difference.
GamFit fit_gaussian(const ModelFormula& formula, const DiffSample& sample,
                    const FitOptions& options = {});

// Binomial logit model of P(delta == 0) on the full sample.
GamFit fit_binomial_logit(const ModelFormula& formula, const DiffSample& sample,
                          const FitOptions& options = {});

// REML criterion (to be minimized). Exact with profiled scale for the
// Gaussian family, Laplace approximation at the penalized mode for the
// binomial family. Rows follow the same convention as the fitters.
double reml_score(const Eigen::VectorXd& lambda, const ModelFormula& formula,
                  const DiffSample& sample, Family family);

// Analytic gradient of the Gaussian REML score with respect to log(lambda).
Eigen::VectorXd reml_gradient(const Eigen::VectorXd& lambda,
                              const ModelFormula& formula,
                              const DiffSample& sample);

GamFit optimize_reml(const ModelFormula& formula, const DiffSample& sample,
                     Family family, const FitOptions& options = {});

struct TermTest {
  std::string term;
  bool smooth = false;
  double estimate = 0.0;  // coefficient for parametric terms
  double se = 0.0;
  double edf = 0.0;
  double rank = 0.0;  // Wald rank for smooth terms
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sided Wald z for parametric terms; rank-truncated Wald test with
// rank round(edf) on the Bayesian covariance for smooth terms (chi-square
// for binomial, F for Gaussian).
std::vector<TermTest> term_pvalues(const GamFit& fit);

struct AnovaResult {
  double statistic = 0.0;
  double df = 0.0;
  double df_residual = 0.0;
  double p_value = 1.0;
  std::string test;  // "F" or "Chisq"
};

// Deviance-difference test of a restricted model nested in a general one,
// with degrees of freedom from the difference in tr(2F - FF).
AnovaResult approx_anova(const GamFit& restricted, const GamFit& general);

}  // namespace zigam
