#pragma once

#include <optional>
#include <span>
#include <vector>

#include "zigam/dataset.hpp"
#include "zigam/design.hpp"
#include "zigam/gam.hpp"

namespace zigam {

struct MixtureOptions {
  FitOptions zero;
  FitOptions cont;
};

// Two-part model for one period: P(delta == 0) from a binomial logit model
// on the full sample and E[delta | delta != 0] from a Gaussian additive model
// on the nonzero rows. Without a zero part the zero probability is taken as
// identically 0 (continuous-only models).
struct MixtureFit {
  std::size_t period_index = 0;
  long period = 0;
  bool pre_program = false;
  std::optional<GamFit> zero_part;
  GamFit cont_part;
  std::optional<ModelFormula> zero_formula;
  ModelFormula cont_formula;
  std::size_t n_zero_used = 0;
  std::size_t n_cont_used = 0;

  bool has_zero_part() const { return zero_part.has_value(); }
  // Sum of the two parts' log-likelihoods (the mixture likelihood factorizes).
  double log_likelihood() const;
};

MixtureFit fit_mixture(const DiffSample& sample, const ModelFormula& zero_formula,
                       const ModelFormula& cont_formula,
                       const MixtureOptions& options = {});

// Gaussian part only, on the nonzero rows, with zero probability fixed at 0.
MixtureFit fit_continuous_only(const DiffSample& sample,
                               const ModelFormula& cont_formula,
                               const FitOptions& options = {});

// Mixture log-likelihood accumulated observation by observation.
double mixture_loglik_pointwise(const MixtureFit& fit, const DiffSample& sample);

double predict_zero_prob(const MixtureFit& fit, std::span<const double> x, int r,
                         bool* clamped = nullptr);
double predict_cont_mean(const MixtureFit& fit, std::span<const double> x, int r,
                         bool* clamped = nullptr);

// Fits one mixture per period after t0_index, optionally in parallel. When
// `lambdas` is given (zero and continuous parts per period) those smoothing
// parameters are reused instead of running REML.
struct PeriodLambdas {
  std::optional<Eigen::VectorXd> zero;
  Eigen::VectorXd cont;
};

std::vector<MixtureFit> fit_periods(const std::vector<DiffSample>& samples,
                                    const std::optional<ModelFormula>& zero_formula,
                                    const ModelFormula& cont_formula,
                                    unsigned workers = 1,
                                    const std::vector<PeriodLambdas>* lambdas = nullptr);

std::vector<PeriodLambdas> lambdas_of(const std::vector<MixtureFit>& fits);

}  // namespace zigam
