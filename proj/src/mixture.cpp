#include "zigam/mixture.hpp"

#include <cmath>
#include <numbers>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

double MixtureFit::log_likelihood() const {
  const double zero_ll = zero_part ? zero_part->log_likelihood : 0.0;
  return zero_ll + cont_part.log_likelihood;
}

namespace {

void check_arm(const ModelSchema& schema, int r) {
  if (r < 0 || static_cast<std::size_t>(r) >= schema.treatment_labels.size())
    fail(ErrorKind::Usage, "unknown treatment label code " + std::to_string(r));
}

}  // namespace

MixtureFit fit_mixture(const DiffSample& sample, const ModelFormula& zero_formula,
                       const ModelFormula& cont_formula, const MixtureOptions& options) {
  const auto zeros = sample.zero_count();
  if (zeros == 0 || zeros == sample.size())
    fail(ErrorKind::Data, "period " + std::to_string(sample.period) +
                              ": the zero indicator has a single class; use the continuous-only model");
  MixtureFit fit;
  fit.period_index = sample.period_index;
  fit.period = sample.period;
  fit.pre_program = sample.pre_program;
  fit.zero_part = fit_binomial_logit(zero_formula, sample, options.zero);
  fit.cont_part = fit_gaussian(cont_formula, sample, options.cont);
  fit.zero_formula = zero_formula;
  fit.cont_formula = cont_formula;
  fit.n_zero_used = sample.size();
  fit.n_cont_used = sample.size() - zeros;
  return fit;
}

MixtureFit fit_continuous_only(const DiffSample& sample, const ModelFormula& cont_formula,
                               const FitOptions& options) {
  MixtureFit fit;
  fit.period_index = sample.period_index;
  fit.period = sample.period;
  fit.pre_program = sample.pre_program;
  fit.cont_part = fit_gaussian(cont_formula, sample, options);
  fit.cont_formula = cont_formula;
  fit.n_cont_used = sample.size() - sample.zero_count();
  return fit;
}

double mixture_loglik_pointwise(const MixtureFit& fit, const DiffSample& sample) {
  const auto& cov = *sample.covariates;
  std::vector<double> x(static_cast<std::size_t>(cov.cols()));
  const double sigma2 = fit.cont_part.scale;
  double ll = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const int r = sample.treatment[i];
    double eta = 0.0;
    if (fit.zero_part) eta = fit.zero_part->predict_link(fit.zero_part->schema.row(x, r));
    const double log_p = -(eta > 0 ? std::log1p(std::exp(-eta)) : -eta + std::log1p(std::exp(eta)));
    const double log_1mp = -(eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)));
    if (sample.is_zero[i]) {
      if (fit.zero_part) ll += log_p;
      continue;
    }
    if (fit.zero_part) ll += log_1mp;
    const double mu = fit.cont_part.predict_link(fit.cont_part.schema.row(x, r));
    const double resid = sample.delta(static_cast<Eigen::Index>(i)) - mu;
    ll += -0.5 * std::log(2.0 * std::numbers::pi * sigma2) - resid * resid / (2.0 * sigma2);
  }
  return ll;
}

double predict_zero_prob(const MixtureFit& fit, std::span<const double> x, int r, bool* clamped) {
  check_arm(fit.cont_part.schema, r);
  if (!fit.zero_part) {
    if (clamped) *clamped = false;
    return 0.0;
  }
  const auto row = fit.zero_part->schema.row(x, r, clamped);
  return inv_logit(fit.zero_part->predict_link(row));
}

double predict_cont_mean(const MixtureFit& fit, std::span<const double> x, int r, bool* clamped) {
  check_arm(fit.cont_part.schema, r);
  const auto row = fit.cont_part.schema.row(x, r, clamped);
  return fit.cont_part.predict_link(row);
}

std::vector<MixtureFit> fit_periods(const std::vector<DiffSample>& samples,
                                    const std::optional<ModelFormula>& zero_formula,
                                    const ModelFormula& cont_formula, unsigned workers,
                                    const std::vector<PeriodLambdas>* lambdas) {
  if (lambdas && lambdas->size() != samples.size())
    fail(ErrorKind::Shape, "need smoothing parameters for every period");
  std::vector<MixtureFit> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t k) {
    FitOptions zero_opts, cont_opts;
    if (lambdas) {
      const auto& l = (*lambdas)[k];
      if (l.zero) zero_opts.lambda = *l.zero;
      cont_opts.lambda = l.cont;
    }
    if (zero_formula) {
      out[k] = fit_mixture(samples[k], *zero_formula, cont_formula, {zero_opts, cont_opts});
    } else {
      out[k] = fit_continuous_only(samples[k], cont_formula, cont_opts);
    }
  });
  return out;
}

std::vector<PeriodLambdas> lambdas_of(const std::vector<MixtureFit>& fits) {
  std::vector<PeriodLambdas> out;
  for (const auto& f : fits) {
    PeriodLambdas l;
    if (f.zero_part) l.zero = f.zero_part->lambda;
    l.cont = f.cont_part.lambda;
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace zigam
