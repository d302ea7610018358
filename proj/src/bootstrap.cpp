#include "zigam/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

void BootstrapPlan::validate() const {
  if (replicates < 2) fail(ErrorKind::Config, "bootstrap needs at least 2 replicates");
  if (!(q_low > 0 && q_low < q_high && q_high < 1))
    fail(ErrorKind::Config, "bootstrap quantiles must satisfy 0 < low < high < 1");
  if (resample_unit != "unit")
    fail(ErrorKind::Config, "unsupported resampling unit '" + resample_unit + "'");
  if (!(max_failure_share >= 0 && max_failure_share < 1))
    fail(ErrorKind::Config, "failure share must lie in [0, 1)");
}

std::vector<DiffSample> pipeline_samples(const PanelDataset& data, const PipelineSpec& spec) {
  return spec.random_growth ? random_growth_transform(data, spec.t0_index)
                            : build_diff_samples(data, spec.t0_index);
}

std::vector<MixtureFit> fit_pipeline(const PanelDataset& data, const PipelineSpec& spec,
                                     unsigned workers, const std::vector<PeriodLambdas>* lambdas) {
  return fit_periods(pipeline_samples(data, spec), spec.zero_formula, spec.cont_formula, workers,
                     lambdas);
}

double type7_quantile(std::span<const double> draws, double q) {
  if (draws.empty()) fail(ErrorKind::Usage, "quantile of an empty set of draws");
  std::vector<double> s(draws.begin(), draws.end());
  std::sort(s.begin(), s.end());
  const double h = (static_cast<double>(s.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::pair<double, double> percentile_band(std::span<const double> draws, double q_low,
                                          double q_high) {
  return {type7_quantile(draws, q_low), type7_quantile(draws, q_high)};
}

namespace {

std::size_t locate_period(const std::vector<MixtureFit>& fits, std::size_t period_index) {
  for (std::size_t k = 0; k < fits.size(); ++k)
    if (fits[k].period_index == period_index) return k;
  fail(ErrorKind::Usage, "target period index " + std::to_string(period_index) + " was not fitted");
}

EffectEstimate target_effect(const std::vector<MixtureFit>& fits, const EffectTarget& t) {
  const auto& fit = fits[locate_period(fits, t.period_index)];
  return treatment_contrast(fit, t.x, t.treatment, t.reference, t.unit);
}

}  // namespace

BootstrapResult bootstrap_effects(const PanelDataset& data, const PipelineSpec& spec,
                                  const BootstrapPlan& plan,
                                  std::span<const EffectTarget> targets) {
  plan.validate();
  if (targets.empty()) fail(ErrorKind::Usage, "bootstrap needs at least one target");
  BootstrapResult result;
  result.fast_lambda = plan.fast_lambda;
  const auto original = fit_pipeline(data, spec, plan.workers);
  for (const auto& t : targets) result.estimates.push_back(target_effect(original, t));
  const auto lambdas = lambdas_of(original);

  const auto n = data.n_units();
  const auto b_count = static_cast<std::size_t>(plan.replicates);
  std::vector<std::vector<double>> rows(b_count);
  std::vector<std::string> errors(b_count);
  // Parallelism is across replicates; each replicate fits its periods serially.
  parallel_for(b_count, plan.workers, [&](std::size_t b) {
    std::seed_seq seq{static_cast<std::uint64_t>(plan.seed), static_cast<std::uint64_t>(b)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    try {
      const auto resampled = data.select_units(idx);
      const auto fits = fit_pipeline(resampled, spec, 1, plan.fast_lambda ? &lambdas : nullptr);
      std::vector<double> vals;
      vals.reserve(targets.size());
      for (const auto& t : targets) vals.push_back(target_effect(fits, t).point);
      rows[b] = std::move(vals);
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  });

  for (std::size_t b = 0; b < b_count; ++b) {
    if (rows[b].empty()) {
      result.failures.emplace_back(static_cast<int>(b), errors[b]);
    } else {
      result.replicate_ids.push_back(static_cast<int>(b));
    }
  }
  const double share = static_cast<double>(result.failures.size()) / static_cast<double>(b_count);
  if (share > plan.max_failure_share || result.replicate_ids.size() < 2) {
    std::ostringstream ss;
    ss << result.failures.size() << " of " << b_count << " bootstrap replicates failed";
    for (std::size_t k = 0; k < std::min<std::size_t>(result.failures.size(), 10); ++k)
      ss << "; replicate " << result.failures[k].first << ": " << result.failures[k].second;
    fail(ErrorKind::Inference, ss.str());
  }
  result.draws.resize(static_cast<Eigen::Index>(result.replicate_ids.size()),
                      static_cast<Eigen::Index>(targets.size()));
  for (std::size_t k = 0; k < result.replicate_ids.size(); ++k) {
    const auto& row = rows[static_cast<std::size_t>(result.replicate_ids[k])];
    for (std::size_t j = 0; j < targets.size(); ++j)
      result.draws(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = row[j];
  }
  for (std::size_t j = 0; j < targets.size(); ++j) {
    std::vector<double> col(result.replicate_ids.size());
    for (std::size_t k = 0; k < col.size(); ++k)
      col[k] = result.draws(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    const auto [lo, hi] = percentile_band(col, plan.q_low, plan.q_high);
    result.estimates[j].ci_low = lo;
    result.estimates[j].ci_high = hi;
  }
  return result;
}

std::string draws_csv(const BootstrapResult& result, std::span<const EffectTarget> targets) {
  std::ostringstream ss;
  ss << "replicate";
  for (std::size_t j = 0; j < targets.size(); ++j) ss << ",target" << j;
  ss << '\n';
  for (Eigen::Index k = 0; k < result.draws.rows(); ++k) {
    ss << result.replicate_ids[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < result.draws.cols(); ++j) ss << ',' << format_double(result.draws(k, j));
    ss << '\n';
  }
  return ss.str();
}

}  // namespace zigam
