#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zigam/dataset.hpp"
#include "zigam/effects.hpp"

namespace zigam {

struct BootstrapPlan {
  int replicates = 1000;
  std::uint64_t seed = 1;
  std::string resample_unit = "unit";
  double q_low = 0.025;
  double q_high = 0.975;
  // Reuse the smoothing parameters of the original fit in every replicate.
  bool fast_lambda = false;
  unsigned workers = 1;
  // Fraction of failed replicates tolerated before giving up.
  double max_failure_share = 0.05;

  void validate() const;
};

// Model specification shared by the original fit and every replicate.
struct PipelineSpec {
  std::optional<ModelFormula> zero_formula;  // absent: continuous-only
  ModelFormula cont_formula;
  std::size_t t0_index = 0;
  bool random_growth = false;
};

std::vector<DiffSample> pipeline_samples(const PanelDataset& data, const PipelineSpec& spec);
std::vector<MixtureFit> fit_pipeline(const PanelDataset& data, const PipelineSpec& spec,
                                     unsigned workers = 1,
                                     const std::vector<PeriodLambdas>* lambdas = nullptr);

struct EffectTarget {
  std::string unit;
  std::vector<double> x;
  int treatment = 1;
  int reference = 0;
  std::size_t period_index = 0;  // index into the dataset's periods
};

struct BootstrapResult {
  std::vector<EffectEstimate> estimates;  // one per target, with bands
  // draws(b, j): replicate b (successful ones, in replicate order), target j.
  Eigen::MatrixXd draws;
  std::vector<int> replicate_ids;
  std::vector<std::pair<int, std::string>> failures;
  bool fast_lambda = false;
};

// Type-7 (linear interpolation) empirical quantile.
double type7_quantile(std::span<const double> draws, double q);
std::pair<double, double> percentile_band(std::span<const double> draws, double q_low,
                                          double q_high);

// Unit-level bootstrap: resample whole unit paths with replacement, refit
// every period and recompute each target's effect. Replicate b uses an
// mt19937_64 stream seeded by (seed, b), so results do not depend on the
// number of workers.
BootstrapResult bootstrap_effects(const PanelDataset& data, const PipelineSpec& spec,
                                  const BootstrapPlan& plan,
                                  std::span<const EffectTarget> targets);

std::string draws_csv(const BootstrapResult& result, std::span<const EffectTarget> targets);

}  // namespace zigam
