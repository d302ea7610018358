#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zigam/dataset.hpp"
#include "zigam/design.hpp"
#include "zigam/gam.hpp"

namespace zigam {

enum class ModelPart { Zero, Continuous };

struct SelectionOptions {
  double threshold = 0.01;
  std::vector<std::string> force_include;
  FitOptions fit;
  unsigned workers = 1;
};

struct DroppedVariable {
  std::string name;
  double min_p = 1.0;  // best p-value across periods when dropped
  double max_p = 1.0;
};

struct SelectionReport {
  std::vector<std::string> candidates;
  std::vector<std::string> retained;
  std::vector<DroppedVariable> dropped;  // in drop order
  double threshold = 0.01;
  std::vector<long> periods;
  // candidates x periods, p-values from the last fit that contained the
  // variable (the fit that triggered its drop, or the final model).
  Eigen::MatrixXd per_period_pvalues;
  std::vector<std::string> warnings;
};

// Backward elimination over the covariates of `base`. A variable's p-value in
// one period is the smallest p-value among the terms that use it; it is kept
// when that value falls below the threshold in at least one period. At each
// step the variable with the largest across-period minimum is removed and
// every period is refit. Ties (equal to a relative 1e-9) go to the
// lexicographically last name.
SelectionReport backward_select(const PanelDataset& data, const ModelFormula& base,
                                ModelPart part, std::size_t t0_index,
                                const SelectionOptions& options = {});

// Copy of `formula` without any term that uses `covariate`.
ModelFormula drop_covariate(const ModelFormula& formula, const std::string& covariate);

enum class Metric { StandardizedEuclidean, Euclidean };

struct MedoidSet {
  int k = 0;
  std::vector<std::size_t> medoids;  // row indices, in BUILD order after SWAP
  std::vector<std::string> medoid_units;
  std::vector<int> assignments;  // cluster index per point
  double total_cost = 0.0;
  std::vector<double> cost_trace;  // after BUILD, then after each swap
  Metric metric = Metric::StandardizedEuclidean;
  std::uint64_t seed = 0;
  // Small problems are also solved by enumeration; set when that found a
  // cheaper medoid set than SWAP.
  bool enumerated = false;
  bool improved_by_enumeration = false;
};

// Partitioning around medoids (BUILD then SWAP with best-improvement swaps)
// until no single swap lowers the total cost. SWAP stops at a local optimum,
// so when at most kMaxEnumeration medoid sets exist they are all scored and
// the cheapest is returned. Deterministic; ties go to the lowest index and
// `seed` is only recorded.
inline constexpr double kMaxEnumeration = 20000;

MedoidSet kmedoids(const Eigen::MatrixXd& points, int k, Metric metric, std::uint64_t seed = 0,
                   std::span<const std::string> ids = {});

// Sum of distances to the nearest of the given medoids.
double medoid_cost(const Eigen::MatrixXd& points, std::span<const std::size_t> medoids,
                   Metric metric);

struct MedoidProfile {
  std::vector<std::string> covariate_names;
  std::vector<std::string> units;
  std::vector<std::size_t> cluster_sizes;
  Eigen::MatrixXd values;  // medoid x covariate, raw scale
};

MedoidProfile profile_medoids(const PanelDataset& data, const MedoidSet& medoids,
                              std::span<const std::string> covariates = {});
std::string profile_csv(const MedoidProfile& profile);

}  // namespace zigam
