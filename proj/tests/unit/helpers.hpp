#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zigam/dataset.hpp"
#include "zigam/design.hpp"
#include "zigam/util.hpp"

namespace testutil {

// Cross-sectional sample built directly from columns.
inline zigam::DiffSample make_sample(const Eigen::VectorXd& delta, const Eigen::MatrixXd& x,
                                     std::vector<std::string> names, std::vector<int> treatment = {},
                                     std::vector<std::string> labels = {"0", "1"}) {
  zigam::DiffSample s;
  s.period_index = 1;
  s.period = 1;
  s.delta = delta;
  const auto n = static_cast<std::size_t>(delta.size());
  s.is_zero.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.is_zero[i] = delta[static_cast<Eigen::Index>(i)] == 0.0;
  s.treatment = treatment.empty() ? std::vector<int>(n, 0) : std::move(treatment);
  s.covariates = std::make_shared<const Eigen::MatrixXd>(x);
  s.covariate_names = std::move(names);
  s.treatment_labels = std::move(labels);
  return s;
}

inline zigam::ModelFormula linear_formula(std::vector<std::string> vars, bool dummies = false) {
  zigam::ModelFormula f;
  f.treatment_effects = dummies;
  f.linear = std::move(vars);
  return f;
}

inline zigam::ModelFormula smooth_formula(const std::string& var, int k = 10) {
  zigam::ModelFormula f;
  f.treatment_effects = false;
  f.smooths.push_back(zigam::SmoothSpec::univariate(var, k));
  return f;
}

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "zigam_unit";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// Kolmogorov-Smirnov statistic of a sample against U(0, 1).
inline double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    d = std::max(d, static_cast<double>(k + 1) / n - p[k]);
    d = std::max(d, p[k] - static_cast<double>(k) / n);
  }
  return d;
}

// Asymptotic KS critical value at level 0.01.
inline double ks_critical_01(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

}  // namespace testutil
