#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zigam/dataset.hpp"
#include "zigam/splines.hpp"

namespace zigam {

// Right-hand side of an additive model. The response is implied by the
// fitter: the outcome difference for the continuous part, the zero
// indicator for the binomial part.
struct ModelFormula {
  bool intercept = true;
  // One indicator column per treated arm (labels 1..R-1).
  bool treatment_effects = true;
  std::vector<std::string> linear;
  // x * 1{D = r} for every treated arm r.
  std::vector<std::string> linear_by_treatment;
  // Categorical covariates stored as numeric codes; the smallest level is
  // the reference.
  std::vector<std::string> factors;
  std::vector<SmoothSpec> smooths;

  void validate() const;
  std::vector<std::string> covariates_used() const;
  bool operator==(const ModelFormula&) const = default;
};

enum class TermKind {
  Intercept,
  TreatmentDummy,
  Linear,
  LinearByTreatment,
  FactorLevel,
  Smooth,
};

struct Term {
  std::string name;
  TermKind kind = TermKind::Intercept;
  Eigen::Index first = 0;
  Eigen::Index cols = 1;
  int treatment = -1;     // arm for dummies and by-treatment terms
  int covariate = -1;     // covariate column (linear, factor, smooth margin)
  int covariate_y = -1;   // second tensor margin
  int by_covariate = -1;  // factor-by smooths
  double level = 0.0;     // factor level or by-factor level
  int smooth_index = -1;  // position in formula.smooths
  DesignBlock block;      // evaluation recipe; basis stored with zero rows
  std::vector<int> penalties;

  bool is_smooth() const { return kind == TermKind::Smooth; }
};

struct Penalty {
  Eigen::Index offset = 0;
  Eigen::MatrixXd matrix;
  int term = -1;
};

// A formula realized against training data: knots, constraints, factor
// levels and scaled penalties are frozen so that new rows are encoded the
// same way.
class ModelSchema {
 public:
  ModelFormula formula;
  std::vector<std::string> covariate_names;
  std::vector<std::string> treatment_labels;
  std::vector<Term> terms;
  std::vector<Penalty> penalties;
  Eigen::Index n_coef = 0;
  std::vector<std::string> warnings;

  // Realizes `formula` on the given rows of the sample and returns the
  // design matrix for those rows through `design`.
  static ModelSchema build(const ModelFormula& formula, const DiffSample& sample,
                           std::span<const std::size_t> rows,
                           Eigen::MatrixXd* design);

  Eigen::MatrixXd design(const Eigen::MatrixXd& covariates,
                         std::span<const int> treatment,
                         std::span<const std::size_t> rows,
                         std::vector<std::uint8_t>* clamped = nullptr) const;

  // Single row for covariate values x (aligned with covariate_names) under arm r.
  Eigen::RowVectorXd row(std::span<const double> x, int r,
                         bool* clamped = nullptr) const;

  const Term* find_term(const std::string& name) const;
  std::vector<int> smooth_term_ids() const;
};

}  // namespace zigam
