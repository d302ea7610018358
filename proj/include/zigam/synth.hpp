#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zigam/dataset.hpp"

namespace zigam {

struct CovariateLaw {
  enum class Kind { Normal, Uniform, LogNormal };
  std::string name;
  Kind kind = Kind::Normal;
  // Normal: mean, sd. Uniform: low, high. LogNormal: meanlog, sdlog.
  double a = 0.0;
  double b = 1.0;
  bool round = false;  // integer-valued draws (counts)

  // Maps a raw value to the latent standard scale of its law.
  double standardize(double x) const;
};

// f(z) = constant + sum_c linear[c] z_c + sum_c sine[c] sin(z_c)
//        + product z_a z_b + bump exp(-(z_a^2 + z_b^2) / 2)
// on standardized covariates z. Missing vector entries count as zero.
struct FunctionSpec {
  double constant = 0.0;
  std::vector<double> linear;
  std::vector<double> sine;
  double product = 0.0;
  double bump = 0.0;
  int pair_a = 0;
  int pair_b = 1;

  double eval(std::span<const double> z) const;
};

struct Scenario {
  std::size_t n = 1000;
  long first_time = 0;
  std::size_t n_periods = 3;
  std::size_t t0_index = 0;
  std::size_t treatment_start_index = 1;
  std::vector<std::string> treatment_labels{"0", "1"};
  std::vector<CovariateLaw> covariates;
  double covariate_correlation = 0.0;

  // Multinomial logit assignment, arms 1..R-1 against arm 0:
  // score_r = assign_intercept[r] + assign_linear[r] . z + assign_slope[r] * phi2.
  std::vector<double> assign_intercept;
  std::vector<std::vector<double>> assign_linear;
  std::vector<double> assign_slope;
  // Units laid out on a square grid with treatment assigned in blocks of
  // block_size x block_size cells; neighbours share an edge.
  bool grid = false;
  std::size_t block_size = 3;

  // Outcome level at t0: covariate `level_covariate` when set, otherwise
  // N(level_mean, level_sd).
  std::string level_covariate;
  double level_mean = 20.0;
  double level_sd = 5.0;
  bool round_outcomes = false;

  // Baseline change mu_t(x) = mu_profile[t] * mu(z).
  FunctionSpec mu;
  std::vector<double> mu_profile;
  // Effects alpha_t^r(x) = alpha_profile[r][t] * alpha[r](z), zero before the
  // treatment start; entry 0 (untreated) is ignored.
  std::vector<FunctionSpec> alpha;
  std::vector<std::vector<double>> alpha_profile;

  // Zero mechanism: P(delta = 0) = logistic(zero_intercept[t] +
  // zero_shift[r] + zero_linear . z); the shift applies from the treatment
  // start on. A single intercept entry is used for every period.
  bool zero_enabled = true;
  std::vector<double> zero_intercept{-1.0};
  std::vector<double> zero_shift;
  std::vector<double> zero_linear;

  // Unit-specific slopes phi2 ~ N(0, slope_sd) entering as phi2 (t - t0).
  double slope_sd = 0.0;
  double noise_sd = 1.0;
  // Spillover added to treated-period changes by WD level (grid layouts).
  std::vector<FunctionSpec> spillover;

  std::uint64_t seed = 1;

  std::size_t n_treatments() const { return treatment_labels.size(); }
  void validate() const;
};

// Analytic ground truth of a scenario.
class TruthRecord {
 public:
  TruthRecord() = default;
  explicit TruthRecord(Scenario s) : scenario_(std::move(s)) {}

  const Scenario& scenario() const { return scenario_; }
  std::vector<double> standardize(std::span<const double> x) const;
  double zero_prob(std::span<const double> x, int r, std::size_t period_index) const;
  double alpha(std::span<const double> x, int r, std::size_t period_index) const;
  // E[delta | x, delta != 0] without treatment.
  double mu(std::span<const double> x, std::size_t period_index) const;

 private:
  Scenario scenario_;
};

// E[Y_t^r - Y_t^0 | x] assembled as (1 - pi_r) alpha - (pi_r - pi_0) mu.
// Spillover terms are not part of the truth.
double truth_effect(const TruthRecord& truth, std::span<const double> x, int r,
                    std::size_t period_index);

struct GeneratedPanel {
  PanelDataset data;
  TruthRecord truth;
  // potential[r](unit, period): outcome under arm r with common random numbers.
  std::vector<Eigen::MatrixXd> potential;
  std::vector<double> slopes;
  // Edges of the grid layout, empty otherwise.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<int> wd;  // WD level per unit on grid layouts
};

GeneratedPanel generate(const Scenario& scenario);

}  // namespace zigam
