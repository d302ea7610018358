#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zigam/mixture.hpp"

namespace zigam {

struct EffectComponents {
  double one_minus_p_r = 0.0;
  double alpha_hat = 0.0;
  double p_diff = 0.0;  // p_r - p_0
  double mu0_hat = 0.0;
};

// (1 - p_r) * alpha - (p_r - p_0) * mu0, always evaluated in this order.
double assemble_effect(const EffectComponents& c);

struct EffectEstimate {
  std::string unit;
  std::size_t period_index = 0;
  long period = 0;
  int treatment = 0;
  // Reference arm: 0 for effects, r_b for contrasts.
  int reference = 0;
  double point = 0.0;
  EffectComponents components;
  double p_r = 0.0;
  double p_0 = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  bool pre_program = false;
  bool extrapolated = false;
};

// Expected effect of arm r against no treatment at covariates x.
EffectEstimate counterfactual_effect(const MixtureFit& fit, std::span<const double> x,
                                     int r, const std::string& unit = "");

// Effect of r_a relative to r_b. For r_b = 0 this is counterfactual_effect.
// Otherwise the components hold alpha_hat = (1-p_a) alpha_a - (1-p_b) alpha_b,
// p_diff = p_a - p_b and one_minus_p_r = 1, so the assembly identity still
// holds for the reported point.
EffectEstimate treatment_contrast(const MixtureFit& fit, std::span<const double> x,
                                  int r_a, int r_b, const std::string& unit = "");

// One estimate per fitted period; all periods must share formulas.
std::vector<EffectEstimate> effect_profile(std::span<const MixtureFit> fits,
                                           std::span<const double> x, int r,
                                           const std::string& unit = "",
                                           int reference = 0);

// Tidy CSV: unit,period,treatment,reference,point,lo,hi,components,flags.
std::string effects_csv(std::span<const EffectEstimate> estimates,
                        const std::vector<std::string>& treatment_labels);

}  // namespace zigam
