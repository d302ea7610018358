#include "zigam/effects.hpp"

#include <sstream>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

double assemble_effect(const EffectComponents& c) {
  const double gain = c.one_minus_p_r * c.alpha_hat;
  const double shift = c.p_diff * c.mu0_hat;
  return gain - shift;
}

EffectEstimate counterfactual_effect(const MixtureFit& fit, std::span<const double> x,
                                     int r, const std::string& unit) {
  if (r == 0) fail(ErrorKind::Usage, "the effect of the untreated arm against itself is zero by definition");
  bool c1 = false, c2 = false, c3 = false, c4 = false;
  const double p_r = predict_zero_prob(fit, x, r, &c1);
  const double p_0 = predict_zero_prob(fit, x, 0, &c2);
  const double m_r = predict_cont_mean(fit, x, r, &c3);
  const double m_0 = predict_cont_mean(fit, x, 0, &c4);
  EffectEstimate e;
  e.unit = unit;
  e.period_index = fit.period_index;
  e.period = fit.period;
  e.treatment = r;
  e.reference = 0;
  e.p_r = p_r;
  e.p_0 = p_0;
  e.components.one_minus_p_r = 1.0 - p_r;
  e.components.alpha_hat = m_r - m_0;
  e.components.p_diff = p_r - p_0;
  e.components.mu0_hat = m_0;
  e.point = assemble_effect(e.components);
  e.pre_program = fit.pre_program;
  e.extrapolated = c1 || c2 || c3 || c4;
  return e;
}

EffectEstimate treatment_contrast(const MixtureFit& fit, std::span<const double> x,
                                  int r_a, int r_b, const std::string& unit) {
  if (r_a == r_b) fail(ErrorKind::Usage, "a contrast needs two different treatment arms");
  if (r_b == 0) return counterfactual_effect(fit, x, r_a, unit);
  if (r_a == 0) fail(ErrorKind::Usage, "contrast against a treated reference needs a treated arm first");
  const auto a = counterfactual_effect(fit, x, r_a, unit);
  const auto b = counterfactual_effect(fit, x, r_b, unit);
  EffectEstimate e = a;
  e.reference = r_b;
  e.p_0 = b.p_r;
  e.components.one_minus_p_r = 1.0;
  e.components.alpha_hat = a.components.one_minus_p_r * a.components.alpha_hat -
                           b.components.one_minus_p_r * b.components.alpha_hat;
  e.components.p_diff = a.p_r - b.p_r;
  e.components.mu0_hat = a.components.mu0_hat;
  e.point = assemble_effect(e.components);
  e.extrapolated = a.extrapolated || b.extrapolated;
  return e;
}

std::vector<EffectEstimate> effect_profile(std::span<const MixtureFit> fits,
                                           std::span<const double> x, int r,
                                           const std::string& unit, int reference) {
  if (r == 0) fail(ErrorKind::Usage, "effect profile under the untreated arm is not defined");
  if (fits.empty()) fail(ErrorKind::Usage, "no fitted periods");
  for (const auto& f : fits) {
    if (!(f.cont_formula == fits[0].cont_formula) || !(f.zero_formula == fits[0].zero_formula))
      fail(ErrorKind::Usage, "periods were fitted with different formulas");
  }
  std::vector<EffectEstimate> out;
  out.reserve(fits.size());
  for (const auto& f : fits) out.push_back(treatment_contrast(f, x, r, reference, unit));
  return out;
}

std::string effects_csv(std::span<const EffectEstimate> estimates,
                        const std::vector<std::string>& labels) {
  auto label = [&](int r) {
    return r >= 0 && static_cast<std::size_t>(r) < labels.size() ? labels[static_cast<std::size_t>(r)]
                                                                  : std::to_string(r);
  };
  std::ostringstream ss;
  ss << "unit,period,treatment,reference,point,lo,hi,one_minus_p_r,alpha_hat,p_diff,mu0_hat,p_r,p_0,"
        "pre_program,extrapolated\n";
  for (const auto& e : estimates) {
    ss << e.unit << ',' << e.period << ',' << label(e.treatment) << ',' << label(e.reference) << ','
       << format_double(e.point) << ',' << (e.ci_low ? format_double(*e.ci_low) : "") << ','
       << (e.ci_high ? format_double(*e.ci_high) : "") << ',' << format_double(e.components.one_minus_p_r)
       << ',' << format_double(e.components.alpha_hat) << ',' << format_double(e.components.p_diff) << ','
       << format_double(e.components.mu0_hat) << ',' << format_double(e.p_r) << ',' << format_double(e.p_0)
       << ',' << (e.pre_program ? 1 : 0) << ',' << (e.extrapolated ? 1 : 0) << '\n';
  }
  return ss.str();
}

}  // namespace zigam
