#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>

#include "zigam/error.hpp"
#include "zigam/gam.hpp"

namespace zigam {

namespace {

double normal_two_sided(double z) {
  if (!std::isfinite(z)) return 0.0;
  const boost::math::normal_distribution<> nd;
  return 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(z)));
}

double chisq_upper(double x, double df) {
  if (!(x > 0)) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  const boost::math::chi_squared_distribution<> d(df);
  return boost::math::cdf(boost::math::complement(d, x));
}

double f_upper(double x, double df1, double df2) {
  if (!(x > 0)) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  const boost::math::fisher_f_distribution<> d(df1, df2);
  return boost::math::cdf(boost::math::complement(d, x));
}

}  // namespace

std::vector<TermTest> term_pvalues(const GamFit& fit) {
  if (fit.covariance.size() == 0)
    fail(ErrorKind::State, "term tests need the full covariance matrix");
  std::vector<TermTest> out;
  const double resid_df = static_cast<double>(fit.n_obs) - fit.total_edf;
  for (std::size_t t = 0; t < fit.schema.terms.size(); ++t) {
    const auto& term = fit.schema.terms[t];
    TermTest r;
    r.term = term.name;
    r.edf = fit.term_edf.empty() ? static_cast<double>(term.cols) : fit.term_edf[t];
    if (!term.is_smooth()) {
      r.estimate = fit.coefficients(term.first);
      r.se = std::sqrt(std::max(0.0, fit.covariance(term.first, term.first)));
      r.statistic = r.se > 0 ? r.estimate / r.se : (r.estimate == 0 ? 0.0 : INFINITY);
      r.p_value = r.se > 0 ? normal_two_sided(r.statistic) : (r.estimate == 0 ? 1.0 : 0.0);
      r.rank = 1;
      out.push_back(r);
      continue;
    }
    r.smooth = true;
    const Eigen::VectorXd b = fit.coefficients.segment(term.first, term.cols);
    const Eigen::MatrixXd v = fit.covariance.block(term.first, term.first, term.cols, term.cols);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    const auto& ev = es.eigenvalues();
    const auto rank = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::lround(r.edf)), 1, term.cols);
    double stat = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index k = term.cols - 1; k >= 0 && used < rank; --k, ++used) {
      if (!(ev(k) > 0)) break;
      const double proj = es.eigenvectors().col(k).dot(b);
      stat += proj * proj / ev(k);
    }
    if (used == 0) {
      r.p_value = 1.0;
      out.push_back(r);
      continue;
    }
    r.rank = static_cast<double>(used);
    if (fit.family == Family::BinomialLogit) {
      r.statistic = stat;
      r.p_value = chisq_upper(stat, r.rank);
    } else {
      r.statistic = stat / r.rank;
      r.p_value = f_upper(r.statistic, r.rank, std::max(resid_df, 1.0));
    }
    out.push_back(r);
  }
  return out;
}

AnovaResult approx_anova(const GamFit& restricted, const GamFit& general) {
  if (restricted.family != general.family)
    fail(ErrorKind::Usage, "models of different families are not nested");
  if (restricted.n_obs != general.n_obs)
    fail(ErrorKind::Usage, "models were fitted on different numbers of observations");
  for (const auto& t : restricted.schema.terms)
    if (!general.schema.find_term(t.name))
      fail(ErrorKind::Usage, "restricted model term '" + t.name + "' is absent from the general model");
  AnovaResult res;
  res.df = general.total_edf1 - restricted.total_edf1;
  res.df_residual = static_cast<double>(general.n_obs) - general.total_edf;
  const double ddev = restricted.deviance - general.deviance;
  const bool same_terms = restricted.schema.terms.size() == general.schema.terms.size();
  if (same_terms || !(res.df > 1e-8) || !(ddev > 0)) {
    res.test = general.family == Family::Gaussian ? "F" : "Chisq";
    res.statistic = 0.0;
    res.df = std::max(res.df, 0.0);
    res.p_value = 1.0;
    return res;
  }
  if (general.family == Family::Gaussian) {
    res.test = "F";
    res.statistic = (ddev / res.df) / (general.deviance / res.df_residual);
    res.p_value = f_upper(res.statistic, res.df, res.df_residual);
  } else {
    res.test = "Chisq";
    res.statistic = ddev;
    res.p_value = chisq_upper(ddev, res.df);
  }
  return res;
}

}  // namespace zigam
