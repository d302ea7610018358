#include "zigam/gam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "reml.hpp"
#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

std::string to_string(Family f) {
  return f == Family::Gaussian ? "gaussian" : "binomial-logit";
}

Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::Gaussian;
  if (s == "binomial-logit" || s == "binomial") return Family::BinomialLogit;
  fail(ErrorKind::Config, "unknown family '" + s + "'");
}

double GamFit::predict_link(const Eigen::RowVectorXd& row) const {
  if (row.size() != coefficients.size())
    fail(ErrorKind::Shape, "design row has " + std::to_string(row.size()) + " columns, fit has " +
                               std::to_string(coefficients.size()));
  return row.dot(coefficients);
}

Eigen::VectorXd GamFit::predict_link(const Eigen::MatrixXd& design) const {
  if (design.cols() != coefficients.size())
    fail(ErrorKind::Shape, "design matrix does not match the fitted coefficients");
  return design * coefficients;
}

double GamFit::se_link(const Eigen::RowVectorXd& row) const {
  if (covariance.size() == 0)
    fail(ErrorKind::State, "full covariance is not available for this fit");
  return std::sqrt(std::max(0.0, row.dot(covariance * row.transpose())));
}

double GamFit::coef_se(Eigen::Index k) const {
  if (covariance.size() > 0) return std::sqrt(std::max(0.0, covariance(k, k)));
  return std::sqrt(std::max(0.0, covariance_diag(k)));
}

Eigen::VectorXd solve_penalized(const PenalizedProblem& problem,
                                const Eigen::VectorXd& lambda) {
  if (lambda.size() != static_cast<Eigen::Index>(problem.penalties.size()))
    fail(ErrorKind::Shape, "need one smoothing parameter per penalty");
  if (problem.X.rows() != problem.y.size()) fail(ErrorKind::Shape, "X and y differ in length");
  const detail::PenaltyStructure ps(problem.penalties, problem.X.cols());
  Eigen::MatrixXd a = problem.X.transpose() * problem.X;
  ps.add_to(a, lambda);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, detail::conditioning_report(a));
  return llt.solve(problem.X.transpose() * problem.y);
}

namespace {

constexpr double kSeparationEta = 30.0;

struct IrlsState {
  Eigen::VectorXd beta;
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  double deviance = 0.0;
  double penalized_deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation = false;
};

double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  // -2 log-likelihood written on the logit scale for stability.
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = eta(i);
    const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += 2.0 * (log1pexp - y(i) * e);
  }
  return dev;
}

Eigen::VectorXd clamp_weights(const Eigen::VectorXd& mu) {
  Eigen::VectorXd w(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
  return w;
}

// Sqrt-weighted working design and response for the current linear predictor.
void working_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& eta, Eigen::MatrixXd& xw, Eigen::VectorXd& zw,
                  Eigen::VectorXd& w) {
  Eigen::VectorXd mu = eta.unaryExpr([](double e) { return inv_logit(e); });
  w = clamp_weights(mu);
  const Eigen::VectorXd sw = w.cwiseSqrt();
  xw = x.array().colwise() * sw.array();
  zw.resize(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) zw(i) = sw(i) * eta(i) + (y(i) - mu(i)) / sw(i);
}

IrlsState pirls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                const detail::PenaltyStructure& ps, const Eigen::VectorXd& lambda,
                const Eigen::VectorXd* start, int max_iter) {
  IrlsState st;
  const auto p = x.cols();
  if (start) {
    st.beta = *start;
    st.eta = x * st.beta;
  } else {
    st.beta = Eigen::VectorXd::Zero(p);
    st.eta = y.unaryExpr([](double v) { return logit((v + 0.5) / 2.0); });
  }
  auto pen_dev = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& e, double& dev) {
    dev = binomial_deviance(y, e);
    return dev + lambda.dot(ps.quad_forms(b));
  };
  double dev = 0.0;
  double pdev = start ? pen_dev(st.beta, st.eta, dev) : std::numeric_limits<double>::infinity();
  Eigen::MatrixXd xw;
  Eigen::VectorXd zw, w;
  for (int it = 0; it < max_iter; ++it) {
    st.iterations = it + 1;
    working_data(x, y, st.eta, xw, zw, w);
    Eigen::MatrixXd a = xw.transpose() * xw;
    ps.add_to(a, lambda);
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, detail::conditioning_report(a));
    Eigen::VectorXd beta_new = llt.solve(xw.transpose() * zw);
    Eigen::VectorXd eta_new = x * beta_new;
    double dev_new = 0.0;
    double pdev_new = pen_dev(beta_new, eta_new, dev_new);
    // Step halving when the penalized deviance increases.
    int halvings = 0;
    while (std::isfinite(pdev) && pdev_new > pdev + 1e-12 * std::abs(pdev) && halvings < 40) {
      beta_new = 0.5 * (beta_new + st.beta);
      eta_new = x * beta_new;
      pdev_new = pen_dev(beta_new, eta_new, dev_new);
      ++halvings;
    }
    const double step = (beta_new - st.beta).cwiseAbs().maxCoeff();
    const double rel = std::isfinite(pdev) ? std::abs(pdev - pdev_new) / (std::abs(pdev_new) + 0.1) : 1.0;
    st.beta = beta_new;
    st.eta = eta_new;
    dev = dev_new;
    pdev = pdev_new;
    if (step < 1e-8 || rel < 1e-10) {
      st.converged = true;
      break;
    }
  }
  st.mu = st.eta.unaryExpr([](double e) { return inv_logit(e); });
  st.deviance = dev;
  st.penalized_deviance = pdev;
  st.separation = st.eta.cwiseAbs().maxCoeff() > kSeparationEta;
  return st;
}

struct Prepared {
  ModelSchema schema;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Prepared prepare(const ModelFormula& formula, const DiffSample& sample,
                 std::span<const std::size_t> rows, Family family) {
  if (rows.empty())
    fail(ErrorKind::Data, family == Family::Gaussian
                              ? "no observations with a nonzero difference to fit the continuous part"
                              : "empty sample");
  Prepared p;
  p.schema = ModelSchema::build(formula, sample, rows, &p.X);
  p.y.resize(static_cast<Eigen::Index>(rows.size()));
  std::size_t zeros = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    if (family == Family::Gaussian) {
      p.y(static_cast<Eigen::Index>(k)) = sample.delta(static_cast<Eigen::Index>(i));
    } else {
      p.y(static_cast<Eigen::Index>(k)) = sample.is_zero[i] ? 1.0 : 0.0;
      zeros += sample.is_zero[i];
    }
  }
  if (family == Family::BinomialLogit && (zeros == 0 || zeros == rows.size()))
    fail(ErrorKind::Data, zeros == 0 ? "zero part needs both classes: no zero differences in the sample"
                                     : "zero part needs both classes: every difference is zero");
  return p;
}

// Fills covariance, EDF, scale, deviance and likelihood at given lambda/beta.
void finish_fit(GamFit& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                const detail::PenaltyStructure& ps, const Eigen::VectorXd& w) {
  const auto n = x.rows();
  Eigen::MatrixXd xtwx;
  if (w.size() == 0) {
    xtwx = x.transpose() * x;
  } else {
    const Eigen::MatrixXd xw = x.array().colwise() * w.cwiseSqrt().array();
    xtwx = xw.transpose() * xw;
  }
  Eigen::MatrixXd a = xtwx;
  ps.add_to(a, fit.lambda);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, detail::conditioning_report(a));
  const Eigen::MatrixXd ainv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  const Eigen::MatrixXd f = ainv * xtwx;
  fit.coef_edf = f.diagonal();
  fit.total_edf = fit.coef_edf.sum();
  fit.total_edf1 = 2.0 * fit.total_edf - f.cwiseProduct(f.transpose()).sum();
  fit.term_edf.assign(fit.schema.terms.size(), 0.0);
  for (std::size_t t = 0; t < fit.schema.terms.size(); ++t) {
    const auto& term = fit.schema.terms[t];
    fit.term_edf[t] = fit.coef_edf.segment(term.first, term.cols).sum();
  }
  const Eigen::VectorXd eta = x * fit.coefficients;
  fit.n_obs = n;
  if (fit.family == Family::Gaussian) {
    const double rss = (y - eta).squaredNorm();
    fit.deviance = rss;
    const double resid_df = static_cast<double>(n) - fit.total_edf;
    if (!(resid_df > 0)) fail(ErrorKind::Numerical, "no residual degrees of freedom left for the scale estimate");
    fit.scale = rss / resid_df;
    const double sigma2 = std::max(fit.scale, std::numeric_limits<double>::min());
    fit.log_likelihood = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * sigma2) - rss / (2.0 * sigma2);
  } else {
    fit.deviance = binomial_deviance(y, eta);
    fit.scale = 1.0;
    fit.log_likelihood = -0.5 * fit.deviance;
  }
  fit.covariance = ainv * fit.scale;
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
  fit.covariance_diag = fit.covariance.diagonal();
}

double laplace_score(const Eigen::MatrixXd& x, const detail::PenaltyStructure& ps,
                     const Eigen::VectorXd& lambda, const IrlsState& st) {
  Eigen::VectorXd w = clamp_weights(st.mu);
  const Eigen::MatrixXd xw = x.array().colwise() * w.cwiseSqrt().array();
  Eigen::MatrixXd a = xw.transpose() * xw;
  ps.add_to(a, lambda);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, detail::conditioning_report(a));
  double log_det_a = 0.0;
  const Eigen::MatrixXd& l = llt.matrixLLT();
  for (Eigen::Index k = 0; k < a.rows(); ++k) log_det_a += 2.0 * std::log(l(k, k));
  const double log_det_s = ps.log_pdet(lambda, nullptr);
  return 0.5 * st.penalized_deviance + 0.5 * log_det_a - 0.5 * log_det_s -
         0.5 * static_cast<double>(ps.null_dim()) * std::log(2.0 * std::numbers::pi);
}

detail::OptimizeResult run_starts(const detail::WorkingModel& wm, const std::vector<Eigen::VectorXd>& starts,
                                  const FitOptions& options, std::vector<StartDiagnostics>* diag) {
  auto objective = [&](const Eigen::VectorXd& rho, double& value, Eigen::VectorXd& grad) {
    const auto ev = detail::evaluate_reml(wm, rho, true);
    if (!ev.ok) return false;
    value = ev.score;
    grad = ev.gradient;
    return true;
  };
  detail::OptimizeResult best;
  bool have = false;
  for (const auto& s : starts) {
    auto r = detail::minimize_box(objective, s, options.log_lambda_min, options.log_lambda_max,
                                  options.reml_tolerance, options.max_optimizer_iterations);
    const bool usable = std::isfinite(r.value) && r.message != "objective not evaluable at the start";
    if (diag) {
      StartDiagnostics d;
      d.start = s;
      d.log_lambda = r.rho;
      d.score = r.value;
      d.iterations = r.iterations;
      d.converged = r.converged;
      d.message = r.message;
      diag->push_back(std::move(d));
    }
    if (usable && (!have || r.value < best.value)) {
      best = r;
      have = true;
    }
  }
  if (!have) {
    std::ostringstream ss;
    ss << "REML optimization failed from every start";
    if (diag)
      for (const auto& d : *diag) ss << "; start " << d.start.transpose() << ": " << d.message;
    fail(ErrorKind::Convergence, ss.str());
  }
  return best;
}

std::vector<Eigen::VectorXd> start_vectors(const FitOptions& options, Eigen::Index m) {
  std::vector<Eigen::VectorXd> out;
  for (double s : options.log_lambda_starts) out.push_back(Eigen::VectorXd::Constant(m, s));
  if (out.empty()) out.push_back(Eigen::VectorXd::Zero(m));
  return out;
}

void check_lambda(const Eigen::VectorXd& lambda, std::size_t n_pen) {
  if (lambda.size() != static_cast<Eigen::Index>(n_pen))
    fail(ErrorKind::Config, "model has " + std::to_string(n_pen) + " penalties but " +
                                std::to_string(lambda.size()) + " smoothing parameters were supplied");
  for (Eigen::Index j = 0; j < lambda.size(); ++j)
    if (!(lambda(j) > 0) || !std::isfinite(lambda(j)))
      fail(ErrorKind::Config, "smoothing parameters must be positive and finite");
}

GamFit fit_gaussian_prepared(Prepared& p, const FitOptions& options) {
  GamFit fit;
  fit.family = Family::Gaussian;
  fit.schema = std::move(p.schema);
  fit.warnings = fit.schema.warnings;
  const detail::PenaltyStructure ps(fit.schema.penalties, fit.schema.n_coef);
  const detail::WorkingModel wm(p.X, p.y, ps, true);
  const auto m = static_cast<Eigen::Index>(ps.size());
  Eigen::VectorXd rho;
  if (options.lambda) {
    check_lambda(*options.lambda, ps.size());
    rho = options.lambda->array().log();
    fit.lambda_fixed = true;
  } else if (m == 0) {
    rho = Eigen::VectorXd(0);
  } else {
    auto best = run_starts(wm, start_vectors(options, m), options, &fit.starts);
    rho = best.rho;
    fit.iterations = best.iterations;
    if (!best.converged) fit.warnings.push_back("REML optimizer stopped: " + best.message);
  }
  const auto ev = detail::evaluate_reml(wm, rho, false);
  if (!ev.ok) fail(ErrorKind::Numerical, ev.message);
  fit.lambda = rho.array().exp();
  fit.coefficients = ev.beta;
  fit.reml_score = ev.score;
  finish_fit(fit, p.X, p.y, ps, Eigen::VectorXd());
  return fit;
}

GamFit fit_binomial_prepared(Prepared& p, const FitOptions& options) {
  GamFit fit;
  fit.family = Family::BinomialLogit;
  fit.schema = std::move(p.schema);
  fit.warnings = fit.schema.warnings;
  const detail::PenaltyStructure ps(fit.schema.penalties, fit.schema.n_coef);
  const auto m = static_cast<Eigen::Index>(ps.size());
  Eigen::VectorXd rho;
  IrlsState st;
  if (options.lambda || m == 0) {
    if (options.lambda) {
      check_lambda(*options.lambda, ps.size());
      rho = options.lambda->array().log();
      fit.lambda_fixed = true;
    } else {
      rho = Eigen::VectorXd(0);
    }
    st = pirls(p.X, p.y, ps, rho.array().exp(), nullptr, options.max_irls_iterations);
  } else {
    // Performance iteration: select lambda on the working linear model,
    // update the working model, repeat until lambda and beta settle.
    Eigen::VectorXd eta = p.y.unaryExpr([](double v) { return logit((v + 0.5) / 2.0); });
    Eigen::MatrixXd xw;
    Eigen::VectorXd zw, w, beta;
    bool first = true;
    bool settled = false;
    double prev_dev = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
      working_data(p.X, p.y, eta, xw, zw, w);
      const detail::WorkingModel wm(xw, zw, ps, false);
      std::vector<StartDiagnostics> diag;
      const auto starts = first ? start_vectors(options, m) : std::vector<Eigen::VectorXd>{rho};
      auto best = run_starts(wm, starts, options, first ? &fit.starts : &diag);
      const auto ev = detail::evaluate_reml(wm, best.rho, false);
      if (!ev.ok) fail(ErrorKind::Numerical, ev.message);
      const double drho = first ? std::numeric_limits<double>::infinity()
                                : (best.rho - rho).cwiseAbs().maxCoeff();
      rho = best.rho;
      beta = ev.beta;
      eta = p.X * beta;
      const double dev = binomial_deviance(p.y, eta);
      fit.iterations = outer + 1;
      const double rel = std::abs(dev - prev_dev) / (std::abs(dev) + 0.1);
      prev_dev = dev;
      first = false;
      if (drho < 1e-3 && rel < 1e-8) {
        settled = true;
        break;
      }
    }
    if (!settled) fit.warnings.push_back("smoothing parameter iteration did not settle; last value used");
    st = pirls(p.X, p.y, ps, rho.array().exp(), &beta, options.max_irls_iterations);
  }
  if (!st.converged) {
    std::ostringstream ss;
    ss << "penalized IRLS did not converge in " << st.iterations
       << " iterations (penalized deviance " << st.penalized_deviance << ")";
    fail(ErrorKind::Convergence, ss.str());
  }
  if (st.separation)
    fit.warnings.push_back("possible separation: |linear predictor| exceeds " + format_double(kSeparationEta) +
                           "; penalized estimate returned");
  fit.lambda = rho.array().exp();
  fit.coefficients = st.beta;
  fit.reml_score = laplace_score(p.X, ps, fit.lambda, st);
  finish_fit(fit, p.X, p.y, ps, clamp_weights(st.mu));
  return fit;
}

}  // namespace

GamFit fit_gam(const ModelFormula& formula, const DiffSample& sample,
               std::span<const std::size_t> rows, Family family,
               const FitOptions& options) {
  auto p = prepare(formula, sample, rows, family);
  return family == Family::Gaussian ? fit_gaussian_prepared(p, options)
                                    : fit_binomial_prepared(p, options);
}

GamFit fit_gaussian(const ModelFormula& formula, const DiffSample& sample,
                    const FitOptions& options) {
  const auto rows = sample.nonzero_rows();
  return fit_gam(formula, sample, rows, Family::Gaussian, options);
}

GamFit fit_binomial_logit(const ModelFormula& formula, const DiffSample& sample,
                          const FitOptions& options) {
  const auto rows = sample.all_rows();
  return fit_gam(formula, sample, rows, Family::BinomialLogit, options);
}

GamFit optimize_reml(const ModelFormula& formula, const DiffSample& sample,
                     Family family, const FitOptions& options) {
  FitOptions opts = options;
  opts.lambda.reset();
  return family == Family::Gaussian ? fit_gaussian(formula, sample, opts)
                                    : fit_binomial_logit(formula, sample, opts);
}

double reml_score(const Eigen::VectorXd& lambda, const ModelFormula& formula,
                  const DiffSample& sample, Family family) {
  const auto rows = family == Family::Gaussian ? sample.nonzero_rows() : sample.all_rows();
  auto p = prepare(formula, sample, rows, family);
  const detail::PenaltyStructure ps(p.schema.penalties, p.schema.n_coef);
  check_lambda(lambda, ps.size());
  if (family == Family::Gaussian) {
    const detail::WorkingModel wm(p.X, p.y, ps, true);
    const auto ev = detail::evaluate_reml(wm, lambda.array().log(), false);
    if (!ev.ok) fail(ErrorKind::Numerical, ev.message);
    return ev.score;
  }
  const auto st = pirls(p.X, p.y, ps, lambda, nullptr, 100);
  return laplace_score(p.X, ps, lambda, st);
}

Eigen::VectorXd reml_gradient(const Eigen::VectorXd& lambda, const ModelFormula& formula,
                              const DiffSample& sample) {
  const auto rows = sample.nonzero_rows();
  auto p = prepare(formula, sample, rows, Family::Gaussian);
  const detail::PenaltyStructure ps(p.schema.penalties, p.schema.n_coef);
  check_lambda(lambda, ps.size());
  const detail::WorkingModel wm(p.X, p.y, ps, true);
  const auto ev = detail::evaluate_reml(wm, lambda.array().log(), true);
  if (!ev.ok) fail(ErrorKind::Numerical, ev.message);
  return ev.gradient;
}

}  // namespace zigam
