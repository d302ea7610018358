#include "reml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "zigam/error.hpp"

namespace zigam::detail {

PenaltyStructure::PenaltyStructure(const std::vector<Penalty>& penalties,
                                   Eigen::Index n_coef)
    : penalties_(penalties) {
  std::map<int, std::size_t> by_term;
  for (std::size_t j = 0; j < penalties_.size(); ++j) {
    const auto& p = penalties_[j];
    auto it = by_term.find(p.term);
    if (it == by_term.end()) {
      Block b;
      b.offset = p.offset;
      b.size = p.matrix.rows();
      by_term[p.term] = blocks_.size();
      blocks_.push_back(b);
      it = by_term.find(p.term);
    }
    auto& b = blocks_[it->second];
    if (b.offset != p.offset || b.size != p.matrix.rows())
      fail(ErrorKind::Shape, "penalties of one term must share a coefficient block");
    b.ids.push_back(static_cast<int>(j));
  }
  Eigen::Index penalized_rank = 0;
  for (auto& b : blocks_) {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(b.size, b.size);
    for (int id : b.ids) sum += penalties_[static_cast<std::size_t>(id)].matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sum);
    const auto& ev = es.eigenvalues();
    const double tol = 1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    b.rank = 0;
    b.log_pdet_unit = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      if (ev(k) > tol) {
        ++b.rank;
        b.log_pdet_unit += std::log(ev(k));
      }
    }
    penalized_rank += b.rank;
  }
  null_dim_ = n_coef - penalized_rank;
}

double PenaltyStructure::log_pdet(const Eigen::VectorXd& lambda,
                                  Eigen::VectorXd* dlog) const {
  if (dlog) dlog->setZero(static_cast<Eigen::Index>(penalties_.size()));
  double total = 0.0;
  for (const auto& b : blocks_) {
    if (b.ids.size() == 1) {
      const int j = b.ids[0];
      total += static_cast<double>(b.rank) * std::log(lambda(j)) + b.log_pdet_unit;
      if (dlog) (*dlog)(j) = static_cast<double>(b.rank);
      continue;
    }
    // Scale by the largest lambda to keep the eigen-solve well conditioned.
    double lmax = 0.0;
    for (int id : b.ids) lmax = std::max(lmax, lambda(id));
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(b.size, b.size);
    for (int id : b.ids) sum += (lambda(id) / lmax) * penalties_[static_cast<std::size_t>(id)].matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sum);
    const auto& ev = es.eigenvalues();
    const auto& u = es.eigenvectors();
    const Eigen::Index first = b.size - b.rank;  // eigenvalues ascend
    double floor = std::numeric_limits<double>::min();
    for (Eigen::Index k = first; k < b.size; ++k)
      total += std::log(std::max(ev(k), floor)) + std::log(lmax);
    if (dlog) {
      const Eigen::MatrixXd ur = u.rightCols(b.rank);
      Eigen::VectorXd inv = ev.tail(b.rank).cwiseMax(floor).cwiseInverse();
      const Eigen::MatrixXd pinv = ur * inv.asDiagonal() * ur.transpose();
      for (int id : b.ids) {
        const auto& s = penalties_[static_cast<std::size_t>(id)].matrix;
        (*dlog)(id) = (lambda(id) / lmax) * (pinv.cwiseProduct(s)).sum();
      }
    }
  }
  return total;
}

void PenaltyStructure::add_to(Eigen::MatrixXd& a, const Eigen::VectorXd& lambda) const {
  for (std::size_t j = 0; j < penalties_.size(); ++j) {
    const auto& p = penalties_[j];
    a.block(p.offset, p.offset, p.matrix.rows(), p.matrix.cols()) +=
        lambda(static_cast<Eigen::Index>(j)) * p.matrix;
  }
}

Eigen::VectorXd PenaltyStructure::quad_forms(const Eigen::VectorXd& beta) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(penalties_.size()));
  for (std::size_t j = 0; j < penalties_.size(); ++j) {
    const auto& p = penalties_[j];
    const auto b = beta.segment(p.offset, p.matrix.rows());
    out(static_cast<Eigen::Index>(j)) = b.dot(p.matrix * b);
  }
  return out;
}

Eigen::VectorXd PenaltyStructure::traces(const Eigen::MatrixXd& m) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(penalties_.size()));
  for (std::size_t j = 0; j < penalties_.size(); ++j) {
    const auto& p = penalties_[j];
    const auto q = p.matrix.rows();
    out(static_cast<Eigen::Index>(j)) = m.block(p.offset, p.offset, q, q).cwiseProduct(p.matrix).sum();
  }
  return out;
}

WorkingModel::WorkingModel(const Eigen::MatrixXd& x, const Eigen::VectorXd& yv,
                           const PenaltyStructure& ps, bool profiled)
    : X(&x), y(&yv), penalties(&ps), profiled_scale(profiled) {
  XtX = x.transpose() * x;
  Xty = x.transpose() * yv;
}

std::string conditioning_report(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  std::ostringstream ss;
  ss << "penalized normal equations not positive definite (p=" << a.rows()
     << ", eigenvalues in [" << ev.minCoeff() << ", " << ev.maxCoeff() << "]";
  if (ev.minCoeff() > 0) ss << ", condition number " << ev.maxCoeff() / ev.minCoeff();
  ss << ")";
  return ss.str();
}

RemlEval evaluate_reml(const WorkingModel& model, const Eigen::VectorXd& rho,
                       bool want_gradient) {
  RemlEval out;
  const auto& ps = *model.penalties;
  const Eigen::VectorXd lambda = rho.array().exp();
  Eigen::MatrixXd a = model.XtX;
  ps.add_to(a, lambda);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    out.message = conditioning_report(a);
    return out;
  }
  out.beta = llt.solve(model.Xty);
  const Eigen::VectorXd quad = ps.quad_forms(out.beta);
  const double rss = (*model.y - *model.X * out.beta).squaredNorm();
  const double dp = rss + lambda.dot(quad);
  out.penalized_rss = dp;
  double log_det_a = 0.0;
  const Eigen::MatrixXd& lmat = llt.matrixLLT();
  for (Eigen::Index k = 0; k < a.rows(); ++k) log_det_a += 2.0 * std::log(lmat(k, k));
  Eigen::VectorXd dlog;
  const double log_det_s = ps.log_pdet(lambda, want_gradient ? &dlog : nullptr);
  const double n = static_cast<double>(model.X->rows());
  const double nu = n - static_cast<double>(ps.null_dim());
  if (model.profiled_scale) {
    if (!(nu > 0)) {
      out.message = "too few observations for the unpenalized space";
      return out;
    }
    const double phi = std::max(dp, std::numeric_limits<double>::min()) / nu;
    out.score = 0.5 * nu * (1.0 + std::log(2.0 * std::numbers::pi * phi)) + 0.5 * log_det_a - 0.5 * log_det_s;
  } else {
    out.score = 0.5 * dp + 0.5 * log_det_a - 0.5 * log_det_s;
  }
  if (want_gradient && ps.size() > 0) {
    const Eigen::MatrixXd ainv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    const Eigen::VectorXd tr = ps.traces(ainv);
    const double dscale = model.profiled_scale ? nu / std::max(dp, std::numeric_limits<double>::min()) : 1.0;
    out.gradient = 0.5 * dscale * lambda.cwiseProduct(quad) + 0.5 * lambda.cwiseProduct(tr) - 0.5 * dlog;
  } else {
    out.gradient = Eigen::VectorXd::Zero(rho.size());
  }
  out.ok = std::isfinite(out.score);
  if (!out.ok) out.message = "REML score is not finite";
  return out;
}

OptimizeResult minimize_box(
    const std::function<bool(const Eigen::VectorXd&, double&, Eigen::VectorXd&)>& f,
    Eigen::VectorXd rho, double lo, double hi, double tol, int max_iter) {
  OptimizeResult res;
  const auto d = rho.size();
  rho = rho.cwiseMax(lo).cwiseMin(hi);
  double fx = 0.0;
  Eigen::VectorXd g;
  if (!f(rho, fx, g)) {
    res.rho = rho;
    res.message = "objective not evaluable at the start";
    return res;
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
  auto projected = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
    Eigen::VectorXd pg = grad;
    for (Eigen::Index k = 0; k < d; ++k) {
      if ((x(k) <= lo && grad(k) > 0) || (x(k) >= hi && grad(k) < 0)) pg(k) = 0.0;
    }
    return pg;
  };
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const Eigen::VectorXd pg = projected(rho, g);
    if (pg.cwiseAbs().maxCoeff() < 1e-6) {
      res.converged = true;
      res.message = "gradient below tolerance";
      break;
    }
    Eigen::VectorXd dir = -(h * pg);
    for (Eigen::Index k = 0; k < d; ++k)
      if (pg(k) == 0.0) dir(k) = 0.0;
    if (dir.dot(pg) >= 0) {
      h.setIdentity();
      dir = -pg;
    }
    const double maxstep = dir.cwiseAbs().maxCoeff();
    if (maxstep > 5.0) dir *= 5.0 / maxstep;
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd xn, gn;
    double fn = 0.0;
    for (int bt = 0; bt < 40; ++bt) {
      xn = (rho + step * dir).cwiseMax(lo).cwiseMin(hi);
      if (f(xn, fn, gn) && fn <= fx + 1e-4 * g.dot(xn - rho)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;
      res.message = "no further decrease along the search direction";
      break;
    }
    const Eigen::VectorXd s = xn - rho;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    const double change = fx - fn;
    rho = xn;
    fx = fn;
    g = gn;
    if (sy > 1e-12) {
      const double r = 1.0 / sy;
      const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(d, d);
      h = (i - r * s * yv.transpose()) * h * (i - r * yv * s.transpose()) + r * s * s.transpose();
    }
    if (change < tol * (1.0 + std::abs(fx)) && s.cwiseAbs().maxCoeff() < 1e-3) {
      res.converged = true;
      res.message = "score change below tolerance";
      break;
    }
  }
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.rho = rho;
  res.value = fx;
  return res;
}

}  // namespace zigam::detail
