#include "zigam/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

ModelFormula drop_covariate(const ModelFormula& formula, const std::string& covariate) {
  ModelFormula out = formula;
  auto erase = [&](std::vector<std::string>& v) { std::erase(v, covariate); };
  erase(out.linear);
  erase(out.linear_by_treatment);
  erase(out.factors);
  std::erase_if(out.smooths, [&](const SmoothSpec& s) {
    return s.covariate == covariate || s.covariate_y == covariate ||
           (s.by == SmoothSpec::By::Factor && s.by_covariate == covariate);
  });
  return out;
}

namespace {

// Smallest p-value among the terms touching each candidate variable.
std::vector<double> variable_pvalues(const GamFit& fit, const std::vector<std::string>& candidates) {
  std::vector<double> out(candidates.size(), 1.0);
  const auto tests = term_pvalues(fit);
  const auto& names = fit.schema.covariate_names;
  auto name_of = [&](int idx) { return idx >= 0 ? names[static_cast<std::size_t>(idx)] : std::string(); };
  for (std::size_t t = 0; t < fit.schema.terms.size(); ++t) {
    const auto& term = fit.schema.terms[t];
    if (term.kind == TermKind::Intercept || term.kind == TermKind::TreatmentDummy) continue;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto& v = candidates[c];
      if (name_of(term.covariate) == v || name_of(term.covariate_y) == v || name_of(term.by_covariate) == v)
        out[c] = std::min(out[c], tests[t].p_value);
    }
  }
  return out;
}

}  // namespace

SelectionReport backward_select(const PanelDataset& data, const ModelFormula& base, ModelPart part,
                                std::size_t t0_index, const SelectionOptions& options) {
  if (!(options.threshold > 0 && options.threshold < 1))
    fail(ErrorKind::Config, "selection threshold must lie in (0, 1)");
  SelectionReport report;
  report.threshold = options.threshold;
  report.candidates = base.covariates_used();
  if (report.candidates.empty()) fail(ErrorKind::Config, "backward selection needs at least one candidate variable");
  for (const auto& f : options.force_include)
    if (std::find(report.candidates.begin(), report.candidates.end(), f) == report.candidates.end())
      fail(ErrorKind::Config, "forced variable '" + f + "' is not in the model");
  const auto samples = build_diff_samples(data, t0_index);
  for (const auto& s : samples) report.periods.push_back(s.period);
  const auto n_cand = report.candidates.size();
  report.per_period_pvalues = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n_cand),
                                                    static_cast<Eigen::Index>(samples.size()));
  const Family family = part == ModelPart::Zero ? Family::BinomialLogit : Family::Gaussian;

  ModelFormula current = base;
  std::vector<std::string> active = report.candidates;
  for (;;) {
    std::vector<std::vector<double>> pv(samples.size());
    std::vector<std::vector<std::string>> warns(samples.size());
    parallel_for(samples.size(), options.workers, [&](std::size_t k) {
      const auto fit = family == Family::Gaussian ? fit_gaussian(current, samples[k], options.fit)
                                                  : fit_binomial_logit(current, samples[k], options.fit);
      pv[k] = variable_pvalues(fit, active);
      warns[k] = fit.warnings;
    });
    for (std::size_t k = 0; k < samples.size(); ++k)
      for (const auto& w : warns[k]) report.warnings.push_back("period " + std::to_string(samples[k].period) + ": " + w);
    std::vector<double> min_p(active.size(), 1.0), max_p(active.size(), 0.0);
    for (std::size_t c = 0; c < active.size(); ++c) {
      const auto pos = static_cast<Eigen::Index>(
          std::find(report.candidates.begin(), report.candidates.end(), active[c]) - report.candidates.begin());
      for (std::size_t k = 0; k < samples.size(); ++k) {
        report.per_period_pvalues(pos, static_cast<Eigen::Index>(k)) = pv[k][c];
        min_p[c] = std::min(min_p[c], pv[k][c]);
        max_p[c] = std::max(max_p[c], pv[k][c]);
      }
    }
    int worst = -1;
    for (std::size_t c = 0; c < active.size(); ++c) {
      const auto& name = active[c];
      if (std::find(options.force_include.begin(), options.force_include.end(), name) != options.force_include.end())
        continue;
      if (!(min_p[c] > options.threshold)) continue;
      if (worst < 0) {
        worst = static_cast<int>(c);
        continue;
      }
      const auto w = static_cast<std::size_t>(worst);
      // p-values equal up to rounding count as tied.
      const bool tied = std::abs(min_p[c] - min_p[w]) <= 1e-9 * std::max(min_p[c], min_p[w]);
      if ((!tied && min_p[c] > min_p[w]) || (tied && name > active[w])) worst = static_cast<int>(c);
    }
    if (worst < 0) break;
    const auto w = static_cast<std::size_t>(worst);
    report.dropped.push_back({active[w], min_p[w], max_p[w]});
    current = drop_covariate(current, active[w]);
    active.erase(active.begin() + worst);
    if (active.empty()) break;
  }
  report.retained = active;
  return report;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd metric_points(const Eigen::MatrixXd& points, Metric metric) {
  if (metric == Metric::Euclidean) return points;
  Eigen::MatrixXd z = points;
  const auto n = static_cast<double>(points.rows());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mean = z.col(j).mean();
    const double var = n > 1 ? (z.col(j).array() - mean).square().sum() / (n - 1) : 0.0;
    z.col(j).array() -= mean;
    if (var > 0) z.col(j) /= std::sqrt(var);
  }
  return z;
}

class Distances {
 public:
  explicit Distances(const Eigen::MatrixXd& z) : z_(z) {
    const auto n = z.rows();
    if (n <= kCacheLimit) {
      cache_.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) cache_(i, j) = cache_(j, i) = compute(i, j);
    }
  }
  double operator()(Eigen::Index i, Eigen::Index j) const {
    return cache_.size() > 0 ? cache_(i, j) : compute(i, j);
  }

 private:
  static constexpr Eigen::Index kCacheLimit = 4000;
  double compute(Eigen::Index i, Eigen::Index j) const { return (z_.row(i) - z_.row(j)).norm(); }
  const Eigen::MatrixXd& z_;
  Eigen::MatrixXd cache_;
};

}  // namespace

double medoid_cost(const Eigen::MatrixXd& points, std::span<const std::size_t> medoids, Metric metric) {
  const Eigen::MatrixXd z = metric_points(points, metric);
  double cost = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (auto m : medoids) best = std::min(best, (z.row(i) - z.row(static_cast<Eigen::Index>(m))).norm());
    cost += best;
  }
  return cost;
}

MedoidSet kmedoids(const Eigen::MatrixXd& points, int k, Metric metric, std::uint64_t seed,
                   std::span<const std::string> ids) {
  const auto n = points.rows();
  if (k < 1) fail(ErrorKind::Usage, "k must be at least 1");
  if (k > n) fail(ErrorKind::Usage, "k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " points");
  if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != n)
    fail(ErrorKind::Shape, "one identifier per point is required");
  const Eigen::MatrixXd z = metric_points(points, metric);
  const Distances d(z);
  MedoidSet out;
  out.k = k;
  out.metric = metric;
  out.seed = seed;

  std::vector<char> is_medoid(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> med;
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

  // BUILD
  for (int step = 0; step < k; ++step) {
    Eigen::Index best = -1;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < n; ++c) {
      if (is_medoid[static_cast<std::size_t>(c)]) continue;
      double gain = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double dj = d(c, j);
        const double cur = nearest[static_cast<std::size_t>(j)];
        gain += std::isinf(cur) ? -dj : std::max(cur - dj, 0.0);
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
    }
    is_medoid[static_cast<std::size_t>(best)] = 1;
    med.push_back(best);
    for (Eigen::Index j = 0; j < n; ++j)
      nearest[static_cast<std::size_t>(j)] = std::min(nearest[static_cast<std::size_t>(j)], d(best, j));
  }

  std::vector<double> first(static_cast<std::size_t>(n)), second(static_cast<std::size_t>(n));
  std::vector<int> owner(static_cast<std::size_t>(n));
  auto assign = [&]() {
    double cost = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double b1 = std::numeric_limits<double>::infinity(), b2 = b1;
      int o = 0;
      for (int m = 0; m < k; ++m) {
        const double dj = d(med[static_cast<std::size_t>(m)], j);
        if (dj < b1) {
          b2 = b1;
          b1 = dj;
          o = m;
        } else if (dj < b2) {
          b2 = dj;
        }
      }
      first[static_cast<std::size_t>(j)] = b1;
      second[static_cast<std::size_t>(j)] = b2;
      owner[static_cast<std::size_t>(j)] = o;
      cost += b1;
    }
    return cost;
  };
  double cost = assign();
  out.cost_trace.push_back(cost);

  // SWAP
  for (;;) {
    double best_delta = 0.0;
    int best_m = -1;
    Eigen::Index best_h = -1;
    for (int m = 0; m < k; ++m) {
      for (Eigen::Index h = 0; h < n; ++h) {
        if (is_medoid[static_cast<std::size_t>(h)]) continue;
        double delta = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const auto ju = static_cast<std::size_t>(j);
          const double dh = d(h, j);
          if (owner[ju] == m) {
            delta += std::min(second[ju], dh) - first[ju];
          } else if (dh < first[ju]) {
            delta += dh - first[ju];
          }
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_m = m;
          best_h = h;
        }
      }
    }
    if (best_m < 0 || best_delta > -1e-12 * (1.0 + cost)) break;
    is_medoid[static_cast<std::size_t>(med[static_cast<std::size_t>(best_m)])] = 0;
    med[static_cast<std::size_t>(best_m)] = best_h;
    is_medoid[static_cast<std::size_t>(best_h)] = 1;
    cost = assign();
    out.cost_trace.push_back(cost);
  }

  double subsets = 1.0;
  for (int j = 0; j < k; ++j) subsets = subsets * static_cast<double>(n - j) / static_cast<double>(j + 1);
  if (subsets <= kMaxEnumeration) {
    out.enumerated = true;
    std::vector<char> pick(static_cast<std::size_t>(n), 0);
    std::fill(pick.begin(), pick.begin() + k, 1);
    std::vector<Eigen::Index> best_set;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      std::vector<Eigen::Index> set;
      for (Eigen::Index i = 0; i < n; ++i)
        if (pick[static_cast<std::size_t>(i)]) set.push_back(i);
      double c = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        double b = std::numeric_limits<double>::infinity();
        for (auto m : set) b = std::min(b, d(m, j));
        c += b;
      }
      if (c < best_cost) {
        best_cost = c;
        best_set = std::move(set);
      }
    } while (std::prev_permutation(pick.begin(), pick.end()));
    if (best_cost < cost - 1e-12 * (1.0 + cost)) {
      out.improved_by_enumeration = true;
      med = best_set;
      cost = assign();
      out.cost_trace.push_back(cost);
    }
  }

  out.total_cost = cost;
  for (auto m : med) {
    out.medoids.push_back(static_cast<std::size_t>(m));
    out.medoid_units.push_back(ids.empty() ? std::to_string(m) : ids[static_cast<std::size_t>(m)]);
  }
  out.assignments.assign(owner.begin(), owner.end());
  return out;
}

MedoidProfile profile_medoids(const PanelDataset& data, const MedoidSet& medoids,
                              std::span<const std::string> covariates) {
  MedoidProfile p;
  if (covariates.empty()) {
    p.covariate_names = data.covariate_names();
  } else {
    p.covariate_names.assign(covariates.begin(), covariates.end());
  }
  std::vector<std::size_t> cols;
  for (const auto& c : p.covariate_names) cols.push_back(data.covariate_index(c));
  p.values.resize(static_cast<Eigen::Index>(medoids.medoids.size()), static_cast<Eigen::Index>(cols.size()));
  p.cluster_sizes.assign(medoids.medoids.size(), 0);
  for (int a : medoids.assignments) ++p.cluster_sizes[static_cast<std::size_t>(a)];
  for (std::size_t m = 0; m < medoids.medoids.size(); ++m) {
    const auto row = medoids.medoids[m];
    if (row >= data.n_units()) fail(ErrorKind::Usage, "medoid row outside the dataset");
    p.units.push_back(data.unit_ids()[row]);
    for (std::size_t c = 0; c < cols.size(); ++c)
      p.values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c)) =
          data.covariates()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(cols[c]));
  }
  return p;
}

std::string profile_csv(const MedoidProfile& profile) {
  std::ostringstream ss;
  ss << "unit,cluster_size";
  for (const auto& c : profile.covariate_names) ss << ',' << c;
  ss << '\n';
  for (Eigen::Index m = 0; m < profile.values.rows(); ++m) {
    ss << profile.units[static_cast<std::size_t>(m)] << ',' << profile.cluster_sizes[static_cast<std::size_t>(m)];
    for (Eigen::Index c = 0; c < profile.values.cols(); ++c) ss << ',' << format_double(profile.values(m, c));
    ss << '\n';
  }
  return ss.str();
}

}  // namespace zigam
