#include "zigam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "zigam/diagnostics.hpp"
#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

namespace {

double at(const std::vector<double>& v, std::size_t k) { return k < v.size() ? v[k] : 0.0; }

double std_normal_cdf(double z) {
  static const boost::math::normal_distribution<> nd;
  return boost::math::cdf(nd, z);
}

}  // namespace

double CovariateLaw::standardize(double x) const {
  switch (kind) {
    case Kind::Normal:
      return (x - a) / b;
    case Kind::Uniform:
      return (x - 0.5 * (a + b)) / ((b - a) / std::sqrt(12.0));
    case Kind::LogNormal:
      return (std::log(std::max(x, 1e-300)) - a) / b;
  }
  return x;
}

double FunctionSpec::eval(std::span<const double> z) const {
  double f = constant;
  for (std::size_t c = 0; c < z.size(); ++c) {
    f += at(linear, c) * z[c];
    const double s = at(sine, c);
    if (s != 0.0) f += s * std::sin(z[c]);
  }
  if (product != 0.0 || bump != 0.0) {
    const auto a = static_cast<std::size_t>(pair_a);
    const auto b = static_cast<std::size_t>(pair_b);
    if (a >= z.size() || b >= z.size()) fail(ErrorKind::Config, "surface term references a missing covariate");
    f += product * z[a] * z[b];
    f += bump * std::exp(-0.5 * (z[a] * z[a] + z[b] * z[b]));
  }
  return f;
}

void Scenario::validate() const {
  const auto r = n_treatments();
  if (n < 2) fail(ErrorKind::Config, "scenario needs at least 2 units");
  if (r < 2) fail(ErrorKind::Config, "scenario needs at least 2 treatment arms");
  if (n_periods < 2) fail(ErrorKind::Config, "scenario needs at least 2 periods");
  if (t0_index >= n_periods) fail(ErrorKind::Config, "t0 index outside the periods");
  if (treatment_start_index <= t0_index || treatment_start_index >= n_periods)
    fail(ErrorKind::Config, "treatment must start after t0 and within the periods");
  if (covariates.empty()) fail(ErrorKind::Config, "scenario needs at least one covariate");
  for (const auto& c : covariates) {
    if (c.name.empty()) fail(ErrorKind::Config, "covariate without a name");
    if (c.kind == CovariateLaw::Kind::Uniform ? !(c.b > c.a) : !(c.b > 0))
      fail(ErrorKind::Config, "covariate " + c.name + " has an invalid scale");
  }
  if (!(covariate_correlation >= 0 && covariate_correlation < 1))
    fail(ErrorKind::Config, "covariate correlation must lie in [0, 1)");
  auto check_len = [&](std::size_t got, std::size_t want, const char* what) {
    if (got != 0 && got != want)
      fail(ErrorKind::Config, std::string(what) + " has " + std::to_string(got) + " entries, expected " +
                                  std::to_string(want));
  };
  check_len(assign_intercept.size(), r, "assign_intercept");
  check_len(assign_linear.size(), r, "assign_linear");
  check_len(assign_slope.size(), r, "assign_slope");
  check_len(alpha.size(), r, "alpha");
  check_len(alpha_profile.size(), r, "alpha_profile");
  for (const auto& p : alpha_profile) check_len(p.size(), n_periods, "alpha_profile row");
  check_len(mu_profile.size(), n_periods, "mu_profile");
  check_len(zero_shift.size(), r, "zero_shift");
  if (zero_intercept.size() != 1) check_len(zero_intercept.size(), n_periods, "zero_intercept");
  if (!level_covariate.empty()) {
    bool found = false;
    for (const auto& c : covariates) found = found || c.name == level_covariate;
    if (!found) fail(ErrorKind::Config, "level covariate '" + level_covariate + "' is not a covariate");
  }
  if (!(noise_sd >= 0) || !(slope_sd >= 0)) fail(ErrorKind::Config, "standard deviations must be nonnegative");
  if (grid && block_size == 0) fail(ErrorKind::Config, "grid block size must be positive");
  if (!spillover.empty() && spillover.size() != kWdLabels.size())
    fail(ErrorKind::Config, "spillover needs one function per WD level");
  if (!spillover.empty() && !grid) fail(ErrorKind::Config, "spillovers need the grid layout");
}

std::vector<double> TruthRecord::standardize(std::span<const double> x) const {
  const auto& cov = scenario_.covariates;
  if (x.size() != cov.size()) fail(ErrorKind::Shape, "covariate row does not match the scenario");
  std::vector<double> z(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) z[c] = cov[c].standardize(x[c]);
  return z;
}

double TruthRecord::zero_prob(std::span<const double> x, int r, std::size_t t) const {
  const auto& s = scenario_;
  if (!s.zero_enabled) return 0.0;
  const auto z = standardize(x);
  double eta = s.zero_intercept.size() == 1 ? s.zero_intercept[0] : s.zero_intercept[t];
  if (t >= s.treatment_start_index) eta += at(s.zero_shift, static_cast<std::size_t>(r));
  for (std::size_t c = 0; c < z.size(); ++c) eta += at(s.zero_linear, c) * z[c];
  return inv_logit(eta);
}

double TruthRecord::alpha(std::span<const double> x, int r, std::size_t t) const {
  const auto& s = scenario_;
  if (r == 0 || t < s.treatment_start_index || s.alpha.empty()) return 0.0;
  const auto ru = static_cast<std::size_t>(r);
  const double prof = s.alpha_profile.empty() ? 1.0 : s.alpha_profile[ru][t];
  return prof * s.alpha[ru].eval(standardize(x));
}

double TruthRecord::mu(std::span<const double> x, std::size_t t) const {
  const auto& s = scenario_;
  if (t == s.t0_index) return 0.0;
  const double prof = s.mu_profile.empty() ? 1.0 : s.mu_profile[t];
  return prof * s.mu.eval(standardize(x));
}

double truth_effect(const TruthRecord& truth, std::span<const double> x, int r, std::size_t t) {
  const double p_r = truth.zero_prob(x, r, t);
  const double p_0 = truth.zero_prob(x, 0, t);
  const double gain = (1.0 - p_r) * truth.alpha(x, r, t);
  const double shift = (p_r - p_0) * truth.mu(x, t);
  return gain - shift;
}

GeneratedPanel generate(const Scenario& s) {
  s.validate();
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto n = s.n;
  const auto p = s.covariates.size();
  const auto periods = s.n_periods;
  const auto arms = s.n_treatments();

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<std::vector<double>> z(n, std::vector<double>(p));
  std::vector<double> slopes(n), levels(n);
  std::vector<int> treatment(n, 0);
  const double rho = s.covariate_correlation;
  for (std::size_t i = 0; i < n; ++i) {
    const double common = normal(rng);
    for (std::size_t c = 0; c < p; ++c) {
      const double g = std::sqrt(rho) * common + std::sqrt(1.0 - rho) * normal(rng);
      const auto& law = s.covariates[c];
      double v = 0.0;
      switch (law.kind) {
        case CovariateLaw::Kind::Normal: v = law.a + law.b * g; break;
        case CovariateLaw::Kind::Uniform: v = law.a + (law.b - law.a) * std_normal_cdf(g); break;
        case CovariateLaw::Kind::LogNormal: v = std::exp(law.a + law.b * g); break;
      }
      if (law.round) v = std::round(v);
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
      z[i][c] = law.standardize(v);
    }
    slopes[i] = s.slope_sd * normal(rng);
    const double u = unif(rng);
    if (!s.grid) {
      std::vector<double> w(arms, 1.0);
      double total = 1.0;
      for (std::size_t r = 1; r < arms; ++r) {
        double score = at(s.assign_intercept, r) + at(s.assign_slope, r) * slopes[i];
        if (!s.assign_linear.empty())
          for (std::size_t c = 0; c < p; ++c) score += at(s.assign_linear[r], c) * z[i][c];
        w[r] = std::exp(score);
        total += w[r];
      }
      double acc = 0.0;
      int pick = static_cast<int>(arms) - 1;
      for (std::size_t r = 0; r < arms; ++r) {
        acc += w[r] / total;
        if (u < acc) {
          pick = static_cast<int>(r);
          break;
        }
      }
      treatment[i] = pick;
    }
    if (s.level_covariate.empty()) {
      levels[i] = s.level_mean + s.level_sd * normal(rng);
      if (s.round_outcomes) levels[i] = std::round(levels[i]);
    }
  }
  if (!s.level_covariate.empty()) {
    std::size_t c = 0;
    while (s.covariates[c].name != s.level_covariate) ++c;
    for (std::size_t i = 0; i < n; ++i) levels[i] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<int> wd;
  if (s.grid) {
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    const auto blocks_per_row = (side + s.block_size - 1) / s.block_size;
    std::vector<int> block_arm(blocks_per_row * blocks_per_row);
    std::vector<double> w(arms, 1.0);
    double total = 1.0;
    for (std::size_t r = 1; r < arms; ++r) {
      w[r] = std::exp(at(s.assign_intercept, r));
      total += w[r];
    }
    for (auto& a : block_arm) {
      const double u = unif(rng);
      double acc = 0.0;
      a = static_cast<int>(arms) - 1;
      for (std::size_t r = 0; r < arms; ++r) {
        acc += w[r] / total;
        if (u < acc) {
          a = static_cast<int>(r);
          break;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = i / side, col = i % side;
      treatment[i] = block_arm[(row / s.block_size) * blocks_per_row + col / s.block_size];
      if (col + 1 < side && i + 1 < n) edges.emplace_back(i, i + 1);
      if (i + side < n) edges.emplace_back(i, i + side);
    }
    const auto graph = NeighborGraph::from_edges(n, edges);
    wd = build_wd(treatment, graph, ProgramMap::from_labels(s.treatment_labels)).level;
  }

  // Common random numbers: the same noise and zero draw feed every arm.
  std::vector<Eigen::MatrixXd> potential(arms, Eigen::MatrixXd(static_cast<Eigen::Index>(n),
                                                               static_cast<Eigen::Index>(periods)));
  const TruthRecord truth(s);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::vector<double> xrow(p);
    for (std::size_t c = 0; c < p; ++c) xrow[c] = x(ii, static_cast<Eigen::Index>(c));
    for (std::size_t t = 0; t < periods; ++t) {
      const auto tt = static_cast<Eigen::Index>(t);
      if (t == s.t0_index) {
        for (std::size_t r = 0; r < arms; ++r) potential[r](ii, tt) = levels[i];
        continue;
      }
      const double eps = s.noise_sd * normal(rng);
      const double u = unif(rng);
      const double steps = static_cast<double>(static_cast<long>(t) - static_cast<long>(s.t0_index));
      const double base = truth.mu(xrow, t) + slopes[i] * steps + eps;
      double spill = 0.0;
      if (!s.spillover.empty() && t >= s.treatment_start_index)
        spill = s.spillover[static_cast<std::size_t>(wd[i])].eval(z[i]);
      for (std::size_t r = 0; r < arms; ++r) {
        const double change = base + truth.alpha(xrow, static_cast<int>(r), t) + spill;
        const double pi = truth.zero_prob(xrow, static_cast<int>(r), t);
        double y = u < pi ? levels[i] : levels[i] + change;
        if (s.round_outcomes) y = std::round(y);
        potential[r](ii, tt) = y;
      }
    }
  }

  std::vector<std::string> ids(n);
  const int width = static_cast<int>(std::to_string(n).size());
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "u%0*zu", width, i + 1);
    ids[i] = buf;
  }
  std::vector<long> times(periods);
  for (std::size_t t = 0; t < periods; ++t) times[t] = s.first_time + static_cast<long>(t);
  Eigen::MatrixXd observed(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(periods));
  for (std::size_t i = 0; i < n; ++i)
    observed.row(static_cast<Eigen::Index>(i)) = potential[static_cast<std::size_t>(treatment[i])].row(static_cast<Eigen::Index>(i));
  std::vector<std::string> names;
  for (const auto& c : s.covariates) names.push_back(c.name);
  return GeneratedPanel{PanelDataset(std::move(ids), std::move(times), std::move(observed), treatment,
                                    s.treatment_labels, std::move(x), std::move(names), s.treatment_start_index),
                       truth, std::move(potential), std::move(slopes), std::move(edges), std::move(wd)};
}

}  // namespace zigam
