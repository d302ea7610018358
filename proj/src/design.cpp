#include "zigam/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

void ModelFormula::validate() const {
  std::set<std::string> names;
  auto claim = [&](const std::string& n) {
    if (!names.insert(n).second) fail(ErrorKind::Config, "duplicate model term " + n);
  };
  for (const auto& c : linear) claim("linear:" + c);
  for (const auto& c : linear_by_treatment) claim("linear_by_treatment:" + c);
  for (const auto& c : factors) claim("factor:" + c);
  for (const auto& s : smooths) {
    s.validate();
    std::string by = s.by == SmoothSpec::By::Treatment ? ":treatment"
                     : s.by == SmoothSpec::By::Factor ? ":" + s.by_covariate
                                                      : "";
    claim(s.label() + by);
  }
}

std::vector<std::string> ModelFormula::covariates_used() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& c) {
    if (!c.empty() && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  for (const auto& c : linear) add(c);
  for (const auto& c : linear_by_treatment) add(c);
  for (const auto& c : factors) add(c);
  for (const auto& s : smooths) {
    add(s.covariate);
    add(s.covariate_y);
    if (s.by == SmoothSpec::By::Factor) add(s.by_covariate);
  }
  return out;
}

namespace {

int resolve(const std::vector<std::string>& names, const std::string& name) {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  fail(ErrorKind::Config, "formula references unknown covariate '" + name + "'");
}

std::string level_text(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  return format_double(v);
}

std::vector<double> gather(const Eigen::MatrixXd& cov, int col,
                           std::span<const std::size_t> rows) {
  std::vector<double> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    out[k] = cov(static_cast<Eigen::Index>(rows[k]), col);
  return out;
}

std::size_t count_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

// Basis dimension usable for a covariate with `unique` distinct values, or 0
// when the smooth has to be dropped. Tensor margins are not centred on their
// own and may use degree + 1 functions.
int usable_dim(int requested, std::size_t unique, int degree, int order, bool margin) {
  if (unique < 2) return 0;
  int k = std::min<int>(requested, static_cast<int>(unique));
  if (k < 4 || k <= degree + (margin ? 0 : 1) || k <= order) return 0;
  return k;
}

void scale_penalties(Term& term, const Eigen::MatrixXd& basis,
                     std::vector<Penalty>& penalties, int term_id) {
  const Eigen::MatrixXd xtx = basis.transpose() * basis;
  const double xnorm = xtx.norm();
  for (const auto& s : term.block.penalties) {
    Penalty p;
    p.offset = term.first;
    const double snorm = s.norm();
    const double scale = (snorm > 0 && xnorm > 0) ? xnorm / snorm : 1.0;
    p.matrix = s * scale;
    p.matrix = 0.5 * (p.matrix + p.matrix.transpose());
    p.term = term_id;
    term.penalties.push_back(static_cast<int>(penalties.size()));
    penalties.push_back(std::move(p));
  }
}

}  // namespace

ModelSchema ModelSchema::build(const ModelFormula& formula, const DiffSample& sample,
                               std::span<const std::size_t> rows,
                               Eigen::MatrixXd* design_out) {
  formula.validate();
  if (rows.empty()) fail(ErrorKind::Data, "cannot build a model on an empty subsample");
  ModelSchema schema;
  schema.formula = formula;
  schema.covariate_names = sample.covariate_names;
  schema.treatment_labels = sample.treatment_labels;
  const auto& cov = *sample.covariates;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto n_arms = static_cast<int>(sample.treatment_labels.size());

  std::vector<std::size_t> arm_count(sample.treatment_labels.size(), 0);
  for (auto i : rows) ++arm_count[static_cast<std::size_t>(sample.treatment[i])];
  auto require_arm = [&](int r) {
    if (arm_count[static_cast<std::size_t>(r)] == 0)
      fail(ErrorKind::Data, "treatment arm '" + sample.treatment_labels[static_cast<std::size_t>(r)] +
                                "' has no observations in the fitting sample");
  };

  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index next = 0;
  auto push = [&](Term term, Eigen::MatrixXd cols) {
    term.first = next;
    term.cols = cols.cols();
    next += cols.cols();
    schema.terms.push_back(std::move(term));
    blocks.push_back(std::move(cols));
  };

  if (formula.intercept) {
    Term t;
    t.name = "(Intercept)";
    t.kind = TermKind::Intercept;
    push(std::move(t), Eigen::MatrixXd::Ones(n, 1));
  }
  if (formula.treatment_effects) {
    for (int r = 1; r < n_arms; ++r) {
      require_arm(r);
      Term t;
      t.name = "D=" + sample.treatment_labels[static_cast<std::size_t>(r)];
      t.kind = TermKind::TreatmentDummy;
      t.treatment = r;
      Eigen::MatrixXd col(n, 1);
      for (Eigen::Index k = 0; k < n; ++k)
        col(k, 0) = sample.treatment[rows[static_cast<std::size_t>(k)]] == r ? 1.0 : 0.0;
      push(std::move(t), std::move(col));
    }
  }
  for (const auto& c : formula.linear) {
    Term t;
    t.name = c;
    t.kind = TermKind::Linear;
    t.covariate = resolve(sample.covariate_names, c);
    Eigen::MatrixXd col(n, 1);
    for (Eigen::Index k = 0; k < n; ++k) col(k, 0) = cov(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]), t.covariate);
    push(std::move(t), std::move(col));
  }
  for (const auto& c : formula.linear_by_treatment) {
    const int j = resolve(sample.covariate_names, c);
    for (int r = 1; r < n_arms; ++r) {
      require_arm(r);
      Term t;
      t.name = c + ":D=" + sample.treatment_labels[static_cast<std::size_t>(r)];
      t.kind = TermKind::LinearByTreatment;
      t.covariate = j;
      t.treatment = r;
      Eigen::MatrixXd col(n, 1);
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = rows[static_cast<std::size_t>(k)];
        col(k, 0) = sample.treatment[i] == r ? cov(static_cast<Eigen::Index>(i), j) : 0.0;
      }
      push(std::move(t), std::move(col));
    }
  }
  for (const auto& c : formula.factors) {
    const int j = resolve(sample.covariate_names, c);
    std::map<double, std::size_t> levels;
    for (auto i : rows) ++levels[cov(static_cast<Eigen::Index>(i), j)];
    if (levels.size() < 2)
      fail(ErrorKind::Config, "factor " + c + " takes a single level on the fitting sample");
    bool first = true;
    for (const auto& [level, count] : levels) {
      if (first) {
        first = false;
        continue;
      }
      Term t;
      t.name = c + "=" + level_text(level);
      t.kind = TermKind::FactorLevel;
      t.covariate = j;
      t.level = level;
      Eigen::MatrixXd col(n, 1);
      for (Eigen::Index k = 0; k < n; ++k)
        col(k, 0) = cov(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]), j) == level ? 1.0 : 0.0;
      push(std::move(t), std::move(col));
    }
  }

  for (std::size_t si = 0; si < formula.smooths.size(); ++si) {
    const auto& spec = formula.smooths[si];
    const int jx = resolve(sample.covariate_names, spec.covariate);
    const auto xv = gather(cov, jx, rows);
    const bool tensor = spec.kind == SmoothSpec::Kind::Tensor;
    const int kx = usable_dim(spec.basis_dim, count_unique(xv), spec.degree, spec.penalty_order, tensor);
    int jy = -1;
    std::vector<double> yv;
    int ky = 0;
    if (tensor) {
      jy = resolve(sample.covariate_names, spec.covariate_y);
      yv = gather(cov, jy, rows);
      ky = usable_dim(spec.basis_dim_y, count_unique(yv), spec.degree, spec.penalty_order, true);
    }
    if (kx == 0 || (tensor && ky == 0)) {
      schema.warnings.push_back("smooth " + spec.label() +
                                " dropped: covariate constant or too few distinct values");
      continue;
    }
    if (kx < spec.basis_dim || (tensor && ky < spec.basis_dim_y))
      schema.warnings.push_back("smooth " + spec.label() +
                                ": basis dimension reduced to the number of distinct values");

    DesignBlock raw;
    if (!tensor) {
      raw = univariate_block(xv, kx, spec.degree, spec.penalty_order);
    } else {
      auto bx = univariate_block(xv, kx, spec.degree, spec.penalty_order);
      auto by = univariate_block(yv, ky, spec.degree, spec.penalty_order);
      if (spec.interaction_only) {
        const std::vector<std::uint8_t> all(rows.size(), 1);
        bx = apply_centering_constraint(bx, all);
        by = apply_centering_constraint(by, all);
      }
      raw = tensor_basis(bx, by);
    }

    struct Variant {
      std::string suffix;
      int treatment = -1;
      double level = 0.0;
      std::vector<std::uint8_t> mask;
    };
    std::vector<Variant> variants;
    int jby = -1;
    if (spec.by == SmoothSpec::By::None) {
      variants.push_back({"", -1, 0.0, std::vector<std::uint8_t>(rows.size(), 1)});
    } else if (spec.by == SmoothSpec::By::Treatment) {
      for (int r = 1; r < n_arms; ++r) {
        require_arm(r);
        Variant v{":D=" + sample.treatment_labels[static_cast<std::size_t>(r)], r, 0.0, {}};
        v.mask.resize(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) v.mask[k] = sample.treatment[rows[k]] == r;
        variants.push_back(std::move(v));
      }
    } else {
      jby = resolve(sample.covariate_names, spec.by_covariate);
      std::map<double, std::size_t> levels;
      for (auto i : rows) ++levels[cov(static_cast<Eigen::Index>(i), jby)];
      if (levels.size() < 2)
        fail(ErrorKind::Config, "by-factor " + spec.by_covariate + " takes a single level");
      bool first = true;
      for (const auto& [level, count] : levels) {
        if (first) {
          first = false;
          continue;
        }
        Variant v{":" + spec.by_covariate + "=" + level_text(level), -1, level, {}};
        v.mask.resize(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k)
          v.mask[k] = cov(static_cast<Eigen::Index>(rows[k]), jby) == level;
        variants.push_back(std::move(v));
      }
    }

    for (auto& v : variants) {
      DesignBlock block = raw;
      if (spec.by != SmoothSpec::By::None) {
        for (Eigen::Index k = 0; k < n; ++k)
          if (!v.mask[static_cast<std::size_t>(k)]) block.basis.row(k).setZero();
      }
      if (!(tensor && spec.interaction_only)) block = apply_centering_constraint(block, v.mask);
      Term t;
      t.name = spec.label() + v.suffix;
      t.kind = TermKind::Smooth;
      t.covariate = jx;
      t.covariate_y = jy;
      t.by_covariate = jby;
      t.treatment = v.treatment;
      t.level = v.level;
      t.smooth_index = static_cast<int>(si);
      Eigen::MatrixXd basis = std::move(block.basis);
      block.basis = Eigen::MatrixXd(0, basis.cols());
      t.block = std::move(block);
      t.first = next;
      const int term_id = static_cast<int>(schema.terms.size());
      scale_penalties(t, basis, schema.penalties, term_id);
      push(std::move(t), std::move(basis));
    }
  }

  schema.n_coef = next;
  if (schema.n_coef == 0) fail(ErrorKind::Config, "model has no terms");
  if (design_out) {
    design_out->resize(n, next);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      design_out->middleCols(schema.terms[b].first, schema.terms[b].cols) = blocks[b];
  }
  return schema;
}

Eigen::MatrixXd ModelSchema::design(const Eigen::MatrixXd& covariates,
                                    std::span<const int> treatment,
                                    std::span<const std::size_t> rows,
                                    std::vector<std::uint8_t>* clamped) const {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (covariates.cols() != static_cast<Eigen::Index>(covariate_names.size()))
    fail(ErrorKind::Shape, "covariate matrix does not match the model's covariates");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n_coef);
  if (clamped) clamped->assign(rows.size(), 0);
  std::vector<std::uint8_t> flags;
  for (const auto& t : terms) {
    switch (t.kind) {
      case TermKind::Intercept:
        x.col(t.first).setOnes();
        break;
      case TermKind::TreatmentDummy:
        for (Eigen::Index k = 0; k < n; ++k)
          x(k, t.first) = treatment[rows[static_cast<std::size_t>(k)]] == t.treatment ? 1.0 : 0.0;
        break;
      case TermKind::Linear:
        for (Eigen::Index k = 0; k < n; ++k)
          x(k, t.first) = covariates(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]), t.covariate);
        break;
      case TermKind::LinearByTreatment:
        for (Eigen::Index k = 0; k < n; ++k) {
          const auto i = rows[static_cast<std::size_t>(k)];
          x(k, t.first) = treatment[i] == t.treatment ? covariates(static_cast<Eigen::Index>(i), t.covariate) : 0.0;
        }
        break;
      case TermKind::FactorLevel:
        for (Eigen::Index k = 0; k < n; ++k)
          x(k, t.first) = covariates(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]), t.covariate) == t.level ? 1.0 : 0.0;
        break;
      case TermKind::Smooth: {
        std::vector<double> xv = gather(covariates, t.covariate, rows);
        std::vector<double> yv;
        std::vector<std::span<const double>> cols{xv};
        if (t.covariate_y >= 0) {
          yv = gather(covariates, t.covariate_y, rows);
          cols.emplace_back(yv);
        }
        Eigen::MatrixXd b = t.block.evaluate(cols, &flags);
        for (Eigen::Index k = 0; k < n; ++k) {
          const auto i = rows[static_cast<std::size_t>(k)];
          bool active = true;
          if (t.treatment >= 0) active = treatment[i] == t.treatment;
          if (t.by_covariate >= 0) active = covariates(static_cast<Eigen::Index>(i), t.by_covariate) == t.level;
          if (active) {
            x.block(k, t.first, 1, t.cols) = b.row(k);
            if (clamped && flags[static_cast<std::size_t>(k)]) (*clamped)[static_cast<std::size_t>(k)] = 1;
          }
        }
        break;
      }
    }
  }
  return x;
}

Eigen::RowVectorXd ModelSchema::row(std::span<const double> x, int r, bool* clamped) const {
  if (x.size() != covariate_names.size())
    fail(ErrorKind::Shape, "covariate row has " + std::to_string(x.size()) + " values, model expects " +
                               std::to_string(covariate_names.size()));
  if (r < 0 || static_cast<std::size_t>(r) >= treatment_labels.size())
    fail(ErrorKind::Usage, "unknown treatment code " + std::to_string(r));
  Eigen::MatrixXd cov(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) cov(0, static_cast<Eigen::Index>(j)) = x[j];
  const int treat[1] = {r};
  const std::size_t rows[1] = {0};
  std::vector<std::uint8_t> flags;
  Eigen::MatrixXd m = design(cov, treat, rows, &flags);
  if (clamped) *clamped = flags[0] != 0;
  return m.row(0);
}

const Term* ModelSchema::find_term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<int> ModelSchema::smooth_term_ids() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < terms.size(); ++k)
    if (terms[k].is_smooth()) out.push_back(static_cast<int>(k));
  return out;
}

}  // namespace zigam
