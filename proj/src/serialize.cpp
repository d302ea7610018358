#include "zigam/serialize.hpp"

#include <fstream>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

namespace {

template <typename T>
T field(const Json& j, const char* key, T fallback) {
  if (!j.is_object()) fail(ErrorKind::Config, std::string("expected an object holding '") + key + "'");
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Config, std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T required(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::Config, std::string("missing field '") + key + "'");
  try {
    return j.at(key).template get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Config, std::string("field '") + key + "' has the wrong type");
  }
}

Json vec_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

Eigen::VectorXd vec_from(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::Config, "expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  return v;
}

Json mat_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) r.push_back(m(i, c));
    rows.push_back(std::move(r));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd mat_from(const Json& j) {
  const auto rows = required<Eigen::Index>(j, "rows");
  const auto cols = required<Eigen::Index>(j, "cols");
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) fail(ErrorKind::Shape, "matrix row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = data[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != cols) fail(ErrorKind::Shape, "matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

const char* kind_name(SmoothSpec::Kind k) { return k == SmoothSpec::Kind::Tensor ? "te" : "s"; }

const char* by_name(SmoothSpec::By b) {
  switch (b) {
    case SmoothSpec::By::None: return "none";
    case SmoothSpec::By::Treatment: return "treatment";
    case SmoothSpec::By::Factor: return "factor";
  }
  return "none";
}

const char* term_kind_name(TermKind k) {
  switch (k) {
    case TermKind::Intercept: return "intercept";
    case TermKind::TreatmentDummy: return "treatment";
    case TermKind::Linear: return "linear";
    case TermKind::LinearByTreatment: return "linear_by_treatment";
    case TermKind::FactorLevel: return "factor";
    case TermKind::Smooth: return "smooth";
  }
  return "intercept";
}

TermKind term_kind_from(const std::string& s) {
  for (auto k : {TermKind::Intercept, TermKind::TreatmentDummy, TermKind::Linear,
                 TermKind::LinearByTreatment, TermKind::FactorLevel, TermKind::Smooth})
    if (s == term_kind_name(k)) return k;
  fail(ErrorKind::Parse, "unknown term kind '" + s + "'");
}

Json block_json(const DesignBlock& b) {
  Json margins = Json::array();
  for (const auto& m : b.margins)
    margins.push_back(Json{{"knots", m.knots}, {"degree", m.degree}, {"constraint", mat_json(m.constraint)}});
  return Json{{"dim", b.dim()},
              {"margins", std::move(margins)},
              {"constraint_applied", b.constraint_applied},
              {"constraint", mat_json(b.constraint)}};
}

DesignBlock block_from(const Json& j) {
  DesignBlock b;
  for (const auto& m : j.at("margins")) {
    MarginalBasis mb;
    mb.knots = required<std::vector<double>>(m, "knots");
    mb.degree = required<int>(m, "degree");
    mb.constraint = mat_from(m.at("constraint"));
    b.margins.push_back(std::move(mb));
  }
  b.basis = Eigen::MatrixXd(0, required<Eigen::Index>(j, "dim"));
  b.constraint_applied = required<bool>(j, "constraint_applied");
  b.constraint = mat_from(j.at("constraint"));
  return b;
}

const char* law_name(CovariateLaw::Kind k) {
  switch (k) {
    case CovariateLaw::Kind::Normal: return "normal";
    case CovariateLaw::Kind::Uniform: return "uniform";
    case CovariateLaw::Kind::LogNormal: return "lognormal";
  }
  return "normal";
}

Json function_json(const FunctionSpec& f) {
  return Json{{"constant", f.constant}, {"linear", f.linear}, {"sine", f.sine},     {"product", f.product},
              {"bump", f.bump},         {"pair_a", f.pair_a}, {"pair_b", f.pair_b}};
}

FunctionSpec function_from(const Json& j) {
  FunctionSpec f;
  f.constant = field(j, "constant", 0.0);
  f.linear = field(j, "linear", std::vector<double>{});
  f.sine = field(j, "sine", std::vector<double>{});
  f.product = field(j, "product", 0.0);
  f.bump = field(j, "bump", 0.0);
  f.pair_a = field(j, "pair_a", 0);
  f.pair_b = field(j, "pair_b", 1);
  return f;
}

}  // namespace

Json to_json(const SmoothSpec& s) {
  Json j{{"type", kind_name(s.kind)}, {"covariate", s.covariate}};
  if (s.kind == SmoothSpec::Kind::Tensor) j["covariate_y"] = s.covariate_y;
  j["k"] = s.basis_dim;
  if (s.kind == SmoothSpec::Kind::Tensor) j["k_y"] = s.basis_dim_y;
  j["degree"] = s.degree;
  j["penalty_order"] = s.penalty_order;
  if (s.interaction_only) j["interaction_only"] = true;
  j["by"] = by_name(s.by);
  if (s.by == SmoothSpec::By::Factor) j["by_covariate"] = s.by_covariate;
  return j;
}

SmoothSpec smooth_from_json(const Json& j) {
  SmoothSpec s;
  const auto type = field<std::string>(j, "type", "s");
  if (type == "s") {
    s.kind = SmoothSpec::Kind::Univariate;
  } else if (type == "te" || type == "ti") {
    s.kind = SmoothSpec::Kind::Tensor;
    s.interaction_only = type == "ti";
    s.basis_dim = 5;
  } else {
    fail(ErrorKind::Config, "unknown smooth type '" + type + "'");
  }
  s.covariate = required<std::string>(j, "covariate");
  s.covariate_y = field<std::string>(j, "covariate_y", "");
  s.basis_dim = field(j, "k", s.basis_dim);
  s.basis_dim_y = field(j, "k_y", s.basis_dim_y);
  s.degree = field(j, "degree", s.degree);
  s.penalty_order = field(j, "penalty_order", s.penalty_order);
  s.interaction_only = field(j, "interaction_only", s.interaction_only);
  const auto by = field<std::string>(j, "by", "none");
  if (by == "none") {
    s.by = SmoothSpec::By::None;
  } else if (by == "treatment") {
    s.by = SmoothSpec::By::Treatment;
  } else if (by == "factor") {
    s.by = SmoothSpec::By::Factor;
    s.by_covariate = required<std::string>(j, "by_covariate");
  } else {
    fail(ErrorKind::Config, "unknown smooth 'by' value '" + by + "'");
  }
  s.validate();
  return s;
}

Json to_json(const ModelFormula& f) {
  Json smooths = Json::array();
  for (const auto& s : f.smooths) smooths.push_back(to_json(s));
  return Json{{"intercept", f.intercept},
              {"treatment_effects", f.treatment_effects},
              {"linear", f.linear},
              {"linear_by_treatment", f.linear_by_treatment},
              {"factors", f.factors},
              {"smooths", std::move(smooths)}};
}

ModelFormula formula_from_json(const Json& j) {
  ModelFormula f;
  f.intercept = field(j, "intercept", true);
  f.treatment_effects = field(j, "treatment_effects", true);
  f.linear = field(j, "linear", std::vector<std::string>{});
  f.linear_by_treatment = field(j, "linear_by_treatment", std::vector<std::string>{});
  f.factors = field(j, "factors", std::vector<std::string>{});
  if (j.contains("smooths"))
    for (const auto& s : j.at("smooths")) f.smooths.push_back(smooth_from_json(s));
  f.validate();
  return f;
}

Json to_json(const GamFit& fit) {
  const auto& sc = fit.schema;
  Json terms = Json::array();
  for (std::size_t k = 0; k < sc.terms.size(); ++k) {
    const auto& t = sc.terms[k];
    Json jt{{"name", t.name},
            {"kind", term_kind_name(t.kind)},
            {"first", t.first},
            {"cols", t.cols},
            {"treatment", t.treatment},
            {"covariate", t.covariate},
            {"covariate_y", t.covariate_y},
            {"by_covariate", t.by_covariate},
            {"level", t.level},
            {"smooth_index", t.smooth_index},
            {"penalties", t.penalties},
            {"edf", k < fit.term_edf.size() ? fit.term_edf[k] : 0.0}};
    if (t.is_smooth()) jt["block"] = block_json(t.block);
    terms.push_back(std::move(jt));
  }
  Json penalties = Json::array();
  for (const auto& p : sc.penalties)
    penalties.push_back(Json{{"offset", p.offset}, {"term", p.term}, {"matrix", mat_json(p.matrix)}});
  const Eigen::VectorXd diag = fit.covariance.size() ? Eigen::VectorXd(fit.covariance.diagonal())
                                                     : fit.covariance_diag;
  return Json{{"family", to_string(fit.family)},
              {"formula", to_json(sc.formula)},
              {"covariate_names", sc.covariate_names},
              {"treatment_labels", sc.treatment_labels},
              {"n_coef", sc.n_coef},
              {"terms", std::move(terms)},
              {"penalties", std::move(penalties)},
              {"coefficients", vec_json(fit.coefficients)},
              {"lambda", vec_json(fit.lambda)},
              {"lambda_fixed", fit.lambda_fixed},
              {"coef_edf", vec_json(fit.coef_edf)},
              {"total_edf", fit.total_edf},
              {"total_edf1", fit.total_edf1},
              {"covariance_diag", vec_json(diag)},
              {"scale", fit.scale},
              {"reml_score", fit.reml_score},
              {"deviance", fit.deviance},
              {"log_likelihood", fit.log_likelihood},
              {"n_obs", fit.n_obs},
              {"iterations", fit.iterations},
              {"warnings", fit.warnings}};
}

GamFit fit_from_json(const Json& j) {
  GamFit fit;
  fit.family = family_from_string(required<std::string>(j, "family"));
  auto& sc = fit.schema;
  sc.formula = formula_from_json(j.at("formula"));
  sc.covariate_names = required<std::vector<std::string>>(j, "covariate_names");
  sc.treatment_labels = required<std::vector<std::string>>(j, "treatment_labels");
  sc.n_coef = required<Eigen::Index>(j, "n_coef");
  for (const auto& jt : j.at("terms")) {
    Term t;
    t.name = required<std::string>(jt, "name");
    t.kind = term_kind_from(required<std::string>(jt, "kind"));
    t.first = required<Eigen::Index>(jt, "first");
    t.cols = required<Eigen::Index>(jt, "cols");
    t.treatment = field(jt, "treatment", -1);
    t.covariate = field(jt, "covariate", -1);
    t.covariate_y = field(jt, "covariate_y", -1);
    t.by_covariate = field(jt, "by_covariate", -1);
    t.level = field(jt, "level", 0.0);
    t.smooth_index = field(jt, "smooth_index", -1);
    t.penalties = field(jt, "penalties", std::vector<int>{});
    if (t.is_smooth()) t.block = block_from(jt.at("block"));
    fit.term_edf.push_back(field(jt, "edf", 0.0));
    sc.terms.push_back(std::move(t));
  }
  for (const auto& jp : j.at("penalties")) {
    Penalty p;
    p.offset = required<Eigen::Index>(jp, "offset");
    p.term = required<int>(jp, "term");
    p.matrix = mat_from(jp.at("matrix"));
    sc.penalties.push_back(std::move(p));
  }
  fit.coefficients = vec_from(j.at("coefficients"));
  if (fit.coefficients.size() != sc.n_coef) fail(ErrorKind::Shape, "coefficient count does not match the schema");
  fit.lambda = vec_from(j.at("lambda"));
  fit.lambda_fixed = field(j, "lambda_fixed", false);
  fit.coef_edf = vec_from(j.at("coef_edf"));
  fit.total_edf = field(j, "total_edf", 0.0);
  fit.total_edf1 = field(j, "total_edf1", fit.total_edf);
  fit.covariance_diag = vec_from(j.at("covariance_diag"));
  fit.scale = field(j, "scale", 1.0);
  fit.reml_score = field(j, "reml_score", 0.0);
  fit.deviance = field(j, "deviance", 0.0);
  fit.log_likelihood = field(j, "log_likelihood", 0.0);
  fit.n_obs = field<Eigen::Index>(j, "n_obs", 0);
  fit.iterations = field(j, "iterations", 0);
  fit.warnings = field(j, "warnings", std::vector<std::string>{});
  return fit;
}

Json to_json(const MixtureFit& fit) {
  Json j{{"period_index", fit.period_index},
         {"period", fit.period},
         {"pre_program", fit.pre_program},
         {"n_zero_used", fit.n_zero_used},
         {"n_cont_used", fit.n_cont_used}};
  j["zero_part"] = fit.zero_part ? to_json(*fit.zero_part) : Json(nullptr);
  j["cont_part"] = to_json(fit.cont_part);
  return j;
}

MixtureFit mixture_from_json(const Json& j) {
  MixtureFit fit;
  fit.period_index = required<std::size_t>(j, "period_index");
  fit.period = required<long>(j, "period");
  fit.pre_program = field(j, "pre_program", false);
  fit.n_zero_used = field<std::size_t>(j, "n_zero_used", 0);
  fit.n_cont_used = field<std::size_t>(j, "n_cont_used", 0);
  if (j.contains("zero_part") && !j.at("zero_part").is_null()) {
    fit.zero_part = fit_from_json(j.at("zero_part"));
    fit.zero_formula = fit.zero_part->schema.formula;
  }
  fit.cont_part = fit_from_json(j.at("cont_part"));
  fit.cont_formula = fit.cont_part.schema.formula;
  return fit;
}

Json to_json(const ModelBundle& bundle) {
  Json fits = Json::array();
  for (const auto& f : bundle.fits) fits.push_back(to_json(f));
  return Json{{"data_fingerprint", hex64(bundle.data_fingerprint)},
              {"t0_index", bundle.t0_index},
              {"random_growth", bundle.random_growth},
              {"periods", std::move(fits)}};
}

ModelBundle bundle_from_json(const Json& j) {
  ModelBundle b;
  const auto fp = required<std::string>(j, "data_fingerprint");
  try {
    b.data_fingerprint = std::stoull(fp, nullptr, 16);
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "bad data fingerprint '" + fp + "'");
  }
  b.t0_index = required<std::size_t>(j, "t0_index");
  b.random_growth = field(j, "random_growth", false);
  for (const auto& f : j.at("periods")) b.fits.push_back(mixture_from_json(f));
  return b;
}

Json to_json(const Scenario& s) {
  Json cov = Json::array();
  for (const auto& c : s.covariates)
    cov.push_back(Json{{"name", c.name}, {"law", law_name(c.kind)}, {"a", c.a}, {"b", c.b}, {"round", c.round}});
  Json alpha = Json::array();
  for (const auto& a : s.alpha) alpha.push_back(function_json(a));
  Json spill = Json::array();
  for (const auto& a : s.spillover) spill.push_back(function_json(a));
  return Json{{"n", s.n},
              {"first_time", s.first_time},
              {"n_periods", s.n_periods},
              {"t0_index", s.t0_index},
              {"treatment_start_index", s.treatment_start_index},
              {"treatment_labels", s.treatment_labels},
              {"covariates", std::move(cov)},
              {"covariate_correlation", s.covariate_correlation},
              {"assign_intercept", s.assign_intercept},
              {"assign_linear", s.assign_linear},
              {"assign_slope", s.assign_slope},
              {"grid", s.grid},
              {"block_size", s.block_size},
              {"level_covariate", s.level_covariate},
              {"level_mean", s.level_mean},
              {"level_sd", s.level_sd},
              {"round_outcomes", s.round_outcomes},
              {"mu", function_json(s.mu)},
              {"mu_profile", s.mu_profile},
              {"alpha", std::move(alpha)},
              {"alpha_profile", s.alpha_profile},
              {"zero_enabled", s.zero_enabled},
              {"zero_intercept", s.zero_intercept},
              {"zero_shift", s.zero_shift},
              {"zero_linear", s.zero_linear},
              {"slope_sd", s.slope_sd},
              {"noise_sd", s.noise_sd},
              {"spillover", std::move(spill)},
              {"seed", s.seed}};
}

Scenario scenario_from_json(const Json& j) {
  Scenario s;
  s.n = field(j, "n", s.n);
  s.first_time = field(j, "first_time", s.first_time);
  s.n_periods = field(j, "n_periods", s.n_periods);
  s.t0_index = field(j, "t0_index", s.t0_index);
  s.treatment_start_index = field(j, "treatment_start_index", s.treatment_start_index);
  s.treatment_labels = field(j, "treatment_labels", s.treatment_labels);
  if (j.contains("covariates")) {
    for (const auto& c : j.at("covariates")) {
      CovariateLaw law;
      law.name = required<std::string>(c, "name");
      const auto kind = field<std::string>(c, "law", "normal");
      if (kind == "normal") {
        law.kind = CovariateLaw::Kind::Normal;
      } else if (kind == "uniform") {
        law.kind = CovariateLaw::Kind::Uniform;
      } else if (kind == "lognormal") {
        law.kind = CovariateLaw::Kind::LogNormal;
      } else {
        fail(ErrorKind::Config, "unknown covariate law '" + kind + "'");
      }
      law.a = field(c, "a", 0.0);
      law.b = field(c, "b", 1.0);
      law.round = field(c, "round", false);
      s.covariates.push_back(std::move(law));
    }
  }
  s.covariate_correlation = field(j, "covariate_correlation", 0.0);
  s.assign_intercept = field(j, "assign_intercept", std::vector<double>{});
  s.assign_linear = field(j, "assign_linear", std::vector<std::vector<double>>{});
  s.assign_slope = field(j, "assign_slope", std::vector<double>{});
  s.grid = field(j, "grid", false);
  s.block_size = field(j, "block_size", s.block_size);
  s.level_covariate = field<std::string>(j, "level_covariate", "");
  s.level_mean = field(j, "level_mean", s.level_mean);
  s.level_sd = field(j, "level_sd", s.level_sd);
  s.round_outcomes = field(j, "round_outcomes", false);
  if (j.contains("mu")) s.mu = function_from(j.at("mu"));
  s.mu_profile = field(j, "mu_profile", std::vector<double>{});
  if (j.contains("alpha"))
    for (const auto& a : j.at("alpha")) s.alpha.push_back(function_from(a));
  s.alpha_profile = field(j, "alpha_profile", std::vector<std::vector<double>>{});
  s.zero_enabled = field(j, "zero_enabled", true);
  s.zero_intercept = field(j, "zero_intercept", s.zero_intercept);
  s.zero_shift = field(j, "zero_shift", std::vector<double>{});
  s.zero_linear = field(j, "zero_linear", std::vector<double>{});
  s.slope_sd = field(j, "slope_sd", 0.0);
  s.noise_sd = field(j, "noise_sd", s.noise_sd);
  if (j.contains("spillover"))
    for (const auto& a : j.at("spillover")) s.spillover.push_back(function_from(a));
  s.seed = field<std::uint64_t>(j, "seed", s.seed);
  s.validate();
  return s;
}

Json to_json(const SelectionReport& r) {
  Json dropped = Json::array();
  for (const auto& d : r.dropped) dropped.push_back(Json{{"name", d.name}, {"min_p", d.min_p}, {"max_p", d.max_p}});
  Json pv = Json::object();
  for (std::size_t c = 0; c < r.candidates.size(); ++c) {
    Json row = Json::array();
    for (Eigen::Index t = 0; t < r.per_period_pvalues.cols(); ++t)
      row.push_back(r.per_period_pvalues(static_cast<Eigen::Index>(c), t));
    pv[r.candidates[c]] = std::move(row);
  }
  return Json{{"threshold", r.threshold}, {"candidates", r.candidates}, {"retained", r.retained},
              {"dropped", std::move(dropped)}, {"periods", r.periods}, {"pvalues", std::move(pv)},
              {"warnings", r.warnings}};
}

Json to_json(const MedoidSet& m) {
  return Json{{"k", m.k},
              {"metric", m.metric == Metric::Euclidean ? "euclidean" : "standardized_euclidean"},
              {"medoids", m.medoids},
              {"medoid_units", m.medoid_units},
              {"assignments", m.assignments},
              {"total_cost", m.total_cost},
              {"cost_trace", m.cost_trace},
              {"enumerated", m.enumerated},
              {"improved_by_enumeration", m.improved_by_enumeration},
              {"seed", m.seed}};
}

Json to_json(const PlaceboResult& r) {
  return Json{{"spec", to_string(r.spec)}, {"controls", to_string(r.controls)},
              {"t0", r.t0},               {"t", r.t},
              {"pre_program", r.pre_program}, {"treatment", r.treatment},
              {"alpha_hat", r.alpha_hat}, {"se", r.se},
              {"p_value", r.p_value},     {"verdict", r.pass ? "pass" : "fail"}};
}

CsvSchema schema_from_json(const Json& j) {
  CsvSchema s;
  s.unit = field<std::string>(j, "unit", s.unit);
  s.time = field<std::string>(j, "time", s.time);
  s.outcome = field<std::string>(j, "outcome", s.outcome);
  s.treatment = field<std::string>(j, "treatment", s.treatment);
  s.covariates = field(j, "covariates", std::vector<std::string>{});
  s.treatment_levels = field(j, "treatment_levels", std::vector<std::string>{});
  if (j.contains("treatment_start") && !j.at("treatment_start").is_null())
    s.treatment_start = required<long>(j, "treatment_start");
  return s;
}

std::vector<TrimRule> trim_rules_from_json(const Json& j) {
  std::vector<TrimRule> rules;
  if (j.is_null()) return rules;
  if (!j.is_array()) fail(ErrorKind::Config, "trim rules must be an array");
  for (const auto& r : j) {
    TrimRule rule;
    rule.covariate = required<std::string>(r, "covariate");
    const auto op = required<std::string>(r, "op");
    if (op == "<") {
      rule.op = TrimOp::Less;
    } else if (op == "<=") {
      rule.op = TrimOp::LessEqual;
    } else if (op == ">") {
      rule.op = TrimOp::Greater;
    } else if (op == ">=") {
      rule.op = TrimOp::GreaterEqual;
    } else {
      fail(ErrorKind::Config, "unknown trim operator '" + op + "'");
    }
    rule.value = required<double>(r, "value");
    rules.push_back(rule);
  }
  return rules;
}

std::uint64_t config_hash(const Json& config) {
  Fnv1a h;
  const auto text = config.dump();
  h.add_bytes(text.data(), text.size());
  return h.value();
}

Json parse_json_file(const std::string& path) {
  const auto text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Byte offset to line and column.
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(ErrorKind::Parse, path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
}

}  // namespace zigam
