#include "zigam/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "zigam/bootstrap.hpp"
#include "zigam/dataset.hpp"
#include "zigam/diagnostics.hpp"
#include "zigam/effects.hpp"
#include "zigam/error.hpp"
#include "zigam/mixture.hpp"
#include "zigam/selection.hpp"
#include "zigam/serialize.hpp"
#include "zigam/synth.hpp"
#include "zigam/util.hpp"

#ifndef ZIGAM_VERSION
#define ZIGAM_VERSION "0.0.0"
#endif

namespace zigam {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  bool fast_lambda = false;
};

class Context {
 public:
  explicit Context(const Flags& flags) : flags_(flags) {
    config_ = parse_json_file(flags.config);
    if (!config_.is_object()) fail(ErrorKind::Config, "top-level value must be an object");
    base_ = fs::path(flags.config).parent_path();
    seed_ = flags.seed ? *flags.seed : config_.value("seed", std::uint64_t{1});
    fast_lambda_ = flags.fast_lambda || config_.value("fast_lambda", false);
    Json hashed = config_;
    hashed.erase("workers");
    hashed["seed"] = seed_;
    hashed["fast_lambda"] = fast_lambda_;
    hash_ = config_hash(hashed);
    if (config_.contains("data")) require_file(path("data"));
    if (config_.contains("spillover") && config_["spillover"].contains("edges"))
      require_file(resolve(config_["spillover"]["edges"].get<std::string>()));
  }

  const Json& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  unsigned workers() const { return flags_.workers; }
  bool fast_lambda() const { return fast_lambda_; }

  std::string resolve(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q.string() : (base_ / q).string();
  }
  std::string path(const char* key) const {
    if (!config_.contains(key) || !config_[key].is_string())
      fail(ErrorKind::Config, std::string("missing path '") + key + "'");
    return resolve(config_[key].get<std::string>());
  }

  std::string header() const {
    return std::string("# zigam ") + ZIGAM_VERSION + " config=" + hex64(hash_) + " seed=" + std::to_string(seed_) +
           "\n";
  }
  Json meta() const {
    return Json{{"version", ZIGAM_VERSION}, {"config_hash", hex64(hash_)}, {"seed", seed_}};
  }

  void write_csv_output(const std::string& name, const std::string& body) const {
    write_file_atomic((fs::path(flags_.out) / name).string(), header() + body);
  }
  void write_json_output(const std::string& name, Json body) const {
    Json doc{{"meta", meta()}};
    for (auto& [k, v] : body.items()) doc[k] = std::move(v);
    write_file_atomic((fs::path(flags_.out) / name).string(), doc.dump(2) + "\n");
  }
  std::string out_path(const std::string& name) const { return (fs::path(flags_.out) / name).string(); }

 private:
  static void require_file(const std::string& p) {
    if (!fs::exists(p)) fail(ErrorKind::Io, "referenced file does not exist: " + p);
  }

  Flags flags_;
  Json config_;
  fs::path base_;
  std::uint64_t seed_ = 1;
  bool fast_lambda_ = false;
  std::uint64_t hash_ = 0;
};

PanelDataset load_data(const Context& ctx) {
  const auto& c = ctx.config();
  const auto schema = schema_from_json(c.value("schema", Json::object()));
  auto data = ingest_csv(ctx.path("data"), schema);
  const auto rules = trim_rules_from_json(c.value("trim", Json()));
  if (!rules.empty()) data = trim(data, rules);
  return data;
}

std::size_t period_index(const PanelDataset& data, long time) {
  const auto& times = data.times();
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] == time) return k;
  fail(ErrorKind::Config, "period " + std::to_string(time) + " is not in the panel");
}

std::size_t t0_index(const Context& ctx, const PanelDataset& data) {
  const auto& c = ctx.config();
  if (!c.contains("t0")) return 0;
  return period_index(data, c["t0"].get<long>());
}

PipelineSpec pipeline_spec(const Context& ctx, const PanelDataset& data) {
  const auto& c = ctx.config();
  PipelineSpec spec;
  if (!c.contains("cont_formula")) fail(ErrorKind::Config, "missing 'cont_formula'");
  spec.cont_formula = formula_from_json(c["cont_formula"]);
  if (c.contains("zero_formula") && !c["zero_formula"].is_null())
    spec.zero_formula = formula_from_json(c["zero_formula"]);
  spec.t0_index = t0_index(ctx, data);
  spec.random_growth = c.value("random_growth", false);
  return spec;
}

int arm_code(const PanelDataset& data, const Json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  return data.treatment_code(j[key].get<std::string>());
}

std::vector<double> target_x(const PanelDataset& data, const Json& t, std::string* name) {
  if (t.contains("unit")) {
    const auto unit = t["unit"].get<std::string>();
    const auto& ids = data.unit_ids();
    const auto it = std::find(ids.begin(), ids.end(), unit);
    if (it == ids.end()) fail(ErrorKind::Config, "target unit '" + unit + "' is not in the data");
    const auto row = static_cast<Eigen::Index>(it - ids.begin());
    *name = t.value("name", unit);
    const Eigen::VectorXd x = data.covariates().row(row).transpose();
    return {x.data(), x.data() + x.size()};
  }
  if (!t.contains("x")) fail(ErrorKind::Config, "target needs 'unit' or 'x'");
  *name = t.value("name", std::string("target"));
  std::vector<double> x(data.n_covariates());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto& cov = data.covariate_names()[k];
    if (!t["x"].contains(cov)) fail(ErrorKind::Config, "target '" + *name + "' lacks covariate " + cov);
    x[k] = t["x"][cov].get<double>();
  }
  return x;
}

std::vector<EffectTarget> effect_targets(const Context& ctx, const PanelDataset& data, std::size_t t0) {
  const auto& c = ctx.config();
  if (!c.contains("targets") || !c["targets"].is_array() || c["targets"].empty())
    fail(ErrorKind::Config, "'targets' must be a non-empty array");
  std::vector<EffectTarget> out;
  for (const auto& t : c["targets"]) {
    EffectTarget base;
    base.x = target_x(data, t, &base.unit);
    base.treatment = arm_code(data, t, "treatment", 1);
    base.reference = arm_code(data, t, "reference", 0);
    std::vector<std::size_t> periods;
    if (t.contains("periods")) {
      for (const auto& p : t["periods"]) periods.push_back(period_index(data, p.get<long>()));
    } else {
      for (std::size_t k = t0 + 1; k < data.n_periods(); ++k) periods.push_back(k);
    }
    for (auto p : periods) {
      if (p <= t0) fail(ErrorKind::Config, "target periods must follow t0");
      auto e = base;
      e.period_index = p;
      out.push_back(std::move(e));
    }
  }
  return out;
}

const MixtureFit& fit_for(const std::vector<MixtureFit>& fits, std::size_t period_index) {
  for (const auto& f : fits)
    if (f.period_index == period_index) return f;
  fail(ErrorKind::State, "no fitted model for period index " + std::to_string(period_index));
}

std::string term_table(const std::vector<MixtureFit>& fits) {
  std::ostringstream ss;
  ss << "period,part,term,smooth,estimate,se,edf,rank,statistic,p_value\n";
  auto emit = [&](long period, const char* part, const GamFit& fit) {
    for (const auto& t : term_pvalues(fit))
      ss << period << ',' << part << ',' << t.term << ',' << (t.smooth ? 1 : 0) << ',' << format_double(t.estimate)
         << ',' << format_double(t.se) << ',' << format_double(t.edf) << ',' << format_double(t.rank) << ','
         << format_double(t.statistic) << ',' << format_double(t.p_value) << '\n';
  };
  for (const auto& f : fits) {
    if (f.zero_part) emit(f.period, "zero", *f.zero_part);
    emit(f.period, "continuous", f.cont_part);
  }
  return ss.str();
}

void cmd_fit(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto spec = pipeline_spec(ctx, data);
  ModelBundle bundle;
  bundle.data_fingerprint = data.fingerprint();
  bundle.t0_index = spec.t0_index;
  bundle.random_growth = spec.random_growth;
  bundle.fits = fit_pipeline(data, spec, ctx.workers());
  ctx.write_csv_output("terms.csv", term_table(bundle.fits));
  ctx.write_json_output("model.json", Json{{"model", to_json(bundle)}});
}

void cmd_effect(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto spec = pipeline_spec(ctx, data);
  std::vector<MixtureFit> fits;
  if (ctx.config().contains("model")) {
    const auto doc = parse_json_file(ctx.path("model"));
    auto bundle = bundle_from_json(doc.contains("model") ? doc["model"] : doc);
    if (bundle.data_fingerprint != data.fingerprint())
      fail(ErrorKind::State, "model file was fitted on different data");
    if (bundle.t0_index != spec.t0_index) fail(ErrorKind::State, "model file uses a different t0");
    fits = std::move(bundle.fits);
  } else {
    fits = fit_pipeline(data, spec, ctx.workers());
  }
  std::vector<EffectEstimate> est;
  for (const auto& t : effect_targets(ctx, data, spec.t0_index))
    est.push_back(treatment_contrast(fit_for(fits, t.period_index), t.x, t.treatment, t.reference, t.unit));
  ctx.write_csv_output("effects.csv", effects_csv(est, data.treatment_labels()));
}

void cmd_bootstrap(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto spec = pipeline_spec(ctx, data);
  const auto targets = effect_targets(ctx, data, spec.t0_index);
  const auto j = ctx.config().value("bootstrap", Json::object());
  BootstrapPlan plan;
  plan.replicates = j.value("replicates", plan.replicates);
  plan.resample_unit = j.value("resample_unit", plan.resample_unit);
  plan.q_low = j.value("q_low", plan.q_low);
  plan.q_high = j.value("q_high", plan.q_high);
  plan.max_failure_share = j.value("max_failure_share", plan.max_failure_share);
  plan.fast_lambda = ctx.fast_lambda() || j.value("fast_lambda", false);
  plan.seed = ctx.seed();
  plan.workers = ctx.workers();
  const auto res = bootstrap_effects(data, spec, plan, targets);
  ctx.write_csv_output("effects_bootstrap.csv", effects_csv(res.estimates, data.treatment_labels()));
  if (j.value("dump_draws", false)) ctx.write_csv_output("draws.csv", draws_csv(res, targets));
  Json failures = Json::array();
  for (const auto& [b, msg] : res.failures) failures.push_back(Json{{"replicate", b}, {"error", msg}});
  ctx.write_json_output("bootstrap.json", Json{{"replicates", plan.replicates},
                                               {"successful", res.replicate_ids.size()},
                                               {"fast_lambda", res.fast_lambda},
                                               {"failures", std::move(failures)}});
}

void cmd_placebo(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto& c = ctx.config();
  if (!c.contains("placebo") || !c["placebo"].is_array() || c["placebo"].empty())
    fail(ErrorKind::Config, "'placebo' must be a non-empty array of windows");
  std::ostringstream ss;
  ss << "spec,controls,t0,t,pre_program,treatment,alpha_hat,se,p_value,verdict\n";
  for (const auto& w : c["placebo"]) {
    PlaceboConfig pc;
    const auto spec = w.value("spec", std::string("before_after"));
    if (spec == "before_after") {
      pc.spec = PlaceboSpec::BeforeAfter;
    } else if (spec == "random_growth") {
      pc.spec = PlaceboSpec::RandomGrowth;
    } else {
      fail(ErrorKind::Config, "unknown placebo spec '" + spec + "'");
    }
    const auto controls = w.value("controls", std::string("covariates"));
    if (controls == "none") {
      pc.controls = PlaceboControls::None;
    } else if (controls == "covariates") {
      pc.controls = PlaceboControls::Covariates;
    } else {
      fail(ErrorKind::Config, "unknown placebo controls '" + controls + "'");
    }
    if (!w.contains("t0") || !w.contains("t")) fail(ErrorKind::Config, "placebo window needs 't0' and 't'");
    pc.t0_index = period_index(data, w["t0"].get<long>());
    pc.t_index = period_index(data, w["t"].get<long>());
    pc.treatment = arm_code(data, w, "treatment", 1);
    pc.alpha = w.value("alpha", pc.alpha);
    pc.control_covariates = w.value("control_covariates", std::vector<std::string>{});
    const auto r = placebo_test(data, pc);
    ss << to_string(r.spec) << ',' << to_string(r.controls) << ',' << r.t0 << ',' << r.t << ','
       << (r.pre_program ? 1 : 0) << ',' << data.treatment_labels()[static_cast<std::size_t>(r.treatment)] << ','
       << format_double(r.alpha_hat) << ',' << format_double(r.se) << ',' << format_double(r.p_value) << ','
       << (r.pass ? "pass" : "fail") << '\n';
  }
  ctx.write_csv_output("placebo.csv", ss.str());
}

void cmd_compare(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto& c = ctx.config();
  if (!c.contains("ladder")) fail(ErrorKind::Config, "missing 'ladder' section");
  const auto& l = c["ladder"];
  LadderConfig lc;
  lc.t0_index = t0_index(ctx, data);
  if (!l.contains("target")) fail(ErrorKind::Config, "ladder needs a 'target'");
  lc.target_x = target_x(data, l["target"], &lc.target_unit);
  lc.treatment = arm_code(data, l, "treatment", 1);
  lc.size_covariate = l.value("size_covariate", lc.size_covariate);
  lc.density_covariate = l.value("density_covariate", lc.density_covariate);
  lc.controls = l.value("controls", std::vector<std::string>{});
  lc.tensor_dim = l.value("tensor_dim", lc.tensor_dim);
  lc.smooth_dim = l.value("smooth_dim", lc.smooth_dim);
  lc.workers = ctx.workers();
  const auto rows = fit_comparison_ladder(data, lc);
  ctx.write_csv_output("ladder.csv", ladder_csv(rows, data.treatment_labels()));
}

void cmd_select(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto& c = ctx.config();
  const auto s = c.value("selection", Json::object());
  const auto part_name = s.value("part", std::string("continuous"));
  ModelPart part;
  if (part_name == "continuous") {
    part = ModelPart::Continuous;
  } else if (part_name == "zero") {
    part = ModelPart::Zero;
  } else {
    fail(ErrorKind::Config, "selection part must be 'zero' or 'continuous'");
  }
  const char* key = part == ModelPart::Zero ? "zero_formula" : "cont_formula";
  if (!c.contains(key) || c[key].is_null()) fail(ErrorKind::Config, std::string("missing '") + key + "'");
  SelectionOptions opts;
  opts.threshold = s.value("threshold", opts.threshold);
  opts.force_include = s.value("force_include", std::vector<std::string>{});
  opts.workers = ctx.workers();
  const auto report = backward_select(data, formula_from_json(c[key]), part, t0_index(ctx, data), opts);

  Json out{{"selection", to_json(report)}};
  if (s.contains("cluster")) {
    const auto& cl = s["cluster"];
    auto covs = cl.value("covariates", data.covariate_names());
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(data.n_units()), static_cast<Eigen::Index>(covs.size()));
    for (std::size_t k = 0; k < covs.size(); ++k)
      pts.col(static_cast<Eigen::Index>(k)) =
          data.covariates().col(static_cast<Eigen::Index>(data.covariate_index(covs[k])));
    const auto metric_name = cl.value("metric", std::string("standardized_euclidean"));
    Metric metric = Metric::StandardizedEuclidean;
    if (metric_name == "euclidean") {
      metric = Metric::Euclidean;
    } else if (metric_name != "standardized_euclidean") {
      fail(ErrorKind::Config, "unknown metric '" + metric_name + "'");
    }
    const auto m = kmedoids(pts, cl.value("k", 3), metric, ctx.seed(), data.unit_ids());
    out["medoids"] = to_json(m);
    const auto profile_covs = cl.value("profile_covariates", std::vector<std::string>{});
    ctx.write_csv_output("medoid_profile.csv", profile_csv(profile_medoids(data, m, profile_covs)));
  }
  ctx.write_json_output("selection.json", std::move(out));
}

void cmd_spillover(const Context& ctx) {
  const auto data = load_data(ctx);
  const auto& c = ctx.config();
  if (!c.contains("spillover")) fail(ErrorKind::Config, "missing 'spillover' section");
  const auto& s = c["spillover"];
  if (!s.contains("edges") || !s.contains("t")) fail(ErrorKind::Config, "spillover needs 'edges' and 't'");
  const auto graph = read_edge_list(ctx.resolve(s["edges"].get<std::string>()), data);
  const auto wd = build_wd(data, graph, ProgramMap::from_labels(data.treatment_labels()));
  SpilloverConfig sc;
  if (!c.contains("cont_formula")) fail(ErrorKind::Config, "missing 'cont_formula'");
  sc.base = formula_from_json(c["cont_formula"]);
  sc.interaction_tensor = s.value("interaction_tensor", false);
  sc.size_covariate = s.value("size_covariate", sc.size_covariate);
  sc.density_covariate = s.value("density_covariate", sc.density_covariate);
  sc.tensor_dim = s.value("tensor_dim", sc.tensor_dim);
  sc.t0_index = t0_index(ctx, data);
  sc.t_index = period_index(data, s["t"].get<long>());
  const auto res = fit_spillover_model(data, wd, sc);
  std::ostringstream ss;
  ss << "kind,term,estimate,se,edf,statistic,p_value\n";
  auto emit = [&](const char* kind, const std::vector<TermTest>& tests) {
    for (const auto& t : tests)
      ss << kind << ',' << t.term << ',' << format_double(t.estimate) << ',' << format_double(t.se) << ','
         << format_double(t.edf) << ',' << format_double(t.statistic) << ',' << format_double(t.p_value) << '\n';
  };
  emit("omega", res.omega);
  emit("interaction", res.interactions);
  ctx.write_csv_output("spillover.csv", ss.str());
  Json counts = Json::object();
  for (std::size_t l = 0; l < kWdLabels.size(); ++l) counts[kWdLabels[l]] = wd.counts[l];
  auto warnings = wd.warnings;
  warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
  ctx.write_json_output("spillover.json", Json{{"wd_counts", std::move(counts)}, {"warnings", warnings}});
}

void cmd_simulate(const Context& ctx, bool seed_flag) {
  const auto& c = ctx.config();
  if (!c.contains("scenario")) fail(ErrorKind::Config, "missing 'scenario' section");
  auto scenario = scenario_from_json(c["scenario"]);
  if (seed_flag || c.contains("seed")) scenario.seed = ctx.seed();
  const auto panel = generate(scenario);
  const auto& data = panel.data;
  write_csv(data, ctx.out_path("data.csv"), ctx.header());

  std::ostringstream ss;
  ss << "unit,period,treatment,truth\n";
  for (std::size_t i = 0; i < data.n_units(); ++i) {
    const Eigen::VectorXd xv = data.covariates().row(static_cast<Eigen::Index>(i)).transpose();
    const std::span<const double> x(xv.data(), static_cast<std::size_t>(xv.size()));
    for (std::size_t t = scenario.t0_index + 1; t < data.n_periods(); ++t)
      for (std::size_t r = 1; r < scenario.n_treatments(); ++r)
        ss << data.unit_ids()[i] << ',' << data.times()[t] << ',' << scenario.treatment_labels[r] << ','
           << format_double(truth_effect(panel.truth, x, static_cast<int>(r), t)) << '\n';
  }
  ctx.write_csv_output("truth.csv", ss.str());
  Json truth{{"scenario", to_json(scenario)}};
  if (!panel.edges.empty()) {
    std::ostringstream es;
    es << "unit_a,unit_b\n";
    for (const auto& [a, b] : panel.edges) es << data.unit_ids()[a] << ',' << data.unit_ids()[b] << '\n';
    ctx.write_csv_output("edges.csv", es.str());
    std::array<std::size_t, 5> counts{};
    for (int l : panel.wd) ++counts[static_cast<std::size_t>(l)];
    Json jc = Json::object();
    for (std::size_t l = 0; l < kWdLabels.size(); ++l) jc[kWdLabels[l]] = counts[l];
    truth["wd_counts"] = std::move(jc);
  }
  ctx.write_json_output("truth.json", std::move(truth));
}

void report_error(const char* kind, const std::string& message) {
  std::cerr << Json{{"error", Json{{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Zero-inflated additive treatment-effect models for panel data", "zigam"};
  app.set_version_flag("--version", std::string(ZIGAM_VERSION));
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 1;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"fit", "Fit per-period mixture models and write the model bundle"},
      {"effect", "Counterfactual effects at the configured targets"},
      {"bootstrap", "Effects with unit-bootstrap percentile bands"},
      {"placebo", "Placebo tests over the configured windows"},
      {"compare", "Effect profiles of the four-model ladder"},
      {"select", "Backward variable selection and k-medoids profiles"},
      {"spillover", "Neighbourhood spillover model"},
      {"simulate", "Generate a synthetic panel with its analytic truth"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--fast-lambda", flags.fast_lambda, "Reuse the original smoothing parameters");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }
  bool seed_given = false;
  for (auto* sub : subs)
    if (sub->parsed() && sub->count("--seed") > 0) seed_given = true;
  if (seed_given) flags.seed = seed;

  try {
    const Context ctx(flags);
    const auto name = app.get_subcommands().front()->get_name();
    try {
      if (name == "fit") cmd_fit(ctx);
      else if (name == "effect") cmd_effect(ctx);
      else if (name == "bootstrap") cmd_bootstrap(ctx);
      else if (name == "placebo") cmd_placebo(ctx);
      else if (name == "compare") cmd_compare(ctx);
      else if (name == "select") cmd_select(ctx);
      else if (name == "spillover") cmd_spillover(ctx);
      else cmd_simulate(ctx, seed_given);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Config, flags.config + ": " + e.what());
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    if (e.kind() == ErrorKind::Config && msg.rfind(flags.config, 0) != 0) msg = flags.config + ": " + msg;
    report_error(to_string(e.kind()), msg);
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}

}  // namespace zigam
