#include "zigam/diagnostics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

std::string to_string(PlaceboSpec s) {
  return s == PlaceboSpec::BeforeAfter ? "before_after" : "random_growth";
}

std::string to_string(PlaceboControls c) { return c == PlaceboControls::None ? "none" : "covariates"; }

PlaceboResult placebo_test(const PanelDataset& data, const PlaceboConfig& config) {
  const auto periods = data.n_periods();
  if (config.t0_index >= periods || config.t_index >= periods || config.t_index <= config.t0_index)
    fail(ErrorKind::Usage, "placebo window needs t0 < t within the panel");
  if (config.spec == PlaceboSpec::RandomGrowth && config.t0_index == 0)
    fail(ErrorKind::Usage, "random-growth placebo needs a period before t0");
  if (config.treatment <= 0 || static_cast<std::size_t>(config.treatment) >= data.n_treatments())
    fail(ErrorKind::Usage, "placebo treatment must be a treated arm");
  if (!(config.alpha > 0 && config.alpha < 1)) fail(ErrorKind::Config, "placebo alpha must lie in (0, 1)");

  const auto samples = config.spec == PlaceboSpec::BeforeAfter
                           ? build_diff_samples(data, config.t0_index)
                           : random_growth_transform(data, config.t0_index);
  const auto& sample = samples[config.t_index - config.t0_index - 1];
  ModelFormula f;
  if (config.controls == PlaceboControls::Covariates)
    f.linear = config.control_covariates.empty() ? data.covariate_names() : config.control_covariates;
  const auto fit = fit_gaussian(f, sample);
  const auto name = "D=" + data.treatment_labels()[static_cast<std::size_t>(config.treatment)];
  const auto tests = term_pvalues(fit);
  PlaceboResult r;
  r.spec = config.spec;
  r.controls = config.controls;
  r.t0 = data.times()[config.t0_index];
  r.t = data.times()[config.t_index];
  r.pre_program = config.t_index < data.treatment_start_index();
  r.treatment = config.treatment;
  for (const auto& t : tests) {
    if (t.term != name) continue;
    r.alpha_hat = t.estimate;
    r.se = t.se;
    r.p_value = t.p_value;
  }
  r.pass = r.p_value > config.alpha;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> unique_names(std::vector<std::string> v) {
  std::vector<std::string> out;
  for (auto& s : v)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  return out;
}

std::vector<std::string> ladder_linear(const LadderConfig& c) {
  auto v = c.controls;
  v.push_back(c.size_covariate);
  v.push_back(c.density_covariate);
  return unique_names(std::move(v));
}

}  // namespace

std::array<ModelFormula, 4> ladder_cont_formulas(const LadderConfig& c) {
  std::array<ModelFormula, 4> f;
  f[0].linear = ladder_linear(c);
  f[1] = f[0];
  f[1].linear_by_treatment = {c.size_covariate, c.density_covariate};
  f[2] = f[1];
  for (const auto& v : ladder_linear(c)) f[3].smooths.push_back(SmoothSpec::univariate(v, c.smooth_dim));
  auto te = SmoothSpec::tensor(c.size_covariate, c.density_covariate, c.tensor_dim, c.tensor_dim);
  te.by = SmoothSpec::By::Treatment;
  f[3].smooths.push_back(te);
  return f;
}

std::array<std::optional<ModelFormula>, 4> ladder_zero_formulas(const LadderConfig& c) {
  std::array<std::optional<ModelFormula>, 4> f;
  ModelFormula linear;
  linear.linear = ladder_linear(c);
  f[2] = linear;
  ModelFormula additive;
  for (const auto& v : ladder_linear(c)) additive.smooths.push_back(SmoothSpec::univariate(v, c.smooth_dim));
  f[3] = additive;
  return f;
}

std::vector<LadderRow> fit_comparison_ladder(const PanelDataset& data, const LadderConfig& config) {
  if (config.target_x.size() != data.n_covariates())
    fail(ErrorKind::Usage, "ladder target needs one value per covariate");
  if (config.treatment <= 0 || static_cast<std::size_t>(config.treatment) >= data.n_treatments())
    fail(ErrorKind::Usage, "ladder treatment must be a treated arm");
  const auto samples = build_diff_samples(data, config.t0_index);
  const auto cont = ladder_cont_formulas(config);
  const auto zero = ladder_zero_formulas(config);
  std::vector<std::vector<MixtureFit>> fits(4);
  parallel_for(4, config.workers, [&](std::size_t m) {
    fits[m] = fit_periods(samples, zero[m], cont[m], 1);
  });
  std::vector<LadderRow> out;
  for (int m = 0; m < 4; ++m) {
    const auto profile = effect_profile(fits[static_cast<std::size_t>(m)], config.target_x, config.treatment,
                                        config.target_unit);
    for (const auto& e : profile) out.push_back({m + 1, e});
  }
  return out;
}

std::string ladder_csv(std::span<const LadderRow> rows, const std::vector<std::string>& labels) {
  std::ostringstream ss;
  ss << "model,unit,period,treatment,point,one_minus_p_r,alpha_hat,p_diff,mu0_hat,pre_program,extrapolated\n";
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    ss << r.model << ',' << e.unit << ',' << e.period << ',' << labels[static_cast<std::size_t>(e.treatment)] << ','
       << format_double(e.point) << ',' << format_double(e.components.one_minus_p_r) << ','
       << format_double(e.components.alpha_hat) << ',' << format_double(e.components.p_diff) << ','
       << format_double(e.components.mu0_hat) << ',' << (e.pre_program ? 1 : 0) << ','
       << (e.extrapolated ? 1 : 0) << '\n';
  }
  return ss.str();
}

// ---------------------------------------------------------------------------

NeighborGraph NeighborGraph::from_edges(std::size_t n,
                                        std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::set<std::size_t>> sets(n);
  for (const auto& [a, b] : edges) {
    if (a >= n || b >= n) fail(ErrorKind::Data, "edge references a unit outside the graph");
    if (a == b) continue;
    sets[a].insert(b);
    sets[b].insert(a);
  }
  NeighborGraph g;
  g.adjacency.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.adjacency[i].assign(sets[i].begin(), sets[i].end());
  return g;
}

bool NeighborGraph::symmetric() const {
  for (std::size_t i = 0; i < adjacency.size(); ++i)
    for (auto j : adjacency[i]) {
      if (j >= adjacency.size()) return false;
      const auto& back = adjacency[j];
      if (std::find(back.begin(), back.end(), i) == back.end()) return false;
    }
  return true;
}

NeighborGraph read_edge_list(const std::string& path, const PanelDataset& data) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open edge list " + path);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.n_units(); ++i) index[data.unit_ids()[i]] = i;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto trim = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": expected two columns");
    const auto a = trim(line.substr(0, comma));
    const auto b = trim(line.substr(comma + 1));
    if (!header_seen && a == "unit_a" && b == "unit_b") {
      header_seen = true;
      continue;
    }
    header_seen = true;
    const auto ia = index.find(a);
    const auto ib = index.find(b);
    if (ia == index.end() || ib == index.end())
      fail(ErrorKind::Data, path + ":" + std::to_string(line_no) + ": unknown unit '" +
                                (ia == index.end() ? a : b) + "'");
    edges.emplace_back(ia->second, ib->second);
  }
  return NeighborGraph::from_edges(data.n_units(), edges);
}

ProgramMap ProgramMap::from_labels(const std::vector<std::string>& labels) {
  ProgramMap m;
  for (const auto& l : labels) {
    m.in_5b.push_back(l.find("5B") != std::string::npos);
    m.in_zrr.push_back(l.find("ZRR") != std::string::npos);
  }
  return m;
}

WdResult build_wd(const PanelDataset& data, const NeighborGraph& graph, const ProgramMap& programs) {
  if (programs.in_5b.size() != data.n_treatments() || programs.in_zrr.size() != data.n_treatments())
    fail(ErrorKind::Config, "program map needs one entry per treatment arm");
  return build_wd(data.treatment(), graph, programs);
}

WdResult build_wd(std::span<const int> treatment, const NeighborGraph& graph, const ProgramMap& programs) {
  if (graph.size() != treatment.size()) fail(ErrorKind::Shape, "neighbour graph does not cover every unit");
  if (programs.in_5b.size() != programs.in_zrr.size())
    fail(ErrorKind::Config, "program map is inconsistent");
  WdResult out;
  out.level.assign(treatment.size(), 0);
  std::size_t isolated = 0;
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    const auto& nb = graph.adjacency[i];
    if (nb.empty()) {
      ++isolated;
      ++out.counts[0];
      continue;
    }
    // Status: 0 none, 1 5B only, 2 ZRR only, 3 both.
    std::array<std::size_t, 4> seen{};
    for (auto j : nb) {
      const auto r = static_cast<std::size_t>(treatment[j]);
      if (r >= programs.in_5b.size()) fail(ErrorKind::Config, "program map has no entry for arm " + std::to_string(r));
      const int s = (programs.in_5b[r] ? 1 : 0) + (programs.in_zrr[r] ? 2 : 0);
      ++seen[static_cast<std::size_t>(s)];
    }
    WdLevel level = WdLevel::FiveZSome;
    if (seen[0] == nb.size()) level = WdLevel::None;
    else if (seen[1] == nb.size()) level = WdLevel::FiveAll;
    else if (seen[2] == nb.size()) level = WdLevel::ZAll;
    else if (seen[3] == nb.size()) level = WdLevel::FiveZAll;
    out.level[i] = static_cast<int>(level);
    ++out.counts[static_cast<std::size_t>(level)];
  }
  if (isolated > 0)
    out.warnings.push_back(std::to_string(isolated) + " unit(s) without neighbours labelled 0");
  return out;
}

SpilloverResult fit_spillover_model(const PanelDataset& data, const WdResult& wd,
                                    const SpilloverConfig& config) {
  if (wd.level.size() != data.n_units()) fail(ErrorKind::Shape, "WD labels do not match the dataset");
  if (config.t_index <= config.t0_index || config.t_index >= data.n_periods())
    fail(ErrorKind::Usage, "spillover fit needs t0 < t within the panel");
  std::vector<double> wd_values(wd.level.begin(), wd.level.end());
  const auto augmented = data.with_covariate(config.wd_name, wd_values);
  const auto samples = build_diff_samples(augmented, config.t0_index);
  const auto& sample = samples[config.t_index - config.t0_index - 1];

  SpilloverResult res;
  std::array<std::size_t, 5> used{};
  for (auto i : sample.nonzero_rows()) ++used[static_cast<std::size_t>(wd.level[i])];
  std::size_t present = 0;
  for (std::size_t l = 0; l < used.size(); ++l) {
    if (used[l] > 0) {
      ++present;
    } else {
      res.warnings.push_back(std::string("WD level ") + kWdLabels[l] + " is empty and was dropped");
    }
  }
  if (present < 2) fail(ErrorKind::Config, "WD takes a single level: no spillover contrast");

  ModelFormula f = config.base;
  f.factors.push_back(config.wd_name);
  if (config.interaction_tensor) {
    auto te = SmoothSpec::tensor(config.size_covariate, config.density_covariate, config.tensor_dim,
                                 config.tensor_dim);
    te.by = SmoothSpec::By::Factor;
    te.by_covariate = config.wd_name;
    f.smooths.push_back(te);
  }
  res.fit = fit_gaussian(f, sample);
  for (const auto& w : res.fit.warnings) res.warnings.push_back(w);
  const auto tests = term_pvalues(res.fit);
  const auto wd_index = static_cast<int>(augmented.covariate_index(config.wd_name));
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const auto& term = res.fit.schema.terms[t];
    if (term.kind == TermKind::FactorLevel && term.covariate == wd_index) {
      auto test = tests[t];
      test.term = std::string("WD=") + kWdLabels[static_cast<std::size_t>(term.level)];
      res.omega.push_back(test);
    } else if (term.is_smooth() && term.by_covariate == wd_index) {
      auto test = tests[t];
      test.term = res.fit.schema.formula.smooths[static_cast<std::size_t>(term.smooth_index)].label() +
                  ":WD=" + kWdLabels[static_cast<std::size_t>(term.level)];
      res.interactions.push_back(test);
    }
  }
  return res;
}

}  // namespace zigam
