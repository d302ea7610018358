#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "zigam/dataset.hpp"
#include "zigam/effects.hpp"
#include "zigam/gam.hpp"

namespace zigam {

// ---- placebo tests --------------------------------------------------------

enum class PlaceboSpec { BeforeAfter, RandomGrowth };
enum class PlaceboControls { None, Covariates };

struct PlaceboConfig {
  PlaceboSpec spec = PlaceboSpec::BeforeAfter;
  PlaceboControls controls = PlaceboControls::Covariates;
  std::size_t t0_index = 0;
  std::size_t t_index = 1;
  int treatment = 1;
  double alpha = 0.05;
  // Linear controls; empty means every covariate of the dataset.
  std::vector<std::string> control_covariates;
};

struct PlaceboResult {
  PlaceboSpec spec = PlaceboSpec::BeforeAfter;
  PlaceboControls controls = PlaceboControls::None;
  long t0 = 0;
  long t = 0;
  bool pre_program = false;
  int treatment = 1;
  double alpha_hat = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  bool pass = true;  // p_value > alpha
};

// Continuous-part fit with a homogeneous treatment effect on the chosen
// differencing; reports the designated arm's coefficient.
PlaceboResult placebo_test(const PanelDataset& data, const PlaceboConfig& config);

std::string to_string(PlaceboSpec s);
std::string to_string(PlaceboControls c);

// ---- model ladder ---------------------------------------------------------

struct LadderConfig {
  std::size_t t0_index = 0;
  int treatment = 1;
  std::vector<double> target_x;
  std::string target_unit = "target";
  std::string size_covariate = "SIZE";
  std::string density_covariate = "DENSITY";
  // Controls entering every model; linear in models 1-3, smooth in model 4.
  std::vector<std::string> controls;
  int tensor_dim = 5;
  int smooth_dim = 10;
  unsigned workers = 1;
};

struct LadderRow {
  int model = 0;
  EffectEstimate estimate;
};

// Model 1: linear continuous part with a homogeneous effect. Model 2: adds
// treatment-specific slopes in SIZE and DENSITY. Model 3: model 2 plus a
// linear logit zero part. Model 4: additive mixture with a treatment-specific
// tensor surface in (SIZE, DENSITY). Models 1 and 2 use the nonzero rows and
// a zero probability of 0, so all four profiles share one scale.
std::vector<LadderRow> fit_comparison_ladder(const PanelDataset& data, const LadderConfig& config);

std::array<ModelFormula, 4> ladder_cont_formulas(const LadderConfig& config);
std::array<std::optional<ModelFormula>, 4> ladder_zero_formulas(const LadderConfig& config);

std::string ladder_csv(std::span<const LadderRow> rows, const std::vector<std::string>& labels);

// ---- spillovers -----------------------------------------------------------

struct NeighborGraph {
  std::vector<std::vector<std::size_t>> adjacency;

  static NeighborGraph from_edges(std::size_t n,
                                  std::span<const std::pair<std::size_t, std::size_t>> edges);
  std::size_t size() const { return adjacency.size(); }
  bool symmetric() const;
};

// Edge list CSV with header `unit_a,unit_b`, ids as in the dataset.
NeighborGraph read_edge_list(const std::string& path, const PanelDataset& data);

enum class WdLevel { None = 0, FiveAll = 1, ZAll = 2, FiveZSome = 3, FiveZAll = 4 };
inline constexpr std::array<const char*, 5> kWdLabels{"0", "5_ALL", "Z_ALL", "5&Z_SOME", "5&Z_ALL"};

// Program membership of each treatment arm.
struct ProgramMap {
  std::vector<bool> in_5b;
  std::vector<bool> in_zrr;

  // Arms whose label contains "5B" belong to 5B, those containing "ZRR" to ZRR.
  static ProgramMap from_labels(const std::vector<std::string>& labels);
};

struct WdResult {
  std::vector<int> level;  // WdLevel per unit
  std::array<std::size_t, 5> counts{};
  std::vector<std::string> warnings;
};

// Neighbourhood taxonomy: all untreated -> 0, all 5B only -> 5_ALL, all ZRR
// only -> Z_ALL, all under both -> 5&Z_ALL, any other mixture -> 5&Z_SOME.
// Units without neighbours are labelled 0 with a warning.
WdResult build_wd(const PanelDataset& data, const NeighborGraph& graph, const ProgramMap& programs);
WdResult build_wd(std::span<const int> treatment, const NeighborGraph& graph, const ProgramMap& programs);

struct SpilloverConfig {
  ModelFormula base;  // continuous-part formula without WD
  bool interaction_tensor = false;
  std::string size_covariate = "SIZE";
  std::string density_covariate = "DENSITY";
  int tensor_dim = 5;
  std::size_t t0_index = 0;
  std::size_t t_index = 1;
  std::string wd_name = "WD";
};

struct SpilloverResult {
  GamFit fit;
  std::vector<TermTest> omega;         // WD main effects
  std::vector<TermTest> interactions;  // WD-specific surfaces
  std::vector<std::string> warnings;
};

SpilloverResult fit_spillover_model(const PanelDataset& data, const WdResult& wd,
                                    const SpilloverConfig& config);

}  // namespace zigam
