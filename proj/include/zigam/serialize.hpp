#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "zigam/dataset.hpp"
#include "zigam/design.hpp"
#include "zigam/diagnostics.hpp"
#include "zigam/gam.hpp"
#include "zigam/mixture.hpp"
#include "zigam/selection.hpp"
#include "zigam/synth.hpp"

namespace zigam {

using Json = nlohmann::ordered_json;

Json to_json(const SmoothSpec& s);
SmoothSpec smooth_from_json(const Json& j);

Json to_json(const ModelFormula& f);
ModelFormula formula_from_json(const Json& j);

// Coefficients, smoothing parameters, EDF, frozen bases and the covariance
// diagonal. A restored fit predicts and reports standard errors of single
// coefficients; link-scale standard errors need the full covariance.
Json to_json(const GamFit& fit);
GamFit fit_from_json(const Json& j);

Json to_json(const MixtureFit& fit);
MixtureFit mixture_from_json(const Json& j);

struct ModelBundle {
  std::uint64_t data_fingerprint = 0;
  std::size_t t0_index = 0;
  bool random_growth = false;
  std::vector<MixtureFit> fits;
};

Json to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const Json& j);

Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);

Json to_json(const SelectionReport& r);
Json to_json(const MedoidSet& m);
Json to_json(const PlaceboResult& r);

CsvSchema schema_from_json(const Json& j);
std::vector<TrimRule> trim_rules_from_json(const Json& j);

// FNV-1a of the compact dump.
std::uint64_t config_hash(const Json& config);

Json parse_json_file(const std::string& path);

}  // namespace zigam
