#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zigam {

// Column mapping for long-format panel CSV files.
struct CsvSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::string treatment = "treatment";
  std::vector<std::string> covariates;
  // Ordered treatment labels, first one is the untreated arm. When empty the
  // treatment column must hold integer codes 0..R-1.
  std::vector<std::string> treatment_levels;
  // Time value of the first treated period. Defaults to the second period.
  std::optional<long> treatment_start;
};

// Balanced panel: outcomes(unit, period), one treatment label per unit and
// baseline covariates measured at the first period.
class PanelDataset {
 public:
  PanelDataset(std::vector<std::string> unit_ids, std::vector<long> times,
               Eigen::MatrixXd outcomes, std::vector<int> treatment,
               std::vector<std::string> treatment_labels,
               Eigen::MatrixXd covariates,
               std::vector<std::string> covariate_names,
               std::size_t treatment_start_index);

  std::size_t n_units() const { return unit_ids_.size(); }
  std::size_t n_periods() const { return times_.size(); }
  std::size_t n_treatments() const { return treatment_labels_.size(); }
  std::size_t n_covariates() const { return covariate_names_.size(); }

  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<long>& times() const { return times_; }
  const Eigen::MatrixXd& outcomes() const { return outcomes_; }
  const std::vector<int>& treatment() const { return treatment_; }
  const std::vector<std::string>& treatment_labels() const {
    return treatment_labels_;
  }
  const Eigen::MatrixXd& covariates() const { return *covariates_; }
  std::shared_ptr<const Eigen::MatrixXd> shared_covariates() const {
    return covariates_;
  }
  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }
  std::size_t treatment_start_index() const { return treatment_start_index_; }

  // Index of a covariate column; throws a config error when unknown.
  std::size_t covariate_index(const std::string& name) const;
  std::optional<std::size_t> find_covariate(const std::string& name) const;
  // Label code for a treatment name; throws a usage error when unknown.
  int treatment_code(const std::string& label) const;

  std::vector<std::size_t> group_counts() const;

  // Rows in the given order; repeated indices are allowed (bootstrap).
  PanelDataset select_units(std::span<const std::size_t> rows) const;

  // Same panel with one covariate column appended.
  PanelDataset with_covariate(const std::string& name,
                              std::span<const double> values) const;

  // FNV-1a hash over every stored value.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> unit_ids_;
  std::vector<long> times_;
  Eigen::MatrixXd outcomes_;
  std::vector<int> treatment_;
  std::vector<std::string> treatment_labels_;
  std::shared_ptr<const Eigen::MatrixXd> covariates_;
  std::vector<std::string> covariate_names_;
  std::size_t treatment_start_index_;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::vector<std::size_t> group_counts;
};

PanelDataset ingest_csv(const std::string& path, const CsvSchema& schema,
                        IngestReport* report = nullptr);

// Writes the dataset in the long format read by ingest_csv. Values are
// printed with round-trip precision. `preamble` is written verbatim before
// the header; ingest_csv skips lines starting with '#'.
void write_csv(const PanelDataset& data, const std::string& path,
               const std::string& preamble = {});

enum class TrimOp { Less, LessEqual, Greater, GreaterEqual };

struct TrimRule {
  std::string covariate;
  TrimOp op = TrimOp::Less;
  double value = 0.0;

  bool keeps(double x) const;
};

struct TrimReport {
  std::size_t dropped = 0;
  // Number of units violating each rule; a unit may count against several.
  std::vector<std::size_t> dropped_by_rule;
};

PanelDataset trim(const PanelDataset& data, std::span<const TrimRule> rules,
                  TrimReport* report = nullptr);

// Outcome differences for one target period relative to a base period.
struct DiffSample {
  std::size_t period_index = 0;
  long period = 0;
  std::size_t t0_index = 0;
  bool pre_program = false;
  Eigen::VectorXd delta;
  std::vector<std::uint8_t> is_zero;
  std::vector<int> treatment;
  std::shared_ptr<const Eigen::MatrixXd> covariates;
  std::vector<std::string> covariate_names;
  std::vector<std::string> treatment_labels;

  std::size_t size() const { return static_cast<std::size_t>(delta.size()); }
  std::size_t n_treatments() const { return treatment_labels.size(); }
  std::size_t zero_count() const;
  double zero_share() const;
  std::vector<double> zero_share_by_group() const;
  std::vector<std::size_t> nonzero_rows() const;
  std::vector<std::size_t> all_rows() const;
};

// One sample per period after t0_index: delta = Y_t - Y_t0.
std::vector<DiffSample> build_diff_samples(const PanelDataset& data,
                                           std::size_t t0_index);

// Random-growth differencing: delta = Y_t - Y_t0 - (t - t0) (Y_t0 - Y_{t0-1})
// with t - t0 counted in period steps.
std::vector<DiffSample> random_growth_transform(const PanelDataset& data,
                                                std::size_t t0_index);

}  // namespace zigam
