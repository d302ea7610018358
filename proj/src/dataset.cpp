#include "zigam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "zigam/error.hpp"
#include "zigam/util.hpp"

namespace zigam {

PanelDataset::PanelDataset(std::vector<std::string> unit_ids,
                           std::vector<long> times, Eigen::MatrixXd outcomes,
                           std::vector<int> treatment,
                           std::vector<std::string> treatment_labels,
                           Eigen::MatrixXd covariates,
                           std::vector<std::string> covariate_names,
                           std::size_t treatment_start_index)
    : unit_ids_(std::move(unit_ids)),
      times_(std::move(times)),
      outcomes_(std::move(outcomes)),
      treatment_(std::move(treatment)),
      treatment_labels_(std::move(treatment_labels)),
      covariates_(std::make_shared<const Eigen::MatrixXd>(std::move(covariates))),
      covariate_names_(std::move(covariate_names)),
      treatment_start_index_(treatment_start_index) {
  const auto n = unit_ids_.size();
  if (times_.size() < 2) fail(ErrorKind::Data, "panel needs at least two periods");
  for (std::size_t t = 1; t < times_.size(); ++t) {
    if (times_[t] <= times_[t - 1])
      fail(ErrorKind::Data, "periods must be strictly increasing");
  }
  if (static_cast<std::size_t>(outcomes_.rows()) != n ||
      static_cast<std::size_t>(outcomes_.cols()) != times_.size())
    fail(ErrorKind::Shape, "outcome matrix must be units x periods");
  if (treatment_.size() != n) fail(ErrorKind::Shape, "one treatment label per unit");
  if (static_cast<std::size_t>(covariates_->rows()) != n ||
      static_cast<std::size_t>(covariates_->cols()) != covariate_names_.size())
    fail(ErrorKind::Shape, "covariate matrix must be units x named covariates");
  if (treatment_labels_.empty()) fail(ErrorKind::Data, "no treatment labels");
  for (int d : treatment_) {
    if (d < 0 || static_cast<std::size_t>(d) >= treatment_labels_.size())
      fail(ErrorKind::Data, "treatment code out of range: " + std::to_string(d));
  }
  if (treatment_start_index_ == 0 || treatment_start_index_ >= times_.size())
    fail(ErrorKind::Data, "treatment start must be a period after the first");
  if (!outcomes_.allFinite()) fail(ErrorKind::Data, "non-finite outcome value");
  for (std::size_t i = 0; i < covariate_names_.size(); ++i) {
    for (std::size_t j = i + 1; j < covariate_names_.size(); ++j) {
      if (covariate_names_[i] == covariate_names_[j])
        fail(ErrorKind::Data, "duplicate covariate name " + covariate_names_[i]);
    }
  }
}

std::optional<std::size_t> PanelDataset::find_covariate(
    const std::string& name) const {
  for (std::size_t j = 0; j < covariate_names_.size(); ++j) {
    if (covariate_names_[j] == name) return j;
  }
  return std::nullopt;
}

std::size_t PanelDataset::covariate_index(const std::string& name) const {
  auto j = find_covariate(name);
  if (!j) fail(ErrorKind::Config, "unknown covariate '" + name + "'");
  return *j;
}

int PanelDataset::treatment_code(const std::string& label) const {
  for (std::size_t r = 0; r < treatment_labels_.size(); ++r) {
    if (treatment_labels_[r] == label) return static_cast<int>(r);
  }
  fail(ErrorKind::Usage, "unknown treatment label '" + label + "'");
}

std::vector<std::size_t> PanelDataset::group_counts() const {
  std::vector<std::size_t> counts(treatment_labels_.size(), 0);
  for (int d : treatment_) ++counts[static_cast<std::size_t>(d)];
  return counts;
}

PanelDataset PanelDataset::select_units(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), outcomes_.cols());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), covariates_->cols());
  std::vector<int> d;
  d.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    if (rows[k] >= n_units()) fail(ErrorKind::Usage, "row index out of range");
    ids.push_back(unit_ids_[rows[k]]);
    y.row(static_cast<Eigen::Index>(k)) = outcomes_.row(i);
    x.row(static_cast<Eigen::Index>(k)) = covariates_->row(i);
    d.push_back(treatment_[rows[k]]);
  }
  return PanelDataset(std::move(ids), times_, std::move(y), std::move(d),
                      treatment_labels_, std::move(x), covariate_names_,
                      treatment_start_index_);
}

PanelDataset PanelDataset::with_covariate(const std::string& name,
                                          std::span<const double> values) const {
  if (values.size() != n_units())
    fail(ErrorKind::Shape, "new covariate needs one value per unit");
  Eigen::MatrixXd x(covariates_->rows(), covariates_->cols() + 1);
  x.leftCols(covariates_->cols()) = *covariates_;
  for (std::size_t i = 0; i < values.size(); ++i)
    x(static_cast<Eigen::Index>(i), covariates_->cols()) = values[i];
  auto names = covariate_names_;
  names.push_back(name);
  return PanelDataset(unit_ids_, times_, outcomes_, treatment_,
                      treatment_labels_, std::move(x), std::move(names),
                      treatment_start_index_);
}

std::uint64_t PanelDataset::fingerprint() const {
  Fnv1a h;
  for (const auto& id : unit_ids_) h.add(id);
  for (long t : times_) h.add(t);
  for (Eigen::Index k = 0; k < outcomes_.size(); ++k) h.add(outcomes_.data()[k]);
  for (int d : treatment_) h.add(static_cast<long>(d));
  for (const auto& l : treatment_labels_) h.add(l);
  for (Eigen::Index k = 0; k < covariates_->size(); ++k)
    h.add(covariates_->data()[k]);
  for (const auto& c : covariate_names_) h.add(c);
  h.add(static_cast<long>(treatment_start_index_));
  return h.value();
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const auto t = trim_ws(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_long(const std::string& s, long& out) {
  const auto t = trim_ws(s);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

PanelDataset ingest_csv(const std::string& path, const CsvSchema& schema,
                        IngestReport* report) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  do {
    if (!std::getline(in, line)) fail(ErrorKind::Data, path + ": empty file");
    ++line_no;
  } while (!line.empty() && line[0] == '#');
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (trim_ws(header[k]) == name) return k;
    }
    fail(ErrorKind::Schema, path + ": missing column '" + name + "'");
  };
  const auto c_unit = column(schema.unit);
  const auto c_time = column(schema.time);
  const auto c_out = column(schema.outcome);
  const auto c_treat = column(schema.treatment);
  std::vector<std::size_t> c_cov;
  for (const auto& c : schema.covariates) c_cov.push_back(column(c));

  struct Cell {
    long time;
    double outcome;
    std::string treatment;
    std::vector<std::string> cov;
    std::size_t line;
  };
  std::vector<std::string> unit_order;
  std::unordered_map<std::string, std::vector<Cell>> by_unit;
  std::map<long, bool> time_set;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_ws(line).empty() || line[0] == '#') continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size())
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(f.size()));
    Cell cell;
    cell.line = line_no;
    if (!parse_long(f[c_time], cell.time))
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) +
                                 ": time must be an integer period, got '" +
                                 f[c_time] + "'");
    if (!parse_double(f[c_out], cell.outcome))
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) +
                                 ": non-numeric outcome '" + f[c_out] + "'");
    cell.treatment = trim_ws(f[c_treat]);
    for (auto k : c_cov) cell.cov.push_back(f[k]);
    const auto id = trim_ws(f[c_unit]);
    auto [it, inserted] = by_unit.try_emplace(id);
    if (inserted) unit_order.push_back(id);
    for (const auto& other : it->second) {
      if (other.time == cell.time)
        fail(ErrorKind::Data, path + ":" + std::to_string(line_no) +
                                  ": duplicate (unit, time) = (" + id + ", " +
                                  std::to_string(cell.time) + "), first seen on line " +
                                  std::to_string(other.line));
    }
    time_set[cell.time] = true;
    it->second.push_back(std::move(cell));
    ++rows;
  }
  if (unit_order.empty()) fail(ErrorKind::Data, path + ": no data rows");

  std::vector<long> times;
  for (const auto& [t, _] : time_set) times.push_back(t);
  std::unordered_map<long, std::size_t> time_index;
  for (std::size_t k = 0; k < times.size(); ++k) time_index[times[k]] = k;

  std::vector<std::string> incomplete;
  for (const auto& id : unit_order) {
    if (by_unit[id].size() != times.size()) incomplete.push_back(id);
  }
  if (!incomplete.empty()) {
    std::string msg = path + ": " + std::to_string(incomplete.size()) +
                      " unit(s) with missing periods:";
    for (std::size_t k = 0; k < incomplete.size() && k < 20; ++k)
      msg += " " + incomplete[k];
    if (incomplete.size() > 20) msg += " ...";
    fail(ErrorKind::Data, msg);
  }

  std::vector<std::string> labels = schema.treatment_levels;
  const bool named_levels = !labels.empty();

  const auto n = unit_order.size();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(times.size()));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c_cov.size()));
  std::vector<int> d(n, 0);
  int max_code = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cells = by_unit[unit_order[i]];
    const std::string& lab = cells.front().treatment;
    for (const auto& c : cells) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(time_index[c.time])) = c.outcome;
      if (c.treatment != lab)
        fail(ErrorKind::Data, path + ":" + std::to_string(c.line) + ": unit " +
                                  unit_order[i] + " changes treatment label");
    }
    if (named_levels) {
      auto it = std::find(labels.begin(), labels.end(), lab);
      if (it == labels.end())
        fail(ErrorKind::Data, path + ":" + std::to_string(cells.front().line) +
                                  ": treatment '" + lab + "' not among treatment_levels");
      d[i] = static_cast<int>(it - labels.begin());
    } else {
      long code = 0;
      if (!parse_long(lab, code) || code < 0)
        fail(ErrorKind::Parse, path + ":" + std::to_string(cells.front().line) +
                                   ": treatment must be a code 0..R-1 when no "
                                   "treatment_levels are configured, got '" + lab + "'");
      d[i] = static_cast<int>(code);
      max_code = std::max(max_code, d[i]);
    }
    const auto& first = *std::min_element(
        cells.begin(), cells.end(),
        [](const Cell& a, const Cell& b) { return a.time < b.time; });
    for (std::size_t j = 0; j < c_cov.size(); ++j) {
      double v = 0.0;
      if (!parse_double(first.cov[j], v))
        fail(ErrorKind::Parse, path + ":" + std::to_string(first.line) +
                                   ": non-numeric baseline covariate " +
                                   schema.covariates[j] + " = '" + first.cov[j] + "'");
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  if (!named_levels) {
    for (int r = 0; r <= max_code; ++r) labels.push_back(std::to_string(r));
  }
  std::vector<std::size_t> counts(labels.size(), 0);
  for (int code : d) ++counts[static_cast<std::size_t>(code)];
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r] == 0)
      fail(ErrorKind::Data, path + ": treatment group '" + labels[r] + "' is empty");
  }

  std::size_t start = 1;
  if (schema.treatment_start) {
    auto it = time_index.find(*schema.treatment_start);
    if (it == time_index.end())
      fail(ErrorKind::Config, "treatment_start " + std::to_string(*schema.treatment_start) +
                                  " is not a period in " + path);
    start = it->second;
  }
  if (report) {
    report->rows_read = rows;
    report->group_counts = counts;
  }
  return PanelDataset(std::move(unit_order), std::move(times), std::move(y),
                      std::move(d), std::move(labels), std::move(x),
                      schema.covariates, start);
}

void write_csv(const PanelDataset& data, const std::string& path, const std::string& preamble) {
  std::ostringstream out;
  out << preamble;
  out << "unit,time,outcome,treatment";
  for (const auto& c : data.covariate_names()) out << ',' << csv_quote(c);
  out << '\n';
  for (std::size_t i = 0; i < data.n_units(); ++i) {
    for (std::size_t t = 0; t < data.n_periods(); ++t) {
      out << csv_quote(data.unit_ids()[i]) << ',' << data.times()[t] << ','
          << format_double(data.outcomes()(static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(t)))
          << ','
          << csv_quote(data.treatment_labels()[static_cast<std::size_t>(data.treatment()[i])]);
      for (std::size_t j = 0; j < data.n_covariates(); ++j)
        out << ','
            << format_double(data.covariates()(static_cast<Eigen::Index>(i),
                                               static_cast<Eigen::Index>(j)));
      out << '\n';
    }
  }
  write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------------------
// Trimming

bool TrimRule::keeps(double x) const {
  switch (op) {
    case TrimOp::Less: return x < value;
    case TrimOp::LessEqual: return x <= value;
    case TrimOp::Greater: return x > value;
    case TrimOp::GreaterEqual: return x >= value;
  }
  return true;
}

PanelDataset trim(const PanelDataset& data, std::span<const TrimRule> rules,
                  TrimReport* report) {
  std::vector<std::size_t> cols;
  for (const auto& r : rules) cols.push_back(data.covariate_index(r.covariate));
  std::vector<std::size_t> keep;
  std::vector<std::size_t> by_rule(rules.size(), 0);
  const auto& x = data.covariates();
  for (std::size_t i = 0; i < data.n_units(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < rules.size(); ++k) {
      if (!rules[k].keeps(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols[k])))) {
        ok = false;
        ++by_rule[k];
      }
    }
    if (ok) keep.push_back(i);
  }
  if (report) {
    report->dropped = data.n_units() - keep.size();
    report->dropped_by_rule = by_rule;
  }
  if (keep.size() == data.n_units()) return data;
  if (keep.empty()) fail(ErrorKind::Data, "trimming removed every unit");
  return data.select_units(keep);
}

// ---------------------------------------------------------------------------
// Difference samples

std::size_t DiffSample::zero_count() const {
  return static_cast<std::size_t>(std::count(is_zero.begin(), is_zero.end(), 1));
}

double DiffSample::zero_share() const {
  return size() == 0 ? 0.0 : static_cast<double>(zero_count()) / static_cast<double>(size());
}

std::vector<double> DiffSample::zero_share_by_group() const {
  std::vector<double> zeros(n_treatments(), 0.0), total(n_treatments(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = static_cast<std::size_t>(treatment[i]);
    total[r] += 1.0;
    zeros[r] += is_zero[i];
  }
  for (std::size_t r = 0; r < zeros.size(); ++r)
    zeros[r] = total[r] > 0 ? zeros[r] / total[r] : 0.0;
  return zeros;
}

std::vector<std::size_t> DiffSample::nonzero_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i)
    if (!is_zero[i]) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> DiffSample::all_rows() const {
  std::vector<std::size_t> rows(size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

namespace {

DiffSample make_sample(const PanelDataset& data, std::size_t t, std::size_t t0,
                       Eigen::VectorXd delta) {
  DiffSample s;
  s.period_index = t;
  s.period = data.times()[t];
  s.t0_index = t0;
  s.pre_program = t < data.treatment_start_index();
  s.is_zero.resize(static_cast<std::size_t>(delta.size()));
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    s.is_zero[static_cast<std::size_t>(i)] = delta[i] == 0.0 ? 1 : 0;
  s.delta = std::move(delta);
  s.treatment = data.treatment();
  s.covariates = data.shared_covariates();
  s.covariate_names = data.covariate_names();
  s.treatment_labels = data.treatment_labels();
  return s;
}

}  // namespace

std::vector<DiffSample> build_diff_samples(const PanelDataset& data,
                                           std::size_t t0_index) {
  if (t0_index + 1 >= data.n_periods())
    fail(ErrorKind::Usage, "base period must leave at least one later period");
  std::vector<DiffSample> out;
  const auto& y = data.outcomes();
  const auto c0 = static_cast<Eigen::Index>(t0_index);
  for (std::size_t t = t0_index + 1; t < data.n_periods(); ++t) {
    Eigen::VectorXd delta = y.col(static_cast<Eigen::Index>(t)) - y.col(c0);
    out.push_back(make_sample(data, t, t0_index, std::move(delta)));
  }
  return out;
}

std::vector<DiffSample> random_growth_transform(const PanelDataset& data,
                                                std::size_t t0_index) {
  if (t0_index == 0)
    fail(ErrorKind::Usage, "random growth needs a period before the base period");
  if (t0_index + 1 >= data.n_periods())
    fail(ErrorKind::Usage, "base period must leave at least one later period");
  std::vector<DiffSample> out;
  const auto& y = data.outcomes();
  const auto c0 = static_cast<Eigen::Index>(t0_index);
  const Eigen::VectorXd growth = y.col(c0) - y.col(c0 - 1);
  for (std::size_t t = t0_index + 1; t < data.n_periods(); ++t) {
    const double steps = static_cast<double>(t - t0_index);
    Eigen::VectorXd delta =
        (y.col(static_cast<Eigen::Index>(t)) - y.col(c0)) - steps * growth;
    out.push_back(make_sample(data, t, t0_index, std::move(delta)));
  }
  return out;
}

}  // namespace zigam
