#include "agsd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace agsd {

TrialDataset::TrialDataset(std::vector<std::string> covariate_names, OutcomeType outcome_type,
                           std::vector<double> visit_days)
    : covariate_names_(std::move(covariate_names)),
      outcome_type_(outcome_type),
      visit_days_(std::move(visit_days)) {
  for (std::size_t j = 1; j < visit_days_.size(); ++j) {
    if (!(visit_days_[j] > visit_days_[j - 1]))
      throw std::invalid_argument("visit days must be strictly increasing");
  }
}

void TrialDataset::reserve(std::size_t n) {
  id_.reserve(n);
  entry_.reserve(n);
  arm_.reserve(n);
  outcome_.reserve(n);
  delay_.reserve(n);
  cov_.reserve(n * num_covariates());
  visit_value_.reserve(n * num_visits());
  visit_obs_.reserve(n * num_visits());
}

void TrialDataset::add(const SubjectRecord& r) {
  if (r.covariates.size() != num_covariates())
    throw std::invalid_argument("subject " + std::to_string(r.id) + ": expected " +
                                std::to_string(num_covariates()) + " covariates");
  if (r.arm != 0 && r.arm != 1)
    throw std::invalid_argument("subject " + std::to_string(r.id) + ": arm must be 0 or 1");
  if (!(r.outcome_delay > 0.0))
    throw std::invalid_argument("subject " + std::to_string(r.id) + ": outcome_delay must be > 0");
  if (!(r.entry_time >= 0.0))
    throw std::invalid_argument("subject " + std::to_string(r.id) + ": entry_time must be >= 0");
  if (r.visits.size() > num_visits())
    throw std::invalid_argument("subject " + std::to_string(r.id) + ": too many visits");

  std::vector<double> values(num_visits(), 0.0);
  std::vector<unsigned char> observed(num_visits(), 0);
  int last_index = 0;
  for (const auto& v : r.visits) {
    if (v.index <= last_index || v.index > static_cast<int>(num_visits()))
      throw std::invalid_argument("subject " + std::to_string(r.id) +
                                  ": visit indices must be strictly increasing within 1..J");
    last_index = v.index;
    values[v.index - 1] = v.value;
    observed[v.index - 1] = v.observed ? 1 : 0;
  }

  id_.push_back(r.id);
  entry_.push_back(r.entry_time);
  arm_.push_back(r.arm);
  outcome_.push_back(r.outcome);
  delay_.push_back(r.outcome_delay);
  cov_.insert(cov_.end(), r.covariates.begin(), r.covariates.end());
  visit_value_.insert(visit_value_.end(), values.begin(), values.end());
  visit_obs_.insert(visit_obs_.end(), observed.begin(), observed.end());
}

std::size_t TrialDataset::covariate_index(const std::string& name) const {
  auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
  if (it == covariate_names_.end()) throw std::invalid_argument("unknown covariate '" + name + "'");
  return static_cast<std::size_t>(it - covariate_names_.begin());
}

bool TrialDataset::outcome_observed(std::size_t i, double t) const {
  return entry_[i] + delay_[i] <= t && !std::isnan(outcome_[i]);
}

bool TrialDataset::visit_observed(std::size_t i, std::size_t j, double t) const {
  return visit_recorded(i, j) && entry_[i] + visit_days_[j] <= t;
}

ObservationStatus TrialDataset::status(std::size_t i, double t) const {
  ObservationStatus s;
  s.c0 = enrolled(i, t);
  s.c1 = s.c0 && outcome_observed(i, t);
  return s;
}

std::size_t TrialDataset::count_enrolled(double t) const {
  return static_cast<std::size_t>(
      std::count_if(entry_.begin(), entry_.end(), [t](double e) { return e <= t; }));
}

std::size_t TrialDataset::count_outcomes(double t) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += outcome_observed(i, t) ? 1 : 0;
  return n;
}

SubjectRecord TrialDataset::record(std::size_t i) const {
  SubjectRecord r;
  r.id = id_[i];
  r.entry_time = entry_[i];
  r.arm = arm_[i];
  r.outcome = outcome_[i];
  r.outcome_delay = delay_[i];
  r.covariates.assign(cov_.begin() + i * num_covariates(), cov_.begin() + (i + 1) * num_covariates());
  for (std::size_t j = 0; j < num_visits(); ++j)
    r.visits.push_back({static_cast<int>(j + 1), visit_value(i, j), visit_recorded(i, j)});
  return r;
}

TrialDataset TrialDataset::rows(std::span<const std::size_t> index) const {
  TrialDataset out(covariate_names_, outcome_type_, visit_days_);
  const std::size_t p = num_covariates();
  const std::size_t J = num_visits();
  out.reserve(index.size());
  for (std::size_t i : index) {
    out.id_.push_back(id_[i]);
    out.entry_.push_back(entry_[i]);
    out.arm_.push_back(arm_[i]);
    out.outcome_.push_back(outcome_[i]);
    out.delay_.push_back(delay_[i]);
    out.cov_.insert(out.cov_.end(), cov_.begin() + i * p, cov_.begin() + (i + 1) * p);
    out.visit_value_.insert(out.visit_value_.end(), visit_value_.begin() + i * J,
                            visit_value_.begin() + (i + 1) * J);
    out.visit_obs_.insert(out.visit_obs_.end(), visit_obs_.begin() + i * J,
                          visit_obs_.begin() + (i + 1) * J);
  }
  return out;
}

TrialDataset TrialDataset::head(std::size_t n) const {
  n = std::min(n, size());
  TrialDataset out(covariate_names_, outcome_type_, visit_days_);
  const std::size_t p = num_covariates();
  const std::size_t J = num_visits();
  out.id_.assign(id_.begin(), id_.begin() + n);
  out.entry_.assign(entry_.begin(), entry_.begin() + n);
  out.arm_.assign(arm_.begin(), arm_.begin() + n);
  out.outcome_.assign(outcome_.begin(), outcome_.begin() + n);
  out.delay_.assign(delay_.begin(), delay_.begin() + n);
  out.cov_.assign(cov_.begin(), cov_.begin() + n * p);
  out.visit_value_.assign(visit_value_.begin(), visit_value_.begin() + n * J);
  out.visit_obs_.assign(visit_obs_.begin(), visit_obs_.begin() + n * J);
  return out;
}

// ---- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "NaN"; }

double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line) + ", column '" + column +
                                "': cannot parse '" + s + "'");
  }
}

}  // namespace

TrialDataset read_trial_csv(std::istream& in, const CsvReadOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty CSV input");
  const auto header = split_line(line);

  static const std::regex visit_value_re("y([0-9]+)");
  static const std::regex visit_flag_re("r([0-9]+)");
  std::map<std::string, std::size_t> reserved;
  std::vector<std::size_t> covariate_cols;
  std::vector<std::string> covariate_names;
  std::map<int, std::size_t> y_cols, r_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    std::smatch m;
    if (h == "id" || h == "entry_time" || h == "arm" || h == "outcome" || h == "outcome_delay") {
      reserved[h] = c;
    } else if (std::regex_match(h, m, visit_value_re)) {
      y_cols[std::stoi(m[1])] = c;
    } else if (std::regex_match(h, m, visit_flag_re)) {
      r_cols[std::stoi(m[1])] = c;
    } else {
      covariate_cols.push_back(c);
      covariate_names.push_back(h);
    }
  }
  for (const char* required : {"id", "entry_time", "arm", "outcome", "outcome_delay"}) {
    if (!reserved.count(required))
      throw std::invalid_argument(std::string("CSV header lacks column '") + required + "'");
  }
  const int J = static_cast<int>(y_cols.size());
  for (int j = 1; j <= J; ++j) {
    if (!y_cols.count(j)) throw std::invalid_argument("visit columns must be numbered y1..yJ");
  }

  std::vector<SubjectRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_line(line);
    if (f.size() != header.size())
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    SubjectRecord r;
    r.id = static_cast<long>(parse_number(f[reserved["id"]], line_no, "id"));
    r.entry_time = parse_number(f[reserved["entry_time"]], line_no, "entry_time");
    r.arm = static_cast<int>(parse_number(f[reserved["arm"]], line_no, "arm"));
    const std::string& y = f[reserved["outcome"]];
    r.outcome = is_missing(y) ? std::numeric_limits<double>::quiet_NaN()
                              : parse_number(y, line_no, "outcome");
    r.outcome_delay = parse_number(f[reserved["outcome_delay"]], line_no, "outcome_delay");
    for (std::size_t k = 0; k < covariate_cols.size(); ++k)
      r.covariates.push_back(parse_number(f[covariate_cols[k]], line_no, covariate_names[k]));
    for (int j = 1; j <= J; ++j) {
      const std::string& v = f[y_cols[j]];
      IntermediateVisit visit{j, 0.0, false};
      if (!is_missing(v)) {
        visit.value = parse_number(v, line_no, "y" + std::to_string(j));
        visit.observed = true;
      }
      if (r_cols.count(j)) {
        const std::string& flag = f[r_cols[j]];
        visit.observed = !is_missing(flag) && parse_number(flag, line_no, "r" + std::to_string(j)) != 0.0;
      }
      r.visits.push_back(visit);
    }
    records.push_back(std::move(r));
  }

  OutcomeType type = OutcomeType::binary;
  if (options.outcome_type) {
    type = *options.outcome_type;
  } else {
    for (const auto& r : records) {
      if (!std::isnan(r.outcome) && r.outcome != 0.0 && r.outcome != 1.0) {
        type = OutcomeType::continuous;
        break;
      }
    }
  }

  std::vector<double> visit_days = options.visit_days;
  if (visit_days.empty() && J > 0) {
    const double follow_up = records.empty() ? 365.0 : records.front().outcome_delay;
    for (int j = 1; j <= J; ++j) visit_days.push_back(follow_up * j / (J + 1));
  }
  if (static_cast<int>(visit_days.size()) != J)
    throw std::invalid_argument("visit_days has " + std::to_string(visit_days.size()) +
                                " entries but the CSV has " + std::to_string(J) + " visits");

  TrialDataset data(covariate_names, type, visit_days);
  data.reserve(records.size());
  for (const auto& r : records) data.add(r);
  return data;
}

TrialDataset read_trial_csv_file(const std::string& path, const CsvReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  return read_trial_csv(in, options);
}

void write_trial_csv(std::ostream& out, const TrialDataset& data) {
  out << "id,entry_time";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << ",arm,outcome,outcome_delay";
  for (std::size_t j = 1; j <= data.num_visits(); ++j) out << ",y" << j << ",r" << j;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.id(i) << ',' << data.entry_time(i);
    for (std::size_t j = 0; j < data.num_covariates(); ++j) out << ',' << data.covariate(i, j);
    out << ',' << data.arm(i) << ',';
    if (!std::isnan(data.outcome(i))) out << data.outcome(i);
    else out << "NA";
    out << ',' << data.outcome_delay(i);
    for (std::size_t j = 0; j < data.num_visits(); ++j) {
      if (data.visit_recorded(i, j)) out << ',' << data.visit_value(i, j) << ",1";
      else out << ",NA,0";
    }
    out << '\n';
  }
}

}  // namespace agsd
