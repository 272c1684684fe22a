#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agsd {

enum class OutcomeType { binary, continuous };

// Enrollment (c0) and primary-outcome availability (c1) at a calendar time.
struct ObservationStatus {
  bool c0 = false;
  bool c1 = false;
};

struct IntermediateVisit {
  int index = 0;  // 1-based, strictly increasing within a subject
  double value = 0.0;
  bool observed = false;
};

struct SubjectRecord {
  long id = 0;
  double entry_time = 0.0;
  std::vector<double> covariates;
  int arm = 0;
  double outcome = 0.0;  // NaN when the outcome will never be observed
  double outcome_delay = 365.0;
  std::vector<IntermediateVisit> visits;
};

// Columnar store of subject records. Rows are immutable once added; every
// calendar-time view is computed on the fly from entry times and delays, so
// one dataset serves all analysis times of a trial.
class TrialDataset {
 public:
  TrialDataset() = default;
  TrialDataset(std::vector<std::string> covariate_names, OutcomeType outcome_type,
               std::vector<double> visit_days = {});

  void add(const SubjectRecord& record);
  void reserve(std::size_t n);

  std::size_t size() const { return arm_.size(); }
  std::size_t num_covariates() const { return covariate_names_.size(); }
  std::size_t num_visits() const { return visit_days_.size(); }
  OutcomeType outcome_type() const { return outcome_type_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const std::vector<double>& visit_days() const { return visit_days_; }

  // Column index by name; throws std::invalid_argument for unknown names.
  std::size_t covariate_index(const std::string& name) const;

  long id(std::size_t i) const { return id_[i]; }
  double entry_time(std::size_t i) const { return entry_[i]; }
  int arm(std::size_t i) const { return arm_[i]; }
  double outcome(std::size_t i) const { return outcome_[i]; }
  double outcome_delay(std::size_t i) const { return delay_[i]; }
  double covariate(std::size_t i, std::size_t j) const { return cov_[i * num_covariates() + j]; }
  double visit_value(std::size_t i, std::size_t j) const { return visit_value_[i * num_visits() + j]; }
  bool visit_recorded(std::size_t i, std::size_t j) const { return visit_obs_[i * num_visits() + j] != 0; }

  // Calendar time at which the primary outcome becomes available.
  double availability_time(std::size_t i) const { return entry_[i] + delay_[i]; }

  bool enrolled(std::size_t i, double t) const { return entry_[i] <= t; }
  bool outcome_observed(std::size_t i, double t) const;
  // Visit j (0-based) is observed by t if recorded and its scheduled day has passed.
  bool visit_observed(std::size_t i, std::size_t j, double t) const;
  ObservationStatus status(std::size_t i, double t) const;

  std::size_t count_enrolled(double t) const;
  std::size_t count_outcomes(double t) const;

  SubjectRecord record(std::size_t i) const;

  // Gather rows (with repetition, for bootstrap resamples).
  TrialDataset rows(std::span<const std::size_t> index) const;
  // First n rows, in insertion order.
  TrialDataset head(std::size_t n) const;

 private:
  std::vector<std::string> covariate_names_;
  OutcomeType outcome_type_ = OutcomeType::binary;
  std::vector<double> visit_days_;

  std::vector<long> id_;
  std::vector<double> entry_;
  std::vector<int> arm_;
  std::vector<double> outcome_;
  std::vector<double> delay_;
  std::vector<double> cov_;  // row-major n x p
  std::vector<double> visit_value_;  // row-major n x J
  std::vector<unsigned char> visit_obs_;
};

struct CsvReadOptions {
  // Scheduled study day of each intermediate visit. When empty, visits are
  // spread evenly over the follow-up window of the first subject.
  std::vector<double> visit_days;
  std::optional<OutcomeType> outcome_type;  // auto-detected when unset
};

// Header: id, entry_time, <covariates...>, arm, outcome, outcome_delay, then
// optional y1,r1,y2,r2,... pairs. Empty or "NA" outcomes are missing.
TrialDataset read_trial_csv(std::istream& in, const CsvReadOptions& options = {});
TrialDataset read_trial_csv_file(const std::string& path, const CsvReadOptions& options = {});
void write_trial_csv(std::ostream& out, const TrialDataset& data);

}  // namespace agsd
