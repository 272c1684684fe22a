#pragma once

#include <random>
#include <string>
#include <vector>

#include "agsd/dataset.hpp"

namespace fixtures {

// Binary-outcome dataset where everyone entered at day 0 and the outcome is
// available at day 1; `t = 1` sees every outcome.
inline agsd::TrialDataset complete_binary(const std::vector<int>& arm, const std::vector<double>& y,
                                          const std::vector<std::vector<double>>& w = {},
                                          std::vector<std::string> names = {}) {
  if (names.empty() && !w.empty())
    for (std::size_t j = 0; j < w.front().size(); ++j) names.push_back("w" + std::to_string(j + 1));
  agsd::TrialDataset data(names, agsd::OutcomeType::binary);
  for (std::size_t i = 0; i < arm.size(); ++i) {
    agsd::SubjectRecord r;
    r.id = static_cast<long>(i + 1);
    r.entry_time = 0.0;
    r.arm = arm[i];
    r.outcome = y[i];
    r.outcome_delay = 1.0;
    if (!w.empty()) r.covariates = w[i];
    data.add(r);
  }
  return data;
}

// n subjects entering one per day with a 100-day delay; one normal covariate
// that raises the outcome probability, and a treatment shift of `effect` on
// the logit scale.
inline agsd::TrialDataset random_trial(std::size_t n, std::uint64_t seed, double effect = 0.0,
                                       double slope = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  agsd::TrialDataset data({"x"}, agsd::OutcomeType::binary);
  for (std::size_t i = 0; i < n; ++i) {
    agsd::SubjectRecord r;
    r.id = static_cast<long>(i + 1);
    r.entry_time = static_cast<double>(i);
    r.arm = static_cast<int>(i % 2);
    const double x = normal(rng);
    r.covariates = {x};
    const double p = 1.0 / (1.0 + std::exp(-(-0.5 + slope * x + effect * r.arm)));
    r.outcome = unif(rng) < p ? 1.0 : 0.0;
    r.outcome_delay = 100.0;
    data.add(r);
  }
  return data;
}

}  // namespace fixtures
