#pragma once

#include <span>
#include <string>
#include <vector>

namespace agsd {

enum class SpendingFamily { pocock_approx, obf_approx, power_family };

std::string to_string(SpendingFamily family);
SpendingFamily parse_spending_family(const std::string& name);

// Lan-DeMets type error-spending function alpha(pi) for two-sided designs.
struct SpendingFunction {
  SpendingFamily family = SpendingFamily::pocock_approx;
  double alpha = 0.05;
  double rho = 1.0;  // power_family exponent
};

double spending_value(const SpendingFunction& f, double pi);

struct BoundarySet {
  std::vector<double> fractions;
  std::vector<double> critical;  // +inf for an analysis that may not reject
  std::vector<double> spent;     // cumulative alpha(pi_k)
};

// Quadrature for the recursive integration. The continuation density of
// stage k lives on a uniform grid spanning exactly [-c_k, c_k] with spacing
// close to `spacing`; `c_upper` bounds the root search.
struct QuadratureOptions {
  double spacing = 0.004;
  double c_upper = 8.0;
  double tolerance = 1e-8;
};

// Solves two-sided critical values one analysis at a time, which is what a
// trial needs when information fractions are only known as they are realized.
class SequentialBoundarySolver {
 public:
  explicit SequentialBoundarySolver(SpendingFunction f, QuadratureOptions q = {});

  // Adds the next analysis at information fraction `fraction` (0 < fraction <= 1)
  // and returns its critical value. A fraction that does not exceed the
  // previous one has nothing to spend: the analysis gets +inf and the
  // continuation density is left untouched.
  double add_analysis(double fraction);

  const BoundarySet& boundaries() const { return set_; }
  std::size_t size() const { return set_.critical.size(); }

 private:
  SpendingFunction f_;
  QuadratureOptions q_;
  BoundarySet set_;
  double last_fraction_ = 0.0;
  double last_spent_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> density_;
};

BoundarySet solve_boundaries(std::span<const double> fractions, const SpendingFunction& f,
                             const QuadratureOptions& q = {});

// Probability of first crossing at each analysis for standardized statistics
// with mean drift * sqrt(pi_k) and independent increments.
std::vector<double> crossing_probabilities(const BoundarySet& b, double drift, const QuadratureOptions& q = {});

// Drift at which the total crossing probability equals `power`.
double drift_for_power(const BoundarySet& b, double power, const QuadratureOptions& q = {});

double inflation_factor(std::span<const double> fractions, const SpendingFunction& f, double beta,
                        const QuadratureOptions& q = {});

}  // namespace agsd
