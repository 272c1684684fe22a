#include "agsd/boundaries.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include <boost/math/tools/roots.hpp>

#include "agsd/errors.hpp"
#include "agsd/numeric.hpp"

namespace agsd {

std::string to_string(SpendingFamily family) {
  switch (family) {
    case SpendingFamily::pocock_approx: return "pocock_approx";
    case SpendingFamily::obf_approx: return "obf_approx";
    case SpendingFamily::power_family: return "power_family";
  }
  return "unknown";
}

SpendingFamily parse_spending_family(const std::string& name) {
  if (name == "pocock_approx") return SpendingFamily::pocock_approx;
  if (name == "obf_approx") return SpendingFamily::obf_approx;
  if (name == "power_family") return SpendingFamily::power_family;
  throw std::invalid_argument("unknown spending family '" + name + "'");
}

double spending_value(const SpendingFunction& f, double pi) {
  if (!(pi >= 0.0 && pi <= 1.0)) throw DomainError("information fraction must lie in [0, 1]");
  if (!(f.alpha > 0.0 && f.alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (pi == 1.0) return f.alpha;
  if (pi == 0.0) return 0.0;
  switch (f.family) {
    case SpendingFamily::pocock_approx:
      return f.alpha * std::log1p((std::exp(1.0) - 1.0) * pi);
    case SpendingFamily::obf_approx:
      return 2.0 * normal_sf(normal_quantile(1.0 - f.alpha / 2.0) / std::sqrt(pi));
    case SpendingFamily::power_family:
      if (!(f.rho > 0.0)) throw DomainError("power family exponent must be positive");
      return f.alpha * std::pow(pi, f.rho);
  }
  return 0.0;
}

// ---- recursive integration --------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Continuation sub-density on a uniform grid with trapezoid weights folded in.
struct Stage {
  std::vector<double> nodes;
  std::vector<double> weighted;  // trapezoid weight x density
};

std::vector<double> uniform_nodes(double c, double spacing) {
  const std::size_t intervals = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(2.0 * c / spacing)));
  std::vector<double> z(intervals + 1);
  const double h = 2.0 * c / static_cast<double>(intervals);
  for (std::size_t i = 0; i <= intervals; ++i) z[i] = -c + h * static_cast<double>(i);
  z.back() = c;
  return z;
}

Stage weigh(std::vector<double> nodes, const std::vector<double>& density) {
  Stage s;
  const std::size_t n = nodes.size();
  const double h = (nodes.back() - nodes.front()) / static_cast<double>(n - 1);
  s.weighted.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.weighted[i] = density[i] * h * ((i == 0 || i + 1 == n) ? 0.5 : 1.0);
  s.nodes = std::move(nodes);
  return s;
}

// When the transition kernel is narrow compared with the grid spacing the
// trapezoid sum over the previous stage under-resolves it. The density is then
// linearly interpolated onto a finer grid first.
Stage resolve_for_kernel(const std::vector<double>& nodes, const std::vector<double>& density, double r,
                         double s) {
  const std::size_t n = nodes.size();
  const double h = (nodes.back() - nodes.front()) / static_cast<double>(n - 1);
  const double kernel_width = s / r;
  const int factor = static_cast<int>(std::min(512.0, std::ceil(4.0 * h / kernel_width)));
  if (factor <= 1) return weigh(nodes, density);
  std::vector<double> fine_nodes, fine_density;
  fine_nodes.reserve((n - 1) * factor + 1);
  fine_density.reserve((n - 1) * factor + 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (int k = 0; k < factor; ++k) {
      const double w = static_cast<double>(k) / factor;
      fine_nodes.push_back(nodes[i] + w * (nodes[i + 1] - nodes[i]));
      fine_density.push_back((1.0 - w) * density[i] + w * density[i + 1]);
    }
  }
  fine_nodes.push_back(nodes.back());
  fine_density.push_back(density.back());
  return weigh(std::move(fine_nodes), fine_density);
}

// P(previous stages continue, |Z_k| >= c) for Z_k = r u + m + s N(0,1).
double crossing_mass(const Stage& prev, double r, double s, double m, double c) {
  double total = 0.0;
  for (std::size_t j = 0; j < prev.nodes.size(); ++j) {
    const double mu = r * prev.nodes[j] + m;
    total += prev.weighted[j] * (normal_cdf((-c - mu) / s) + normal_sf((c - mu) / s));
  }
  return total;
}

// Density of Z_k on the grid z, restricted to continuation paths. Both grids
// are uniform, so along one row the Gaussian kernel obeys a two-term
// multiplicative recurrence; it is evaluated outward from its peak, where
// every factor is at most 1 and nothing overflows.
std::vector<double> propagate(const Stage& prev, double r, double s, double m, const std::vector<double>& z) {
  const std::size_t n = prev.nodes.size();
  std::vector<double> g(z.size(), 0.0);
  const double inv_s = 1.0 / s;
  const double h = (prev.nodes.back() - prev.nodes.front()) / static_cast<double>(n - 1);
  const double d = r * h * inv_s;  // x_{j+1} = x_j - d
  const double shrink = std::exp(-d * d);
  const double negligible = 1e-20;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x0 = (z[i] - m - r * prev.nodes.front()) * inv_s;
    const double peak = std::clamp(std::round(x0 / d), 0.0, static_cast<double>(n - 1));
    const auto jp = static_cast<std::size_t>(peak);
    const double xp = x0 - d * peak;
    const double ep = std::exp(-0.5 * xp * xp);
    double acc = prev.weighted[jp] * ep;
    // Upward: factor exp(x_j d - d^2/2), itself shrinking by exp(-d^2) per step.
    double e = ep, f = std::exp(xp * d - 0.5 * d * d);
    for (std::size_t j = jp + 1; j < n; ++j) {
      e *= f;
      f *= shrink;
      acc += prev.weighted[j] * e;
      if (e < negligible * ep) break;
    }
    e = ep;
    f = std::exp(-xp * d - 0.5 * d * d);
    for (std::size_t j = jp; j-- > 0;) {
      e *= f;
      f *= shrink;
      acc += prev.weighted[j] * e;
      if (e < negligible * ep) break;
    }
    g[i] = acc * kInvSqrt2Pi * inv_s;
  }
  return g;
}

struct Transition {
  double r, s, m;
};

Transition transition(double prev_fraction, double fraction, double drift) {
  const double ratio = prev_fraction / fraction;
  return {std::sqrt(ratio), std::sqrt(1.0 - ratio), drift * (fraction - prev_fraction) / std::sqrt(fraction)};
}

double bisect(double lo, double hi, double tol, const auto& decreasing, double target) {
  // decreasing(lo) >= target >= decreasing(hi)
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (decreasing(mid) > target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SequentialBoundarySolver::SequentialBoundarySolver(SpendingFunction f, QuadratureOptions q) : f_(f), q_(q) {
  spending_value(f_, 1.0);  // validates alpha and rho up front
  if (f_.family == SpendingFamily::power_family && !(f_.rho > 0.0))
    throw DomainError("power family exponent must be positive");
}

double SequentialBoundarySolver::add_analysis(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("information fraction must lie in (0, 1]");
  set_.fractions.push_back(fraction);
  if (fraction <= last_fraction_) {
    set_.critical.push_back(kInf);
    set_.spent.push_back(last_spent_);
    return kInf;
  }
  const double spent = spending_value(f_, fraction);
  const double target = spent - last_spent_;
  if (!(target > 0.0)) {
    set_.fractions.pop_back();
    throw NoRoot("no alpha left to spend at fraction " + std::to_string(fraction));
  }

  double c;
  if (nodes_.empty()) {
    c = normal_quantile(1.0 - target / 2.0);
    if (!(c < q_.c_upper)) {
      set_.fractions.pop_back();
      throw NoRoot("first critical value exceeds the search bracket");
    }
    nodes_ = uniform_nodes(c, q_.spacing);
    density_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) density_[i] = normal_pdf(nodes_[i]);
  } else {
    const Transition tr = transition(last_fraction_, fraction, 0.0);
    const Stage prev = resolve_for_kernel(nodes_, density_, tr.r, tr.s);
    auto mass = [&](double cc) { return crossing_mass(prev, tr.r, tr.s, tr.m, cc); };
    if (mass(q_.c_upper) > target || mass(0.0) < target) {
      set_.fractions.pop_back();
      throw NoRoot("critical value for fraction " + std::to_string(fraction) + " is outside [0, " +
                   std::to_string(q_.c_upper) + "]");
    }
    c = bisect(0.0, q_.c_upper, q_.tolerance, mass, target);
    nodes_ = uniform_nodes(c, q_.spacing);
    density_ = propagate(prev, tr.r, tr.s, tr.m, nodes_);
  }
  set_.critical.push_back(c);
  set_.spent.push_back(spent);
  last_fraction_ = fraction;
  last_spent_ = spent;
  return c;
}

BoundarySet solve_boundaries(std::span<const double> fractions, const SpendingFunction& f,
                             const QuadratureOptions& q) {
  if (fractions.empty()) throw std::invalid_argument("at least one information fraction is required");
  for (std::size_t k = 1; k < fractions.size(); ++k) {
    if (!(fractions[k] > fractions[k - 1]))
      throw NoRoot("information fractions must be strictly increasing (nothing to spend at analysis " +
                   std::to_string(k + 1) + ")");
  }
  SequentialBoundarySolver solver(f, q);
  for (double pi : fractions) solver.add_analysis(pi);
  return solver.boundaries();
}

std::vector<double> crossing_probabilities(const BoundarySet& b, double drift, const QuadratureOptions& q) {
  const std::size_t K = b.critical.size();
  if (b.fractions.size() != K) throw std::invalid_argument("boundary set is inconsistent");
  std::vector<double> out(K, 0.0);
  std::vector<double> nodes, density;
  double last_fraction = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double c = b.critical[k];
    const double pi = b.fractions[k];
    if (!std::isfinite(c) || pi <= last_fraction) continue;
    if (nodes.empty()) {
      const double mu = drift * std::sqrt(pi);
      out[k] = normal_sf(c - mu) + normal_cdf(-c - mu);
      nodes = uniform_nodes(c, q.spacing);
      density.resize(nodes.size());
      for (std::size_t i = 0; i < nodes.size(); ++i) density[i] = normal_pdf(nodes[i] - mu);
    } else {
      const Transition tr = transition(last_fraction, pi, drift);
      const Stage prev = resolve_for_kernel(nodes, density, tr.r, tr.s);
      out[k] = crossing_mass(prev, tr.r, tr.s, tr.m, c);
      if (k + 1 < K) {
        nodes = uniform_nodes(c, q.spacing);
        density = propagate(prev, tr.r, tr.s, tr.m, nodes);
      }
    }
    last_fraction = pi;
  }
  return out;
}

double drift_for_power(const BoundarySet& b, double power, const QuadratureOptions& q) {
  if (!(power > 0.0 && power < 1.0)) throw DomainError("power must lie in (0, 1)");
  auto excess = [&](double drift) {
    const auto p = crossing_probabilities(b, drift, q);
    return std::accumulate(p.begin(), p.end(), 0.0) - power;
  };
  double lo = 0.0, hi = 10.0;
  if (excess(lo) > 0.0) throw NoRoot("power target is below the null crossing probability");
  while (excess(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 100.0) throw NoRoot("power target cannot be bracketed");
  }
  std::uintmax_t iterations = 100;
  const auto root = boost::math::tools::toms748_solve(
      excess, lo, hi, [](double a, double c) { return std::abs(c - a) < 1e-10; }, iterations);
  return 0.5 * (root.first + root.second);
}

double inflation_factor(std::span<const double> fractions, const SpendingFunction& f, double beta,
                        const QuadratureOptions& q) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("beta must lie in (0, 1)");
  // One complete analysis is the fixed-sample design. The quadrature route
  // would differ from 1 by the ~1e-6 wrong-direction crossing that the
  // fixed-sample formula leaves out.
  if (fractions.size() == 1 && fractions[0] == 1.0) return 1.0;
  const BoundarySet b = solve_boundaries(fractions, f, q);
  const double drift = drift_for_power(b, 1.0 - beta, q);
  const double fixed = normal_quantile(1.0 - f.alpha / 2.0) + normal_quantile(1.0 - beta);
  return (drift / fixed) * (drift / fixed);
}

}  // namespace agsd
