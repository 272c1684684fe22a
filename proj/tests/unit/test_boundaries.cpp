#include <algorithm>
#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"

#include "agsd/boundaries.hpp"
#include "agsd/errors.hpp"
#include "agsd/numeric.hpp"

using Catch::Approx;
using agsd::SpendingFamily;
using agsd::SpendingFunction;

namespace {

const SpendingFunction kPocock{SpendingFamily::pocock_approx, 0.05};
const SpendingFunction kObf{SpendingFamily::obf_approx, 0.05};

// First-crossing frequencies of Z_k = S_k / sqrt(pi_k), where S is a sum of
// independent normal increments with variances pi_k - pi_{k-1}.
std::vector<double> simulate_crossings(const agsd::BoundarySet& b, double drift, long draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const std::size_t K = b.fractions.size();
  std::vector<double> hits(K, 0.0);
  for (long d = 0; d < draws; ++d) {
    double s = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double pi = b.fractions[k];
      s += std::sqrt(pi - prev) * normal(rng) + drift * (pi - prev);
      prev = pi;
      if (std::fabs(s / std::sqrt(pi)) >= b.critical[k]) {
        hits[k] += 1.0;
        break;
      }
    }
  }
  for (double& h : hits) h /= static_cast<double>(draws);
  return hits;
}

}  // namespace

TEST_CASE("spending function values") {
  for (auto fam : {SpendingFamily::pocock_approx, SpendingFamily::obf_approx, SpendingFamily::power_family}) {
    const SpendingFunction f{fam, 0.05, 2.0};
    CHECK(agsd::spending_value(f, 1.0) == 0.05);
    CHECK(agsd::spending_value(f, 0.0) == 0.0);
    double prev = 0.0;
    for (int i = 1; i <= 100; ++i) {
      const double v = agsd::spending_value(f, i / 100.0);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK_THROWS_AS(agsd::spending_value(f, 1.01), agsd::DomainError);
    CHECK_THROWS_AS(agsd::spending_value(f, -0.01), agsd::DomainError);
  }
  CHECK(agsd::spending_value(kPocock, 0.5) == Approx(0.05 * std::log(1.0 + (std::exp(1.0) - 1.0) * 0.5)).epsilon(1e-14));
  CHECK(agsd::spending_value(kPocock, 0.5) == Approx(0.0310057).margin(1e-7));  // 0.05 * ln(1.859141)
  // 2 * (1 - Phi(1.959964 / sqrt(0.5))) = 0.0055746 (scipy); 0.005585 is a
  // frequently quoted slip of the same arithmetic.
  CHECK(agsd::spending_value(kObf, 0.5) == Approx(0.0055746).margin(1e-6));
  CHECK(agsd::spending_value({SpendingFamily::power_family, 0.05, 2.0}, 0.5) == Approx(0.0125).epsilon(1e-14));
}

TEST_CASE("single analysis is the fixed-sample critical value") {
  const double f[] = {1.0};
  CHECK(agsd::solve_boundaries(f, kPocock).critical[0] == Approx(1.959964).margin(1e-6));
  const agsd::BoundarySet b = agsd::solve_boundaries(f, kPocock);
  CHECK(agsd::crossing_probabilities(b, 0.0)[0] == Approx(0.05).margin(1e-6));
  const double power = agsd::crossing_probabilities(b, 3.2420)[0];
  CHECK(power == Approx(agsd::normal_cdf(3.2420 - 1.959964) + agsd::normal_cdf(-3.2420 - 1.959964)).margin(1e-6));
  CHECK(power == Approx(0.900085).margin(1e-5));  // scipy
}

TEST_CASE("first boundaries have closed forms") {
  const double f[] = {0.5, 1.0};
  const auto pocock = agsd::solve_boundaries(f, kPocock);
  CHECK(pocock.critical[0] == Approx(agsd::normal_quantile(1.0 - agsd::spending_value(kPocock, 0.5) / 2)).margin(1e-7));
  CHECK(pocock.critical[0] == Approx(2.157).margin(5e-4));
  const auto obf = agsd::solve_boundaries(f, kObf);
  CHECK(obf.critical[0] == Approx(1.959964 / std::sqrt(0.5)).margin(1e-6));
  CHECK(obf.critical[0] == Approx(2.7718).margin(1e-4));
}

TEST_CASE("second OBF-type boundary agrees with a bivariate normal Monte Carlo") {
  const double f[] = {0.5, 1.0};
  const auto obf = agsd::solve_boundaries(f, kObf);
  const long N = 10'000'000;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  std::vector<double> survivors;
  survivors.reserve(N);
  for (long i = 0; i < N; ++i) {
    const double s1 = std::sqrt(0.5) * normal(rng);
    const double s2 = s1 + std::sqrt(0.5) * normal(rng);
    if (std::fabs(s1 / std::sqrt(0.5)) < obf.critical[0]) survivors.push_back(std::fabs(s2));
  }
  // c_2 leaves exactly alpha - alpha(0.5) of all draws above it among the survivors.
  const long above = std::lround((0.05 - agsd::spending_value(kObf, 0.5)) * N);
  std::nth_element(survivors.begin(), survivors.end() - above, survivors.end());
  const double c2 = *(survivors.end() - above);
  CHECK(obf.critical[1] == Approx(c2).margin(0.005));
}

TEST_CASE("null crossing probabilities reproduce the spending increments") {
  const std::vector<std::vector<double>> designs = {{0.5, 1.0}, {0.5, 0.75, 1.0}, {0.2, 0.4, 0.6, 0.8, 1.0}, {0.3, 1.0}};
  for (const auto& fr : designs)
    for (const auto& f : {kPocock, kObf, SpendingFunction{SpendingFamily::power_family, 0.025, 3.0}}) {
      const auto b = agsd::solve_boundaries(fr, f);
      const auto p = agsd::crossing_probabilities(b, 0.0);
      double prev = 0.0, total = 0.0;
      for (std::size_t k = 0; k < fr.size(); ++k) {
        const double spend = agsd::spending_value(f, fr[k]);
        CHECK(p[k] == Approx(spend - prev).margin(1e-6));
        CHECK(b.spent[k] == Approx(spend).epsilon(1e-14));
        prev = spend;
        total += p[k];
      }
      CHECK(total == Approx(f.alpha).margin(1e-6));
    }
}

TEST_CASE("quadrature agrees with correlated-normal simulation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.1, 0.95);
  for (int rep = 0; rep < 4; ++rep) {
    const int K = 2 + rep % 3;
    std::vector<double> fr;
    for (int k = 0; k < K - 1; ++k) fr.push_back(unif(rng));
    std::sort(fr.begin(), fr.end());
    fr.push_back(1.0);
    const auto b = agsd::solve_boundaries(fr, rep % 2 ? kObf : kPocock);
    const double drift = rep * 0.8;
    const auto exact = agsd::crossing_probabilities(b, drift);
    const long N = 200'000;
    const auto mc = simulate_crossings(b, drift, N, rng());
    for (int k = 0; k < K; ++k) {
      const double se = std::sqrt(std::max(exact[k] * (1.0 - exact[k]), 1e-12) / N);
      CHECK(std::fabs(mc[k] - exact[k]) <= 3.0 * se + 1e-6);
    }
  }
}

TEST_CASE("grid refinement barely moves the boundaries") {
  const double f[] = {0.3, 0.55, 0.8, 1.0};
  for (const auto& sf : {kPocock, kObf}) {
    const auto coarse = agsd::solve_boundaries(f, sf);
    const auto fine = agsd::solve_boundaries(f, sf, {.spacing = 0.002});
    for (int k = 0; k < 4; ++k) CHECK(std::fabs(coarse.critical[k] - fine.critical[k]) < 1e-5);
    const auto again = agsd::solve_boundaries(f, sf);
    CHECK(again.critical == coarse.critical);
  }
}

TEST_CASE("boundary shapes") {
  const double equal[] = {0.25, 0.5, 0.75, 1.0};
  const auto p = agsd::solve_boundaries(equal, kPocock);
  CHECK(*std::max_element(p.critical.begin(), p.critical.end()) -
            *std::min_element(p.critical.begin(), p.critical.end()) <
        0.15);
  const auto o = agsd::solve_boundaries(equal, kObf);
  for (int k = 1; k < 4; ++k) CHECK(o.critical[k] < o.critical[k - 1]);
}

TEST_CASE("power increases with drift") {
  const double f[] = {0.5, 0.75, 1.0};
  const auto b = agsd::solve_boundaries(f, kPocock);
  double prev = 0.0;
  for (int i = 0; i <= 60; ++i) {
    const auto p = agsd::crossing_probabilities(b, 0.1 * i);
    double total = 0.0;
    for (double x : p) total += x;
    CHECK(total > prev);
    prev = total;
  }
}

TEST_CASE("inflation factors") {
  const double one[] = {1.0};
  CHECK(agsd::inflation_factor(one, kPocock, 0.2) == Approx(1.0).epsilon(1e-8));
  const double two[] = {0.5, 1.0};
  CHECK(agsd::inflation_factor(two, kPocock, 0.12) == Approx(1.1136).margin(0.001));
  const double three[] = {0.5, 0.75, 1.0};
  CHECK(agsd::inflation_factor(three, kPocock, 0.10) == Approx(1.1553).margin(0.001));
}

TEST_CASE("invalid boundary requests") {
  const double dup[] = {0.5, 0.5, 1.0};
  CHECK_THROWS_AS(agsd::solve_boundaries(dup, kPocock), agsd::NoRoot);
  const double bad[] = {0.5, 1.2};
  CHECK_THROWS_AS(agsd::solve_boundaries(bad, kPocock), agsd::DomainError);
}

TEST_CASE("sequential solver matches the batch solver and tolerates repeated fractions") {
  const double f[] = {0.4, 0.7, 1.0};
  const auto batch = agsd::solve_boundaries(f, kPocock);
  agsd::SequentialBoundarySolver s(kPocock);
  for (int k = 0; k < 3; ++k) CHECK(s.add_analysis(f[k]) == batch.critical[k]);

  agsd::SequentialBoundarySolver capped(kPocock);
  capped.add_analysis(1.0);
  CHECK(std::isinf(capped.add_analysis(1.0)));  // nothing left to spend
}
