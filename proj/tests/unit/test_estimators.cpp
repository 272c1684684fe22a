#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"

#include "agsd/errors.hpp"
#include "agsd/estimators.hpp"
#include "agsd/numeric.hpp"
#include "agsd/sim.hpp"
#include "fixtures.hpp"

using Catch::Approx;

TEST_CASE("unadjusted difference of arm means with binomial standard error") {
  const auto d = fixtures::complete_binary({1, 1, 1, 1, 0, 0, 0, 0}, {1, 0, 1, 1, 0, 0, 1, 0});
  const agsd::EstimateSnapshot s = agsd::unadjusted_estimate(d, 1.0);
  CHECK(s.estimate == Approx(0.5).epsilon(1e-15));
  CHECK(s.std_error == Approx(std::sqrt(0.1875 / 4 + 0.1875 / 4)).epsilon(1e-12));
  CHECK(s.std_error == Approx(0.30619).margin(5e-6));
  CHECK(s.information * s.std_error * s.std_error == Approx(1.0).epsilon(1e-12));
  CHECK(s.n_enrolled == 8);
  CHECK(s.n_outcomes == 8);
}

TEST_CASE("identical arms give a zero estimate") {
  const auto d = fixtures::complete_binary({1, 1, 1, 0, 0, 0}, {1, 0, 1, 1, 0, 1});
  CHECK(agsd::unadjusted_estimate(d, 1.0).estimate == 0.0);
}

TEST_CASE("an arm with fewer than two outcomes is an early analysis") {
  const auto d = fixtures::complete_binary({1, 1, 1, 0}, {1, 0, 1, 1});
  CHECK_THROWS_AS(agsd::unadjusted_estimate(d, 1.0), agsd::EmptyArm);
  CHECK_THROWS_AS(agsd::unadjusted_estimate(d, 0.5), agsd::EmptyArm);  // nothing observed yet
}

TEST_CASE("continuous outcomes use arm-wise sample variances") {
  agsd::TrialDataset d({}, agsd::OutcomeType::continuous);
  const double y[] = {3.0, 5.0, 4.0, 1.0, 2.0, 6.0};
  for (int i = 0; i < 6; ++i) d.add({.id = i, .arm = i < 3 ? 1 : 0, .outcome = y[i], .outcome_delay = 1.0});
  const auto s = agsd::unadjusted_estimate(d, 1.0);
  CHECK(s.estimate == Approx(1.0).epsilon(1e-14));
  CHECK(s.std_error == Approx(std::sqrt(1.0 / 3 + 7.0 / 3)).epsilon(1e-12));  // variances 1 and 7
}

// Per-arm saturated logistic models on one binary covariate reduce to cell
// means, so g-computation is hand arithmetic:
//   arm 1: P(Y|x=0) = 1/3, P(Y|x=1) = 2/3;  arm 0: 1/2 and 1/4.
//   12 observed subjects, 7 with x = 1: (5/3 + 14/3)/12 - (5/2 + 7/4)/12 = 0.17361111
//   plus 4 pipeline subjects with x = 1:  (5/3 + 22/3)/16 - (5/2 + 11/4)/16 = 0.234375
namespace {

agsd::TrialDataset gcomp_fixture(bool with_pipeline) {
  agsd::TrialDataset d({"x"}, agsd::OutcomeType::binary);
  const int arm[] = {1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const double x[] = {0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1};
  const double y[] = {1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0};
  for (int i = 0; i < 12; ++i)
    d.add({.id = i + 1, .entry_time = 0.0, .covariates = {x[i]}, .arm = arm[i], .outcome = y[i], .outcome_delay = 10.0});
  if (with_pipeline)
    for (int i = 0; i < 4; ++i)
      d.add({.id = 13 + i, .entry_time = 5.0, .covariates = {1.0}, .arm = i % 2, .outcome = 1.0, .outcome_delay = 10.0});
  return d;
}

}  // namespace

TEST_CASE("standardization matches the g-computation oracle") {
  agsd::VarianceOptions v;
  v.bootstrap_replicates = 50;
  const auto plain = agsd::standardization_estimate(gcomp_fixture(false), 10.0, false, {"x"}, v);
  CHECK(plain.estimate == Approx(0.17361111111111).margin(1e-8));

  const auto interim = agsd::standardization_estimate(gcomp_fixture(true), 10.0, true, {"x"}, v);
  CHECK(interim.estimate == Approx(0.234375).margin(1e-8));
  CHECK(interim.n_enrolled == 16);
  CHECK(interim.n_outcomes == 12);

  // The final variant ignores the pipeline subjects.
  const auto final_variant = agsd::standardization_estimate(gcomp_fixture(true), 10.0, false, {"x"}, v);
  CHECK(final_variant.estimate == Approx(0.17361111111111).margin(1e-8));
}

TEST_CASE("without pipeline subjects the interim and final variants coincide") {
  const auto d = fixtures::random_trial(300, 5);
  agsd::EstimatorSpec interim{.kind = agsd::EstimatorKind::standardization, .covariates = {"x"}};
  agsd::EstimatorSpec final_variant = interim;
  final_variant.include_pipeline = false;
  const double t = 1000.0;  // every outcome is in
  CHECK(agsd::point_estimate(d, t, interim).value == agsd::point_estimate(d, t, final_variant).value);
}

TEST_CASE("intercept-only standardization and TMLE equal the unadjusted estimate") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 20 + rng() % 200;
    const auto d = fixtures::random_trial(n, rng(), 0.3);
    const double t = 100.0 + static_cast<double>(rng() % (n + 1));
    double unadjusted = 0.0;
    try {
      unadjusted = agsd::unadjusted_estimate(d, t).estimate;
    } catch (const agsd::EmptyArm&) {
      continue;
    }
    for (bool pipeline : {true, false}) {
      agsd::EstimatorSpec s{.kind = agsd::EstimatorKind::standardization, .include_pipeline = pipeline};
      CHECK(agsd::point_estimate(d, t, s).value == Approx(unadjusted).margin(1e-10));
    }
    agsd::EstimatorSpec tmle{.kind = agsd::EstimatorKind::tmle};
    tmle.tmle.weight_cap = 1e12;  // early looks see few outcomes, so weights are large
    CHECK(agsd::point_estimate(d, t, tmle).value == Approx(unadjusted).margin(1e-8));
  }
}

TEST_CASE("information is the reciprocal squared standard error for every estimator") {
  const auto d = fixtures::random_trial(400, 9, 0.5);
  agsd::VarianceOptions v;
  v.bootstrap_replicates = 100;
  for (auto kind : {agsd::EstimatorKind::unadjusted, agsd::EstimatorKind::standardization, agsd::EstimatorKind::tmle}) {
    agsd::EstimatorSpec spec{.kind = kind, .covariates = {"x"}};
    spec.tmle.covariates = {"x"};
    const auto s = agsd::estimate(d, 450.0, spec, v);
    CHECK(s.estimator_kind == kind);
    CHECK(s.information * s.std_error * s.std_error == Approx(1.0).epsilon(1e-12));
    CHECK(s.n_outcomes <= s.n_enrolled);
  }
}

// Seven subjects, one intermediate visit at day 5 that everyone attends, and
// one censored primary outcome in each arm. With arm-only working models
// (no history) every fitted probability is a cell proportion:
//   pi^A = 4/7 (arm 1), 3/7 (arm 0);  pi^R_1 = 1;  pi^R_2 = 3/4 (arm 1), 2/3 (arm 0)
//   N_2 = 7/4 * 4/3 = 7/3 (arm 1),  7/3 * 3/2 = 7/2 (arm 0)
namespace {

agsd::TrialDataset censored_fixture() {
  agsd::TrialDataset d({}, agsd::OutcomeType::binary, {5.0});
  const int arm[] = {1, 1, 1, 1, 0, 0, 0};
  const double y[] = {1, 0, 1, NAN, 0, 1, NAN};
  const double visit[] = {0.5, 0.1, 0.9, 0.4, 0.3, 0.6, 0.2};
  for (int i = 0; i < 7; ++i)
    d.add({.id = i + 1, .arm = arm[i], .outcome = y[i], .outcome_delay = 10.0,
           .visits = {{.index = 1, .value = visit[i], .observed = true}}});
  return d;
}

}  // namespace

TEST_CASE("TMLE inverse-probability weights match hand values") {
  agsd::TmleSpec spec;
  spec.include_history = false;
  const agsd::TmleFit fit = agsd::fit_tmle(censored_fixture(), 20.0, spec);
  REQUIRE(fit.rows.size() == 7);
  const double pa[] = {4.0 / 7, 4.0 / 7, 4.0 / 7, 4.0 / 7, 3.0 / 7, 3.0 / 7, 3.0 / 7};
  const double pr[] = {0.75, 0.75, 0.75, 0.75, 2.0 / 3, 2.0 / 3, 2.0 / 3};
  for (int r = 0; r < 7; ++r) {
    CHECK(fit.propensity(r) == Approx(pa[r]).epsilon(1e-12));
    CHECK(fit.uncensored_probability(r, 0) == 1.0);
    CHECK(fit.weights(r, 0) == Approx(1.0 / pa[r]).epsilon(1e-12));
    CHECK(fit.uncensored_probability(r, 1) == Approx(pr[r]).epsilon(1e-12));
    CHECK(fit.weights(r, 1) == Approx(1.0 / (pa[r] * pr[r])).epsilon(1e-12));
  }
  CHECK(fit.weights(0, 1) == Approx(7.0 / 3).epsilon(1e-12));
  CHECK(fit.weights(4, 1) == Approx(3.5).epsilon(1e-12));
  // Arm means of the observed outcomes: 2/3 - 1/2.
  CHECK(fit.estimate == Approx(1.0 / 6).epsilon(1e-10));
}

TEST_CASE("TMLE missingness rules") {
  agsd::TrialDataset d({}, agsd::OutcomeType::binary, {5.0});
  for (int i = 0; i < 6; ++i)
    d.add({.id = i + 1, .arm = i % 2, .outcome = static_cast<double>(i / 2 % 2), .outcome_delay = 10.0,
           .visits = {{.index = 1, .value = 0.1 * i, .observed = i != 0}}});
  agsd::TmleSpec strict;
  strict.imputation = agsd::ImputationRule::none;
  CHECK_THROWS_AS(agsd::fit_tmle(d, 20.0, strict), agsd::NonMonotoneMissingness);
  CHECK_NOTHROW(agsd::fit_tmle(d, 20.0, agsd::TmleSpec{}));

  agsd::TmleSpec capped;
  capped.include_history = false;
  capped.weight_cap = 2.0;  // every weight in the censored fixture exceeds 2
  CHECK_THROWS_AS(agsd::fit_tmle(censored_fixture(), 20.0, capped), agsd::WeightOverflow);
}

TEST_CASE("TMLE with correctly specified models is consistent under the DGM1 null") {
  agsd::DgmSpec dgm;  // DGM1, null effect
  dgm.outcome_delay = 1.0;
  agsd::TmleSpec spec;
  spec.covariates = {"w1", "w2", "w3", "w4"};
  const int R = 500;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < R; ++r) {
    const auto d = agsd::generate(dgm, 5000, agsd::stream_seed(2024, r));
    const double e = agsd::fit_tmle(d, 1e9, spec).estimate;
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / R;
  const double se = std::sqrt((sum2 / R - mean * mean) / R);
  CHECK(std::fabs(mean) < 3.0 * se);
}

TEST_CASE("small-sample correction factors") {
  CHECK(agsd::small_sample_correction_two_arm(100, 100, 4, 4) == Approx(99.0 / 95.0).epsilon(1e-14));
  CHECK(agsd::small_sample_correction_two_arm(100, 100, 4, 4) == Approx(1.042105).margin(1e-6));
  CHECK(agsd::small_sample_correction_two_arm(37, 52, 0, 0) == 1.0);
  CHECK(agsd::small_sample_correction_pooled(100, 4) == Approx(1.042105).margin(1e-6));
  CHECK(agsd::small_sample_correction_pooled(100, 0) == 1.0);
  for (long p0 = 0; p0 < 5; ++p0)
    for (long p1 = 0; p1 < 5; ++p1) {
      const double f = agsd::small_sample_correction_two_arm(30, 45, p0, p1);
      if (p0 + p1 > 0) CHECK(f > 1.0);
    }
  CHECK_THROWS_AS(agsd::small_sample_correction_two_arm(5, 100, 4, 4), agsd::DegenerateSampleSize);
  CHECK_THROWS_AS(agsd::small_sample_correction_pooled(5, 4), agsd::DegenerateSampleSize);
}

TEST_CASE("estimator names round trip") {
  for (auto k : {agsd::EstimatorKind::unadjusted, agsd::EstimatorKind::standardization, agsd::EstimatorKind::tmle})
    CHECK(agsd::parse_estimator_kind(agsd::to_string(k)) == k);
  CHECK_THROWS(agsd::parse_estimator_kind("ols"));
}
