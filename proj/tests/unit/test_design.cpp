#include <cmath>

#include "catch_amalgamated.hpp"

#include "agsd/design.hpp"
#include "agsd/errors.hpp"

using Catch::Approx;

namespace {

agsd::EstimateSnapshot with_information(double info) {
  agsd::EstimateSnapshot s;
  s.information = info;
  s.std_error = 1.0 / std::sqrt(info);
  return s;
}

agsd::AnalysisRecord analysis(int index, bool rejected) {
  agsd::AnalysisRecord r;
  r.index = index;
  r.rejected = rejected;
  return r;
}

}  // namespace

TEST_CASE("maximum information") {
  CHECK(agsd::max_information(0.05, 0.12, 0.0, 0.13, 1.0) == Approx(581.5).margin(0.05));
  CHECK(std::round(agsd::max_information(0.05, 0.12, 0.0, 0.13, 1.0)) == 582.0);
  CHECK(agsd::max_information(0.05, 0.10, 0.0, 0.05, 1.1553) == Approx(4856).margin(1.0));
  const double base = agsd::max_information(0.05, 0.2, 0.1, 0.3, 1.0);
  CHECK(agsd::max_information(0.05, 0.2, 0.1, 0.5, 1.0) == Approx(base / 4.0).epsilon(1e-14));
  CHECK(agsd::max_information(0.05, 0.2, 0.3, 0.1, 1.0) == Approx(base).epsilon(1e-14));
  CHECK_THROWS_AS(agsd::max_information(0.05, 0.2, 0.1, 0.1, 1.0), agsd::DomainError);
}

TEST_CASE("information thresholds") {
  const double half[] = {0.5, 1.0};
  CHECK(agsd::info_thresholds(648.0, half) == std::vector<double>{324.0, 648.0});
  const double one[] = {1.0};
  CHECK(agsd::info_thresholds(648.0, one) == std::vector<double>{648.0});
  const double three[] = {0.5, 0.75, 1.0};
  CHECK(agsd::info_thresholds(3459.0, three) == std::vector<double>{1729.5, 2594.25, 3459.0});
}

TEST_CASE("maximum sample size projection") {
  CHECK(agsd::project_nmax(250, 300.0, 648.0) == 540);
  CHECK(agsd::project_nmax(250, 648.0, 648.0) == 250);
  CHECK(agsd::project_nmax(251, 300.0, 648.0) == 543);  // 542.16 rounds up
  CHECK(agsd::project_nmax(300, 600.0, 648.0) == 324);
  CHECK(agsd::project_nmax(300, 300.0, 648.0) == 648);
  CHECK_THROWS_AS(agsd::project_nmax(10, 0.0, 648.0), agsd::DomainError);
}

TEST_CASE("conservative initial maximum sample size") {
  agsd::DesignSpec d;
  d.alpha = 0.05;
  d.beta = 0.12;
  d.thetaA = 0.13;
  d.control_probability = 0.25;
  // Pooled two-proportion formula, p0 = 0.25, p1 = 0.38, IF = 1:
  // (1.959964 sqrt(2 * 0.315 * 0.685) + 1.174987 sqrt(0.1875 + 0.2356))^2 / 0.0169 = 249.46 per arm.
  CHECK(agsd::initial_nmax(d, 1.0) == 499);
  d.outcome_sd = 1.0;
  d.control_probability.reset();
  d.thetaA = 0.5;
  // 2 * 2 * (1.959964 + 1.174987)^2 / 0.25 = 157.2
  CHECK(agsd::initial_nmax(d, 1.0) == 158);
  d.initial_nmax = 1000;
  CHECK(agsd::initial_nmax(d, 1.3) == 1000);
}

TEST_CASE("design summary for the two-analysis example") {
  agsd::DesignSpec d;
  d.alpha = 0.05;
  d.beta = 0.12;
  d.thetaA = 0.13;
  d.K = 2;
  d.fractions = {0.5, 1.0};
  const auto s = agsd::summarize_design(d);
  CHECK(s.inflation == Approx(1.1136).margin(0.001));
  CHECK(std::round(s.I_max) == 648.0);
  CHECK(s.thresholds[0] == Approx(s.I_max / 2).epsilon(1e-15));
  CHECK_FALSE(s.nmax.has_value());

  d.K = 1;
  d.fractions = {1.0};
  CHECK(agsd::summarize_design(d).inflation == 1.0);
}

TEST_CASE("design validation names the field") {
  agsd::DesignSpec d;
  d.thetaA = 0.1;
  d.K = 2;
  d.fractions = {0.5, 0.9};
  try {
    d.validate();
    FAIL("expected ConfigError");
  } catch (const agsd::ConfigError& e) {
    CHECK(e.path() == "design.fractions");
  }
  d.fractions = {0.5, 1.0};
  d.thetaA = 0.0;
  CHECK_THROWS_AS(d.validate(), agsd::ConfigError);
}

TEST_CASE("monitoring triggers thresholds in order") {
  const double th[] = {324.0, 648.0};
  auto state = agsd::make_monitor_state(th, 500);

  auto r = agsd::monitor_step(state, with_information(300.0));
  CHECK(r.decision.kind == agsd::MonitorDecision::Kind::continue_monitoring);
  CHECK(r.state.next_analysis == 0);

  r = agsd::monitor_step(r.state, with_information(330.0));
  REQUIRE(r.decision.kind == agsd::MonitorDecision::Kind::trigger);
  CHECK(r.decision.analysis == 1);
  state = agsd::record_analysis(r.state, analysis(1, false));
  CHECK(state.verdict == agsd::Verdict::running);

  r = agsd::monitor_step(state, with_information(700.0));
  REQUIRE(r.decision.analysis == 2);
  state = agsd::record_analysis(r.state, analysis(2, false));
  CHECK(state.verdict == agsd::Verdict::fail_to_reject);
  CHECK_THROWS_AS(agsd::monitor_step(state, with_information(800.0)), agsd::TerminalState);
}

TEST_CASE("a jump past several thresholds fires them one at a time") {
  const double th[] = {100.0, 200.0, 300.0};
  auto state = agsd::make_monitor_state(th, 0);
  const auto snap = with_information(350.0);
  int fired = 0;
  while (!state.terminal()) {
    auto r = agsd::monitor_step(state, snap);
    REQUIRE(r.decision.kind == agsd::MonitorDecision::Kind::trigger);
    CHECK(r.decision.analysis == ++fired);
    state = agsd::record_analysis(r.state, analysis(r.decision.analysis, false));
  }
  CHECK(fired == 3);
  CHECK(state.verdict == agsd::Verdict::fail_to_reject);
}

TEST_CASE("a rejection ends monitoring early") {
  const double th[] = {100.0, 200.0, 300.0};
  auto r = agsd::monitor_step(agsd::make_monitor_state(th, 0), with_information(120.0));
  const auto state = agsd::record_analysis(r.state, analysis(1, true));
  CHECK(state.verdict == agsd::Verdict::reject);
  CHECK(state.analyses_done.size() == 1);
  CHECK_THROWS_AS(agsd::monitor_force_final(state), agsd::TerminalState);
}

TEST_CASE("plateau forces the final analysis") {
  const double th[] = {100.0, 200.0, 300.0};
  auto r = agsd::monitor_step(agsd::make_monitor_state(th, 0), with_information(150.0));
  auto state = agsd::record_analysis(r.state, analysis(1, false));
  r = agsd::monitor_force_final(state);
  CHECK(r.decision.analysis == 3);
  state = agsd::record_analysis(r.state, analysis(3, false));
  CHECK(state.verdict == agsd::Verdict::fail_to_reject);
}

TEST_CASE("replaying a snapshot stream reproduces the trajectory") {
  const double th[] = {50.0, 120.0, 200.0};
  const double stream[] = {10, 30, 55, 60, 90, 130, 150, 210};
  auto run = [&] {
    std::vector<int> triggers;
    auto state = agsd::make_monitor_state(th, 0);
    for (double info : stream) {
      if (state.terminal()) break;
      auto r = agsd::monitor_step(state, with_information(info));
      state = r.state;
      if (r.decision.kind == agsd::MonitorDecision::Kind::trigger) {
        triggers.push_back(r.decision.analysis);
        state = agsd::record_analysis(state, analysis(r.decision.analysis, false));
      }
    }
    return std::make_pair(triggers, state.verdict);
  };
  const auto a = run();
  CHECK(a == run());
  CHECK(a.first == std::vector<int>{1, 2, 3});
}

TEST_CASE("verdict names round trip") {
  for (auto v : {agsd::Verdict::running, agsd::Verdict::reject, agsd::Verdict::fail_to_reject})
    CHECK(agsd::parse_verdict(agsd::to_string(v)) == v);
}
