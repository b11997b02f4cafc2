#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include <nanotomo/random.hpp>
#include <nanotomo/simulator.hpp>

#include "oracles.hpp"

using namespace nanotomo;

namespace {

sim::CampaignPlan small_plan() {
  sim::CampaignPlan plan;
  plan.wavelengths_nm = {1000.0, 1500.0};
  plan.bias_currents_uA = {15.0, 18.5};
  plan.mean_photon_numbers = sim::CampaignPlan::log_ladder(1.0, 1e6, 7);
  plan.repeats = 3;
  return plan;
}

} // namespace

TEST_SUITE("simulator") {

TEST_CASE("universal_p at the sigmoid midpoint is half the saturation level") {
  const sim::GroundTruthDetector d;
  const double e = 0.8266;
  const double current = d.u0_uA + d.gamma_uA_per_eV * e;
  CHECK(sim::universal_p(d, 1, current, e) == doctest::Approx(d.p_sat / 2).epsilon(1e-14));
}

TEST_CASE("universal_p matches the logistic written out by hand") {
  const sim::GroundTruthDetector d;
  const double expected = oracle::logistic(19.0 + 2.9 * 0.8266, 21.0, 0.7, 0.5);
  CHECK(std::abs(sim::universal_p(d, 1, 19.0, 0.8266) - expected) <= 1e-15);
  CHECK(std::abs(expected - 0.3190749137564323) <= 1e-15);
}

TEST_CASE("universal_p depends only on total energy") {
  const sim::GroundTruthDetector d;
  for (double current : {13.0, 16.5, 20.0})
    CHECK(sim::universal_p(d, 2, current, 0.62) == doctest::Approx(sim::universal_p(d, 1, current, 1.24)).epsilon(1e-14));
}

TEST_CASE("universal_p is nondecreasing in current and in energy") {
  const sim::GroundTruthDetector d;
  for (double e : {0.8, 1.2, 2.4}) {
    double prev = 0.0;
    for (double current = 5.0; current <= 28.0; current += 0.25) {
      const double p = sim::universal_p(d, 1, current, e);
      CHECK(p >= prev);
      prev = p;
    }
  }
  for (double current : {12.0, 18.0}) {
    double prev = 0.0;
    for (int n = 1; n <= 8; ++n) {
      const double p = sim::universal_p(d, n, current, 0.8266);
      CHECK(p >= prev);
      prev = p;
    }
  }
}

TEST_CASE("universal_p above the critical current is a domain error") {
  const sim::GroundTruthDetector d;
  CHECK_THROWS_AS(sim::universal_p(d, 1, 29.5, 1.0), std::domain_error);
}

TEST_CASE("paper-like generator has its p = 0.1 line at 19 uA for E = 0") {
  const auto d = sim::GroundTruthDetector::paper_like();
  CHECK(d.intercept_uA(0.1) == doctest::Approx(19.0).epsilon(1e-12));
  CHECK(d.threshold_current(1.6532, 0.1) ==
        doctest::Approx(oracle::logistic_threshold(0.1, d.u0_uA, d.width_uA, d.p_sat, d.gamma_uA_per_eV, 1.6532)));
}

TEST_CASE("ground truth response samples the universal curve per photon number") {
  const sim::GroundTruthDetector d;
  const auto r = sim::ground_truth_response(d, 17.0, 0.9537);
  REQUIRE(r.nmax() == 6);
  CHECK(r.eta == d.eta);
  for (int n = 1; n <= 6; ++n)
    CHECK(r.p[static_cast<std::size_t>(n - 1)] == sim::universal_p(d, n, 17.0, 0.9537));
  CHECK(r.p_tail == sim::universal_p(d, 7, 17.0, 0.9537));
}

TEST_CASE("campaign shape: one sweep per cell, every record present") {
  const auto plan = small_plan();
  const auto sweeps = sim::simulate_campaign(sim::GroundTruthDetector{}, plan);
  REQUIRE(sweeps.size() == 4);
  CHECK(sweeps[0].wavelength_nm() == 1000.0);
  CHECK(sweeps[0].bias_current_uA() == 15.0);
  CHECK(sweeps[3].wavelength_nm() == 1500.0);
  std::size_t rows = 0;
  for (const auto &s : sweeps) {
    CHECK_NOTHROW(s.validate());
    rows += s.records.size();
  }
  CHECK(rows == plan.wavelengths_nm.size() * plan.bias_currents_uA.size() * plan.mean_photon_numbers.size() *
                    static_cast<std::size_t>(plan.repeats));
}

TEST_CASE("same seed gives a bit-identical campaign, a new seed does not") {
  auto plan = small_plan();
  const auto a = sim::simulate_campaign(sim::GroundTruthDetector{}, plan);
  const auto b = sim::simulate_campaign(sim::GroundTruthDetector{}, plan);
  CHECK(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].records == b[i].records);
  plan.seed = 2;
  const auto c = sim::simulate_campaign(sim::GroundTruthDetector{}, plan);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    differs = differs || !(a[i].records == c[i].records);
  CHECK(differs);
}

TEST_CASE("a cell's counts do not depend on the rest of the grid") {
  auto plan = small_plan();
  const auto full = sim::simulate_campaign(sim::GroundTruthDetector{}, plan);
  plan.wavelengths_nm = {1500.0};
  plan.bias_currents_uA = {18.5};
  const auto single = sim::simulate_campaign(sim::GroundTruthDetector{}, plan);
  CHECK(single.front().records == full.back().records);
}

TEST_CASE("no light and no dark counts means no clicks") {
  auto plan = small_plan();
  plan.mean_photon_numbers = {0.0};
  plan.repeats = 20;
  for (const auto &s : sim::simulate_campaign(sim::GroundTruthDetector{}, plan))
    for (const auto &r : s.records)
      CHECK(r.clicks == 0);
}

TEST_CASE("dark counts add a window process to the click probability") {
  sim::GroundTruthDetector d;
  d.dark_rate_hz = 1e4;
  auto plan = small_plan();
  const double per_pulse = 1e4 * plan.window_s / static_cast<double>(plan.pulses_per_window);
  CHECK(sim::click_probability_with_dark(d, plan, 1500.0, 15.0, 0.0) == doctest::Approx(-std::expm1(-per_pulse)));
  const auto r = sim::ground_truth_response(d, 15.0, photonics::PhotonEnergy(1500.0).photon_energy_eV());
  const double light = oracle::click_sum(r, 1e4, oracle::long_sum_terms(r.eta * 1e4));
  CHECK(sim::click_probability_with_dark(d, plan, 1500.0, 15.0, 1e4) ==
        doctest::Approx(1.0 - (1.0 - light) * std::exp(-per_pulse)).epsilon(1e-12));
}

TEST_CASE("mean click fraction over 1000 repeats is within 4 sigma of R") {
  sim::GroundTruthDetector d;
  sim::CampaignPlan plan;
  plan.wavelengths_nm = {1300.0};
  plan.bias_currents_uA = {18.0};
  plan.mean_photon_numbers = {3e3, 1e5};
  plan.pulses_per_window = 10'000;
  plan.repeats = 1000;
  const auto sweep = sim::simulate_campaign(d, plan).front();
  for (double n : plan.mean_photon_numbers) {
    const auto r = sim::ground_truth_response(d, 18.0, photonics::PhotonEnergy(1300.0).photon_energy_eV());
    const double expected = oracle::click_sum(r, n, oracle::long_sum_terms(r.eta * n));
    double clicks = 0.0, pulses = 0.0;
    for (const auto &rec : sweep.records)
      if (rec.mean_photon_number == n) {
        clicks += static_cast<double>(rec.clicks);
        pulses += static_cast<double>(rec.pulses);
      }
    const double sigma = std::sqrt(expected * (1.0 - expected) / pulses);
    CHECK(std::abs(clicks / pulses - expected) <= 4.0 * sigma);
  }
}

TEST_CASE("grid helpers") {
  const auto grid = sim::CampaignPlan::current_grid(12.0, 22.0, 0.5);
  REQUIRE(grid.size() == 21);
  CHECK(grid.front() == 12.0);
  CHECK(grid.back() == doctest::Approx(22.0));
  const auto ladder = sim::CampaignPlan::log_ladder(1.0, 1e7, 36);
  REQUIRE(ladder.size() == 36);
  CHECK(ladder.front() == doctest::Approx(1.0));
  CHECK(ladder.back() == doctest::Approx(1e7));
  const auto defaults = sim::CampaignPlan::defaults();
  CHECK(defaults.bias_currents_uA.size() == 21);
  CHECK(defaults.mean_photon_numbers.size() == 36);
  CHECK(defaults.repeats == 10);
}

TEST_CASE("plan and detector validation") {
  auto plan = small_plan();
  plan.bias_currents_uA.clear();
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan = small_plan();
  plan.repeats = 0;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  sim::GroundTruthDetector d;
  d.p_sat = 1.5;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("counter RNG streams are pure functions of key and counter") {
  CounterRng a(hash_key({1, 2, 3})), b(hash_key({1, 2, 3})), c(hash_key({1, 3, 2}));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    seen.insert(x);
  }
  CHECK(seen.size() == 100);
  CHECK(key_of(-0.0) == key_of(0.0));
}

} // TEST_SUITE
