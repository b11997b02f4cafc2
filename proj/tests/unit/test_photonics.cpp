#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include <nanotomo/photonics.hpp>

#include "oracles.hpp"

using namespace nanotomo;
using photonics::DetectorResponse;

TEST_SUITE("photonics") {

TEST_CASE("poisson_pmf matches direct arithmetic") {
  CHECK(photonics::poisson_pmf(0.0, 0) == 1.0);
  CHECK(photonics::poisson_pmf(0.0, 3) == 0.0);
  CHECK(photonics::poisson_pmf(1.0, 1) == doctest::Approx(0.367879441171442).epsilon(1e-14));
  for (double mu : {0.3, 4.0, 57.0, 812.5})
    for (std::size_t n : {0u, 1u, 7u, 60u})
      CHECK(std::abs(photonics::poisson_pmf(mu, n) - static_cast<double>(oracle::poisson(mu, n))) <=
            1e-13 * static_cast<double>(oracle::poisson(mu, n)) + 1e-300);
}

TEST_CASE("poisson_pmf rejects negative and non-finite means") {
  CHECK_THROWS_AS(photonics::poisson_pmf(-1.0, 0), std::domain_error);
  CHECK_THROWS_AS(photonics::poisson_pmf(NAN, 0), std::domain_error);
  CHECK_THROWS_AS(photonics::poisson_pmf(INFINITY, 0), std::domain_error);
}

TEST_CASE("truncated pmf sum plus analytic tail is one") {
  for (double mu : {1e-3, 0.5, 3.0, 40.0, 900.0, 1e4}) {
    const std::size_t m = photonics::truncation_order(mu);
    double sum = 0.0;
    for (std::size_t n = 0; n <= m; ++n)
      sum += photonics::poisson_pmf(mu, n);
    CHECK(std::abs(sum + photonics::poisson_upper_tail(mu, m) - 1.0) <= 1e-12);
  }
}

TEST_CASE("click probability of an arbitrary response at zero photons is zero") {
  DetectorResponse r{0.3, {0.2, 0.7}, 0.9};
  CHECK(photonics::click_probability(r, 0.0) == 0.0);
}

TEST_CASE("ideal threshold detector gives 1 - exp(-N)") {
  DetectorResponse r{1.0, {1.0, 1.0, 1.0}, 1.0};
  for (double n : {1e-6, 0.1, 1.0, 5.0, 30.0})
    CHECK(std::abs(photonics::click_probability(r, n) - -std::expm1(-n)) <= 1e-15);
}

TEST_CASE("two-photon example matches the hand-summed series") {
  DetectorResponse r{0.5, {0.1, 0.5}, 1.0};
  const double expected = 1.0 - 2.15 * std::exp(-1.0);
  CHECK(std::abs(photonics::click_probability(r, 2.0) - expected) <= 1e-14);
  CHECK(std::abs(photonics::click_probability(r, 2.0) - 0.2090592014814) <= 1e-12);
}

TEST_CASE("click probability agrees with a ten-times-longer sum") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> log_n(-1.0, 4.0);
  for (int i = 0; i < 300; ++i) {
    const auto r = oracle::random_response(rng);
    const double n = std::pow(10.0, log_n(rng));
    const double expected = oracle::click_sum(r, n, oracle::long_sum_terms(r.eta * n));
    REQUIRE(std::abs(photonics::click_probability(r, n) - expected) <= 1e-12);
  }
}

TEST_CASE("click and no-click split is complementary and stays in [0,1]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> log_n(-3.0, 7.0);
  for (int i = 0; i < 300; ++i) {
    const auto r = oracle::random_response(rng);
    const double n = std::pow(10.0, log_n(rng));
    const auto s = photonics::click_split(r, n);
    CHECK(s.click >= 0.0);
    CHECK(s.click <= 1.0);
    CHECK(std::abs(s.click + s.no_click - 1.0) <= 1e-12);
  }
}

TEST_CASE("click probability is monotone in every p, and in eta and N when p rises with n") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    auto r = oracle::random_response(rng);
    const double n = std::pow(10.0, 4.0 * unit(rng));
    const double base = photonics::click_probability(r, n);

    for (std::size_t k = 0; k < r.p.size(); ++k) {
      auto bumped = r;
      bumped.p[k] = std::min(1.0, r.p[k] + 0.01);
      CHECK(photonics::click_probability(bumped, n) >= base - 1e-15);
    }
    auto tail = r;
    tail.p_tail = std::min(1.0, r.p_tail + 0.01);
    CHECK(photonics::click_probability(tail, n) >= base - 1e-15);

    auto sorted = r;
    std::sort(sorted.p.begin(), sorted.p.end());
    sorted.p_tail = std::max(sorted.p_tail, sorted.p.back());
    CHECK(photonics::click_probability(sorted, n * 1.01) >= photonics::click_probability(sorted, n) - 1e-15);
    auto up = sorted;
    up.eta = std::min(1.0, sorted.eta * 1.01);
    CHECK(photonics::click_probability(up, n) >= photonics::click_probability(sorted, n) - 1e-15);
  }
}

TEST_CASE("decomposition of a pure single-photon response") {
  DetectorResponse r{1.0, {1.0, 0.0, 0.0}, 0.0};
  const auto d = photonics::contribution_decomposition(r, 1.0);
  CHECK(std::abs(d.orders[0] - std::exp(-1.0)) <= 1e-15);
  CHECK(d.orders[1] == 0.0);
  CHECK(d.orders[2] == 0.0);
  CHECK(d.tail == 0.0);
}

TEST_CASE("decomposition at zero photons is all zero") {
  DetectorResponse r{0.4, {0.3, 0.6}, 0.8};
  const auto d = photonics::contribution_decomposition(r, 0.0);
  for (double c : d.orders)
    CHECK(c == 0.0);
  CHECK(d.tail == 0.0);
}

TEST_CASE("decomposition sums to the click probability") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> log_n(-1.0, 4.0);
  for (int i = 0; i < 300; ++i) {
    const auto r = oracle::random_response(rng);
    const double n = std::pow(10.0, log_n(rng));
    const auto d = photonics::contribution_decomposition(r, n);
    REQUIRE(d.orders.size() == r.nmax());
    CHECK(std::abs(d.total() - photonics::click_probability(r, n)) <= 1e-12);
  }
}

TEST_CASE("response validation") {
  CHECK_NOTHROW((DetectorResponse{0.5, {0.1}, 1.0}).validate());
  CHECK_THROWS_AS((DetectorResponse{1.5, {0.1}, 1.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((DetectorResponse{0.5, {}, 1.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((DetectorResponse{0.5, {-0.1}, 1.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((DetectorResponse{0.5, {0.1}, 1.2}).validate(), std::invalid_argument);
}

TEST_CASE("p_of maps orders onto p, p_tail and the vacuum") {
  DetectorResponse r{0.5, {0.1, 0.2}, 0.9};
  CHECK(r.p_of(0) == 0.0);
  CHECK(r.p_of(1) == 0.1);
  CHECK(r.p_of(2) == 0.2);
  CHECK(r.p_of(3) == 0.9);
  CHECK(r.p_of(40) == 0.9);
}

TEST_CASE("photon energy from wavelength") {
  CHECK(photonics::PhotonEnergy(1500.0).photon_energy_eV() == doctest::Approx(0.82656).epsilon(1e-5));
  CHECK(photonics::PhotonEnergy(750.0).photon_energy_eV() ==
        doctest::Approx(2.0 * photonics::PhotonEnergy(1500.0).photon_energy_eV()).epsilon(1e-15));
}

} // TEST_SUITE
