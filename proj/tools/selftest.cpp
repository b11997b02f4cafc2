#include "selftest.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <nanotomo/analysis.hpp>
#include <nanotomo/io.hpp>
#include <nanotomo/photonics.hpp>
#include <nanotomo/simulator.hpp>
#include <nanotomo/tomography.hpp>

namespace nanotomo::cli {

namespace {

/// Direct long-double sum of the click series, enough terms to cover the
/// Poisson mass far beyond its mean.
double brute_force_click(const photonics::DetectorResponse &r, double n_mean) {
  const long double mu = static_cast<long double>(r.eta) * n_mean;
  if (mu <= 0.0L)
    return 0.0;
  const auto terms = static_cast<long>(std::max(200.0L, mu + 40.0L * std::sqrt(mu) + 200.0L));
  long double miss = 0.0L;
  for (long n = 0; n < terms; ++n) {
    const long double pn = n == 0 ? 0.0L : static_cast<long double>(r.p_of(static_cast<std::size_t>(n)));
    const long double log_w = -mu + n * std::log(mu) - std::lgamma(static_cast<long double>(n) + 1.0L);
    miss += (1.0L - pn) * std::exp(log_w);
  }
  return static_cast<double>(1.0L - miss);
}

photonics::DetectorResponse random_response(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  photonics::DetectorResponse r;
  r.eta = std::pow(10.0, -4.0 + 4.0 * unit(rng));
  const int nmax = 1 + static_cast<int>(unit(rng) * 6.0);
  for (int k = 0; k < nmax; ++k)
    r.p.push_back(unit(rng));
  r.p_tail = unit(rng);
  return r;
}

SelfTestResult check(std::string name, bool ok, const std::string &detail) {
  return {std::move(name), ok, detail};
}

std::string fmt(double x) { return io::format_double(x); }

} // namespace

std::vector<SelfTestResult> run_selftest() {
  std::vector<SelfTestResult> out;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> log_n(0.0, 4.0);

  double worst_click = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 300; ++i) {
    const auto r = random_response(rng);
    const double n = std::pow(10.0, log_n(rng));
    const double value = photonics::click_probability(r, n);
    worst_click = std::max(worst_click, std::abs(value - brute_force_click(r, n)));
    worst_sum = std::max(worst_sum, std::abs(photonics::contribution_decomposition(r, n).total() - value));
  }
  out.push_back(check("click probability matches brute-force Poisson sum", worst_click <= 1e-12,
                      "max |diff| = " + fmt(worst_click)));
  out.push_back(check("photon-number contributions sum to the click probability", worst_sum <= 1e-12,
                      "max |diff| = " + fmt(worst_sum)));

  {
    const sim::GroundTruthDetector d;
    const double u = 19.0 + 2.9 * 0.8266;
    const double expected = 0.5 / (1.0 + std::exp(-(u - 21.0) / 0.7));
    const double got = sim::universal_p(d, 1, 19.0, 0.8266);
    out.push_back(check("universal curve matches direct logistic arithmetic", std::abs(got - expected) <= 1e-12,
                        "p = " + fmt(got)));
  }

  {
    // Expected-value counts of an ideal detector: R = 1 - exp(-0.01 N).
    std::vector<tomography::Observation> obs;
    for (int i = 0; i <= 30; ++i) {
      const double n = std::pow(10.0, 0.2 * i);
      obs.push_back({n, 1e6, 1e6 * -std::expm1(-0.01 * n)});
    }
    tomography::FitOptions opts;
    opts.nmax = 1;
    const auto fit = tomography::fit_response(obs, opts);
    const bool ok = std::abs(fit.response.eta / 0.01 - 1.0) < 1e-4 && fit.deviance_per_dof <= 1.05;
    out.push_back(check("ideal single-photon detector curve is refitted exactly", ok,
                        "eta = " + fmt(fit.response.eta) + ", deviance/dof = " + fmt(fit.deviance_per_dof)));
  }

  {
    // log p linear in current: interpolation must be exact.
    analysis::ResponseCurve curve{1500.0, 1, {}};
    for (int i = 0; i < 10; ++i) {
      const double current = 12.0 + i;
      curve.points.push_back({current, std::exp(-0.8 * (21.0 - current)), 1e-3});
    }
    const double expected = 21.0 + std::log(0.1) / 0.8;
    const auto t = analysis::threshold_current(curve, 0.1);
    out.push_back(check("threshold of an exponential curve is exact", std::abs(t.current_uA - expected) < 1e-9,
                        "I = " + fmt(t.current_uA)));
  }

  {
    std::vector<analysis::ThresholdPoint> pts;
    for (double e : {0.8266, 0.9537, 1.2398, 1.6532, 1.9075, 2.4797})
      pts.push_back({e, 19.0 - 2.9 * e, 0.1, 0.0, 1});
    const auto fit = analysis::fit_scaling(pts);
    const bool ok = std::abs(fit.gamma_uA_per_eV + 2.9) < 1e-9 && std::abs(fit.intercept_uA - 19.0) < 1e-9;
    out.push_back(check("scaling fit recovers an exact line", ok,
                        "gamma = " + fmt(fit.gamma_uA_per_eV) + ", intercept = " + fmt(fit.intercept_uA)));
  }

  {
    sim::CampaignPlan plan;
    plan.wavelengths_nm = {1300.0};
    plan.bias_currents_uA = {17.5};
    plan.mean_photon_numbers = sim::CampaignPlan::log_ladder(1.0, 1e6, 10);
    plan.repeats = 2;
    const auto sweep = sim::simulate_campaign(sim::GroundTruthDetector{}, plan).front();
    const auto back = io::sweep_from_csv(io::sweep_to_csv(sweep), "selftest");
    out.push_back(check("sweep file round-trips losslessly", back.records == sweep.records,
                        std::to_string(sweep.records.size()) + " records"));
  }
  return out;
}

} // namespace nanotomo::cli
