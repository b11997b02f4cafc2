#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <nanotomo/photonics.hpp>
#include <nanotomo/tomography.hpp>

/// Independent reference computations. Nothing here calls the library code
/// under test; each oracle is a direct transcription of the defining formula.
namespace nanotomo::oracle {

/// e^-mu mu^n / n! by repeated multiplication in long double.
inline long double poisson(long double mu, std::size_t n) {
  long double term = std::exp(-mu);
  for (std::size_t k = 1; k <= n; ++k)
    term *= mu / static_cast<long double>(k);
  return term;
}

/// Click probability summed term by term over `terms` photon numbers.
/// Poisson weights are built by recurrence, so no special functions are used.
/// Both the click and the no-click series are summed; the smaller one is
/// returned directly or complemented, so neither side suffers cancellation.
inline double click_sum(const photonics::DetectorResponse &r, double mean_photon_number, std::size_t terms) {
  const long double mu = static_cast<long double>(r.eta) * mean_photon_number;
  if (mu <= 0.0L)
    return 0.0;
  long double log_w = -mu;
  long double click = 0.0L, miss = std::exp(log_w);
  for (std::size_t n = 1; n < terms; ++n) {
    log_w += std::log(mu) - std::log(static_cast<long double>(n));
    const long double pn = n <= r.p.size() ? r.p[n - 1] : r.p_tail;
    click += pn * std::exp(log_w);
    miss += (1.0L - pn) * std::exp(log_w);
  }
  return static_cast<double>(click < 0.5L ? click : 1.0L - miss);
}

/// Enough terms to exhaust the Poisson mass of mean mu: the larger of 200 and
/// ten times the library's own truncation length.
inline std::size_t long_sum_terms(double mu) {
  const double lib = std::ceil(mu + 12.0 * std::sqrt(mu) + 40.0);
  return std::max<std::size_t>(200, static_cast<std::size_t>(10.0 * lib));
}

/// Logistic response of the ground-truth generator written out directly.
inline double logistic(double u, double u0, double width, double p_sat) {
  return p_sat / (1.0 + std::exp(-(u - u0) / width));
}

/// Current at which the logistic reaches `level` for total energy E, with
/// u = I - gamma E.
inline double logistic_threshold(double level, double u0, double width, double p_sat, double gamma,
                                 double energy_eV) {
  return u0 - width * std::log(p_sat / level - 1.0) + gamma * energy_eV;
}

/// Expected-value counts for a response: clicks = trials * R, where R comes
/// from the oracle sum.
inline std::vector<tomography::Observation> noiseless(const photonics::DetectorResponse &r,
                                                      const std::vector<double> &photon_numbers,
                                                      double trials) {
  std::vector<tomography::Observation> obs;
  for (double n : photon_numbers) {
    const double mu = r.eta * n;
    obs.push_back({n, trials, trials * click_sum(r, n, long_sum_terms(mu))});
  }
  return obs;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1)));
  return out;
}

/// Random response with eta in [1e-4, 1], nmax in 1..6, uniform p.
inline photonics::DetectorResponse random_response(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  photonics::DetectorResponse r;
  r.eta = std::pow(10.0, -4.0 + 4.0 * unit(rng));
  const int nmax = 1 + static_cast<int>(unit(rng) * 6.0);
  for (int k = 0; k < nmax; ++k)
    r.p.push_back(unit(rng));
  r.p_tail = unit(rng);
  return r;
}

/// Closed-form weighted least-squares line; returns (slope, intercept).
inline std::pair<double, double> weighted_line(const std::vector<double> &x, const std::vector<double> &y,
                                               const std::vector<double> &sigma) {
  double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 1.0 / (sigma[i] * sigma[i]);
    s += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = s * sxx - sx * sx;
  return {(s * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

} // namespace nanotomo::oracle
