#include <nanotomo/photonics.hpp>

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nanotomo::photonics {

namespace {

void check_mean(double mu) {
  if (!std::isfinite(mu) || mu < 0.0)
    throw std::domain_error("Poisson mean must be finite and >= 0, got " + std::to_string(mu));
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

} // namespace

PhotonEnergy::PhotonEnergy(double wavelength)
    : wavelength_nm(wavelength) {
  if (!(wavelength > 0.0) || !std::isfinite(wavelength))
    throw std::invalid_argument("wavelength must be positive");
}

double DetectorResponse::p_of(std::size_t n) const noexcept {
  if (n == 0)
    return 0.0;
  return n <= p.size() ? p[n - 1] : p_tail;
}

void DetectorResponse::validate() const {
  if (p.empty())
    throw std::invalid_argument("DetectorResponse needs nmax >= 1");
  if (!in_unit_interval(eta))
    throw std::invalid_argument("eta outside [0,1]");
  if (!in_unit_interval(p_tail))
    throw std::invalid_argument("p_tail outside [0,1]");
  for (std::size_t k = 0; k < p.size(); ++k)
    if (!in_unit_interval(p[k]))
      throw std::invalid_argument("p_" + std::to_string(k + 1) + " outside [0,1]");
}

double poisson_pmf(double mu, std::size_t n) {
  check_mean(mu);
  if (mu == 0.0)
    return n == 0 ? 1.0 : 0.0;
  // d/dx P(n + 1, x) at x = mu is exactly e^-mu mu^n / n!.
  return std::clamp(boost::math::gamma_p_derivative(static_cast<double>(n) + 1.0, mu), 0.0, 1.0);
}

double poisson_upper_tail(double mu, std::size_t n) {
  check_mean(mu);
  if (mu == 0.0)
    return 0.0;
  // P(X > n) = P(n + 1, mu), the regularized lower incomplete gamma function.
  return boost::math::gamma_p(static_cast<double>(n) + 1.0, mu);
}

std::size_t truncation_order(double mu) {
  check_mean(mu);
  return static_cast<std::size_t>(std::ceil(mu + 12.0 * std::sqrt(mu) + 40.0));
}

double Decomposition::total() const noexcept {
  double sum = 0.0;
  for (double c : orders)
    sum += c;
  return sum + tail;
}

ClickSplit click_split(const DetectorResponse &r, double mean_photon_number) {
  check_mean(mean_photon_number);
  const double mu = r.eta * mean_photon_number;
  if (mu == 0.0)
    return {0.0, 1.0};

  // Orders beyond the truncation point share p_tail; the difference is below
  // the Poisson mass past the cut.
  const std::size_t explicit_orders = std::min(r.nmax(), truncation_order(mu));

  double click = 0.0;
  double no_click = poisson_pmf(mu, 0);
  for (std::size_t n = 1; n <= explicit_orders; ++n) {
    const double w = poisson_pmf(mu, n);
    click += r.p[n - 1] * w;
    no_click += (1.0 - r.p[n - 1]) * w;
  }
  const double tail = poisson_upper_tail(mu, explicit_orders);
  click += r.p_tail * tail;
  no_click += (1.0 - r.p_tail) * tail;
  return {std::clamp(click, 0.0, 1.0), std::clamp(no_click, 0.0, 1.0)};
}

double click_probability(const DetectorResponse &r, double mean_photon_number) {
  return click_split(r, mean_photon_number).click;
}

Decomposition contribution_decomposition(const DetectorResponse &r, double mean_photon_number) {
  check_mean(mean_photon_number);
  const double mu = r.eta * mean_photon_number;
  Decomposition d;
  d.orders.resize(r.nmax(), 0.0);
  if (mu == 0.0)
    return d;
  for (std::size_t n = 1; n <= r.nmax(); ++n)
    d.orders[n - 1] = r.p[n - 1] * poisson_pmf(mu, n);
  d.tail = r.p_tail * poisson_upper_tail(mu, r.nmax());
  return d;
}

} // namespace nanotomo::photonics
