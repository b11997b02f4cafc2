#pragma once
#include <cstddef>
#include <span>
#include <vector>

namespace nanotomo::photonics {

/// Planck constant times speed of light [eV nm].
inline constexpr double kHcEvNm = 1239.8419;

/// Energy of a single photon at a given vacuum wavelength.
struct PhotonEnergy {
  double wavelength_nm;

  explicit PhotonEnergy(double wavelength_nm);

  double photon_energy_eV() const noexcept { return kHcEvNm / wavelength_nm; }
};

/// Tomographic parameter set of a click detector probed with coherent light.
///
/// `p[k]` is the probability of a click given exactly k+1 absorbed photons;
/// every photon number above `nmax()` shares `p_tail`. The vacuum term p_0
/// is identically zero: there are no in-pulse dark counts.
struct DetectorResponse {
  double eta = 1.0;
  std::vector<double> p;
  double p_tail = 1.0;

  std::size_t nmax() const noexcept { return p.size(); }

  /// Detection probability for exactly n photons, n >= 0.
  double p_of(std::size_t n) const noexcept;

  /// Throws std::invalid_argument when a probability leaves [0,1] or nmax == 0.
  void validate() const;
};

/// Poisson probability e^-mu mu^n / n!, to full relative precision.
/// Throws std::domain_error for negative or non-finite mu.
double poisson_pmf(double mu, std::size_t n);

/// P(X > n) for X ~ Poisson(mu), via the regularized lower incomplete gamma
/// function so small tails keep full relative precision.
double poisson_upper_tail(double mu, std::size_t n);

/// Number of explicitly summed Poisson terms for mean mu:
/// ceil(mu + 12 sqrt(mu) + 40). Terms beyond it carry less than 1e-20 mass.
std::size_t truncation_order(double mu);

/// Click and no-click probabilities, each computed without cancellation.
struct ClickSplit {
  double click;
  double no_click;
};

ClickSplit click_split(const DetectorResponse &r, double mean_photon_number);

/// R = 1 - e^{-eta N} sum_n (1 - p_n) (eta N)^n / n!, clamped to [0,1].
double click_probability(const DetectorResponse &r, double mean_photon_number);

/// Per-photon-number share of the click probability.
struct Decomposition {
  std::vector<double> orders; ///< orders[k] = p_{k+1} Poisson(eta N, k+1)
  double tail = 0.0;          ///< p_tail P(X > nmax)

  double total() const noexcept;
};

/// Splits click_probability(r, N) into single-photon, two-photon, ... terms
/// plus the lumped remainder; the parts sum to the whole.
Decomposition contribution_decomposition(const DetectorResponse &r, double mean_photon_number);

} // namespace nanotomo::photonics
