#pragma once
#include <cstdint>
#include <vector>

#include <nanotomo/photonics.hpp>
#include <nanotomo/sweep.hpp>

namespace nanotomo::sim {

/// Ground-truth detector whose p_n all follow one logistic response curve
/// S(u) = p_sat / (1 + exp(-(u - u0) / width)) of the collapse coordinate
/// u = I_b - gamma E, with E = n h nu the total absorbed energy.
struct GroundTruthDetector {
  double gamma_uA_per_eV = -2.9;
  double u0_uA = 21.0;
  double width_uA = 0.7;
  double p_sat = 0.5;
  double eta = 1e-3;
  double critical_current_uA = 29.0;
  double dark_rate_hz = 0.0;

  void validate() const;

  /// Threshold current at which S reaches `level` for total energy E.
  double threshold_current(double energy_eV, double level) const;

  /// Threshold current extrapolated to E = 0.
  double intercept_uA(double level) const { return threshold_current(0.0, level); }

  /// Defaults with u0 moved so the p = 0.1 threshold line meets E = 0 at 19 uA.
  static GroundTruthDetector paper_like();
};

struct CampaignPlan {
  std::vector<double> wavelengths_nm{1000.0, 1300.0, 1500.0};
  std::vector<double> bias_currents_uA;
  std::vector<double> mean_photon_numbers;
  std::uint64_t pulses_per_window = 1'000'000;
  double window_s = 0.1;
  int repeats = 10;
  std::uint64_t seed = 1;

  void validate() const;

  /// Bias currents lo, lo + step, ..., up to hi inclusive.
  static std::vector<double> current_grid(double lo, double hi, double step);

  /// `count` photon numbers log-spaced over [lo, hi].
  static std::vector<double> log_ladder(double lo, double hi, std::size_t count);

  /// 12-22 uA in 0.5 uA steps, 36 powers over N in [1, 1e7].
  static CampaignPlan defaults();
};

/// S evaluated for n photons of energy E_photon at bias current I_b.
/// Throws std::domain_error above the critical current.
double universal_p(const GroundTruthDetector &d, int n, double bias_current_uA, double photon_energy_eV);

/// Response used to generate counts: p_1..p_6 from S, p_tail = S at n = 7.
photonics::DetectorResponse ground_truth_response(const GroundTruthDetector &d, double bias_current_uA,
                                                  double photon_energy_eV);

/// Click probability per pulse including the dark-count window process:
/// 1 - (1 - R) exp(-dark_rate window).
double click_probability_with_dark(const GroundTruthDetector &d, const CampaignPlan &plan,
                                   double wavelength_nm, double bias_current_uA, double mean_photon_number);

/// One SweepData per (wavelength, bias current), ordered wavelength-major.
/// Counts are binomial draws from streams keyed by (seed, lambda, I_b, N,
/// repeat), so the campaign is reproducible and order independent.
std::vector<SweepData> simulate_campaign(const GroundTruthDetector &d, const CampaignPlan &plan);

} // namespace nanotomo::sim
