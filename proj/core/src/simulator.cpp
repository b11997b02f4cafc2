#include <nanotomo/simulator.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nanotomo/parallel.hpp>
#include <nanotomo/random.hpp>

namespace nanotomo::sim {

namespace {

constexpr int kResolvedOrders = 6;

std::string cell_label(double lambda, double current) {
  std::ostringstream os;
  os << "sim:" << lambda << "nm:" << current << "uA";
  return os.str();
}

} // namespace

void GroundTruthDetector::validate() const {
  if (!(width_uA > 0.0))
    throw std::invalid_argument("width must be positive");
  if (!(p_sat > 0.0 && p_sat <= 1.0))
    throw std::invalid_argument("p_sat must lie in (0,1]");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("eta must lie in [0,1]");
  if (!(dark_rate_hz >= 0.0))
    throw std::invalid_argument("dark rate must be >= 0");
}

double GroundTruthDetector::threshold_current(double energy_eV, double level) const {
  if (!(level > 0.0 && level < p_sat))
    throw std::domain_error("threshold level must lie in (0, p_sat)");
  const double u = u0_uA - width_uA * std::log(p_sat / level - 1.0);
  return u + gamma_uA_per_eV * energy_eV;
}

GroundTruthDetector GroundTruthDetector::paper_like() {
  GroundTruthDetector d;
  d.u0_uA = 19.0 + d.width_uA * std::log(d.p_sat / 0.1 - 1.0);
  return d;
}

void CampaignPlan::validate() const {
  if (wavelengths_nm.empty() || bias_currents_uA.empty() || mean_photon_numbers.empty())
    throw std::invalid_argument("campaign grids must be non-empty");
  if (repeats < 1)
    throw std::invalid_argument("repeats must be >= 1");
  if (pulses_per_window == 0)
    throw std::invalid_argument("pulses per window must be >= 1");
  if (!(window_s > 0.0))
    throw std::invalid_argument("window length must be positive");
  for (double l : wavelengths_nm)
    if (!(l > 0.0))
      throw std::invalid_argument("wavelengths must be positive");
  for (double n : mean_photon_numbers)
    if (!(n >= 0.0) || !std::isfinite(n))
      throw std::invalid_argument("mean photon numbers must be finite and >= 0");
}

std::vector<double> CampaignPlan::current_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo)
    throw std::invalid_argument("invalid current grid");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= count; ++i)
    out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

std::vector<double> CampaignPlan::log_ladder(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || hi < lo || count < 2)
    throw std::invalid_argument("invalid photon-number ladder");
  std::vector<double> out(count);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

CampaignPlan CampaignPlan::defaults() {
  CampaignPlan plan;
  plan.bias_currents_uA = current_grid(12.0, 22.0, 0.5);
  plan.mean_photon_numbers = log_ladder(1.0, 1e7, 36);
  return plan;
}

double universal_p(const GroundTruthDetector &d, int n, double bias_current_uA, double photon_energy_eV) {
  if (n < 1)
    throw std::invalid_argument("photon number must be >= 1");
  if (bias_current_uA > d.critical_current_uA)
    throw std::domain_error("bias current above the critical current: detector is normal");
  const double u = bias_current_uA - d.gamma_uA_per_eV * (n * photon_energy_eV);
  return d.p_sat / (1.0 + std::exp(-(u - d.u0_uA) / d.width_uA));
}

photonics::DetectorResponse ground_truth_response(const GroundTruthDetector &d, double bias_current_uA,
                                                  double photon_energy_eV) {
  photonics::DetectorResponse r;
  r.eta = d.eta;
  r.p.resize(kResolvedOrders);
  for (int n = 1; n <= kResolvedOrders; ++n)
    r.p[static_cast<std::size_t>(n - 1)] = universal_p(d, n, bias_current_uA, photon_energy_eV);
  r.p_tail = universal_p(d, kResolvedOrders + 1, bias_current_uA, photon_energy_eV);
  return r;
}

double click_probability_with_dark(const GroundTruthDetector &d, const CampaignPlan &plan,
                                   double wavelength_nm, double bias_current_uA, double mean_photon_number) {
  const photonics::PhotonEnergy photon(wavelength_nm);
  const auto response = ground_truth_response(d, bias_current_uA, photon.photon_energy_eV());
  const auto split = photonics::click_split(response, mean_photon_number);
  if (d.dark_rate_hz == 0.0)
    return split.click;
  // Dark counts arrive as a Poisson process over the whole window and are
  // spread over its pulses.
  const double dark_per_pulse = d.dark_rate_hz * plan.window_s / static_cast<double>(plan.pulses_per_window);
  return 1.0 - split.no_click * std::exp(-dark_per_pulse);
}

std::vector<SweepData> simulate_campaign(const GroundTruthDetector &d, const CampaignPlan &plan) {
  d.validate();
  plan.validate();

  const std::size_t n_lambda = plan.wavelengths_nm.size();
  const std::size_t n_current = plan.bias_currents_uA.size();
  std::vector<SweepData> out(n_lambda * n_current);

  parallel_for(out.size(), [&](std::size_t cell) {
    const double lambda = plan.wavelengths_nm[cell / n_current];
    const double current = plan.bias_currents_uA[cell % n_current];
    SweepData &sweep = out[cell];
    sweep.source = cell_label(lambda, current);
    sweep.records.reserve(plan.mean_photon_numbers.size() * static_cast<std::size_t>(plan.repeats));
    for (double n_mean : plan.mean_photon_numbers) {
      const double rate = click_probability_with_dark(d, plan, lambda, current, n_mean);
      for (int rep = 0; rep < plan.repeats; ++rep) {
        CounterRng rng(hash_key({plan.seed, key_of(lambda), key_of(current), key_of(n_mean),
                                 static_cast<std::uint64_t>(rep)}));
        std::binomial_distribution<long long> draw(static_cast<long long>(plan.pulses_per_window), rate);
        SweepRecord rec;
        rec.wavelength_nm = lambda;
        rec.bias_current_uA = current;
        rec.mean_photon_number = n_mean;
        rec.pulses = plan.pulses_per_window;
        rec.clicks = rate > 0.0 ? static_cast<std::uint64_t>(draw(rng)) : 0;
        rec.repeat_index = rep;
        sweep.records.push_back(rec);
      }
    }
  });
  return out;
}

} // namespace nanotomo::sim
