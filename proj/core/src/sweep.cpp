#include <nanotomo/sweep.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace nanotomo {

double SweepData::wavelength_nm() const {
  if (records.empty())
    throw std::invalid_argument("empty sweep");
  return records.front().wavelength_nm;
}

double SweepData::bias_current_uA() const {
  if (records.empty())
    throw std::invalid_argument("empty sweep");
  return records.front().bias_current_uA;
}

void SweepData::validate() const {
  if (records.empty())
    throw std::invalid_argument("sweep '" + source + "' has no records");
  const double lambda = records.front().wavelength_nm;
  const double current = records.front().bias_current_uA;
  for (const auto &r : records) {
    if (r.clicks > r.pulses)
      throw std::invalid_argument("sweep '" + source + "': clicks exceed pulses");
    if (!(r.mean_photon_number >= 0.0) || !std::isfinite(r.mean_photon_number))
      throw std::invalid_argument("sweep '" + source + "': invalid mean photon number");
    if (r.wavelength_nm != lambda || r.bias_current_uA != current)
      throw std::invalid_argument("sweep '" + source + "' mixes wavelengths or bias currents");
  }
}

std::size_t SweepData::distinct_photon_numbers() const {
  std::set<double> seen;
  for (const auto &r : records)
    seen.insert(r.mean_photon_number);
  return seen.size();
}

double SweepData::decades_spanned() const {
  double lo = INFINITY, hi = 0.0;
  for (const auto &r : records) {
    if (r.mean_photon_number > 0.0) {
      lo = std::min(lo, r.mean_photon_number);
      hi = std::max(hi, r.mean_photon_number);
    }
  }
  return hi > 0.0 ? std::log10(hi / lo) : 0.0;
}

bool SweepData::supports_fit() const {
  return distinct_photon_numbers() >= 8 && decades_spanned() >= 3.0;
}

bool SweepData::all_dark() const {
  return std::all_of(records.begin(), records.end(), [](const SweepRecord &r) { return r.clicks == 0; });
}

} // namespace nanotomo
