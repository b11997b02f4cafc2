#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace nanotomo {

/// Click counts from one counting window at one illumination setting.
struct SweepRecord {
  double wavelength_nm = 0.0;
  double bias_current_uA = 0.0;
  double mean_photon_number = 0.0; ///< per pulse, at the detector input
  std::uint64_t pulses = 0;        ///< laser pulses in the window
  std::uint64_t clicks = 0;
  int repeat_index = 0;

  friend bool operator==(const SweepRecord &, const SweepRecord &) = default;
};

/// A power sweep: every record shares one wavelength and one bias current.
struct SweepData {
  std::vector<SweepRecord> records;
  std::string source;

  double wavelength_nm() const;
  double bias_current_uA() const;

  /// Throws std::invalid_argument on empty data, clicks > pulses, negative
  /// photon numbers or records from different (wavelength, current) cells.
  void validate() const;

  std::size_t distinct_photon_numbers() const;

  /// log10(max N / min N) over records with N > 0.
  double decades_spanned() const;

  /// At least 8 distinct mean photon numbers spanning at least 3 decades.
  bool supports_fit() const;

  bool all_dark() const;
};

} // namespace nanotomo
