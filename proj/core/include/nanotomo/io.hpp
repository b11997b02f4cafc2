#pragma once
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nanotomo/analysis.hpp>
#include <nanotomo/sweep.hpp>
#include <nanotomo/tomography.hpp>

namespace nanotomo::io {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double x);

double parse_double(std::string_view text, const std::string &source, std::size_t line);
long long parse_integer(std::string_view text, const std::string &source, std::size_t line);

/// A comma-separated table with a header row. Fields containing a comma or
/// a double quote are quoted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers; ///< 1-based source line of each row

  std::size_t column(std::string_view name, const std::string &source) const;
  std::string to_csv() const;
};

/// Throws ParseError (with line number) on an empty input, a missing header
/// or a row whose field count differs from the header.
Table parse_csv(std::string_view text, const std::string &source);

std::string read_file(const std::filesystem::path &path);

/// Writes through a temporary sibling and renames it into place, so a
/// partially written file is never observed. Throws IoError.
void write_file_atomic(const std::filesystem::path &path, std::string_view content);

// Sweep files -------------------------------------------------------------

inline constexpr std::string_view kSweepHeader =
    "wavelength_nm,bias_current_uA,mean_photon_number,pulses,clicks,repeat_index";

std::string sweep_file_name(double wavelength_nm, double bias_current_uA);
std::string sweep_to_csv(const SweepData &data);
SweepData sweep_from_csv(std::string_view text, const std::string &source);
SweepData read_sweep(const std::filesystem::path &path);

// Response table ----------------------------------------------------------

std::string responses_to_csv(std::span<const tomography::ResponseRow> rows);
std::vector<tomography::ResponseRow> responses_from_csv(std::string_view text, const std::string &source);

/// Fit-curve breakdown of one sweep: N, R_fit, C_1..C_nmax, C_tail.
struct DecompositionRow {
  double mean_photon_number = 0.0;
  double r_fit = 0.0;
  std::vector<double> orders;
  double tail = 0.0;

  friend bool operator==(const DecompositionRow &, const DecompositionRow &) = default;
};

std::vector<DecompositionRow> decompose(const photonics::DetectorResponse &response,
                                        std::span<const double> mean_photon_numbers);
std::string decomposition_to_csv(std::span<const DecompositionRow> rows);
std::vector<DecompositionRow> decomposition_from_csv(std::string_view text, const std::string &source);
std::string decomposition_file_name(double wavelength_nm, double bias_current_uA);

// Analysis outputs --------------------------------------------------------

/// p_n versus bias current per (wavelength, n) series.
std::string curves_to_csv(std::span<const analysis::ResponseCurve> curves);
std::vector<analysis::ResponseCurve> curves_from_csv(std::string_view text, const std::string &source);

std::string thresholds_to_csv(std::span<const analysis::ThresholdPoint> points);
std::vector<analysis::ThresholdPoint> thresholds_from_csv(std::string_view text, const std::string &source);

std::string scaling_to_csv(const analysis::ScalingFit &fit);
analysis::ScalingFit scaling_from_csv(std::string_view text, const std::string &source);

std::string collapse_to_csv(std::span<const analysis::CollapsedPoint> points);
std::vector<analysis::CollapsedPoint> collapse_from_csv(std::string_view text, const std::string &source);

std::string gamma_scan_to_csv(const analysis::GammaScan &scan);
analysis::GammaScan gamma_scan_from_csv(std::string_view text, const std::string &source);

std::string model_fits_to_csv(std::span<const analysis::ModelFit> fits);
std::vector<analysis::ModelFit> model_fits_from_csv(std::string_view text, const std::string &source);

std::string dark_to_csv(const analysis::DarkExtrapolation &dark);
analysis::DarkExtrapolation dark_from_csv(std::string_view text, const std::string &source);

/// Series that produced no threshold, with the reason.
struct Exclusion {
  double wavelength_nm = 0.0;
  int photon_number = 0;
  std::string reason;

  friend bool operator==(const Exclusion &, const Exclusion &) = default;
};

std::string exclusions_to_csv(std::span<const Exclusion> rows);
std::vector<Exclusion> exclusions_from_csv(std::string_view text, const std::string &source);

} // namespace nanotomo::io
