#pragma once
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include <nanotomo/analysis.hpp>
#include <nanotomo/simulator.hpp>

namespace nanotomo {

/// Everything a run needs: generator, campaign grids, fit and analysis
/// settings, output location. Read from flat `section.key = value` text.
struct RunConfig {
  sim::GroundTruthDetector detector = sim::GroundTruthDetector::paper_like();
  sim::CampaignPlan campaign = sim::CampaignPlan::defaults();

  /// Photon-number ladder that generated `campaign.mean_photon_numbers`.
  double photon_min = 1.0;
  double photon_max = 1e7;
  std::size_t photon_count = 36;

  struct Fit {
    std::size_t max_order = 6;
    int bootstrap_resamples = 100;
    /// With shared_eta, eta at each wavelength is fitted jointly from this
    /// many highest-bias sweeps at nmax = 1 and then held fixed for every
    /// sweep at that wavelength.
    bool shared_eta = false;
    std::size_t eta_calibration_sweeps = 3;
    bool monotone = false;
  } fit;

  struct Analysis {
    double threshold_level = 0.1;
    double min_sigma_uA = 0.1;
    double max_relative_sigma = 0.5;
    double gamma_lo = -5.0;
    double gamma_hi = -1.0;
    double gamma_step = 0.05;
    analysis::CollapseOptions collapse;
    analysis::ModelConstants model;
    /// Replacement sigma_I [uA] keyed by (wavelength nm, photon number).
    std::map<std::pair<double, int>, double> sigma_overrides;
  } analysis;

  std::filesystem::path output_dir = "nanotomo_out";

  /// Applies one `key = value` setting. Throws ConfigError for unknown keys
  /// or malformed values.
  void set(std::string_view key, std::string_view value);

  /// Throws ConfigError when a grid is empty or a constant is out of range.
  void validate() const;

  /// Every setting, one per line, in a form `parse_config` reads back.
  std::string echo() const;
};

/// Parses `key = value` lines on top of the defaults. Blank lines and text
/// after '#' are ignored. Errors carry the source name and line number.
RunConfig parse_config(std::string_view text, const std::string &source);

RunConfig load_config(const std::filesystem::path &path);

} // namespace nanotomo
