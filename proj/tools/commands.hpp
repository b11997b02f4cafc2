#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include <nanotomo/analysis.hpp>
#include <nanotomo/config.hpp>
#include <nanotomo/io.hpp>
#include <nanotomo/tomography.hpp>

namespace nanotomo::cli {

/// Sub-directory of the output directory holding sweep files.
inline constexpr const char *kSweepDir = "sweeps";
inline constexpr const char *kDecompositionDir = "decomposition";
inline constexpr const char *kResponsesFile = "responses.csv";
inline constexpr const char *kConfigEchoFile = "config_echo.cfg";

/// Writes one sweep file per (wavelength, bias current) plus the config
/// echo. Returns the sweep file paths in campaign order.
std::vector<std::filesystem::path> cmd_simulate(const RunConfig &config);

/// Sorts the sweeps by (wavelength, bias current), checks them, and fits
/// each one: order selection, optional shared-eta calibration, bootstrap
/// errors. Results are returned in the sorted sweep order.
std::vector<tomography::ReconstructionResult> reconstruct_sweeps(const RunConfig &config,
                                                                 std::vector<SweepData> &sweeps);

/// Reconstructs every sweep in `inputs` (files or directories of
/// `sweep_*.csv`), writes the response table and per-sweep decomposition
/// files, and returns the rows sorted by (wavelength, bias current).
std::vector<tomography::ResponseRow> cmd_reconstruct(const RunConfig &config,
                                                     const std::vector<std::filesystem::path> &inputs);

struct AnalysisReport {
  std::vector<analysis::ResponseCurve> curves;
  std::vector<analysis::ThresholdPoint> thresholds;
  std::vector<io::Exclusion> exclusions;
  analysis::ScalingFit scaling;
  analysis::GammaScan scan;
  analysis::CollapseResult collapse;
  std::vector<analysis::ModelFit> models;
  analysis::DarkExtrapolation dark;
};

/// Thresholds, scaling fit, gamma scan, collapse, model fits and the E = 0
/// extrapolation from response rows. Throws AnalysisError when fewer than
/// three (wavelength, n) series yield a threshold.
AnalysisReport analyze_rows(const RunConfig &config, const std::vector<tomography::ResponseRow> &rows);

/// Reads the response table, runs analyze_rows and writes every table.
AnalysisReport cmd_analyze(const RunConfig &config, const std::filesystem::path &responses);

/// simulate, reconstruct and analyze into one output directory.
AnalysisReport cmd_pipeline(const RunConfig &config);

/// Names of the tables `pipeline` writes, relative to the output directory.
std::vector<std::string> pipeline_tables();

} // namespace nanotomo::cli
