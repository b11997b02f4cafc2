#include "commands.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include <nanotomo/errors.hpp>
#include <nanotomo/parallel.hpp>
#include <nanotomo/random.hpp>
#include <nanotomo/simulator.hpp>

namespace nanotomo::cli {

namespace fs = std::filesystem;

namespace {

void write_echo(const RunConfig &config) {
  io::write_file_atomic(config.output_dir / kConfigEchoFile, config.echo());
}

std::vector<fs::path> collect_sweep_files(const std::vector<fs::path> &inputs) {
  std::vector<fs::path> files;
  for (const auto &in : inputs) {
    std::error_code ec;
    if (fs::is_directory(in, ec)) {
      std::vector<fs::path> found;
      for (const auto &entry : fs::directory_iterator(in, ec)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with("sweep_") && entry.path().extension() == ".csv")
          found.push_back(entry.path());
      }
      if (ec)
        throw IoError("cannot list '" + in.string() + "': " + ec.message());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in, ec)) {
      files.push_back(in);
    } else {
      throw IoError("input '" + in.string() + "' does not exist");
    }
  }
  if (files.empty())
    throw IoError("no sweep files found");
  return files;
}

struct Calibration {
  double eta = 0.0;
  double sigma = 0.0;
};

/// Shared eta per wavelength from a joint nmax = 1 fit of the highest-bias
/// sweeps. Its standard error comes from a parametric bootstrap of that fit
/// when resampling is enabled, and from the Fisher information otherwise.
std::map<double, Calibration> calibrate_eta(const RunConfig &config, const std::vector<SweepData> &sweeps) {
  std::map<double, std::vector<const SweepData *>> by_lambda;
  for (const auto &s : sweeps)
    if (!s.all_dark())
      by_lambda[s.wavelength_nm()].push_back(&s);

  tomography::FitOptions opts;
  opts.monotone = config.fit.monotone;
  std::map<double, Calibration> out;
  for (auto &[lambda, group] : by_lambda) {
    std::sort(group.begin(), group.end(),
              [](const SweepData *a, const SweepData *b) { return a->bias_current_uA() > b->bias_current_uA(); });
    std::vector<SweepData> reference;
    for (std::size_t i = 0; i < group.size() && i < config.fit.eta_calibration_sweeps; ++i)
      reference.push_back(*group[i]);
    const std::vector<std::size_t> orders(reference.size(), 1);
    const auto joint = tomography::fit_shared_eta(reference, orders, opts);
    Calibration cal{joint.front().response.eta, joint.front().standard_errors.front()};

    if (config.fit.bootstrap_resamples >= 2) {
      tomography::BootstrapOptions boot;
      boot.resamples = config.fit.bootstrap_resamples;
      boot.seed = hash_key({config.campaign.seed, key_of(lambda), 0xCA1ULL});
      cal.sigma = tomography::bootstrap_shared_eta(reference, joint, boot);
    }
    out[lambda] = cal;
  }
  return out;
}

} // namespace

std::vector<fs::path> cmd_simulate(const RunConfig &config) {
  config.validate();
  const auto sweeps = sim::simulate_campaign(config.detector, config.campaign);
  std::vector<fs::path> written;
  for (const auto &s : sweeps) {
    const auto path = config.output_dir / kSweepDir / io::sweep_file_name(s.wavelength_nm(), s.bias_current_uA());
    io::write_file_atomic(path, io::sweep_to_csv(s));
    written.push_back(path);
  }
  write_echo(config);
  return written;
}

std::vector<tomography::ReconstructionResult> reconstruct_sweeps(const RunConfig &config,
                                                                 std::vector<SweepData> &sweeps) {
  std::sort(sweeps.begin(), sweeps.end(), [](const SweepData &a, const SweepData &b) {
    return std::pair(a.wavelength_nm(), a.bias_current_uA()) < std::pair(b.wavelength_nm(), b.bias_current_uA());
  });
  for (std::size_t i = 1; i < sweeps.size(); ++i)
    if (sweeps[i].wavelength_nm() == sweeps[i - 1].wavelength_nm() &&
        sweeps[i].bias_current_uA() == sweeps[i - 1].bias_current_uA())
      throw AnalysisError("two sweep files share " + io::format_double(sweeps[i].wavelength_nm()) + " nm, " +
                          io::format_double(sweeps[i].bias_current_uA()) + " uA: '" + sweeps[i - 1].source +
                          "' and '" + sweeps[i].source + "'");
  for (const auto &s : sweeps) {
    try {
      s.validate();
    } catch (const std::invalid_argument &e) {
      throw AnalysisError(e.what());
    }
    if (!s.supports_fit() && !s.all_dark())
      throw AnalysisError("insufficient data in '" + s.source +
                          "': need >= 8 distinct photon numbers spanning >= 3 decades");
  }

  std::map<double, Calibration> calibration;
  if (config.fit.shared_eta)
    calibration = calibrate_eta(config, sweeps);

  std::vector<tomography::ReconstructionResult> results(sweeps.size());
  parallel_for(sweeps.size(), [&](std::size_t i) {
    const auto &s = sweeps[i];
    tomography::FitOptions base;
    base.monotone = config.fit.monotone;
    const auto cal = calibration.find(s.wavelength_nm());
    if (cal != calibration.end())
      base.fixed_eta = cal->second.eta;
    auto result = tomography::select_model_order(s, config.fit.max_order, base).result;
    if (config.fit.bootstrap_resamples >= 2 && !result.no_signal) {
      tomography::BootstrapOptions boot;
      boot.resamples = config.fit.bootstrap_resamples;
      boot.seed = hash_key({config.campaign.seed, key_of(s.wavelength_nm()), key_of(s.bias_current_uA())});
      boot.workers = 1;
      if (cal != calibration.end())
        boot.eta_sigma = cal->second.sigma;
      result.standard_errors = tomography::bootstrap_errors(s, result, boot);
      result.bootstrap_errors = true;
    }
    results[i] = std::move(result);
  });
  return results;
}

std::vector<tomography::ResponseRow> cmd_reconstruct(const RunConfig &config, const std::vector<fs::path> &inputs) {
  config.validate();
  const auto files = collect_sweep_files(inputs);
  std::vector<SweepData> sweeps;
  for (const auto &f : files)
    sweeps.push_back(io::read_sweep(f));
  const auto results = reconstruct_sweeps(config, sweeps);

  std::vector<tomography::ResponseRow> rows;
  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    const auto &s = sweeps[i];
    rows.push_back(tomography::make_row(s.wavelength_nm(), s.bias_current_uA(), results[i]));
    std::vector<double> ns;
    for (const auto &r : s.records)
      ns.push_back(r.mean_photon_number);
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    const auto decomposition = io::decompose(results[i].response, ns);
    io::write_file_atomic(config.output_dir / kDecompositionDir /
                              io::decomposition_file_name(s.wavelength_nm(), s.bias_current_uA()),
                          io::decomposition_to_csv(decomposition));
  }
  io::write_file_atomic(config.output_dir / kResponsesFile, io::responses_to_csv(rows));
  write_echo(config);
  return rows;
}

AnalysisReport analyze_rows(const RunConfig &config, const std::vector<tomography::ResponseRow> &rows) {
  config.validate();
  const auto &a = config.analysis;
  if (!a.model.gap_eV || !a.model.i0_uA || !a.model.beta)
    throw ConfigError("the fluctuation model needs analysis.model.gap_eV, analysis.model.i0_uA and "
                      "analysis.model.beta; they have no defaults");

  AnalysisReport report;
  report.curves = analysis::build_response_curves(rows, {a.max_relative_sigma});
  for (const auto &curve : report.curves) {
    try {
      auto point = analysis::threshold_current(curve, a.threshold_level);
      point.sigma_current_uA = std::max(point.sigma_current_uA, a.min_sigma_uA);
      const auto over = a.sigma_overrides.find({curve.wavelength_nm, curve.photon_number});
      if (over != a.sigma_overrides.end())
        point.sigma_current_uA = over->second;
      report.thresholds.push_back(point);
    } catch (const NoThreshold &e) {
      report.exclusions.push_back({curve.wavelength_nm, curve.photon_number, e.what()});
    } catch (const std::invalid_argument &e) {
      report.exclusions.push_back({curve.wavelength_nm, curve.photon_number, e.what()});
    }
  }
  if (report.thresholds.size() < 3)
    throw AnalysisError("insufficient data: " + std::to_string(report.thresholds.size()) +
                        " (wavelength, photon number) series reach the threshold level; the scaling fit needs 3 "
                        "spread over at least two wavelengths or photon orders");

  report.scaling = analysis::fit_scaling(report.thresholds);
  report.scan = analysis::scan_collapse(report.curves, a.gamma_lo, a.gamma_hi, a.gamma_step, a.collapse);
  report.collapse = analysis::collapse(report.curves, report.scaling.gamma_uA_per_eV, a.collapse);
  for (auto kind : {analysis::ModelKind::normal_core, analysis::ModelKind::diffusion, analysis::ModelKind::fluctuation})
    report.models.push_back(analysis::fit_model(report.thresholds, kind, a.model));
  report.dark = analysis::extrapolate_dark(report.scaling, a.model.critical_current_uA);
  return report;
}

AnalysisReport cmd_analyze(const RunConfig &config, const fs::path &responses) {
  config.validate();
  const auto rows = io::responses_from_csv(io::read_file(responses), responses.string());
  const auto report = analyze_rows(config, rows);
  const auto &out = config.output_dir;
  io::write_file_atomic(out / "curves.csv", io::curves_to_csv(report.curves));
  io::write_file_atomic(out / "thresholds.csv", io::thresholds_to_csv(report.thresholds));
  io::write_file_atomic(out / "exclusions.csv", io::exclusions_to_csv(report.exclusions));
  io::write_file_atomic(out / "scaling.csv", io::scaling_to_csv(report.scaling));
  io::write_file_atomic(out / "gamma_scan.csv", io::gamma_scan_to_csv(report.scan));
  io::write_file_atomic(out / "collapse.csv", io::collapse_to_csv(report.collapse.points));
  io::write_file_atomic(out / "model_fits.csv", io::model_fits_to_csv(report.models));
  io::write_file_atomic(out / "dark_extrapolation.csv", io::dark_to_csv(report.dark));
  write_echo(config);
  return report;
}

AnalysisReport cmd_pipeline(const RunConfig &config) {
  cmd_simulate(config);
  cmd_reconstruct(config, {config.output_dir / kSweepDir});
  return cmd_analyze(config, config.output_dir / kResponsesFile);
}

std::vector<std::string> pipeline_tables() {
  return {kResponsesFile,   "curves.csv",     "thresholds.csv",     "exclusions.csv",
          "scaling.csv",    "gamma_scan.csv", "collapse.csv",       "model_fits.csv",
          "dark_extrapolation.csv", kConfigEchoFile};
}

} // namespace nanotomo::cli
