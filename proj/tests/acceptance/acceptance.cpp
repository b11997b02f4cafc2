#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nanotomo/analysis.hpp>
#include <nanotomo/config.hpp>
#include <nanotomo/io.hpp>
#include <nanotomo/photonics.hpp>
#include <nanotomo/simulator.hpp>
#include <nanotomo/tomography.hpp>

#include "commands.hpp"
#include "oracles.hpp"

using namespace nanotomo;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

RunConfig default_config() { return load_config(NANOTOMO_DEFAULT_CONFIG); }

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("nanotomo_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

struct RandomCase {
  photonics::DetectorResponse response;
  double mean_photon_number;
};

std::vector<RandomCase> random_cases() {
  std::mt19937_64 rng(20240917);
  std::uniform_real_distribution<double> log_n(-2.0, 4.0);
  std::vector<RandomCase> cases;
  for (int i = 0; i < 1000; ++i) {
    auto r = oracle::random_response(rng);
    cases.push_back({std::move(r), std::pow(10.0, log_n(rng))});
  }
  return cases;
}

Outcome forward_model() {
  const auto cases = random_cases();
  std::vector<double> values(cases.size());
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < cases.size(); ++i)
    values[i] = photonics::click_probability(cases[i].response, cases[i].mean_photon_number);
  const double runtime = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto &c = cases[i];
    const double mu = c.response.eta * c.mean_photon_number;
    worst = std::max(worst, std::abs(values[i] - oracle::click_sum(c.response, c.mean_photon_number,
                                                                   oracle::long_sum_terms(mu))));
  }
  return {worst <= 1e-12 && runtime < 5.0,
          "1000 cases, max |diff| = " + fmt(worst, 3) + ", runtime " + fmt(runtime, 3) + " s"};
}

Outcome decomposition_identity() {
  double worst = 0.0;
  for (const auto &c : random_cases()) {
    const auto d = photonics::contribution_decomposition(c.response, c.mean_photon_number);
    worst = std::max(worst, std::abs(d.total() - photonics::click_probability(c.response, c.mean_photon_number)));
  }
  return {worst <= 1e-12, "1000 cases, max |sum C_n + C_tail - R| = " + fmt(worst, 3)};
}

/// 50 seeded single-wavelength campaigns with default settings. A p_n counts
/// as resolvable in a trial when the selected order includes n and the true
/// p_n lies in [1e-4, 0.3]. Each resolvable (current, n) parameter must be
/// recovered within 3 bootstrap sigma in at least 90% of the trials where it
/// was resolvable.
Outcome tomography_round_trip() {
  constexpr int kTrials = 50;
  const auto t0 = Clock::now();
  auto config = default_config();
  config.campaign.wavelengths_nm = {1500.0};
  const double energy = photonics::PhotonEnergy(1500.0).photon_energy_eV();

  std::map<std::pair<double, int>, std::pair<int, int>> tally; // (I, n) -> (covered, resolvable)
  int trials_all_covered = 0;
  for (int trial = 1; trial <= kTrials; ++trial) {
    config.campaign.seed = static_cast<std::uint64_t>(trial);
    auto sweeps = sim::simulate_campaign(config.detector, config.campaign);
    const auto results = cli::reconstruct_sweeps(config, sweeps);
    bool all = true;
    for (std::size_t i = 0; i < sweeps.size(); ++i) {
      const auto &r = results[i];
      if (r.no_signal)
        continue;
      const double current = sweeps[i].bias_current_uA();
      const auto truth = sim::ground_truth_response(config.detector, current, energy);
      for (std::size_t k = 0; k < r.nmax; ++k) {
        const double t = truth.p[k];
        if (t < 1e-4 || t > 0.3)
          continue;
        const bool ok = std::abs(r.response.p[k] - t) <= 3.0 * r.standard_errors[k + 1];
        auto &cell = tally[{current, static_cast<int>(k + 1)}];
        cell.first += ok;
        cell.second += 1;
        all = all && ok;
      }
    }
    trials_all_covered += all;
  }
  const double runtime = seconds_since(t0);

  double worst = 1.0;
  std::string worst_name;
  int covered = 0, total = 0;
  for (const auto &[key, cell] : tally) {
    covered += cell.first;
    total += cell.second;
    const double rate = static_cast<double>(cell.first) / cell.second;
    if (rate < worst) {
      worst = rate;
      worst_name = "p" + std::to_string(key.second) + " at " + fmt(key.first) + " uA (" +
                   std::to_string(cell.first) + "/" + std::to_string(cell.second) + ")";
    }
  }
  const bool ok = !tally.empty() && worst >= 0.9 && runtime < 300.0;
  return {ok, std::to_string(tally.size()) + " resolvable parameters, " + std::to_string(covered) + "/" +
                  std::to_string(total) + " within 3 sigma overall, lowest coverage " + fmt(100 * worst, 3) + "% (" +
                  worst_name + "), " + std::to_string(trials_all_covered) + "/" + std::to_string(kTrials) +
                  " trials fully covered, runtime " + fmt(runtime, 3) + " s"};
}

struct PipelineRun {
  fs::path dir;
  cli::AnalysisReport report;
  RunConfig config;
};

PipelineRun run_pipeline(const std::string &name) {
  PipelineRun run;
  run.config = default_config();
  run.dir = scratch(name);
  run.config.output_dir = run.dir;
  run.report = cli::cmd_pipeline(run.config);
  return run;
}

Outcome scaling_closure(const PipelineRun &run) {
  const auto &s = run.report.scaling;
  const double target_gamma = run.config.detector.gamma_uA_per_eV;
  const double target_intercept = run.config.detector.intercept_uA(run.config.analysis.threshold_level);
  const bool ok = std::abs(s.gamma_uA_per_eV - target_gamma) <= 0.1 &&
                  std::abs(s.intercept_uA - target_intercept) <= 0.3;
  return {ok, "gamma = " + fmt(s.gamma_uA_per_eV) + " +/- " + fmt(s.sigma_gamma(), 2) + " uA/eV (target " +
                  fmt(target_gamma) + "), intercept = " + fmt(s.intercept_uA) + " uA (analytic " +
                  fmt(target_intercept) + "), " + std::to_string(run.report.thresholds.size()) + " thresholds"};
}

Outcome universal_collapse(const PipelineRun &run) {
  const auto &c = run.report.collapse;
  const auto &scan = run.report.scan;
  const double target = run.config.detector.gamma_uA_per_eV;
  const bool ok = c.score_dex <= 0.15 && c.decades_spanned >= 3.0 &&
                  std::abs(scan.best_gamma - target) <= run.config.analysis.gamma_step + 1e-9;
  return {ok, "score " + fmt(c.score_dex, 3) + " dex over " + fmt(c.decades_spanned, 3) + " decades (" +
                  std::to_string(c.bins_used) + " shared bins), gamma-grid argmin " + fmt(scan.best_gamma) +
                  " (generating " + fmt(target) + ", step " + fmt(run.config.analysis.gamma_step) + ")"};
}

Outcome model_recovery() {
  const std::vector<double> energies{0.8266, 0.9537, 1.2398, 1.6532, 1.9075, 2.4797};
  auto constants = default_config().analysis.model;
  const std::vector<std::pair<analysis::ModelKind, std::vector<double>>> cases{
      {analysis::ModelKind::normal_core, {47.0, constants.critical_current_uA}},
      {analysis::ModelKind::diffusion, {19.0 / 2.9, 19.0}},
      {analysis::ModelKind::fluctuation, {0.03, 0.001}}};
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 0.1);
  bool ok = true;
  std::string detail;
  for (const auto &[kind, truth] : cases) {
    std::vector<analysis::ThresholdPoint> pts;
    for (double e : energies)
      pts.push_back({e, analysis::model_current(kind, truth, constants, e) + noise(rng), 0.1, 0.0, 1});
    const auto fit = analysis::fit_model(pts, kind, constants);
    bool this_ok = !fit.flagged;
    detail += (detail.empty() ? "" : "; ") + analysis::to_string(kind) + ":";
    for (std::size_t j = 0; j < 2; ++j) {
      const double z = (fit.params[j].value - truth[j]) / fit.params[j].error;
      this_ok = this_ok && std::abs(z) <= 3.0;
      detail += " " + fit.params[j].name + " = " + fmt(fit.params[j].value) + " +/- " + fmt(fit.params[j].error, 2) +
                " (z " + fmt(z, 2) + ")";
    }
    ok = ok && this_ok;
  }
  return {ok, detail};
}

Outcome equal_energy() {
  auto config = default_config();
  config.campaign.wavelengths_nm = {750.0, 1500.0};
  config.output_dir = scratch("equal_energy");
  auto sweeps = sim::simulate_campaign(config.detector, config.campaign);
  const auto results = cli::reconstruct_sweeps(config, sweeps);
  std::vector<tomography::ResponseRow> rows;
  for (std::size_t i = 0; i < sweeps.size(); ++i)
    rows.push_back(tomography::make_row(sweeps[i].wavelength_nm(), sweeps[i].bias_current_uA(), results[i]));
  const auto report = cli::analyze_rows(config, rows);
  const analysis::ThresholdPoint *one = nullptr, *two = nullptr;
  for (const auto &t : report.thresholds) {
    if (t.wavelength_nm == 750.0 && t.photon_number == 1)
      one = &t;
    if (t.wavelength_nm == 1500.0 && t.photon_number == 2)
      two = &t;
  }
  if (!one || !two)
    return {false, "a required threshold was not bracketed"};
  const double diff = one->current_uA - two->current_uA;
  const double sigma = std::hypot(one->sigma_current_uA, two->sigma_current_uA);
  return {std::abs(diff) <= sigma, "750 nm n=1 at " + fmt(one->current_uA) + " uA (" + fmt(one->energy_eV) +
                                       " eV), 1500 nm n=2 at " + fmt(two->current_uA) + " uA (" +
                                       fmt(two->energy_eV) + " eV), difference " + fmt(diff, 3) +
                                       " uA, combined sigma " + fmt(sigma, 3) + " uA"};
}

std::vector<fs::path> output_files(const fs::path &dir) {
  std::vector<fs::path> files;
  for (const auto &entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      files.push_back(fs::relative(entry.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism(const PipelineRun &first) {
  const auto second = run_pipeline("determinism");
  const auto a = output_files(first.dir), b = output_files(second.dir);
  if (a != b)
    return {false, "the two runs wrote different file sets"};
  for (const auto &name : cli::pipeline_tables())
    if (!fs::exists(first.dir / name))
      return {false, "missing table " + name};
  for (const auto &f : a) {
    const auto rel = f.string();
    if (rel == cli::kConfigEchoFile)
      continue;
    if (io::read_file(first.dir / f) != io::read_file(second.dir / f))
      return {false, rel + " differs between runs"};
  }
  return {true, std::to_string(a.size() - 1) + " output files byte-identical across two runs"};
}

} // namespace

int main() {
  bool all = true;
  const auto report = [&](int number, const std::string &name, const Outcome &o) {
    std::cout << (o.passed ? "PASS" : "FAIL") << " " << number << " " << name << ": " << o.detail << std::endl;
    all = all && o.passed;
  };
  const auto guarded = [](auto &&fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception &e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "forward-model oracle", guarded(forward_model));
  report(2, "decomposition identity", guarded(decomposition_identity));
  report(3, "tomography round trip", guarded(tomography_round_trip));

  std::optional<PipelineRun> pipeline;
  std::string pipeline_error;
  try {
    pipeline = run_pipeline("pipeline");
  } catch (const std::exception &e) {
    pipeline_error = std::string("pipeline failed: ") + e.what();
  }
  const auto with_pipeline = [&](Outcome (*fn)(const PipelineRun &)) {
    return pipeline ? guarded([&] { return fn(*pipeline); }) : Outcome{false, pipeline_error};
  };
  report(4, "scaling-law closure", with_pipeline(scaling_closure));
  report(5, "universal collapse", with_pipeline(universal_collapse));
  report(6, "model generation-recovery", guarded(model_recovery));
  report(7, "equal-energy invariance", guarded(equal_energy));
  report(8, "determinism", with_pipeline(determinism));
  return all ? 0 : 1;
}
