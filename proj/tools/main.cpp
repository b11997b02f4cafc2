#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include <nanotomo/config.hpp>
#include <nanotomo/errors.hpp>

#include "commands.hpp"
#include "selftest.hpp"

namespace {

enum ExitCode : int { kOk = 0, kSelfTestFailed = 1, kConfigError = 2, kFitFailure = 3, kIoError = 4 };

struct Flags {
  std::string config_path;
  std::vector<std::string> settings;
  std::uint64_t seed = 0;
  std::string out;
};

nanotomo::RunConfig build_config(const Flags &flags, const CLI::App &app) {
  auto config = flags.config_path.empty() ? nanotomo::RunConfig{} : nanotomo::load_config(flags.config_path);
  for (const auto &s : flags.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw nanotomo::ConfigError("--set expects key=value, got '" + s + "'");
    config.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (app.count("--seed"))
    config.campaign.seed = flags.seed;
  if (app.count("--out"))
    config.output_dir = flags.out;
  config.validate();
  return config;
}

void print_report(const nanotomo::cli::AnalysisReport &r) {
  std::cout << "thresholds: " << r.thresholds.size() << " (excluded " << r.exclusions.size() << ")\n"
            << "gamma = " << r.scaling.gamma_uA_per_eV << " +/- " << r.scaling.sigma_gamma() << " uA/eV\n"
            << "intercept = " << r.scaling.intercept_uA << " +/- " << r.scaling.sigma_intercept() << " uA\n"
            << "collapse score = " << r.collapse.score_dex << " dex over " << r.collapse.decades_spanned
            << " decades; gamma-scan minimum at " << r.scan.best_gamma << "\n"
            << r.dark.note << "\n";
  for (const auto &m : r.models) {
    std::cout << "model " << nanotomo::analysis::to_string(m.kind) << ":";
    for (const auto &p : m.params)
      std::cout << " " << p.name << " = " << p.value << " +/- " << p.error;
    std::cout << ", chi2/dof = " << m.chi2_per_dof << (m.flagged ? " [flagged: " + m.note + "]" : "") << "\n";
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"nanotomo: detector tomography and multiphoton threshold analysis"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config_path, "Run configuration file (key = value)");
  app.add_option("--set", flags.settings, "Override one configuration key, as key=value");
  app.add_option("--seed", flags.seed, "Campaign seed (campaign.seed)");
  app.add_option("--out", flags.out, "Output directory (output.dir)");

  auto *simulate = app.add_subcommand("simulate", "Generate a synthetic measurement campaign");
  auto *reconstruct = app.add_subcommand("reconstruct", "Fit detector responses to sweep files");
  std::vector<std::string> sweep_inputs;
  reconstruct->add_option("inputs", sweep_inputs, "Sweep files or directories (default: <out>/sweeps)");
  auto *analyze = app.add_subcommand("analyze", "Thresholds, scaling law, collapse and model fits");
  std::string responses;
  analyze->add_option("responses", responses, "Response table (default: <out>/responses.csv)");
  auto *pipeline = app.add_subcommand("pipeline", "simulate, reconstruct and analyze");
  auto *selftest = app.add_subcommand("selftest", "Check the library against independent oracles");
  for (auto *sub : {simulate, reconstruct, analyze, pipeline, selftest})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (selftest->parsed()) {
      bool all = true;
      for (const auto &r : nanotomo::cli::run_selftest()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        all = all && r.passed;
      }
      return all ? kOk : kSelfTestFailed;
    }

    const auto config = build_config(flags, app);
    if (simulate->parsed()) {
      const auto files = nanotomo::cli::cmd_simulate(config);
      std::cout << "wrote " << files.size() << " sweep files to " << (config.output_dir / nanotomo::cli::kSweepDir)
                << "\n";
    } else if (reconstruct->parsed()) {
      std::vector<std::filesystem::path> inputs(sweep_inputs.begin(), sweep_inputs.end());
      if (inputs.empty())
        inputs.push_back(config.output_dir / nanotomo::cli::kSweepDir);
      const auto rows = nanotomo::cli::cmd_reconstruct(config, inputs);
      std::cout << "reconstructed " << rows.size() << " sweeps into "
                << (config.output_dir / nanotomo::cli::kResponsesFile) << "\n";
    } else if (analyze->parsed()) {
      const std::filesystem::path path =
          responses.empty() ? config.output_dir / nanotomo::cli::kResponsesFile : std::filesystem::path(responses);
      print_report(nanotomo::cli::cmd_analyze(config, path));
    } else if (pipeline->parsed()) {
      print_report(nanotomo::cli::cmd_pipeline(config));
    }
    return kOk;
  } catch (const nanotomo::ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nanotomo::ParseError &e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kIoError;
  } catch (const nanotomo::IoError &e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const nanotomo::FitFailure &e) {
    std::cerr << "fit failure: " << e.what() << "\n";
    return kFitFailure;
  } catch (const nanotomo::AnalysisError &e) {
    std::cerr << "analysis error: " << e.what() << "\n";
    return kFitFailure;
  } catch (const std::filesystem::filesystem_error &e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFitFailure;
  }
}
