#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nanotomo {

/// Invalid or incomplete run configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure: unreadable input, unwritable output.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number of the offending row.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string &source, std::size_t line, const std::string &what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// No optimizer start converged. The best point reached is kept for inspection.
class FitFailure : public std::runtime_error {
public:
  FitFailure(const std::string &what, std::vector<double> best_parameters, double best_objective)
      : std::runtime_error(what), best_parameters_(std::move(best_parameters)),
        best_objective_(best_objective) {}

  const std::vector<double> &best_parameters() const noexcept { return best_parameters_; }
  double best_objective() const noexcept { return best_objective_; }

private:
  std::vector<double> best_parameters_;
  double best_objective_;
};

/// A response curve never crosses the requested probability level.
class NoThreshold : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Analysis inputs cannot support the requested computation
/// (singular design, no overlapping collapse bins, too few points).
class AnalysisError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace nanotomo
