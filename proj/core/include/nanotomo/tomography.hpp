#pragma once
#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nanotomo/photonics.hpp>
#include <nanotomo/sweep.hpp>

namespace nanotomo::tomography {

/// One binomial observation: `clicks` out of `trials` pulses at mean photon
/// number N. Counts are real-valued so expected-value (noiseless) data can be
/// fitted through the same likelihood.
struct Observation {
  double mean_photon_number;
  double trials;
  double clicks;
};

std::vector<Observation> observations(const SweepData &data);

struct FitOptions {
  std::size_t nmax = 2;
  /// Force p_1 <= p_2 <= ... <= p_nmax <= p_tail through a cumulative
  /// increment parameterization.
  bool monotone = false;
  /// Hold eta at this value (for example a shared-eta estimate) and fit
  /// only the p set.
  std::optional<double> fixed_eta;
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  double relative_tolerance = 1e-12;
};

/// Reconstructed response of one power sweep.
///
/// Internally the fit works on transformed parameters
/// x = (log eta, logit p_1, ..., logit p_nmax, logit p_tail); `covariance`
/// refers to those. `standard_errors` are on the natural scale in the order
/// (eta, p_1, ..., p_nmax, p_tail).
struct ReconstructionResult {
  photonics::DetectorResponse response;
  std::size_t nmax = 0;
  bool no_signal = false;
  bool monotone = false;
  bool eta_fixed = false;

  Eigen::VectorXd parameters;
  Eigen::MatrixXd covariance;
  std::vector<double> standard_errors;
  bool bootstrap_errors = false;

  double deviance = 0.0;
  std::size_t observations = 0;
  std::size_t dof = 0;
  double deviance_per_dof = 0.0;
  double log_likelihood = 0.0;

  int iterations = 0;
  int start_index = -1;

  /// Free parameters: the p set plus eta unless eta was held fixed.
  std::size_t parameter_count() const noexcept { return nmax + (eta_fixed ? 1 : 2); }
};

/// Maximum-likelihood reconstruction of (eta, p_n, p_tail) from click counts.
/// Runs five deterministic starts and keeps the best optimum. All-zero data
/// yields a `no_signal` result rather than an exception; if no start
/// converges a FitFailure carrying the best point is thrown.
ReconstructionResult fit_response(const SweepData &data, const FitOptions &opts = {});
ReconstructionResult fit_response(std::span<const Observation> obs, const FitOptions &opts = {});

/// Binomial deviance of `response` against the observations.
double deviance(std::span<const Observation> obs, const photonics::DetectorResponse &response);

struct OrderSelection {
  std::size_t nmax = 1;
  bool no_signal = false;
  std::vector<double> aic; ///< per candidate 1..max; NaN where the fit failed
  ReconstructionResult result;
};

/// Smallest order whose AIC = 2k + deviance lies within 2 of the best
/// candidate in 1..max_order.
OrderSelection select_model_order(const SweepData &data, std::size_t max_order = 6,
                                  const FitOptions &base = {});
OrderSelection select_model_order(std::span<const Observation> obs, std::size_t max_order = 6,
                                  const FitOptions &base = {});

struct BootstrapOptions {
  int resamples = 200;
  std::uint64_t seed = 0;
  double max_failure_fraction = 0.2;
  std::size_t workers = 0; ///< 0 selects hardware concurrency
  /// For results fitted with a fixed eta: each resample refits with eta
  /// redrawn from a normal of this width, carrying the calibration
  /// uncertainty into the p errors.
  double eta_sigma = 0.0;
};

/// Parametric bootstrap: clicks ~ Binomial(pulses, R_fit(N)), refit, report
/// the standard deviation of (eta, p_1..p_nmax, p_tail) across resamples.
/// Resample b draws from a stream keyed by (seed, b), so the estimate is
/// bit-identical for a fixed seed regardless of threading.
std::vector<double> bootstrap_errors(const SweepData &data, const ReconstructionResult &result,
                                     const BootstrapOptions &opts = {});
std::vector<double> bootstrap_errors(std::span<const Observation> obs,
                                     const ReconstructionResult &result,
                                     const BootstrapOptions &opts = {});

/// Flat summary of one reconstruction: one row of the response table.
struct ResponseRow {
  double wavelength_nm = 0.0;
  double bias_current_uA = 0.0;
  std::size_t nmax = 0;
  bool no_signal = false;
  double eta = 0.0, eta_err = 0.0;
  std::vector<double> p, p_err;
  double p_tail = 0.0, p_tail_err = 0.0;
  double deviance = 0.0, deviance_per_dof = 0.0;

  friend bool operator==(const ResponseRow &, const ResponseRow &) = default;
};

ResponseRow make_row(double wavelength_nm, double bias_current_uA, const ReconstructionResult &result);

/// Joint fit of several sweeps taken at one wavelength with a single eta.
/// `nmax[i]` is the order used for sweep i. Each returned result carries the
/// shared eta and its own p set; its covariance is the (eta, own-p) block.
std::vector<ReconstructionResult> fit_shared_eta(std::span<const SweepData> sweeps,
                                                 std::span<const std::size_t> nmax,
                                                 const FitOptions &opts = {});

/// Parametric bootstrap of a shared-eta fit: every sweep is resampled from
/// its fitted response and the joint fit repeated from the fitted point.
/// Returns the standard deviation of the shared eta across resamples.
/// `fits` is the output of fit_shared_eta for the same sweeps.
double bootstrap_shared_eta(std::span<const SweepData> sweeps, std::span<const ReconstructionResult> fits,
                            const BootstrapOptions &opts = {});

} // namespace nanotomo::tomography
