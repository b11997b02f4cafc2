#pragma once
#include <Eigen/Dense>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nanotomo/tomography.hpp>

namespace nanotomo::analysis {

/// Current-readout accuracy added in quadrature to every threshold [uA].
inline constexpr double kCurrentReadoutSigma_uA = 0.05;

struct CurvePoint {
  double bias_current_uA;
  double p;
  double sigma_p;
};

/// p_n versus bias current for one (wavelength, photon number) series.
struct ResponseCurve {
  double wavelength_nm = 0.0;
  int photon_number = 1;
  std::vector<CurvePoint> points;

  /// Total excitation energy n h nu [eV].
  double energy_eV() const;

  /// Throws std::invalid_argument unless currents strictly increase and
  /// every p lies in [0,1].
  void validate() const;
};

struct CurveOptions {
  /// Points with sigma_p / p above this are treated as unresolved and dropped.
  double max_relative_sigma = std::numeric_limits<double>::infinity();
};

/// Regroups per-current reconstructions into per-(wavelength, n) curves.
/// Rows flagged no-signal and orders above a row's nmax contribute nothing.
std::vector<ResponseCurve> build_response_curves(std::span<const tomography::ResponseRow> rows,
                                                 const CurveOptions &opts = {});

struct ThresholdPoint {
  double energy_eV = 0.0;
  double current_uA = 0.0;
  double sigma_current_uA = 0.0;
  double wavelength_nm = 0.0;
  int photon_number = 0;
};

/// Bias current where the curve crosses `level`, interpolating log10 p
/// linearly in current between the first bracketing pair. The uncertainty
/// propagates sigma_p of both endpoints and adds the readout floor in
/// quadrature. Throws NoThreshold when the level is never bracketed.
ThresholdPoint threshold_current(const ResponseCurve &curve, double level = 0.1);

/// Weighted straight line I = intercept + gamma E.
struct ScalingFit {
  double gamma_uA_per_eV = 0.0;
  double intercept_uA = 0.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero(); ///< order (gamma, intercept)
  double chi2 = 0.0;
  std::size_t dof = 0;

  double sigma_gamma() const;
  double sigma_intercept() const;
  double current_at(double energy_eV) const { return intercept_uA + gamma_uA_per_eV * energy_eV; }
};

/// Weighted least squares of current on energy with weights 1/sigma^2.
/// Throws AnalysisError for fewer than 3 points or a singular design.
ScalingFit fit_scaling(std::span<const ThresholdPoint> points);

struct CollapsedPoint {
  double u_uA;
  double p;
  double sigma_p;
  double wavelength_nm;
  int photon_number;
};

struct CollapseOptions {
  double bin_width_uA = 0.2;
  double p_min = 0.0; ///< points outside [p_min, p_max] are ignored
  double p_max = 1.0;
};

struct CollapseResult {
  std::vector<CollapsedPoint> points;
  double score_dex = 0.0;
  std::size_t bins_used = 0;
  /// log10(max p / min p) over points whose u falls inside the u-range of
  /// at least one other series, i.e. the span over which curves superimpose.
  double decades_spanned = 0.0;
};

/// Maps every point to u = I_b - gamma E and scores the overlap: the RMS over
/// u-bins of the spread of log10 p, counting only bins shared by at least two
/// (wavelength, n) series. Throws AnalysisError when no bin qualifies.
CollapseResult collapse(std::span<const ResponseCurve> curves, double gamma_uA_per_eV,
                        const CollapseOptions &opts = {});

struct GammaScan {
  std::vector<double> gammas;
  std::vector<double> scores; ///< NaN where no bin overlaps
  double best_gamma = std::numeric_limits<double>::quiet_NaN();
  double best_score = std::numeric_limits<double>::quiet_NaN();
};

GammaScan scan_collapse(std::span<const ResponseCurve> curves, double gamma_lo, double gamma_hi, double step,
                        const CollapseOptions &opts = {});

enum class ModelKind { normal_core, diffusion, fluctuation };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string &name);

/// Constants held fixed in the microscopic-model fits. The fluctuation
/// model has no defaults for its gap and linearization constants.
struct ModelConstants {
  double wire_width_nm = 150.0;
  double critical_current_uA = 29.0;
  std::optional<double> gap_eV;
  std::optional<double> i0_uA;
  std::optional<double> beta;
};

struct ModelParameter {
  std::string name;
  double value = 0.0;
  double error = 0.0;
};

struct ModelFit {
  ModelKind kind = ModelKind::normal_core;
  std::vector<ModelParameter> params;
  double chi2 = 0.0;
  std::size_t dof = 0;
  double chi2_per_dof = 0.0;
  bool flagged = false;
  std::string note;
};

/// Threshold current predicted by a model at total energy E.
/// Parameters: normal-core (C, I_scale), diffusion (E_0, I_scale),
/// fluctuation (A, alpha).
double model_current(ModelKind kind, std::span<const double> params, const ModelConstants &constants,
                     double energy_eV);

/// Least-squares fit of a microscopic model to threshold points, weighted by
/// sigma_I. Non-convergence or an unphysical optimum sets `flagged`.
ModelFit fit_model(std::span<const ThresholdPoint> points, ModelKind kind, const ModelConstants &constants);

struct DarkExtrapolation {
  double current_uA = 0.0;
  double sigma_uA = 0.0;
  double critical_current_uA = 0.0;
  double ratio_to_critical = 0.0;
  std::string note;
};

/// Threshold line evaluated at E = 0 and compared with the critical current.
DarkExtrapolation extrapolate_dark(const ScalingFit &fit, double critical_current_uA = 29.0);

} // namespace nanotomo::analysis
