#include <nanotomo/analysis.hpp>

#include <cmath>
#include <stdexcept>

#include <nanotomo/errors.hpp>
#include <nanotomo/least_squares.hpp>

namespace nanotomo::analysis {

namespace {

struct Line {
  double intercept;
  double slope;
};

// Weighted straight-line fit y = intercept + slope x.
Line weighted_line(std::span<const double> x, std::span<const double> y, std::span<const double> sigma) {
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 1.0 / (sigma[i] * sigma[i]);
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 1.0 / (sigma[i] * sigma[i]);
    sxx += w * (x[i] - xm) * (x[i] - xm);
    sxy += w * (x[i] - xm) * (y[i] - ym);
  }
  const double slope = sxx > 0 ? sxy / sxx : 0.0;
  return {ym - slope * xm, slope};
}

struct FluctuationConstants {
  double gap, i0, beta;
};

FluctuationConstants require_fluctuation(const ModelConstants &c) {
  if (!c.gap_eV || !c.i0_uA || !c.beta)
    throw ConfigError("fluctuation model needs explicit gap (Delta), I_0 and beta constants");
  if (*c.beta == 0.0)
    throw ConfigError("fluctuation model beta must be non-zero");
  return {*c.gap_eV, *c.i0_uA, *c.beta};
}

std::vector<std::string> parameter_names(ModelKind kind) {
  switch (kind) {
  case ModelKind::normal_core:
    return {"C_per_sqrt_eV_nm", "I_scale_uA"};
  case ModelKind::diffusion:
    return {"E0_eV", "I_scale_uA"};
  case ModelKind::fluctuation:
    return {"A_uA_eV", "alpha_sqrt_eV"};
  }
  return {};
}

} // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
  case ModelKind::normal_core:
    return "normal-core";
  case ModelKind::diffusion:
    return "diffusion";
  case ModelKind::fluctuation:
    return "fluctuation";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string &name) {
  if (name == "normal-core")
    return ModelKind::normal_core;
  if (name == "diffusion")
    return ModelKind::diffusion;
  if (name == "fluctuation")
    return ModelKind::fluctuation;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

double model_current(ModelKind kind, std::span<const double> params, const ModelConstants &constants,
                     double energy_eV) {
  if (params.size() != 2)
    throw std::invalid_argument("models take exactly two parameters");
  switch (kind) {
  case ModelKind::normal_core:
    // E = (w / C)^2 (1 - I / I_scale)^2 solved for I.
    return params[1] * (1.0 - params[0] / constants.wire_width_nm * std::sqrt(energy_eV));
  case ModelKind::diffusion:
    return params[1] * (1.0 - energy_eV / params[0]);
  case ModelKind::fluctuation: {
    // A = (Delta - alpha sqrt(E)) (I_0 - beta I) solved for I.
    const auto c = require_fluctuation(constants);
    return (c.i0 - params[0] / (c.gap - params[1] * std::sqrt(energy_eV))) / c.beta;
  }
  }
  throw std::invalid_argument("unknown model kind");
}

ModelFit fit_model(std::span<const ThresholdPoint> points, ModelKind kind, const ModelConstants &constants) {
  constexpr std::size_t kFree = 2;
  if (points.size() < kFree + 1)
    throw AnalysisError(to_string(kind) + " fit needs at least " + std::to_string(kFree + 1) + " points");
  if (!(constants.wire_width_nm > 0.0) || !(constants.critical_current_uA > 0.0))
    throw ConfigError("wire width and critical current must be positive");

  const std::size_t n = points.size();
  std::vector<double> energy(n), root_e(n), current(n), sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(points[i].sigma_current_uA > 0.0) || !(points[i].energy_eV > 0.0))
      throw AnalysisError("model fit needs positive energies and current uncertainties");
    energy[i] = points[i].energy_eV;
    root_e[i] = std::sqrt(energy[i]);
    current[i] = points[i].current_uA;
    sigma[i] = points[i].sigma_current_uA;
  }

  ModelFit fit;
  fit.kind = kind;
  fit.dof = n - kFree;

  // Starting values come from the linear forms of each model.
  Eigen::VectorXd start(2);
  ResidualFn residuals;
  const double w = constants.wire_width_nm;
  switch (kind) {
  case ModelKind::normal_core: {
    const Line line = weighted_line(root_e, current, sigma);
    start << -line.slope * w / line.intercept, line.intercept;
    if (line.intercept == 0.0)
      start << 47.0, constants.critical_current_uA;
    residuals = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
      r.resize(static_cast<Eigen::Index>(n));
      J.resize(static_cast<Eigen::Index>(n), 2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double shape = 1.0 - x[0] / w * root_e[i];
        r[row] = (x[1] * shape - current[i]) / sigma[i];
        J(row, 0) = -x[1] * root_e[i] / w / sigma[i];
        J(row, 1) = shape / sigma[i];
      }
      return r.allFinite();
    };
    break;
  }
  case ModelKind::diffusion: {
    const Line line = weighted_line(energy, current, sigma);
    start << (line.slope != 0.0 ? -line.intercept / line.slope : 1.0), line.intercept;
    residuals = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
      if (x[0] == 0.0)
        return false;
      r.resize(static_cast<Eigen::Index>(n));
      J.resize(static_cast<Eigen::Index>(n), 2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double shape = 1.0 - energy[i] / x[0];
        r[row] = (x[1] * shape - current[i]) / sigma[i];
        J(row, 0) = x[1] * energy[i] / (x[0] * x[0]) / sigma[i];
        J(row, 1) = shape / sigma[i];
      }
      return r.allFinite();
    };
    break;
  }
  case ModelKind::fluctuation: {
    const auto c = require_fluctuation(constants);
    // 1 / (I_0 - beta I) = Delta / A - (alpha / A) sqrt(E) is linear in sqrt(E).
    std::vector<double> inv(n), inv_sigma(n);
    bool usable = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = c.i0 - c.beta * current[i];
      if (!(y > 0.0))
        usable = false;
      inv[i] = 1.0 / y;
      inv_sigma[i] = std::abs(c.beta) * sigma[i] / (y * y);
    }
    if (!usable) {
      fit.flagged = true;
      fit.note = "I_0 - beta I is not positive at every point; model cannot reach the data";
      for (const auto &name : parameter_names(kind))
        fit.params.push_back({name, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()});
      fit.chi2 = fit.chi2_per_dof = std::numeric_limits<double>::quiet_NaN();
      return fit;
    }
    const Line line = weighted_line(root_e, inv, inv_sigma);
    const double a0 = c.gap / line.intercept;
    start << a0, -line.slope * a0;
    residuals = [&, c](const Eigen::VectorXd &x, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
      r.resize(static_cast<Eigen::Index>(n));
      J.resize(static_cast<Eigen::Index>(n), 2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double denom = c.gap - x[1] * root_e[i];
        if (!(denom > 0.0))
          return false;
        r[row] = ((c.i0 - x[0] / denom) / c.beta - current[i]) / sigma[i];
        J(row, 0) = -1.0 / (c.beta * denom) / sigma[i];
        J(row, 1) = -x[0] * root_e[i] / (c.beta * denom * denom) / sigma[i];
      }
      return r.allFinite();
    };
    break;
  }
  }

  const auto ls = levenberg_marquardt(residuals, start);
  const auto names = parameter_names(kind);
  for (Eigen::Index j = 0; j < 2; ++j)
    fit.params.push_back({names[static_cast<std::size_t>(j)], ls.params[j],
                          std::sqrt(std::max(ls.covariance(j, j), 0.0))});
  fit.chi2 = ls.chi2;
  fit.chi2_per_dof = fit.dof ? ls.chi2 / static_cast<double>(fit.dof) : std::numeric_limits<double>::quiet_NaN();

  if (!ls.converged || !ls.params.allFinite() || !std::isfinite(ls.chi2)) {
    fit.flagged = true;
    fit.note = "fit diverged";
  } else if (ls.params[0] <= 0.0 || ls.params[1] <= 0.0) {
    fit.flagged = true;
    fit.note = "parameter at physical bound (must be positive)";
  } else {
    fit.note = "ok";
  }
  return fit;
}

} // namespace nanotomo::analysis
