#include <nanotomo/analysis.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nanotomo/errors.hpp>
#include <nanotomo/photonics.hpp>

namespace nanotomo::analysis {

double ResponseCurve::energy_eV() const {
  return photon_number * photonics::PhotonEnergy(wavelength_nm).photon_energy_eV();
}

void ResponseCurve::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].p >= 0.0 && points[i].p <= 1.0))
      throw std::invalid_argument("response curve probability outside [0,1]");
    if (i > 0 && !(points[i].bias_current_uA > points[i - 1].bias_current_uA))
      throw std::invalid_argument("response curve currents must be strictly increasing");
  }
}

std::vector<ResponseCurve> build_response_curves(std::span<const tomography::ResponseRow> rows,
                                                 const CurveOptions &opts) {
  std::map<std::pair<double, int>, ResponseCurve> grouped;
  for (const auto &row : rows) {
    if (row.no_signal)
      continue;
    for (std::size_t k = 0; k < row.nmax && k < row.p.size(); ++k) {
      const double p = row.p[k];
      const double sigma = k < row.p_err.size() ? row.p_err[k] : 0.0;
      if (!(p > 0.0) || sigma > opts.max_relative_sigma * p)
        continue;
      auto &curve = grouped[{row.wavelength_nm, static_cast<int>(k + 1)}];
      curve.wavelength_nm = row.wavelength_nm;
      curve.photon_number = static_cast<int>(k + 1);
      curve.points.push_back({row.bias_current_uA, p, sigma});
    }
  }
  std::vector<ResponseCurve> out;
  for (auto &[key, curve] : grouped) {
    std::sort(curve.points.begin(), curve.points.end(),
              [](const CurvePoint &a, const CurvePoint &b) { return a.bias_current_uA < b.bias_current_uA; });
    out.push_back(std::move(curve));
  }
  return out;
}

ThresholdPoint threshold_current(const ResponseCurve &curve, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("threshold level must lie in (0,1)");
  curve.validate();

  // Zero probabilities have no logarithm and cannot anchor an interpolation.
  std::vector<CurvePoint> pts;
  for (const auto &pt : curve.points)
    if (pt.p > 0.0)
      pts.push_back(pt);

  ThresholdPoint out;
  out.energy_eV = curve.energy_eV();
  out.wavelength_nm = curve.wavelength_nm;
  out.photon_number = curve.photon_number;

  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto &a = pts[i];
    const auto &b = pts[i + 1];
    if ((a.p - level) * (b.p - level) > 0.0)
      continue;

    const double la = std::log(a.p), lb = std::log(b.p), target = std::log(level);
    const double span = b.bias_current_uA - a.bias_current_uA;
    if (la == lb) {
      out.current_uA = a.bias_current_uA;
      out.sigma_current_uA = kCurrentReadoutSigma_uA;
      return out;
    }
    const double t = (target - la) / (lb - la);
    out.current_uA = a.bias_current_uA + t * span;

    const double dt_da = (t - 1.0) / (lb - la);
    const double dt_db = -t / (lb - la);
    const double var_a = std::pow(span * dt_da * a.sigma_p / a.p, 2);
    const double var_b = std::pow(span * dt_db * b.sigma_p / b.p, 2);
    out.sigma_current_uA = std::sqrt(var_a + var_b + kCurrentReadoutSigma_uA * kCurrentReadoutSigma_uA);
    return out;
  }

  std::ostringstream os;
  os << "level " << level << " not bracketed for " << curve.wavelength_nm << " nm, n = " << curve.photon_number;
  throw NoThreshold(os.str());
}

double ScalingFit::sigma_gamma() const { return std::sqrt(std::max(covariance(0, 0), 0.0)); }

double ScalingFit::sigma_intercept() const { return std::sqrt(std::max(covariance(1, 1), 0.0)); }

ScalingFit fit_scaling(std::span<const ThresholdPoint> points) {
  if (points.size() < 3)
    throw AnalysisError("scaling fit needs at least 3 threshold points");
  double sw = 0.0, swx = 0.0, swy = 0.0;
  for (const auto &pt : points) {
    if (!(pt.sigma_current_uA > 0.0))
      throw AnalysisError("threshold points need positive current uncertainties");
    const double w = 1.0 / (pt.sigma_current_uA * pt.sigma_current_uA);
    sw += w;
    swx += w * pt.energy_eV;
    swy += w * pt.current_uA;
  }
  const double x_mean = swx / sw, y_mean = swy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (const auto &pt : points) {
    const double w = 1.0 / (pt.sigma_current_uA * pt.sigma_current_uA);
    sxx += w * (pt.energy_eV - x_mean) * (pt.energy_eV - x_mean);
    sxy += w * (pt.energy_eV - x_mean) * (pt.current_uA - y_mean);
  }
  double e_scale = 0.0;
  for (const auto &pt : points)
    e_scale = std::max(e_scale, std::abs(pt.energy_eV));
  if (!(sxx > 1e-24 * sw * std::max(e_scale * e_scale, 1e-300)))
    throw AnalysisError("singular scaling design: all threshold energies coincide");

  ScalingFit fit;
  fit.gamma_uA_per_eV = sxy / sxx;
  fit.intercept_uA = y_mean - fit.gamma_uA_per_eV * x_mean;
  fit.covariance(0, 0) = 1.0 / sxx;
  fit.covariance(1, 1) = 1.0 / sw + x_mean * x_mean / sxx;
  fit.covariance(0, 1) = fit.covariance(1, 0) = -x_mean / sxx;
  for (const auto &pt : points)
    fit.chi2 += std::pow((pt.current_uA - fit.current_at(pt.energy_eV)) / pt.sigma_current_uA, 2);
  fit.dof = points.size() - 2;
  return fit;
}

CollapseResult collapse(std::span<const ResponseCurve> curves, double gamma, const CollapseOptions &opts) {
  if (!std::isfinite(gamma))
    throw std::invalid_argument("collapse needs a finite gamma");
  if (!(opts.bin_width_uA > 0.0))
    throw std::invalid_argument("collapse bin width must be positive");

  CollapseResult out;
  struct Entry {
    double log_p;
    double p;
    std::size_t series;
  };
  std::map<long long, std::vector<Entry>> bins;
  for (std::size_t s = 0; s < curves.size(); ++s) {
    const auto &curve = curves[s];
    const double energy = curve.energy_eV();
    for (const auto &pt : curve.points) {
      if (!(pt.p > 0.0) || pt.p < opts.p_min || pt.p > opts.p_max)
        continue;
      const double u = pt.bias_current_uA - gamma * energy;
      out.points.push_back({u, pt.p, pt.sigma_p, curve.wavelength_nm, curve.photon_number});
      const auto bin = static_cast<long long>(std::floor(u / opts.bin_width_uA));
      bins[bin].push_back({std::log10(pt.p), pt.p, s});
    }
  }

  double sum_var = 0.0;
  for (const auto &[bin, entries] : bins) {
    std::set<std::size_t> series;
    for (const auto &e : entries)
      series.insert(e.series);
    if (series.size() < 2)
      continue;
    double mean = 0.0;
    for (const auto &e : entries)
      mean += e.log_p;
    mean /= static_cast<double>(entries.size());
    double var = 0.0;
    for (const auto &e : entries)
      var += (e.log_p - mean) * (e.log_p - mean);
    sum_var += var / static_cast<double>(entries.size());
    ++out.bins_used;
  }
  if (out.bins_used == 0)
    throw AnalysisError("collapse score undefined: no bin holds two or more series");
  out.score_dex = std::sqrt(sum_var / static_cast<double>(out.bins_used));

  // Superposition span: points whose u lies inside the u-range of another series.
  std::map<std::pair<double, int>, std::pair<double, double>> ranges;
  for (const auto &pt : out.points) {
    auto [it, fresh] = ranges.try_emplace({pt.wavelength_nm, pt.photon_number}, pt.u_uA, pt.u_uA);
    it->second.first = std::min(it->second.first, pt.u_uA);
    it->second.second = std::max(it->second.second, pt.u_uA);
  }
  double p_lo = INFINITY, p_hi = 0.0;
  for (const auto &pt : out.points) {
    for (const auto &[series, range] : ranges) {
      if (series == std::pair(pt.wavelength_nm, pt.photon_number))
        continue;
      if (pt.u_uA >= range.first && pt.u_uA <= range.second) {
        p_lo = std::min(p_lo, pt.p);
        p_hi = std::max(p_hi, pt.p);
        break;
      }
    }
  }
  out.decades_spanned = p_hi > 0.0 ? std::log10(p_hi / p_lo) : 0.0;
  return out;
}

GammaScan scan_collapse(std::span<const ResponseCurve> curves, double lo, double hi, double step,
                        const CollapseOptions &opts) {
  if (!(step > 0.0) || hi < lo)
    throw std::invalid_argument("invalid gamma grid");
  GammaScan scan;
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= count; ++i) {
    const double g = lo + static_cast<double>(i) * step;
    double score = std::numeric_limits<double>::quiet_NaN();
    try {
      score = collapse(curves, g, opts).score_dex;
    } catch (const AnalysisError &) {
    }
    scan.gammas.push_back(g);
    scan.scores.push_back(score);
    if (std::isfinite(score) && !(score >= scan.best_score)) {
      scan.best_score = score;
      scan.best_gamma = g;
    }
  }
  return scan;
}

DarkExtrapolation extrapolate_dark(const ScalingFit &fit, double critical_current_uA) {
  DarkExtrapolation d;
  d.current_uA = fit.intercept_uA;
  d.sigma_uA = fit.sigma_intercept();
  d.critical_current_uA = critical_current_uA;
  d.ratio_to_critical = fit.intercept_uA / critical_current_uA;
  std::ostringstream os;
  os << "threshold line reaches E = 0 at " << d.current_uA << " +/- " << d.sigma_uA << " uA, "
     << d.ratio_to_critical << " of the critical current " << critical_current_uA
     << " uA; compare with where dark counts actually appear";
  d.note = os.str();
  return d;
}

} // namespace nanotomo::analysis
