#include <nanotomo/tomography.hpp>

#include <algorithm>
#include <array>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <nanotomo/errors.hpp>
#include <nanotomo/parallel.hpp>
#include <nanotomo/random.hpp>

namespace nanotomo::tomography {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLogitBound = 30.0;
constexpr double kLogEtaMin = -60.0;
constexpr double kLogEtaMax = 0.0;
constexpr double kProbabilityFloor = 1e-300;
constexpr double kMaxStep = 4.0;
constexpr std::size_t kMaxOrder = 64;

double sigmoid(double t) {
  if (t >= 0.0)
    return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double logit(double p) {
  const double lo = sigmoid(-kLogitBound);
  p = std::clamp(p, lo, 1.0 - lo);
  return std::log(p) - std::log1p(-p);
}

// k ln(k / (m r)), with the 0 ln 0 = 0 convention.
double xlog_ratio(double k, double m, double r) {
  return k > 0.0 ? k * (std::log(k / m) - std::log(r)) : 0.0;
}

/// Detection probabilities of one sweep as a function of its logits. Index
/// nmax is the tail. `jacobian(k, j)` = d p_k / d theta_j.
struct ProbabilityMap {
  std::vector<double> p, q, s;
  MatrixXd jacobian;
  bool monotone = false;

  void assign(const double *theta, std::size_t m, bool monotone) {
    p.assign(m, 0.0);
    q.assign(m, 0.0);
    jacobian.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    this->monotone = monotone;
    s.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k)
      s[k] = sigmoid(theta[k]);
    if (!monotone) {
      for (std::size_t k = 0; k < m; ++k) {
        p[k] = sigmoid(theta[k]);
        q[k] = sigmoid(-theta[k]);
        jacobian(k, k) = p[k] * q[k];
      }
      return;
    }
    // Cumulative increments: p_k = p_{k-1} + q_{k-1} s(theta_k), q_k = prod s(-theta_i).
    double p_prev = 0.0, q_prev = 1.0;
    for (std::size_t k = 0; k < m; ++k) {
      p[k] = p_prev + q_prev * sigmoid(theta[k]);
      q[k] = q_prev * sigmoid(-theta[k]);
      for (std::size_t j = 0; j <= k; ++j)
        jacobian(k, j) = q[k] * sigmoid(theta[j]);
      p_prev = p[k];
      q_prev = q[k];
    }
  }

  /// sum_k w_k d^2 p_k / d theta_i d theta_j.
  MatrixXd weighted_second_derivative(const VectorXd &w) const {
    const auto m = static_cast<Eigen::Index>(p.size());
    MatrixXd out = MatrixXd::Zero(m, m);
    if (!monotone) {
      for (Eigen::Index k = 0; k < m; ++k)
        out(k, k) = w[k] * p[k] * q[k] * (q[k] - p[k]);
      return out;
    }
    // d^2 p_k / d theta_i d theta_j = q_k (delta_ij s_j (1 - s_j) - s_i s_j) for i, j <= k.
    VectorXd suffix(m);
    double acc = 0.0;
    for (Eigen::Index k = m - 1; k >= 0; --k) {
      acc += w[k] * q[k];
      suffix[k] = acc;
    }
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        out(i, j) = -s[i] * s[j] * suffix[std::max(i, j)];
        if (i == j)
          out(i, j) += s[j] * (1.0 - s[j]) * suffix[j];
      }
    return out;
  }
};

/// Inverse of ProbabilityMap for building starting points.
std::vector<double> logits_from(const std::vector<double> &probs, bool monotone) {
  std::vector<double> theta(probs.size());
  if (!monotone) {
    for (std::size_t k = 0; k < probs.size(); ++k)
      theta[k] = logit(probs[k]);
    return theta;
  }
  double p_prev = 0.0, q_prev = 1.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double target = std::max(probs[k], p_prev);
    const double s = std::clamp((target - p_prev) / q_prev, 1e-12, 1.0 - 1e-12);
    theta[k] = logit(s);
    p_prev = p_prev + q_prev * sigmoid(theta[k]);
    q_prev = q_prev * sigmoid(-theta[k]);
  }
  return theta;
}

struct Block {
  std::span<const Observation> obs;
  std::size_t nmax;
  std::size_t eta_slot;
  std::size_t theta_offset;
};

/// Half the binomial deviance of a set of sweeps, with gradient, Fisher
/// information and observed Hessian over the stacked transformed parameters.
class Likelihood {
public:
  Likelihood(std::vector<Block> blocks, std::size_t dim, bool monotone)
      : blocks_(std::move(blocks)), dim_(dim), monotone_(monotone) {
    for (std::size_t n = 0; n < lgamma_.size(); ++n)
      lgamma_[n] = std::lgamma(static_cast<double>(n) + 1.0);
  }

  std::size_t dim() const { return dim_; }
  bool monotone() const { return monotone_; }
  const std::vector<Block> &blocks() const { return blocks_; }

  double operator()(const VectorXd &x) const { return evaluate(x, nullptr, nullptr); }

  double evaluate(const VectorXd &x, VectorXd *grad, MatrixXd *fisher, MatrixXd *hessian = nullptr) const {
    const auto d = static_cast<Eigen::Index>(dim_);
    if (grad)
      grad->setZero(d);
    if (fisher)
      fisher->setZero(d, d);
    if (hessian)
      hessian->setZero(d, d);
    double f = 0.0;
    for (const auto &b : blocks_)
      f += evaluate_block(b, x, grad, fisher, hessian);
    return f;
  }

private:
  // Poisson weights pi_0..pi_nmax, the tail T = P(X > nmax), R, Q and dR/dmu.
  void click_terms(double mu, std::size_t nmax, const ProbabilityMap &map,
                   std::array<double, kMaxOrder + 1> &pi, double &r, double &dr_dmu,
                   double &tail, double *q_out) const {
    if (mu <= 0.0) {
      r = 0.0;
      dr_dmu = 0.0;
      tail = 0.0;
      if (q_out)
        *q_out = 1.0;
      pi.fill(0.0);
      pi[0] = 1.0;
      return;
    }
    const double log_mu = std::log(mu);
    for (std::size_t n = 0; n <= nmax; ++n)
      pi[n] = std::exp(-mu + static_cast<double>(n) * log_mu - lgamma_[n]);
    tail = boost::math::gamma_p(static_cast<double>(nmax) + 1.0, mu);
    r = map.p[nmax] * tail;
    double q = pi[0] + map.q[nmax] * tail;
    dr_dmu = map.p[nmax] * pi[nmax];
    for (std::size_t n = 1; n <= nmax; ++n) {
      r += map.p[n - 1] * pi[n];
      q += map.q[n - 1] * pi[n];
      dr_dmu += map.p[n - 1] * (pi[n - 1] - pi[n]);
    }
    if (q_out)
      *q_out = q;
  }

  double evaluate_block(const Block &b, const VectorXd &x, VectorXd *grad, MatrixXd *fisher,
                        MatrixXd *hessian) const {
    const std::size_t m = b.nmax + 1;
    ProbabilityMap map;
    map.assign(x.data() + b.theta_offset, m, monotone_);
    const double eta = std::exp(x[static_cast<Eigen::Index>(b.eta_slot)]);

    const bool derivs = grad || fisher || hessian;
    const auto local_dim = static_cast<Eigen::Index>(m + 1);
    const auto mi = static_cast<Eigen::Index>(m);
    VectorXd g_local = VectorXd::Zero(local_dim);
    MatrixXd f_local = MatrixXd::Zero(local_dim, local_dim);
    MatrixXd h_local = MatrixXd::Zero(local_dim, local_dim);
    VectorXd dr(local_dim);
    VectorXd dr_dp(mi), d2r_dp_dmu(mi);
    std::array<double, kMaxOrder + 1> pi{};

    double f = 0.0;
    for (const auto &o : b.obs) {
      if (o.trials <= 0.0)
        continue;
      const double mu = eta * o.mean_photon_number;
      double r = 0.0, dr_dmu = 0.0, tail = 0.0, q = 1.0;
      click_terms(mu, b.nmax, map, pi, r, dr_dmu, tail, &q);
      const double k = o.clicks;
      const double n_fail = o.trials - o.clicks;
      const double r_safe = std::max(r, kProbabilityFloor);
      const double q_safe = std::max(q, kProbabilityFloor);
      f += xlog_ratio(k, o.trials, r_safe) + xlog_ratio(n_fail, o.trials, q_safe);
      if (!derivs || mu <= 0.0)
        continue;

      for (std::size_t n = 1; n <= b.nmax; ++n)
        dr_dp[static_cast<Eigen::Index>(n - 1)] = pi[n];
      dr_dp[static_cast<Eigen::Index>(b.nmax)] = tail;
      dr[0] = mu * dr_dmu;
      dr.tail(static_cast<Eigen::Index>(m)) = map.jacobian.transpose() * dr_dp;

      const double df_dr = -k / r_safe + n_fail / q_safe;
      g_local.noalias() += df_dr * dr;
      f_local.noalias() += (o.trials / (r_safe * q_safe)) * dr * dr.transpose();
      if (!hessian)
        continue;

      // d pi_n / d mu = pi_{n-1} - pi_n and d T / d mu = pi_nmax.
      double d2r_dmu2 = map.p[b.nmax] * (pi[b.nmax - 1] - pi[b.nmax]);
      for (std::size_t n = 1; n <= b.nmax; ++n) {
        const double before = n >= 2 ? pi[n - 2] : 0.0;
        d2r_dmu2 += map.p[n - 1] * (before - 2.0 * pi[n - 1] + pi[n]);
        d2r_dp_dmu[static_cast<Eigen::Index>(n - 1)] = pi[n - 1] - pi[n];
      }
      d2r_dp_dmu[static_cast<Eigen::Index>(b.nmax)] = pi[b.nmax];

      MatrixXd d2r(local_dim, local_dim);
      d2r(0, 0) = mu * dr_dmu + mu * mu * d2r_dmu2;
      const VectorXd cross = mu * (map.jacobian.transpose() * d2r_dp_dmu);
      d2r.block(0, 1, 1, mi) = cross.transpose();
      d2r.block(1, 0, mi, 1) = cross;
      d2r.block(1, 1, mi, mi) = map.weighted_second_derivative(dr_dp);
      const double d2f_dr2 = k / (r_safe * r_safe) + n_fail / (q_safe * q_safe);
      h_local.noalias() += d2f_dr2 * dr * dr.transpose() + df_dr * d2r;
    }

    if (derivs) {
      std::vector<Eigen::Index> slots;
      slots.push_back(static_cast<Eigen::Index>(b.eta_slot));
      for (std::size_t k = 0; k < m; ++k)
        slots.push_back(static_cast<Eigen::Index>(b.theta_offset + k));
      for (Eigen::Index i = 0; i < local_dim; ++i) {
        if (grad)
          (*grad)[slots[i]] += g_local[i];
        for (Eigen::Index j = 0; j < local_dim; ++j) {
          if (fisher)
            (*fisher)(slots[i], slots[j]) += f_local(i, j);
          if (hessian)
            (*hessian)(slots[i], slots[j]) += h_local(i, j);
        }
      }
    }
    return f;
  }

  std::vector<Block> blocks_;
  std::size_t dim_;
  bool monotone_;
  std::array<double, kMaxOrder + 1> lgamma_{};
};

struct Bounds {
  VectorXd lower, upper;
};

Bounds bounds_for(const Likelihood &L, const FitOptions &opts) {
  Bounds b{VectorXd::Constant(static_cast<Eigen::Index>(L.dim()), -kLogitBound),
           VectorXd::Constant(static_cast<Eigen::Index>(L.dim()), kLogitBound)};
  for (const auto &blk : L.blocks()) {
    const auto slot = static_cast<Eigen::Index>(blk.eta_slot);
    b.lower[slot] = opts.fixed_eta ? std::log(*opts.fixed_eta) : kLogEtaMin;
    b.upper[slot] = opts.fixed_eta ? std::log(*opts.fixed_eta) : kLogEtaMax;
  }
  return b;
}

struct LmOutcome {
  VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
};

/// Bounded Levenberg-Marquardt on a quadratic model of the deviance. The
/// model uses the observed Hessian where it is positive definite on the free
/// coordinates and the Fisher information otherwise. Coordinates pinned at a
/// bound with an outward gradient are frozen for the step; convergence is on
/// the projected gradient or the relative decrease.
LmOutcome minimize(const Likelihood &L, VectorXd x, const FitOptions &opts) {
  const Bounds bounds = bounds_for(L, opts);
  x = x.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
  const auto dim = static_cast<Eigen::Index>(L.dim());

  VectorXd g;
  MatrixXd F, H;
  LmOutcome out;
  double f = L.evaluate(x, &g, &F, &H);
  double lambda = 1e-3;

  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    std::vector<Eigen::Index> free;
    double pg_norm = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const bool pinned_low = x[i] <= bounds.lower[i] && g[i] > 0.0;
      const bool pinned_high = x[i] >= bounds.upper[i] && g[i] < 0.0;
      if (pinned_low || pinned_high || bounds.lower[i] == bounds.upper[i])
        continue;
      free.push_back(i);
      pg_norm = std::max(pg_norm, std::abs(g[i]));
    }
    if (pg_norm < opts.gradient_tolerance || free.empty()) {
      out.converged = true;
      break;
    }

    const auto nf = static_cast<Eigen::Index>(free.size());
    MatrixXd A(nf, nf), A_hessian(nf, nf);
    VectorXd rhs(nf);
    double max_diag = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) {
      rhs[a] = -g[free[a]];
      max_diag = std::max(max_diag, F(free[a], free[a]));
      for (Eigen::Index c = 0; c < nf; ++c) {
        A(a, c) = F(free[a], free[c]);
        A_hessian(a, c) = H(free[a], free[c]);
      }
    }
    if (Eigen::LLT<MatrixXd>(A_hessian).info() == Eigen::Success)
      A = A_hessian;
    const double diag_floor = max_diag > 0.0 ? 1e-10 * max_diag : 1.0;

    bool accepted = false;
    bool stalled = false;
    double rel_change = 0.0;
    while (!accepted) {
      MatrixXd damped = A;
      for (Eigen::Index a = 0; a < nf; ++a)
        damped(a, a) += lambda * std::max(A(a, a), diag_floor);
      VectorXd step = damped.ldlt().solve(rhs);
      if (step.allFinite()) {
        // A long step in logit space can land in a saturated region whose
        // vanishing gradient never lets the coordinate return.
        const double longest = step.cwiseAbs().maxCoeff();
        if (longest > kMaxStep)
          step *= kMaxStep / longest;
        VectorXd trial = x;
        for (Eigen::Index a = 0; a < nf; ++a)
          trial[free[a]] += step[a];
        trial = trial.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
        const double f_trial = L(trial);
        if (std::isfinite(f_trial) && f_trial < f) {
          rel_change = (f - f_trial) / std::max(1.0, std::abs(f));
          x = trial;
          f = L.evaluate(x, &g, &F, &H);
          accepted = true;
          lambda = std::max(lambda * 0.1, 1e-12);
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e20) {
        stalled = true;
        break;
      }
    }
    if (stalled) {
      // No damped direction lowers the objective: a numerical minimum.
      out.converged = true;
      break;
    }
    if (rel_change < opts.relative_tolerance && lambda < 1e-1) {
      out.converged = true;
      break;
    }
  }
  out.x = std::move(x);
  out.f = f;
  return out;
}

/// Covariance of the transformed parameters from the Fisher information.
/// Directions the data do not constrain get a large but finite variance.
MatrixXd covariance_from(const MatrixXd &fisher) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (fisher + fisher.transpose()));
  const VectorXd &vals = eig.eigenvalues();
  const double top = vals.size() ? std::max(vals.maxCoeff(), 0.0) : 0.0;
  const double floor = top > 0.0 ? 1e-12 * top : 1e-12;
  VectorXd inv = vals.unaryExpr([&](double v) { return 1.0 / std::max(v, floor); });
  MatrixXd cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (cov + cov.transpose());
}

/// Natural parameters (eta, p_1..p_nmax, p_tail) of a block at x.
std::vector<double> natural_parameters(const VectorXd &x, std::size_t eta_slot,
                                       std::size_t theta_offset, std::size_t nmax, bool monotone) {
  ProbabilityMap map;
  map.assign(x.data() + theta_offset, nmax + 1, monotone);
  std::vector<double> out;
  out.push_back(std::exp(x[static_cast<Eigen::Index>(eta_slot)]));
  out.insert(out.end(), map.p.begin(), map.p.end());
  return out;
}

/// Builds the per-sweep result from its local parameter vector
/// (log eta, thetas) and the matching covariance block.
ReconstructionResult make_result(std::span<const Observation> obs, const VectorXd &local,
                                 const MatrixXd &cov, std::size_t nmax, bool monotone, bool eta_fixed) {
  ReconstructionResult res;
  res.nmax = nmax;
  res.monotone = monotone;
  res.eta_fixed = eta_fixed;
  res.parameters = local;
  res.covariance = cov;

  ProbabilityMap map;
  map.assign(local.data() + 1, nmax + 1, monotone);
  res.response.eta = std::exp(local[0]);
  res.response.p.assign(map.p.begin(), map.p.begin() + static_cast<std::ptrdiff_t>(nmax));
  res.response.p_tail = map.p[nmax];

  // Delta method onto the natural scale.
  const auto k = static_cast<Eigen::Index>(nmax + 2);
  MatrixXd J = MatrixXd::Zero(k, k);
  J(0, 0) = res.response.eta;
  J.bottomRightCorner(k - 1, k - 1) = map.jacobian;
  const MatrixXd natural_cov = J * cov * J.transpose();
  res.standard_errors.resize(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i)
    res.standard_errors[static_cast<std::size_t>(i)] = std::sqrt(std::max(natural_cov(i, i), 0.0));

  res.observations = static_cast<std::size_t>(
      std::count_if(obs.begin(), obs.end(), [](const Observation &o) { return o.trials > 0.0; }));
  const std::size_t free = res.parameter_count();
  res.dof = res.observations > free ? res.observations - free : 0;
  res.deviance = deviance(obs, res.response);
  res.deviance_per_dof = res.dof ? res.deviance / static_cast<double>(res.dof)
                                 : std::numeric_limits<double>::quiet_NaN();
  double ll = 0.0;
  for (const auto &o : obs) {
    if (o.trials <= 0.0)
      continue;
    const auto split = photonics::click_split(res.response, o.mean_photon_number);
    if (o.clicks > 0.0)
      ll += o.clicks * std::log(std::max(split.click, kProbabilityFloor));
    if (o.trials > o.clicks)
      ll += (o.trials - o.clicks) * std::log(std::max(split.no_click, kProbabilityFloor));
  }
  res.log_likelihood = ll;
  return res;
}

ReconstructionResult no_signal_result(std::span<const Observation> obs, std::size_t nmax, bool monotone) {
  ReconstructionResult res;
  res.nmax = nmax;
  res.monotone = monotone;
  res.no_signal = true;
  res.response.eta = 0.0;
  res.response.p.assign(nmax, 0.0);
  res.response.p_tail = 0.0;
  const auto k = static_cast<Eigen::Index>(nmax + 2);
  res.parameters = VectorXd::Constant(k, -kLogitBound);
  res.parameters[0] = kLogEtaMin;
  res.covariance = MatrixXd::Zero(k, k);
  res.standard_errors.assign(static_cast<std::size_t>(k), 0.0);
  res.observations = obs.size();
  res.dof = obs.size() > static_cast<std::size_t>(k) ? obs.size() - static_cast<std::size_t>(k) : 0;
  return res;
}

VectorXd pack(double log_eta, const std::vector<double> &theta) {
  VectorXd x(static_cast<Eigen::Index>(theta.size() + 1));
  x[0] = log_eta;
  for (std::size_t k = 0; k < theta.size(); ++k)
    x[static_cast<Eigen::Index>(k + 1)] = theta[k];
  return x;
}

/// The five deterministic starting points for a single-sweep fit.
std::vector<VectorXd> initial_points(std::span<const Observation> obs, std::size_t nmax,
                                     bool monotone, const Likelihood &L) {
  double r_max = 0.0, n_min = INFINITY, n_max = 0.0;
  std::vector<const Observation *> lit;
  for (const auto &o : obs) {
    if (o.trials <= 0.0 || o.mean_photon_number <= 0.0)
      continue;
    r_max = std::max(r_max, o.clicks / o.trials);
    n_min = std::min(n_min, o.mean_photon_number);
    n_max = std::max(n_max, o.mean_photon_number);
    if (o.clicks > 0.0)
      lit.push_back(&o);
  }
  const double p_tail0 = std::clamp(r_max, 0.05, 1.0 - 1e-6);

  // Low-power slope of R/N over the three dimmest settings with clicks,
  // read as a single-photon response saturating at p_tail0.
  std::sort(lit.begin(), lit.end(), [](auto *a, auto *b) { return a->mean_photon_number < b->mean_photon_number; });
  double slope = 0.0;
  const std::size_t used = std::min<std::size_t>(lit.size(), 3);
  for (std::size_t i = 0; i < used; ++i)
    slope += lit[i]->clicks / lit[i]->trials / lit[i]->mean_photon_number;
  slope = used ? slope / static_cast<double>(used) : 1.0 / n_max;
  const double log_eta_slope = std::clamp(std::log(slope / p_tail0), kLogEtaMin, kLogEtaMax);

  auto pattern = [&](double first, double rest, double last) {
    std::vector<double> p(nmax + 1);
    for (std::size_t k = 0; k < nmax; ++k)
      p[k] = k == 0 ? first : rest;
    if (nmax >= 2)
      p[nmax - 1] = last;
    p[nmax] = std::max(p_tail0, monotone ? *std::max_element(p.begin(), p.end() - 1) : 0.0);
    return logits_from(p, monotone);
  };

  auto scan_eta = [&](const std::vector<double> &theta) {
    const double lo = std::max(kLogEtaMin, std::log(1e-3 / n_max));
    const double hi = std::min(kLogEtaMax, std::log(1e2 / n_min));
    const double step = std::log(10.0) / 4.0;
    double best_f = INFINITY, best = log_eta_slope;
    for (double z = lo; z <= hi + 1e-12; z += step) {
      const double f = L(pack(z, theta));
      if (f < best_f) {
        best_f = f;
        best = z;
      }
    }
    return best;
  };

  const auto all_high = pattern(1e-1, 1e-1, 1e-1);
  const auto all_low = pattern(1e-3, 1e-3, 1e-3);
  const auto top_only = pattern(nmax >= 2 ? 1e-3 : 1e-1, 1e-3, 1e-1);

  return {pack(log_eta_slope, all_high), pack(log_eta_slope, all_low), pack(scan_eta(all_high), all_high),
          pack(scan_eta(top_only), top_only), pack(scan_eta(all_low), all_low)};
}

void check_inputs(std::span<const Observation> obs, const FitOptions &opts) {
  if (opts.nmax < 1 || opts.nmax > kMaxOrder)
    throw std::invalid_argument("nmax must lie in 1.." + std::to_string(kMaxOrder));
  if (obs.empty())
    throw std::invalid_argument("no observations to fit");
  for (const auto &o : obs)
    if (!(o.clicks >= 0.0) || o.clicks > o.trials || !(o.mean_photon_number >= 0.0))
      throw std::invalid_argument("invalid observation");
  if (opts.fixed_eta && !(*opts.fixed_eta > 0.0 && *opts.fixed_eta <= 1.0))
    throw std::invalid_argument("fixed eta must lie in (0,1]");
}

/// Repeats at one photon number pooled into a single binomial term. The
/// likelihood changes only by a constant, so optima and curvature agree.
std::vector<Observation> pooled(std::span<const Observation> obs) {
  std::vector<Observation> out(obs.begin(), obs.end());
  std::sort(out.begin(), out.end(),
            [](const Observation &a, const Observation &b) { return a.mean_photon_number < b.mean_photon_number; });
  std::size_t w = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (w > 0 && out[w - 1].mean_photon_number == out[i].mean_photon_number) {
      out[w - 1].trials += out[i].trials;
      out[w - 1].clicks += out[i].clicks;
    } else {
      out[w++] = out[i];
    }
  }
  out.resize(w);
  return out;
}

bool all_zero(std::span<const Observation> obs) {
  return std::all_of(obs.begin(), obs.end(), [](const Observation &o) { return o.clicks == 0.0; });
}

ReconstructionResult finalize_single(std::span<const Observation> obs, const Likelihood &L,
                                     const LmOutcome &best, const FitOptions &opts) {
  VectorXd g;
  MatrixXd F;
  L.evaluate(best.x, &g, &F);
  MatrixXd cov = MatrixXd::Zero(F.rows(), F.cols());
  if (opts.fixed_eta) {
    const auto m = F.rows() - 1;
    cov.bottomRightCorner(m, m) = covariance_from(F.bottomRightCorner(m, m));
  } else {
    cov = covariance_from(F);
  }
  auto res = make_result(obs, best.x, cov, opts.nmax, opts.monotone, opts.fixed_eta.has_value());
  res.iterations = best.iterations;
  return res;
}

} // namespace

std::vector<Observation> observations(const SweepData &data) {
  std::vector<Observation> out;
  out.reserve(data.records.size());
  for (const auto &r : data.records)
    out.push_back({r.mean_photon_number, static_cast<double>(r.pulses), static_cast<double>(r.clicks)});
  return out;
}

double deviance(std::span<const Observation> obs, const photonics::DetectorResponse &response) {
  double d = 0.0;
  for (const auto &o : obs) {
    if (o.trials <= 0.0)
      continue;
    const auto split = photonics::click_split(response, o.mean_photon_number);
    d += xlog_ratio(o.clicks, o.trials, std::max(split.click, kProbabilityFloor)) +
         xlog_ratio(o.trials - o.clicks, o.trials, std::max(split.no_click, kProbabilityFloor));
  }
  return 2.0 * d;
}

ReconstructionResult fit_response(std::span<const Observation> obs, const FitOptions &opts) {
  check_inputs(obs, opts);
  if (all_zero(obs))
    return no_signal_result(obs, opts.nmax, opts.monotone);

  const auto merged = pooled(obs);
  const Likelihood L({Block{merged, opts.nmax, 0, 1}}, opts.nmax + 2, opts.monotone);
  const auto starts = initial_points(merged, opts.nmax, opts.monotone, L);

  LmOutcome best, best_any;
  int best_index = -1;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto run = minimize(L, starts[s], opts);
    if (run.f < best_any.f)
      best_any = run;
    if (run.converged && run.f < best.f) {
      best = std::move(run);
      best_index = static_cast<int>(s);
    }
  }
  if (best_index < 0) {
    std::vector<double> params(best_any.x.data(), best_any.x.data() + best_any.x.size());
    throw FitFailure("no start converged within " + std::to_string(opts.max_iterations) + " iterations",
                     std::move(params), best_any.f);
  }
  auto res = finalize_single(obs, L, best, opts);
  res.start_index = best_index;
  return res;
}

ReconstructionResult fit_response(const SweepData &data, const FitOptions &opts) {
  data.validate();
  if (!data.supports_fit())
    throw std::invalid_argument("sweep '" + data.source +
                                "' needs >= 8 distinct photon numbers spanning >= 3 decades");
  const auto obs = observations(data);
  return fit_response(obs, opts);
}

OrderSelection select_model_order(std::span<const Observation> obs, std::size_t max_order,
                                  const FitOptions &base) {
  if (max_order < 1)
    throw std::invalid_argument("max_order must be >= 1");
  OrderSelection sel;
  if (all_zero(obs)) {
    FitOptions opts = base;
    opts.nmax = 1;
    sel.nmax = 1;
    sel.no_signal = true;
    sel.result = fit_response(obs, opts);
    sel.aic.assign(max_order, std::numeric_limits<double>::quiet_NaN());
    return sel;
  }

  std::vector<ReconstructionResult> fits(max_order);
  std::vector<bool> ok(max_order, false);
  sel.aic.assign(max_order, std::numeric_limits<double>::quiet_NaN());
  std::exception_ptr last_error;
  for (std::size_t n = 1; n <= max_order; ++n) {
    FitOptions opts = base;
    opts.nmax = n;
    try {
      fits[n - 1] = fit_response(obs, opts);
      ok[n - 1] = true;
      sel.aic[n - 1] = 2.0 * static_cast<double>(fits[n - 1].parameter_count()) + fits[n - 1].deviance;
    } catch (const FitFailure &) {
      last_error = std::current_exception();
    }
  }
  double best = INFINITY;
  for (std::size_t i = 0; i < max_order; ++i)
    if (ok[i])
      best = std::min(best, sel.aic[i]);
  if (!std::isfinite(best))
    std::rethrow_exception(last_error);
  for (std::size_t i = 0; i < max_order; ++i) {
    if (ok[i] && sel.aic[i] <= best + 2.0) {
      sel.nmax = i + 1;
      sel.result = std::move(fits[i]);
      break;
    }
  }
  return sel;
}

OrderSelection select_model_order(const SweepData &data, std::size_t max_order, const FitOptions &base) {
  data.validate();
  if (!data.supports_fit() && !data.all_dark())
    throw std::invalid_argument("sweep '" + data.source +
                                "' needs >= 8 distinct photon numbers spanning >= 3 decades");
  const auto obs = observations(data);
  return select_model_order(obs, max_order, base);
}

std::vector<double> bootstrap_errors(std::span<const Observation> obs, const ReconstructionResult &result,
                                     const BootstrapOptions &opts) {
  if (opts.resamples < 2)
    throw std::invalid_argument("bootstrap needs at least 2 resamples");
  if (!(opts.eta_sigma >= 0.0))
    throw std::invalid_argument("eta_sigma must be >= 0");
  const std::size_t k = result.nmax + 2;
  if (result.no_signal)
    return std::vector<double>(k, 0.0);

  FitOptions fit_opts;
  fit_opts.nmax = result.nmax;
  fit_opts.monotone = result.monotone;
  if (result.eta_fixed)
    fit_opts.fixed_eta = result.response.eta;

  std::vector<double> rates(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    rates[i] = photonics::click_probability(result.response, obs[i].mean_photon_number);

  const auto n_resamples = static_cast<std::size_t>(opts.resamples);
  std::vector<std::vector<double>> draws(n_resamples);
  std::vector<char> failed(n_resamples, 0);

  parallel_for(
      n_resamples,
      [&](std::size_t b) {
        CounterRng rng(hash_key({opts.seed, static_cast<std::uint64_t>(b), 0xB007ULL}));
        std::vector<Observation> sample(obs.begin(), obs.end());
        for (std::size_t i = 0; i < sample.size(); ++i) {
          const auto trials = static_cast<long long>(std::llround(sample[i].trials));
          sample[i].trials = static_cast<double>(trials);
          std::binomial_distribution<long long> draw(trials, std::clamp(rates[i], 0.0, 1.0));
          sample[i].clicks = static_cast<double>(draw(rng));
        }
        FitOptions local = fit_opts;
        VectorXd start = result.parameters;
        if (result.eta_fixed && opts.eta_sigma > 0.0) {
          std::normal_distribution<double> jitter(result.response.eta, opts.eta_sigma);
          local.fixed_eta = std::clamp(jitter(rng), 1e-300, 1.0);
          start[0] = std::log(*local.fixed_eta);
        }
        const auto merged = pooled(sample);
        const Likelihood L({Block{merged, result.nmax, 0, 1}}, k, result.monotone);
        auto run = minimize(L, start, local);
        if (run.converged) {
          draws[b] = natural_parameters(run.x, 0, 1, result.nmax, result.monotone);
          return;
        }
        try {
          const auto refit = fit_response(sample, local);
          draws[b] = natural_parameters(refit.parameters, 0, 1, result.nmax, result.monotone);
        } catch (const FitFailure &) {
          failed[b] = 1;
        }
      },
      opts.workers);

  const auto n_failed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  if (static_cast<double>(n_failed) > opts.max_failure_fraction * static_cast<double>(n_resamples))
    throw FitFailure("bootstrap: " + std::to_string(n_failed) + " of " + std::to_string(n_resamples) +
                         " refits failed",
                     std::vector<double>(result.parameters.data(), result.parameters.data() + result.parameters.size()),
                     result.deviance / 2.0);

  std::vector<double> mean(k, 0.0), m2(k, 0.0);
  std::size_t count = 0;
  for (std::size_t b = 0; b < n_resamples; ++b) {
    if (failed[b])
      continue;
    ++count;
    for (std::size_t j = 0; j < k; ++j) {
      const double delta = draws[b][j] - mean[j];
      mean[j] += delta / static_cast<double>(count);
      m2[j] += delta * (draws[b][j] - mean[j]);
    }
  }
  std::vector<double> sd(k);
  for (std::size_t j = 0; j < k; ++j)
    sd[j] = count > 1 ? std::sqrt(m2[j] / static_cast<double>(count - 1)) : 0.0;
  return sd;
}

std::vector<double> bootstrap_errors(const SweepData &data, const ReconstructionResult &result,
                                     const BootstrapOptions &opts) {
  const auto obs = observations(data);
  return bootstrap_errors(obs, result, opts);
}

ResponseRow make_row(double wavelength_nm, double bias_current_uA, const ReconstructionResult &result) {
  ResponseRow row;
  row.wavelength_nm = wavelength_nm;
  row.bias_current_uA = bias_current_uA;
  row.nmax = result.nmax;
  row.no_signal = result.no_signal;
  row.eta = result.response.eta;
  row.p = result.response.p;
  row.p_tail = result.response.p_tail;
  const auto &se = result.standard_errors;
  row.eta_err = se.empty() ? 0.0 : se.front();
  row.p_err.assign(result.nmax, 0.0);
  for (std::size_t k = 0; k < result.nmax && k + 1 < se.size(); ++k)
    row.p_err[k] = se[k + 1];
  row.p_tail_err = se.size() == result.nmax + 2 ? se.back() : 0.0;
  row.deviance = result.deviance;
  row.deviance_per_dof = result.deviance_per_dof;
  return row;
}

std::vector<ReconstructionResult> fit_shared_eta(std::span<const SweepData> sweeps,
                                                 std::span<const std::size_t> nmax, const FitOptions &shared_opts) {
  FitOptions opts = shared_opts;
  opts.fixed_eta.reset();
  if (sweeps.size() != nmax.size())
    throw std::invalid_argument("fit_shared_eta: one order per sweep required");
  if (sweeps.empty())
    return {};

  std::vector<std::vector<Observation>> obs(sweeps.size()), merged(sweeps.size());
  std::vector<ReconstructionResult> independent(sweeps.size());
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    if (i > 0 && sweeps[i].wavelength_nm() != sweeps[0].wavelength_nm())
      throw std::invalid_argument("fit_shared_eta: sweeps must share one wavelength");
    FitOptions own = opts;
    own.nmax = nmax[i];
    independent[i] = fit_response(sweeps[i], own);
    obs[i] = observations(sweeps[i]);
    merged[i] = pooled(obs[i]);
    if (!independent[i].no_signal)
      active.push_back(i);
  }
  if (active.empty())
    return independent;

  std::vector<Block> blocks;
  std::vector<std::size_t> offsets;
  std::size_t dim = 1;
  for (std::size_t i : active) {
    blocks.push_back(Block{merged[i], nmax[i], 0, dim});
    offsets.push_back(dim);
    dim += nmax[i] + 1;
  }
  const Likelihood L(blocks, dim, opts.monotone);

  double log_eta_sum = 0.0, log_eta_lo = INFINITY, log_eta_hi = -INFINITY;
  for (std::size_t i : active) {
    const double z = independent[i].parameters[0];
    log_eta_sum += z;
    log_eta_lo = std::min(log_eta_lo, z);
    log_eta_hi = std::max(log_eta_hi, z);
  }
  LmOutcome best, best_any;
  for (double z : {log_eta_sum / static_cast<double>(active.size()), log_eta_lo, log_eta_hi}) {
    VectorXd x0(static_cast<Eigen::Index>(dim));
    x0[0] = z;
    for (std::size_t a = 0; a < active.size(); ++a)
      x0.segment(static_cast<Eigen::Index>(offsets[a]), static_cast<Eigen::Index>(nmax[active[a]] + 1)) =
          independent[active[a]].parameters.tail(static_cast<Eigen::Index>(nmax[active[a]] + 1));
    auto run = minimize(L, x0, opts);
    if (run.f < best_any.f)
      best_any = run;
    if (run.converged && run.f < best.f)
      best = std::move(run);
  }
  if (!best.converged)
    throw FitFailure("shared-eta fit did not converge",
                     std::vector<double>(best_any.x.data(), best_any.x.data() + best_any.x.size()), best_any.f);

  VectorXd g;
  MatrixXd F;
  L.evaluate(best.x, &g, &F);
  const MatrixXd cov = covariance_from(F);

  std::vector<ReconstructionResult> out = independent;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const std::size_t i = active[a];
    const auto m = static_cast<Eigen::Index>(nmax[i] + 1);
    const auto off = static_cast<Eigen::Index>(offsets[a]);
    VectorXd local(m + 1);
    local[0] = best.x[0];
    local.tail(m) = best.x.segment(off, m);
    MatrixXd local_cov(m + 1, m + 1);
    local_cov(0, 0) = cov(0, 0);
    local_cov.block(0, 1, 1, m) = cov.block(0, off, 1, m);
    local_cov.block(1, 0, m, 1) = cov.block(off, 0, m, 1);
    local_cov.block(1, 1, m, m) = cov.block(off, off, m, m);
    out[i] = make_result(obs[i], local, local_cov, nmax[i], opts.monotone, false);
    out[i].iterations = best.iterations;
    out[i].start_index = 0;
  }
  return out;
}

double bootstrap_shared_eta(std::span<const SweepData> sweeps, std::span<const ReconstructionResult> fits,
                            const BootstrapOptions &opts) {
  if (opts.resamples < 2)
    throw std::invalid_argument("bootstrap needs at least 2 resamples");
  if (sweeps.size() != fits.size())
    throw std::invalid_argument("bootstrap_shared_eta: one fit per sweep required");

  std::vector<std::size_t> active;
  std::vector<std::size_t> offsets;
  std::size_t dim = 1;
  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    if (fits[i].no_signal)
      continue;
    active.push_back(i);
    offsets.push_back(dim);
    dim += fits[i].nmax + 1;
  }
  if (active.empty())
    return 0.0;
  const bool monotone = fits[active.front()].monotone;

  VectorXd start(static_cast<Eigen::Index>(dim));
  start[0] = fits[active.front()].parameters[0];
  std::vector<std::vector<Observation>> obs(active.size());
  std::vector<std::vector<double>> rates(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto &fit = fits[active[a]];
    const auto m = static_cast<Eigen::Index>(fit.nmax + 1);
    start.segment(static_cast<Eigen::Index>(offsets[a]), m) = fit.parameters.tail(m);
    obs[a] = observations(sweeps[active[a]]);
    for (const auto &o : obs[a])
      rates[a].push_back(std::clamp(photonics::click_probability(fit.response, o.mean_photon_number), 0.0, 1.0));
  }

  FitOptions fit_opts;
  fit_opts.monotone = monotone;
  const auto n_resamples = static_cast<std::size_t>(opts.resamples);
  std::vector<double> etas(n_resamples, std::numeric_limits<double>::quiet_NaN());
  parallel_for(
      n_resamples,
      [&](std::size_t b) {
        CounterRng rng(hash_key({opts.seed, static_cast<std::uint64_t>(b), 0x5E7AULL}));
        std::vector<std::vector<Observation>> merged(active.size());
        std::vector<Block> blocks;
        for (std::size_t a = 0; a < active.size(); ++a) {
          std::vector<Observation> sample = obs[a];
          for (std::size_t i = 0; i < sample.size(); ++i) {
            const auto trials = static_cast<long long>(std::llround(sample[i].trials));
            sample[i].trials = static_cast<double>(trials);
            std::binomial_distribution<long long> draw(trials, rates[a][i]);
            sample[i].clicks = static_cast<double>(draw(rng));
          }
          merged[a] = pooled(sample);
          blocks.push_back(Block{merged[a], fits[active[a]].nmax, 0, offsets[a]});
        }
        const Likelihood L(std::move(blocks), dim, monotone);
        const auto run = minimize(L, start, fit_opts);
        if (run.converged)
          etas[b] = std::exp(run.x[0]);
      },
      opts.workers);

  std::vector<double> ok;
  for (double e : etas)
    if (std::isfinite(e))
      ok.push_back(e);
  const std::size_t n_failed = n_resamples - ok.size();
  if (static_cast<double>(n_failed) > opts.max_failure_fraction * static_cast<double>(n_resamples) || ok.size() < 2)
    throw FitFailure("shared-eta bootstrap: " + std::to_string(n_failed) + " of " + std::to_string(n_resamples) +
                         " refits failed",
                     std::vector<double>(start.data(), start.data() + start.size()), 0.0);
  double mean = 0.0;
  for (double e : ok)
    mean += e;
  mean /= static_cast<double>(ok.size());
  double ss = 0.0;
  for (double e : ok)
    ss += (e - mean) * (e - mean);
  return std::sqrt(ss / static_cast<double>(ok.size() - 1));
}

} // namespace nanotomo::tomography
