#pragma once

// Nested Laplace approximation of a cluster's log marginal likelihood.
//
// Inner level: Gaussian approximation of pi(x | theta, y) at its mode,
//   log pi(y | theta) ~ loglik(x*) - x*'Qx*/2 + log|Q|*/2 - (r/2) log 2pi
//                       + log pi(theta) - log|H|/2 + (dim/2) log 2pi,
// with H = Q + A' diag(d2) A. The error block of H is diagonal, so Newton
// steps and log|H| go through the q x q Schur complement of the curve block.
//
// Outer level: maximize over theta, then sum over a grid standardized by the
// numerical Hessian at the mode.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spfc/lgm.hpp"
#include "spfc/moves.hpp"

namespace spfc {

struct LaplaceOptions {
  double newton_tol = 1e-8;
  int max_newton_iters = 50;
  int max_halvings = 20;
  /// Finite-difference step for outer gradients (internal scale).
  double fd_step = 1e-4;
  /// Finite-difference step for the outer Hessian.
  double hessian_step = 1e-2;
  int max_optim_iters = 100;
  double optim_grad_tol = 1e-4;
  /// Grid points per hyperparameter dimension; 0 picks 9 (d=1) or 5 (d=2).
  int grid_points_per_dim = 0;
  /// Drops the log|Q|*/2 - (r/2) log 2pi term. Only for regression checks.
  bool drop_determinant_terms = false;
};

struct ModeResult {
  Eigen::VectorXd x_mode;
  Eigen::MatrixXd schur;     ///< curve block of H after eliminating the error block
  Eigen::VectorXd eps_diag;  ///< diagonal of the error block of H (tau + d2)
  Eigen::VectorXd eps_d2;    ///< d2 per error term; couples error terms to the curve block
  double log_det_H = 0.0;
  double objective = 0.0;    ///< log pi(x|theta,y) up to a constant, at x_mode
  double grad_norm = 0.0;
  int newton_iters = 0;
  bool converged = false;

  int h_dim() const { return static_cast<int>(schur.rows()); }
};

namespace detail {

class InnerProblem {
 public:
  InnerProblem(const ClusterData& data, const LatentModel& model, const HyperParams& theta)
      : data_(data), model_(model), prior_(model.prior(theta, data.n_regions())),
        m_(data.n_regions()), T_(model.T()), q_(model.h_dim()),
        eps_(model.spec().has_error_term) {
    if (data.T() != T_) throw Error(ErrorKind::ShapeMismatch, "data has wrong number of time points");
  }

  const JointPrecision& prior() const { return prior_; }
  int dim() const { return q_ + (eps_ ? m_ * T_ : 0); }

  Eigen::MatrixXd eta(const Eigen::VectorXd& x) const { return DesignMap(model_, m_).apply(x); }

  double loglik_kernel(const Eigen::VectorXd& x, Eigen::MatrixXd* d1 = nullptr,
                       Eigen::MatrixXd* d2 = nullptr) const {
    return detail::loglik_kernel(data_, eta(x), model_.spec().family, prior_.obs_precision, d1, d2);
  }

  double quad_form(const Eigen::VectorXd& x) const {
    double s = x.head(q_).dot(prior_.h_block * x.head(q_));
    if (eps_) s += prior_.eps_precision * x.tail(m_ * T_).squaredNorm();
    return s;
  }

  double objective(const Eigen::VectorXd& x) const {
    return loglik_kernel(x) - 0.5 * quad_form(x);
  }

  struct Step {
    Eigen::VectorXd grad;
    Eigen::VectorXd delta;
    Eigen::MatrixXd schur;
    Eigen::VectorXd eps_diag;
    Eigen::VectorXd eps_d2;
    double log_det_H = 0.0;
  };

  Step newton_step(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd d1, d2;
    loglik_kernel(x, &d1, &d2);
    const auto& B = model_.design();
    const double tau = prior_.eps_precision;
    Step s;
    s.grad.resize(dim());
    s.grad.head(q_) = B.transpose() * d1.colwise().sum().transpose() - prior_.h_block * x.head(q_);

    Eigen::VectorXd w(T_);
    Eigen::MatrixXd ge, hd;  // m x T error-block gradient and H diagonal
    if (eps_) {
      Eigen::Map<const Eigen::MatrixXd> e(x.data() + q_, T_, m_);
      ge = d1 - tau * e.transpose();
      hd = (d2.array() + tau).matrix();
      w = (d2.array() * tau / hd.array()).colwise().sum().transpose();
      Eigen::MatrixXd get = ge.transpose();
      s.grad.tail(m_ * T_) = Eigen::Map<const Eigen::VectorXd>(get.data(), m_ * T_);
    } else {
      w = d2.colwise().sum().transpose();
    }
    s.schur = prior_.h_block + B.transpose() * w.asDiagonal() * B;
    Eigen::VectorXd rhs = s.grad.head(q_);
    if (eps_) rhs -= B.transpose() * (d2.array() * ge.array() / hd.array()).colwise().sum().transpose().matrix();

    Eigen::LLT<Eigen::MatrixXd> llt(s.schur);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::SingularHessian, "curve block of the Hessian is not positive definite");
    s.log_det_H = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    s.delta.resize(dim());
    Eigen::VectorXd dz = llt.solve(rhs);
    s.delta.head(q_) = dz;
    if (eps_) {
      Eigen::VectorXd bdz = B * dz;
      Eigen::MatrixXd de =
          ((ge.array() - d2.array() * bdz.transpose().replicate(m_, 1).array()) / hd.array()).matrix();
      Eigen::MatrixXd det_ = de.transpose();
      s.delta.tail(m_ * T_) = Eigen::Map<const Eigen::VectorXd>(det_.data(), m_ * T_);
      s.log_det_H += hd.array().log().sum();
      Eigen::MatrixXd hdt = hd.transpose(), d2t = d2.transpose();
      s.eps_diag = Eigen::Map<const Eigen::VectorXd>(hdt.data(), m_ * T_);
      s.eps_d2 = Eigen::Map<const Eigen::VectorXd>(d2t.data(), m_ * T_);
    }
    return s;
  }

 private:
  const ClusterData& data_;
  const LatentModel& model_;
  JointPrecision prior_;
  int m_, T_, q_;
  bool eps_;
};

}  // namespace detail

/// Newton-Raphson with step halving for the mode of log pi(x | theta, y).
inline ModeResult find_mode(const ClusterData& data, const LatentModel& model,
                            const HyperParams& theta, const LaplaceOptions& opt = {},
                            const Eigen::VectorXd* warm_start = nullptr) {
  detail::InnerProblem prob(data, model, theta);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prob.dim());
  if (warm_start && warm_start->size() == x.size() && warm_start->allFinite()) x = *warm_start;
  double fx = prob.objective(x);
  if (!std::isfinite(fx)) {
    x.setZero();
    fx = prob.objective(x);
  }

  ModeResult r;
  bool finish = false;
  for (int it = 0;; ++it) {
    auto step = prob.newton_step(x);
    const double scale = 1.0 + x.lpNorm<Eigen::Infinity>();
    r.grad_norm = step.grad.lpNorm<Eigen::Infinity>();
    // Half the Newton decrement: the ascent a full step would bring.
    const double gain = 0.5 * step.grad.dot(step.delta);
    const bool at_rounding = gain <= 1e-13 * std::max(1.0, std::abs(fx));
    const bool small_step = step.delta.lpNorm<Eigen::Infinity>() <= 1e-12 * scale;
    const bool done = finish || r.grad_norm <= opt.newton_tol * scale || small_step;
    if (done || it >= opt.max_newton_iters) {
      r.converged = done;
      r.x_mode = x;
      r.schur = std::move(step.schur);
      r.eps_diag = std::move(step.eps_diag);
      r.eps_d2 = std::move(step.eps_d2);
      r.log_det_H = step.log_det_H;
      r.objective = fx;
      r.newton_iters = it;
      break;
    }
    if (at_rounding) {
      // Objective differences are below rounding here, so a line search
      // cannot judge the step; the quadratic model can.
      x += step.delta;
      fx = prob.objective(x);
      finish = true;
      continue;
    }
    double alpha = 1.0;
    Eigen::VectorXd xn = x + step.delta;
    double fn = prob.objective(xn);
    for (int h = 0; h < opt.max_halvings && !(fn >= fx); ++h) {
      alpha *= 0.5;
      xn = x + alpha * step.delta;
      fn = prob.objective(xn);
    }
    if (!(fn >= fx)) {
      r.converged = false;
      r.x_mode = x;
      r.newton_iters = it;
      break;
    }
    x = std::move(xn);
    fx = fn;
  }
  if (!r.converged)
    throw Error(ErrorKind::NoConvergence,
                "Newton stopped after " + std::to_string(r.newton_iters) +
                    " iterations, gradient max-norm " + std::to_string(r.grad_norm));
  return r;
}

inline ModeResult find_mode(const ClusterData& data, const ModelSpec& spec, const HyperParams& theta,
                            const LaplaceOptions& opt = {}) {
  return find_mode(data, LatentModel(spec), theta, opt);
}

/// Dense negative Hessian of log pi(x | theta, y) at the mode (tests, small cases).
inline Eigen::MatrixXd dense_hessian(const LatentModel& model, const ModeResult& mode) {
  const int q = mode.h_dim();
  const int ne = static_cast<int>(mode.eps_diag.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(q + ne, q + ne);
  if (ne == 0) {
    H = mode.schur;
    return H;
  }
  const int T = model.T();
  const auto& B = model.design();
  Eigen::MatrixXd Hzz = mode.schur;
  for (int k = 0; k < ne; ++k) {
    int t = k % T;
    double d2 = mode.eps_d2[k];
    Hzz += (d2 * d2 / mode.eps_diag[k]) * B.row(t).transpose() * B.row(t);
    H.block(0, q + k, q, 1) = d2 * B.row(t).transpose();
    H.block(q + k, 0, 1, q) = d2 * B.row(t);
    H(q + k, q + k) = mode.eps_diag[k];
  }
  H.topLeftCorner(q, q) = Hzz;
  return H;
}

struct ThetaEvaluation {
  double log_value = 0.0;
  ModeResult mode;
};

inline ThetaEvaluation evaluate_theta(const ClusterData& data, const LatentModel& model,
                                      const HyperParams& theta, const LaplaceOptions& opt = {},
                                      const Eigen::VectorXd* warm_start = nullptr) {
  detail::InnerProblem prob(data, model, theta);
  ThetaEvaluation ev;
  ev.mode = find_mode(data, model, theta, opt, warm_start);
  const auto& Q = prob.prior();
  const auto& spec = model.spec();
  double loglik = prob.loglik_kernel(ev.mode.x_mode) +
                  log_likelihood_constant(data, spec.family, Q.obs_precision);
  double v = loglik - 0.5 * prob.quad_form(ev.mode.x_mode) + model.log_hyper_prior(theta) -
             0.5 * ev.mode.log_det_H + 0.5 * prob.dim() * kLog2Pi;
  if (!opt.drop_determinant_terms) v += 0.5 * Q.log_gdet - 0.5 * Q.rank * kLog2Pi;
  ev.log_value = v;
  return ev;
}

/// log[ pi(y|x,theta) pi(x|theta) pi(theta) / pi_G(x|theta,y) ] at the mode.
inline double log_marginal_given_theta(const ClusterData& data, const LatentModel& model,
                                       const HyperParams& theta, const LaplaceOptions& opt = {}) {
  return evaluate_theta(data, model, theta, opt).log_value;
}

inline double log_marginal_given_theta(const ClusterData& data, const ModelSpec& spec,
                                       const HyperParams& theta, const LaplaceOptions& opt = {}) {
  return log_marginal_given_theta(data, LatentModel(spec), theta, opt);
}

struct GridPoint {
  HyperParams theta;
  Eigen::VectorXd theta_vec;
  double log_f = 0.0;       ///< log_marginal_given_theta at this point
  double log_weight = 0.0;  ///< integration weight; total = logsumexp(log_f + log_weight)
  ModeResult mode;
};

struct MarginalResult {
  double log_marginal = 0.0;
  HyperParams theta_mode;
  std::vector<GridPoint> grid;
  bool fallback = false;  ///< Hessian over theta was not positive definite
  int optim_iters = 0;
};

/// log sum exp, ignoring terms more than 700 below the maximum.
inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v)
    if (x >= mx - 700.0) s += std::exp(x - mx);
  return mx + std::log(s);
}

namespace detail {

inline double std_normal_log_density(const Eigen::VectorXd& z) {
  return -0.5 * z.size() * kLog2Pi - 0.5 * z.squaredNorm();
}

struct Design {
  std::vector<Eigen::VectorXd> z;
  std::vector<double> log_w;  // weight relative to the standardized volume
};

// Product grid on [-2, 2]^d, normalized so a Gaussian integrand is exact.
inline Design product_grid(int d, int k) {
  Design out;
  if (k < 1) k = 1;
  Eigen::VectorXd axis = k == 1 ? Eigen::VectorXd(Eigen::VectorXd::Zero(1)) : Eigen::VectorXd(Eigen::VectorXd::LinSpaced(k, -2.0, 2.0));
  int total = 1;
  for (int i = 0; i < d; ++i) total *= k;
  std::vector<double> log_phi;
  for (int idx = 0; idx < total; ++idx) {
    Eigen::VectorXd z(d);
    int r = idx;
    for (int i = 0; i < d; ++i) {
      z[i] = axis[r % k];
      r /= k;
    }
    log_phi.push_back(std_normal_log_density(z));
    out.z.push_back(z);
  }
  double norm = log_sum_exp(log_phi);
  out.log_w.assign(out.z.size(), -norm);
  return out;
}

// Central composite design: centre, 2d axial and 2^d corner points on the
// sphere of radius f0 * sqrt(d), weighted to integrate 1 and z_k^2 exactly
// against the standard normal.
inline Design ccd(int d, double f0 = 1.1) {
  Design out;
  const double R = f0 * std::sqrt(static_cast<double>(d));
  out.z.push_back(Eigen::VectorXd::Zero(d));
  for (int k = 0; k < d; ++k)
    for (double s : {-1.0, 1.0}) {
      Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
      z[k] = s * R;
      out.z.push_back(z);
    }
  for (int mask = 0; mask < (1 << d); ++mask) {
    Eigen::VectorXd z(d);
    for (int k = 0; k < d; ++k) z[k] = ((mask >> k) & 1 ? 1.0 : -1.0) * R / std::sqrt(static_cast<double>(d));
    out.z.push_back(z);
  }
  const int n_outer = 2 * d + (1 << d);
  const double w1 = 1.0 / (2.0 * R * R + (1 << d) * R * R / d);
  const double w0 = 1.0 - n_outer * w1;
  for (std::size_t j = 0; j < out.z.size(); ++j) {
    double w = j == 0 ? w0 : w1;
    out.log_w.push_back(std::log(w) - std_normal_log_density(out.z[j]));
  }
  return out;
}

}  // namespace detail

/// Maximizes log pi(y, theta) over theta, then integrates it on a standardized grid.
inline MarginalResult integrate_hyperparameters(const ClusterData& data, const LatentModel& model,
                                                const LaplaceOptions& opt = {}) {
  const auto& slots = model.slots();
  const int d = static_cast<int>(slots.size());
  if (d > 3)
    throw Error(ErrorKind::UnsupportedHyperDimension,
                std::to_string(d) + " hyperparameters; at most 3 are supported");
  const auto& spec = model.spec();
  MarginalResult out;

  if (d == 0) {
    auto ev = evaluate_theta(data, model, HyperParams{}, opt);
    out.log_marginal = ev.log_value;
    out.grid.push_back({HyperParams{}, Eigen::VectorXd(), ev.log_value, 0.0, std::move(ev.mode)});
    return out;
  }

  Eigen::VectorXd x(d);
  for (int k = 0; k < d; ++k) x[k] = slots[k].initial;

  // Negative log posterior of theta; warm-started from the current base mode.
  Eigen::VectorXd warm;
  auto F = [&](const Eigen::VectorXd& th) -> double {
    try {
      auto ev = evaluate_theta(data, model, spec.unpack(th), opt, warm.size() ? &warm : nullptr);
      return std::isfinite(ev.log_value) ? -ev.log_value : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto base_eval = [&](const Eigen::VectorXd& th) -> double {
    try {
      auto ev = evaluate_theta(data, model, spec.unpack(th), opt, warm.size() ? &warm : nullptr);
      warm = ev.mode.x_mode;
      return -ev.log_value;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto gradient = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd g(d);
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd a = th, b = th;
      a[k] += opt.fd_step;
      b[k] -= opt.fd_step;
      g[k] = (F(a) - F(b)) / (2.0 * opt.fd_step);
    }
    return g;
  };

  double fx = base_eval(x);
  if (!std::isfinite(fx)) throw Error(ErrorKind::OptimFailed, "objective not finite at the initial theta");
  Eigen::VectorXd g = gradient(x);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(d, d);
  int it = 0;
  for (; it < opt.max_optim_iters; ++it) {
    if (!g.allFinite()) throw Error(ErrorKind::OptimFailed, "non-finite gradient");
    if (g.lpNorm<Eigen::Infinity>() < opt.optim_grad_tol) break;
    Eigen::VectorXd p = -Hinv * g;
    if (g.dot(p) >= 0) {
      Hinv.setIdentity();
      p = -g;
    }
    double pmax = p.lpNorm<Eigen::Infinity>();
    if (pmax > 5.0) p *= 5.0 / pmax;
    double alpha = 1.0, fn = F(x + p);
    int halvings = 0;
    while (!(fn <= fx + 1e-4 * alpha * g.dot(p)) && halvings < 40) {
      alpha *= 0.5;
      fn = F(x + alpha * p);
      ++halvings;
    }
    if (!(fn <= fx)) break;
    Eigen::VectorXd s = alpha * p;
    x += s;
    double prev = fx;
    fx = base_eval(x);
    Eigen::VectorXd gn = gradient(x);
    Eigen::VectorXd yv = gn - g;
    double ys = yv.dot(s);
    if (ys > 1e-12) {
      double rho = 1.0 / ys;
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
      Hinv = (I - rho * s * yv.transpose()) * Hinv * (I - rho * yv * s.transpose()) +
             rho * s * s.transpose();
    }
    g = gn;
    if (std::abs(prev - fx) < 1e-12 * std::max(1.0, std::abs(fx)) &&
        s.lpNorm<Eigen::Infinity>() < 1e-8)
      break;
  }
  out.optim_iters = it;
  out.theta_mode = spec.unpack(x);

  // Hessian of F at the mode.
  const double h = opt.hessian_step;
  Eigen::MatrixXd H(d, d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    H(i, i) = (F(a) - 2.0 * fx + F(b)) / (h * h);
    for (int j = 0; j < i; ++j) {
      Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      H(i, j) = H(j, i) = (F(pp) - F(pm) - F(mp) + F(mm)) / (4.0 * h * h);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const auto& lam = es.eigenvalues();

  if (!H.allFinite() || lam.minCoeff() <= 0.0) {
    out.fallback = true;
    double logdet = 0.0;
    for (Eigen::Index k = 0; k < lam.size(); ++k)
      logdet += std::log(std::max(std::isfinite(lam[k]) ? std::abs(lam[k]) : 1.0, 1e-8));
    auto ev = evaluate_theta(data, model, out.theta_mode, opt, &warm);
    double lw = 0.5 * d * kLog2Pi - 0.5 * logdet;
    out.log_marginal = ev.log_value + lw;
    out.grid.push_back({out.theta_mode, x, ev.log_value, lw, std::move(ev.mode)});
    return out;
  }

  // theta = mode + L z with L L' = H^{-1}.
  Eigen::MatrixXd L = es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
  const double log_det_L = -0.5 * lam.array().log().sum();
  detail::Design design;
  if (d <= 2) {
    int k = opt.grid_points_per_dim > 0 ? opt.grid_points_per_dim : (d == 1 ? 9 : 5);
    design = detail::product_grid(d, k);
  } else {
    design = detail::ccd(d);
  }

  std::vector<double> terms;
  Eigen::VectorXd centre_mode = warm;
  for (std::size_t j = 0; j < design.z.size(); ++j) {
    Eigen::VectorXd th = x + L * design.z[j];
    GridPoint gp;
    gp.theta = spec.unpack(th);
    gp.theta_vec = th;
    try {
      auto ev = evaluate_theta(data, model, gp.theta, opt, &centre_mode);
      gp.log_f = ev.log_value;
      gp.mode = std::move(ev.mode);
    } catch (const Error&) {
      continue;  // point carries no usable mass
    }
    gp.log_weight = design.log_w[j] + log_det_L;
    terms.push_back(gp.log_f + gp.log_weight);
    out.grid.push_back(std::move(gp));
  }
  if (out.grid.empty()) throw Error(ErrorKind::OptimFailed, "no grid point could be evaluated");
  out.log_marginal = log_sum_exp(terms);
  if (!std::isfinite(out.log_marginal)) throw Error(ErrorKind::OptimFailed, "non-finite log marginal");
  return out;
}

inline MarginalResult integrate_hyperparameters(const ClusterData& data, const ModelSpec& spec,
                                                const LaplaceOptions& opt = {}) {
  return integrate_hyperparameters(data, LatentModel(spec), opt);
}

/// Pointwise posterior summaries of h(t) and exp(h(t)).
struct LatentSummary {
  Eigen::VectorXd h_mean, h_q05, h_q95;
  Eigen::VectorXd rr_mean, rr_q05, rr_q95;
  int n_samples = 0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double p) {
  double pos = p * (v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double f = pos - lo;
  return (1 - f) * v[lo] + f * v[hi];
}

}  // namespace detail

/// Draws theta_j with probability proportional to its grid mass, then the
/// curve coefficients from the Gaussian approximation at theta_j.
inline LatentSummary conditional_posterior(const LatentModel& model, const MarginalResult& result,
                                           int n_samples, Rng& rng) {
  if (n_samples < 1) throw Error(ErrorKind::InvalidConfig, "n_samples must be positive");
  const int T = model.T();
  const int q = model.h_dim();
  std::vector<double> lw;
  for (const auto& gp : result.grid) lw.push_back(gp.log_f + gp.log_weight);
  double norm = log_sum_exp(lw);
  std::vector<double> p;
  for (double v : lw) p.push_back(std::exp(v - norm));
  std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
  for (const auto& gp : result.grid) chol.emplace_back(gp.mode.schur);

  Eigen::MatrixXd draws(n_samples, T);
  for (int s = 0; s < n_samples; ++s) {
    std::size_t j = result.grid.size() == 1 ? 0 : pick(rng);
    Eigen::VectorXd u(q);
    for (int k = 0; k < q; ++k) u[k] = normal(rng);
    // z ~ N(z_mode, S^{-1}) with S = L L': z = z_mode + L^{-T} u
    Eigen::VectorXd z = result.grid[j].mode.x_mode.head(q) +
                        chol[j].matrixU().solve(u);
    draws.row(s) = (model.design() * z).transpose();
  }

  LatentSummary out;
  out.n_samples = n_samples;
  for (auto* v : {&out.h_mean, &out.h_q05, &out.h_q95, &out.rr_mean, &out.rr_q05, &out.rr_q95})
    v->resize(T);
  std::vector<double> col(n_samples);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < n_samples; ++s) col[s] = draws(s, t);
    std::sort(col.begin(), col.end());
    out.h_mean[t] = draws.col(t).mean();
    out.h_q05[t] = detail::quantile_sorted(col, 0.05);
    out.h_q95[t] = detail::quantile_sorted(col, 0.95);
    out.rr_mean[t] = draws.col(t).array().exp().mean();
    out.rr_q05[t] = std::exp(out.h_q05[t]);
    out.rr_q95[t] = std::exp(out.h_q95[t]);
  }
  return out;
}

}  // namespace spfc
