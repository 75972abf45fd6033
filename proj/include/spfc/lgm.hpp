#pragma once

// Within-cluster latent Gaussian models.
//
// The latent vector of a cluster with m regions observed at T times is
//
//   x = [ z ; eps ],   z = coefficients of the shared curve h(t) = B z,
//                      eps = per-observation error terms (region-major, m*T),
//
// so eta(i,t) = B.row(t) * z + eps(i,t). The prior precision is block
// diagonal: a dense q x q block for z and tau * I for eps. Rank-deficient
// blocks (rw1, seasonal) keep their generalized determinant.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "spfc/error.hpp"

namespace spfc {

inline constexpr double kLog2Pi = 1.8378770664093454836;

enum class Family { Gaussian, Poisson };
enum class Link { Identity, Log };
enum class ComponentKind { Intercept, FixedEffects, Iid, Rw1, Ar1, Seasonal };

inline const char* to_string(Family f) { return f == Family::Gaussian ? "gaussian" : "poisson"; }

inline Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::Gaussian;
  if (s == "poisson") return Family::Poisson;
  throw Error(ErrorKind::InvalidConfig, "unknown family '" + s + "'");
}

inline Link canonical_link(Family f) { return f == Family::Gaussian ? Link::Identity : Link::Log; }

inline const char* to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::Intercept: return "intercept";
    case ComponentKind::FixedEffects: return "fixed_effects";
    case ComponentKind::Iid: return "iid";
    case ComponentKind::Rw1: return "rw1";
    case ComponentKind::Ar1: return "ar1";
    case ComponentKind::Seasonal: return "seasonal";
  }
  return "?";
}

inline ComponentKind component_from_string(const std::string& s) {
  for (auto k : {ComponentKind::Intercept, ComponentKind::FixedEffects, ComponentKind::Iid,
                 ComponentKind::Rw1, ComponentKind::Ar1, ComponentKind::Seasonal})
    if (s == to_string(k)) return k;
  throw Error(ErrorKind::InvalidConfig, "unknown latent component '" + s + "'");
}

/// Prior density on the internal (transformed) scale of one hyperparameter.
struct PriorSpec {
  enum class Kind { LogGamma, Normal };
  Kind kind = Kind::LogGamma;
  double a = 1.0;  ///< LogGamma shape, or Normal mean
  double b = 5e-5; ///< LogGamma rate, or Normal precision

  static PriorSpec loggamma(double shape, double rate) { return {Kind::LogGamma, shape, rate}; }
  static PriorSpec normal(double mean, double precision) { return {Kind::Normal, mean, precision}; }

  /// LogGamma(a, b) is the law of log(X) for X ~ Gamma(a, rate b), so the
  /// change-of-variables Jacobian is already part of the density.
  double log_density(double x) const {
    if (kind == Kind::LogGamma) return a * std::log(b) - std::lgamma(a) + a * x - b * std::exp(x);
    return 0.5 * std::log(b) - 0.5 * kLog2Pi - 0.5 * b * (x - a) * (x - a);
  }
};

struct HyperSlot {
  std::string name;
  PriorSpec prior;
  double initial = 4.0;
};

struct LatentComponent {
  ComponentKind kind = ComponentKind::Intercept;
  int period = 0;  ///< seasonal only
  /// Prior per hyper slot, in slot order (precision first, then rho for ar1).
  std::vector<PriorSpec> priors;

  std::vector<std::string> hyper_slots() const {
    std::string k = to_string(kind);
    switch (kind) {
      case ComponentKind::Intercept:
      case ComponentKind::FixedEffects: return {};
      case ComponentKind::Ar1: return {k + ".precision", k + ".rho"};
      default: return {k + ".precision"};
    }
  }
};

/// Hyperparameter values keyed by slot name, on the internal scale
/// (log for precisions, log((1+rho)/(1-rho)) for the AR1 correlation).
class HyperParams {
 public:
  HyperParams() = default;
  HyperParams(std::initializer_list<std::pair<const std::string, double>> init) : values_(init) {}

  void set(const std::string& name, double v) { values_[name] = v; }
  bool has(const std::string& name) const { return values_.count(name) > 0; }
  double get(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw Error(ErrorKind::UnboundHyper, name);
    return it->second;
  }
  const std::map<std::string, double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::map<std::string, double> values_;
};

inline double rho_from_internal(double theta) { return std::tanh(0.5 * theta); }
inline double rho_to_internal(double rho) { return std::log((1.0 + rho) / (1.0 - rho)); }

struct ModelSpec {
  Family family = Family::Poisson;
  int T = 0;
  std::vector<LatentComponent> components;
  bool has_error_term = false;
  PriorSpec error_prior = PriorSpec::loggamma(1.0, 5e-5);
  /// Observation precision prior (gaussian family only).
  PriorSpec obs_prior = PriorSpec::loggamma(1.0, 5e-5);
  /// T x p fixed-effect regressors; used when a FixedEffects component is present.
  Eigen::MatrixXd covariate_basis;
  /// Prior precision of intercept and fixed effects.
  double fixed_precision = 0.001;
  /// Sum-to-zero constraint on rw1/seasonal blocks when an intercept is present.
  bool sum_to_zero = true;
  /// Initial internal-scale values used by the hyperparameter optimizer.
  std::map<std::string, double> initial_theta;

  Link link() const { return canonical_link(family); }

  bool has_component(ComponentKind k) const {
    for (const auto& c : components)
      if (c.kind == k) return true;
    return false;
  }

  std::vector<HyperSlot> hyper_slots() const {
    std::vector<HyperSlot> out;
    auto initial_for = [&](const std::string& name, double fallback) {
      auto it = initial_theta.find(name);
      return it == initial_theta.end() ? fallback : it->second;
    };
    for (const auto& c : components) {
      auto names = c.hyper_slots();
      for (std::size_t s = 0; s < names.size(); ++s) {
        PriorSpec prior = s < c.priors.size() ? c.priors[s]
                          : (c.kind == ComponentKind::Ar1 && s == 1) ? PriorSpec::normal(0.0, 0.15)
                                                                     : PriorSpec::loggamma(1.0, 5e-5);
        double init = (c.kind == ComponentKind::Ar1 && s == 1) ? 0.0 : 4.0;
        out.push_back({names[s], prior, initial_for(names[s], init)});
      }
    }
    if (has_error_term) out.push_back({"error.precision", error_prior, initial_for("error.precision", 4.0)});
    if (family == Family::Gaussian)
      out.push_back({"obs.precision", obs_prior, initial_for("obs.precision", 4.0)});
    return out;
  }

  void validate() const {
    if (T < 1) throw Error(ErrorKind::InvalidConfig, "T must be positive");
    std::map<ComponentKind, int> seen;
    for (const auto& c : components) {
      if (++seen[c.kind] > 1)
        throw Error(ErrorKind::InvalidConfig, std::string("duplicate component ") + to_string(c.kind));
      if (c.kind == ComponentKind::Seasonal) {
        if (c.period < 2) throw Error(ErrorKind::InvalidConfig, "seasonal period must be >= 2");
        if (c.period > T) throw Error(ErrorKind::PeriodTooLarge, "seasonal period exceeds T");
      }
      if ((c.kind == ComponentKind::Rw1 || c.kind == ComponentKind::Ar1) && T < 2)
        throw Error(ErrorKind::InvalidConfig, "rw1/ar1 need T >= 2");
      if (c.kind == ComponentKind::FixedEffects && covariate_basis.rows() != T)
        throw Error(ErrorKind::ShapeMismatch, "covariate basis must have T rows");
    }
    if (!(fixed_precision > 0)) throw Error(ErrorKind::InvalidConfig, "fixed_precision must be > 0");
  }

  /// Packs theta into slot order.
  Eigen::VectorXd pack(const HyperParams& theta) const {
    auto slots = hyper_slots();
    Eigen::VectorXd v(slots.size());
    for (std::size_t k = 0; k < slots.size(); ++k) v[k] = theta.get(slots[k].name);
    return v;
  }

  HyperParams unpack(const Eigen::VectorXd& v) const {
    auto slots = hyper_slots();
    if (static_cast<std::size_t>(v.size()) != slots.size())
      throw Error(ErrorKind::ShapeMismatch, "hyperparameter vector has wrong length");
    HyperParams h;
    for (std::size_t k = 0; k < slots.size(); ++k) h.set(slots[k].name, v[k]);
    return h;
  }
};

/// Observations of one cluster: rows are member regions, columns times.
struct ClusterData {
  Eigen::MatrixXd y;
  Eigen::MatrixXd offset;
  std::vector<int> region_indices;

  int n_regions() const { return static_cast<int>(y.rows()); }
  int T() const { return static_cast<int>(y.cols()); }
};

/// Structure matrix of an intrinsic or unit-precision block, with its rank
/// and the log generalized determinant (sum of log nonzero eigenvalues).
struct PrecisionStructure {
  Eigen::MatrixXd matrix;
  int rank = 0;
  double log_gdet_structure = 0.0;

  Eigen::SparseMatrix<double> sparse() const { return matrix.sparseView(1e-300, 1.0); }
};

namespace detail {

inline Eigen::MatrixXd rw1_structure(int T) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(T - 1, T);
  for (int t = 0; t + 1 < T; ++t) {
    D(t, t) = -1.0;
    D(t, t + 1) = 1.0;
  }
  return D.transpose() * D;
}

inline Eigen::MatrixXd seasonal_structure(int T, int m) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(T - m + 1, T);
  for (int t = 0; t + m <= T; ++t) A.block(t, t, 1, m).setOnes();
  return A.transpose() * A;
}

// Rank and log generalized determinant from the eigenvalues of a PSD matrix.
inline std::pair<int, double> gdet(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  double top = ev.cwiseAbs().maxCoeff();
  int rank = 0;
  double logdet = 0.0;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] > 1e-9 * std::max(1.0, top)) {
      ++rank;
      logdet += std::log(ev[k]);
    }
  }
  return {rank, logdet};
}

// Orthonormal basis of the complement of the constant vector (Helmert).
inline Eigen::MatrixXd sum_to_zero_basis(int T) {
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(T, T - 1);
  for (int k = 1; k < T; ++k) {
    double s = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) V(i, k - 1) = s;
    V(k, k - 1) = -k * s;
  }
  return V;
}

struct ScaledBlockInfo {
  Eigen::MatrixXd basis;      // T x dim, maps block coefficients to f(t)
  Eigen::MatrixXd structure;  // dim x dim unit-precision structure
  int rank = 0;
  double log_gdet = 0.0;
};

// Read-mostly cache keyed by (kind, T, period, constrained).
inline const ScaledBlockInfo& scaled_block(ComponentKind kind, int T, int m, bool constrained) {
  using Key = std::tuple<int, int, int, bool>;
  static std::mutex mu;
  static std::map<Key, std::unique_ptr<ScaledBlockInfo>> cache;
  Key key{static_cast<int>(kind), T, m, constrained};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;

  Eigen::MatrixXd S;
  switch (kind) {
    case ComponentKind::Iid: S = Eigen::MatrixXd::Identity(T, T); break;
    case ComponentKind::Rw1: S = rw1_structure(T); break;
    case ComponentKind::Seasonal: S = seasonal_structure(T, m); break;
    default: throw Error(ErrorKind::InvalidConfig, "not a scaled block kind");
  }
  auto info = std::make_unique<ScaledBlockInfo>();
  if (constrained) {
    info->basis = sum_to_zero_basis(T);
    info->structure = info->basis.transpose() * S * info->basis;
  } else {
    info->basis = Eigen::MatrixXd::Identity(T, T);
    info->structure = S;
  }
  std::tie(info->rank, info->log_gdet) = gdet(info->structure);
  return *cache.emplace(key, std::move(info)).first->second;
}

}  // namespace detail

/// Unit-precision structure matrix of an rw1, seasonal(m) or iid block.
inline PrecisionStructure structure_matrix(ComponentKind kind, int T, int period = 0) {
  if (T < 2 && kind != ComponentKind::Iid) throw Error(ErrorKind::InvalidConfig, "T must be >= 2");
  if (kind == ComponentKind::Seasonal && (period < 2 || period > T))
    throw Error(ErrorKind::PeriodTooLarge, "seasonal period must lie in [2, T]");
  if (kind == ComponentKind::Ar1)
    throw Error(ErrorKind::InvalidConfig, "ar1 precision depends on rho; use ar1_precision");
  const auto& info = detail::scaled_block(kind, T, period, false);
  return {info.structure, info.rank, info.log_gdet};
}

/// Precision of a stationary AR1 with innovation precision v and correlation rho.
inline PrecisionStructure ar1_precision(int T, double v, double rho) {
  if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::NonStationaryRho, "|rho| must be < 1");
  if (!(v > 0.0)) throw Error(ErrorKind::InvalidConfig, "ar1 precision must be > 0");
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(T, T);
  for (int t = 0; t < T; ++t) Q(t, t) = (t == 0 || t == T - 1) ? v : v * (1.0 + rho * rho);
  if (T == 1) Q(0, 0) = v * (1.0 - rho * rho);
  for (int t = 0; t + 1 < T; ++t) Q(t, t + 1) = Q(t + 1, t) = -v * rho;
  return {Q, T, T * std::log(v) + std::log1p(-rho * rho)};
}

/// Block-diagonal prior precision of the full latent vector of one cluster.
struct JointPrecision {
  Eigen::MatrixXd h_block;    ///< q x q precision of the curve coefficients z
  double eps_precision = 0.0; ///< precision of each error term (0 when absent)
  int eps_dim = 0;
  int rank = 0;
  double log_gdet = 0.0;
  double obs_precision = 0.0; ///< gaussian observation precision (0 for poisson)

  int dim() const { return static_cast<int>(h_block.rows()) + eps_dim; }

  Eigen::SparseMatrix<double> full() const {
    const int q = static_cast<int>(h_block.rows());
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j)
        if (h_block(i, j) != 0.0) trip.emplace_back(i, j, h_block(i, j));
    for (int k = 0; k < eps_dim; ++k) trip.emplace_back(q + k, q + k, eps_precision);
    Eigen::SparseMatrix<double> Q(dim(), dim());
    Q.setFromTriplets(trip.begin(), trip.end());
    return Q;
  }
};

/// Precomputed layout of a ModelSpec: block offsets and the T x q design B.
class LatentModel {
 public:
  struct Block {
    ComponentKind kind;
    int offset = 0;
    int dim = 0;
    const detail::ScaledBlockInfo* scaled = nullptr;
  };

  explicit LatentModel(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    slots_ = spec_.hyper_slots();
    const int T = spec_.T;
    const bool constrain = spec_.sum_to_zero && spec_.has_component(ComponentKind::Intercept);
    std::vector<Eigen::MatrixXd> cols;
    int offset = 0;
    for (const auto& c : spec_.components) {
      Block b{c.kind, offset, 0, nullptr};
      Eigen::MatrixXd basis;
      switch (c.kind) {
        case ComponentKind::Intercept: basis = Eigen::MatrixXd::Ones(T, 1); break;
        case ComponentKind::FixedEffects: basis = spec_.covariate_basis; break;
        case ComponentKind::Ar1: basis = Eigen::MatrixXd::Identity(T, T); break;
        case ComponentKind::Iid:
          b.scaled = &detail::scaled_block(c.kind, T, 0, false);
          basis = b.scaled->basis;
          break;
        case ComponentKind::Rw1:
        case ComponentKind::Seasonal:
          b.scaled = &detail::scaled_block(c.kind, T, c.period, constrain);
          basis = b.scaled->basis;
          break;
      }
      b.dim = static_cast<int>(basis.cols());
      offset += b.dim;
      blocks_.push_back(b);
      cols.push_back(std::move(basis));
    }
    design_.resize(T, offset);
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      design_.middleCols(blocks_[k].offset, blocks_[k].dim) = cols[k];
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<HyperSlot>& slots() const { return slots_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  int T() const { return spec_.T; }
  int h_dim() const { return static_cast<int>(design_.cols()); }
  /// Maps curve coefficients z to h(t) on the time grid.
  const Eigen::MatrixXd& design() const { return design_; }
  int latent_dim(int cluster_size) const {
    return h_dim() + (spec_.has_error_term ? cluster_size * spec_.T : 0);
  }

  JointPrecision prior(const HyperParams& theta, int cluster_size) const {
    JointPrecision out;
    const int q = h_dim();
    out.h_block = Eigen::MatrixXd::Zero(q, q);
    const double kappa = spec_.fixed_precision;
    for (const auto& b : blocks_) {
      auto blk = out.h_block.block(b.offset, b.offset, b.dim, b.dim);
      switch (b.kind) {
        case ComponentKind::Intercept:
        case ComponentKind::FixedEffects:
          blk.diagonal().setConstant(kappa);
          out.rank += b.dim;
          out.log_gdet += b.dim * std::log(kappa);
          break;
        case ComponentKind::Iid:
        case ComponentKind::Rw1:
        case ComponentKind::Seasonal: {
          double log_nu = theta.get(std::string(to_string(b.kind)) + ".precision");
          blk = std::exp(log_nu) * b.scaled->structure;
          out.rank += b.scaled->rank;
          out.log_gdet += b.scaled->rank * log_nu + b.scaled->log_gdet;
          break;
        }
        case ComponentKind::Ar1: {
          double marginal = std::exp(theta.get("ar1.precision"));
          double rho = rho_from_internal(theta.get("ar1.rho"));
          auto ps = ar1_precision(b.dim, marginal / (1.0 - rho * rho), rho);
          blk = ps.matrix;
          out.rank += ps.rank;
          out.log_gdet += ps.log_gdet_structure;
          break;
        }
      }
    }
    if (spec_.has_error_term) {
      double log_tau = theta.get("error.precision");
      out.eps_precision = std::exp(log_tau);
      out.eps_dim = cluster_size * spec_.T;
      out.rank += out.eps_dim;
      out.log_gdet += out.eps_dim * log_tau;
    }
    if (spec_.family == Family::Gaussian) out.obs_precision = std::exp(theta.get("obs.precision"));
    return out;
  }

  double log_hyper_prior(const HyperParams& theta) const {
    double s = 0.0;
    for (const auto& slot : slots_) s += slot.prior.log_density(theta.get(slot.name));
    return s;
  }

 private:
  ModelSpec spec_;
  std::vector<HyperSlot> slots_;
  std::vector<Block> blocks_;
  Eigen::MatrixXd design_;
};

inline JointPrecision assemble_joint_precision(const ModelSpec& spec, const HyperParams& theta,
                                               int cluster_size) {
  return LatentModel(spec).prior(theta, cluster_size);
}

inline double log_hyper_prior(const HyperParams& theta, const ModelSpec& spec) {
  double s = 0.0;
  for (const auto& slot : spec.hyper_slots()) s += slot.prior.log_density(theta.get(slot.name));
  return s;
}

/// x = [z ; eps] -> eta (regions x T), and its adjoint.
class DesignMap {
 public:
  DesignMap(const LatentModel& model, int cluster_size)
      : B_(&model.design()), m_(cluster_size), T_(model.T()),
        eps_(model.spec().has_error_term) {}

  int input_dim() const { return static_cast<int>(B_->cols()) + (eps_ ? m_ * T_ : 0); }

  Eigen::MatrixXd apply(const Eigen::VectorXd& x) const {
    const int q = static_cast<int>(B_->cols());
    Eigen::VectorXd h = (*B_) * x.head(q);
    Eigen::MatrixXd eta = h.transpose().replicate(m_, 1);
    if (eps_)
      eta += Eigen::Map<const Eigen::MatrixXd>(x.data() + q, T_, m_).transpose();
    return eta;
  }

  Eigen::VectorXd apply_transpose(const Eigen::MatrixXd& u) const {
    const int q = static_cast<int>(B_->cols());
    Eigen::VectorXd out(input_dim());
    out.head(q) = B_->transpose() * u.colwise().sum().transpose();
    if (eps_) {
      Eigen::MatrixXd ut = u.transpose();  // T x m, column i is region i
      out.tail(m_ * T_) = Eigen::Map<const Eigen::VectorXd>(ut.data(), m_ * T_);
    }
    return out;
  }

 private:
  const Eigen::MatrixXd* B_;
  int m_;
  int T_;
  bool eps_;
};

inline DesignMap design_map(const LatentModel& model, int cluster_size) {
  return DesignMap(model, cluster_size);
}

struct LikelihoodTerms {
  double loglik = 0.0;
  Eigen::MatrixXd d1;  ///< d loglik / d eta
  Eigen::MatrixXd d2;  ///< -d^2 loglik / d eta^2
};

/// Sum of log y! (poisson) or the gaussian normalizer, independent of eta.
inline double log_likelihood_constant(const ClusterData& data, Family family,
                                      double obs_precision = 0.0) {
  if (family == Family::Poisson) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < data.y.size(); ++k) s -= std::lgamma(data.y.data()[k] + 1.0);
    return s;
  }
  return 0.5 * static_cast<double>(data.y.size()) * (std::log(obs_precision) - kLog2Pi);
}

namespace detail {

// Likelihood without the eta-independent constant.
inline double loglik_kernel(const ClusterData& data, const Eigen::MatrixXd& eta, Family family,
                            double obs_precision, Eigen::MatrixXd* d1, Eigen::MatrixXd* d2) {
  if (family == Family::Poisson) {
    Eigen::ArrayXXd lin = data.offset.array() + eta.array();
    Eigen::ArrayXXd mu = lin.exp();
    if (d1) *d1 = (data.y.array() - mu).matrix();
    if (d2) *d2 = mu.matrix();
    return (data.y.array() * lin - mu).sum();
  }
  Eigen::ArrayXXd r = data.y.array() - data.offset.array() - eta.array();
  if (d1) *d1 = (obs_precision * r).matrix();
  if (d2) *d2 = Eigen::MatrixXd::Constant(eta.rows(), eta.cols(), obs_precision);
  return -0.5 * obs_precision * r.square().sum();
}

}  // namespace detail

inline void validate_cluster_data(const ClusterData& data, Family family) {
  if (data.offset.rows() != data.y.rows() || data.offset.cols() != data.y.cols())
    throw Error(ErrorKind::ShapeMismatch, "offset shape differs from y");
  if (!data.offset.allFinite()) throw Error(ErrorKind::ShapeMismatch, "non-finite offsets");
  if (!data.y.allFinite()) throw Error(ErrorKind::MissingCell, "non-finite observations");
  if (family == Family::Poisson) {
    for (Eigen::Index k = 0; k < data.y.size(); ++k) {
      double v = data.y.data()[k];
      if (v < 0) throw Error(ErrorKind::NegativeCount, "negative count " + std::to_string(v));
      if (v != std::floor(v)) throw Error(ErrorKind::NonIntegerCount, std::to_string(v));
    }
  }
}

inline LikelihoodTerms log_likelihood_terms(const ClusterData& data, const Eigen::MatrixXd& eta,
                                            Family family, double obs_precision = 1.0) {
  if (eta.rows() != data.y.rows() || eta.cols() != data.y.cols())
    throw Error(ErrorKind::ShapeMismatch, "eta shape differs from y");
  validate_cluster_data(data, family);
  LikelihoodTerms out;
  out.loglik = detail::loglik_kernel(data, eta, family, obs_precision, &out.d1, &out.d2) +
               log_likelihood_constant(data, family, obs_precision);
  return out;
}

}  // namespace spfc
