#pragma once

// Synthetic spatio-temporal panels: a Delaunay-adjacency lattice on the unit
// square, a contiguous true partition, per-cluster latent curves and
// Gaussian or Poisson observations.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <map>
#include <cmath>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "spfc/basis.hpp"
#include "spfc/graph.hpp"
#include "spfc/lgm.hpp"
#include "spfc/moves.hpp"

namespace spfc {

struct Point {
  double x = 0.0, y = 0.0;
};

namespace detail {

struct Triangle {
  std::array<int, 3> v;
  double cx, cy, r2;  // circumcircle
};

inline Triangle make_triangle(const std::vector<Point>& p, int a, int b, int c) {
  const Point &A = p[a], &B = p[b], &C = p[c];
  double d = 2.0 * (A.x * (B.y - C.y) + B.x * (C.y - A.y) + C.x * (A.y - B.y));
  double a2 = A.x * A.x + A.y * A.y, b2 = B.x * B.x + B.y * B.y, c2 = C.x * C.x + C.y * C.y;
  double ux = (a2 * (B.y - C.y) + b2 * (C.y - A.y) + c2 * (A.y - B.y)) / d;
  double uy = (a2 * (C.x - B.x) + b2 * (A.x - C.x) + c2 * (B.x - A.x)) / d;
  return {{a, b, c}, ux, uy, (A.x - ux) * (A.x - ux) + (A.y - uy) * (A.y - uy)};
}

}  // namespace detail

/// Bowyer-Watson Delaunay triangulation; returns the unique triangle edges.
/// Points on a circumcircle do not invalidate a triangle, so cocircular
/// configurations resolve by insertion order.
inline std::vector<std::pair<int, int>> delaunay_edges(const std::vector<Point>& pts) {
  const int n = static_cast<int>(pts.size());
  std::vector<Point> p = pts;
  double minx = p[0].x, maxx = p[0].x, miny = p[0].y, maxy = p[0].y;
  for (const auto& q : pts) {
    minx = std::min(minx, q.x), maxx = std::max(maxx, q.x);
    miny = std::min(miny, q.y), maxy = std::max(maxy, q.y);
  }
  const double span = std::max({maxx - minx, maxy - miny, 1e-12});
  const double mx = 0.5 * (minx + maxx), my = 0.5 * (miny + maxy);
  p.push_back({mx - 100 * span, my - 100 * span});
  p.push_back({mx + 100 * span, my - 100 * span});
  p.push_back({mx, my + 100 * span});
  std::vector<detail::Triangle> tris{detail::make_triangle(p, n, n + 1, n + 2)};

  for (int i = 0; i < n; ++i) {
    const Point& P = p[i];
    std::vector<detail::Triangle> keep;
    std::map<std::pair<int, int>, int> boundary;
    for (const auto& t : tris) {
      double dx = P.x - t.cx, dy = P.y - t.cy;
      if (dx * dx + dy * dy < t.r2 * (1.0 - 1e-12)) {
        for (int k = 0; k < 3; ++k) {
          int a = t.v[k], b = t.v[(k + 1) % 3];
          ++boundary[{std::min(a, b), std::max(a, b)}];
        }
      } else {
        keep.push_back(t);
      }
    }
    for (const auto& [e, count] : boundary)
      if (count == 1) keep.push_back(detail::make_triangle(p, e.first, e.second, i));
    tris = std::move(keep);
  }

  std::set<std::pair<int, int>> edges;
  for (const auto& t : tris)
    for (int k = 0; k < 3; ++k) {
      int a = t.v[k], b = t.v[(k + 1) % 3];
      if (a < n && b < n) edges.insert({std::min(a, b), std::max(a, b)});
    }
  return {edges.begin(), edges.end()};
}

struct Lattice {
  std::shared_ptr<const SpatialGraph> graph;
  std::vector<Point> centroids;
};

/// n uniform sites in the unit square joined by Voronoi (Delaunay-dual)
/// adjacency. Redraws the sites in the unlikely case the result is invalid.
inline Lattice voronoi_lattice(int n, Rng& rng) {
  if (n < 4) throw Error(ErrorKind::InvalidConfig, "lattice needs at least 4 regions");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0;; ++attempt) {
    std::vector<Point> pts(n);
    for (auto& q : pts) q = {unif(rng), unif(rng)};
    try {
      auto g = std::make_shared<const SpatialGraph>(build_graph(n, delaunay_edges(pts)));
      return {g, pts};
    } catch (const Error&) {
      if (attempt > 100) throw;
    }
  }
}

inline Lattice voronoi_lattice(int n, std::uint64_t seed) {
  Rng rng(seed);
  return voronoi_lattice(n, rng);
}

/// Random-weight MST with C - 1 tree edges removed uniformly at random.
inline Partition true_partition_from_mst(std::shared_ptr<const SpatialGraph> graph, int C, Rng& rng) {
  if (C < 1 || C > graph->n_regions()) throw Error(ErrorKind::InvalidConfig, "C must lie in [1, n]");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> w(graph->n_edges());
  for (auto& v : w) v = unif(rng);
  SpanningTree tree = minimum_spanning_tree(graph, EdgeWeights(w));
  std::vector<Edge> edges = tree.edges();
  std::shuffle(edges.begin(), edges.end(), rng);
  edges.resize(C - 1);
  return derive_partition(tree, std::move(edges));
}

/// A partition realising a given contiguous membership, with a random tree
/// compatible with it.
inline Partition partition_from_membership(std::shared_ptr<const SpatialGraph> graph,
                                           const Membership& m, Rng& rng) {
  if (static_cast<int>(m.size()) != graph->n_regions())
    throw Error(ErrorKind::ShapeMismatch, "membership length differs from region count");
  if (!clusters_connected(*graph, m))
    throw Error(ErrorKind::InvalidConfig, "membership has a non-contiguous cluster");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> w(graph->n_edges());
  const auto& edges = graph->edges();
  for (std::size_t k = 0; k < edges.size(); ++k)
    w[k] = unif(rng) + (m[edges[k].u] == m[edges[k].v] ? 0.0 : 1.0);
  SpanningTree tree = minimum_spanning_tree(graph, EdgeWeights(w));
  std::vector<Edge> cut;
  for (const auto& e : tree.edges())
    if (m[e.u] != m[e.v]) cut.push_back(e);
  return derive_partition(tree, std::move(cut));
}

enum class LatentKind { Polynomial, BSpline };

inline const char* to_string(LatentKind k) { return k == LatentKind::Polynomial ? "polynomial" : "bspline"; }

struct ClusterParams {
  std::vector<double> beta;
  double tau = 0.0;  ///< noise standard deviation
  double ar1 = 0.0, ar2 = 0.0;  ///< AR2 coefficients for spline weights
};

enum class TruthKind { RandomMst, Imbalanced };

struct ScenarioSpec {
  std::string name;
  int n_regions = 100;
  int T = 100;
  int true_C = 10;
  LatentKind latent = LatentKind::Polynomial;
  Family family = Family::Gaussian;
  std::vector<ClusterParams> clusters;
  double population_log_mean = 10.0;
  double population_log_var = 0.3;
  std::uint64_t seed = 1;
  TruthKind truth = TruthKind::RandomMst;
  /// Cluster sizes for the imbalanced truth: the third cluster sits inside
  /// the first, the second and fifth touch.
  std::vector<int> cluster_sizes;
  int n_basis = 16;
  /// Marginal standard deviation of the spline weights.
  double spline_weight_sd = 0.5;

  void validate() const {
    if (static_cast<int>(clusters.size()) != true_C)
      throw Error(ErrorKind::InvalidConfig, "scenario needs one parameter set per cluster");
    for (const auto& c : clusters)
      if (!(c.tau >= 0.0)) throw Error(ErrorKind::InvalidConfig, "tau must be non-negative");
    if (truth == TruthKind::Imbalanced) {
      int total = 0;
      for (int s : cluster_sizes) total += s;
      if (static_cast<int>(cluster_sizes.size()) != true_C || true_C != 5 || total != n_regions)
        throw Error(ErrorKind::InvalidConfig, "imbalanced truth needs 5 sizes summing to n");
    }
  }
};

namespace detail {

// Stream derived from the scenario seed so each stage is independently seeded.
inline Rng substream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

// Grows a connected set of `size` regions from `seed` inside `allowed`.
inline std::vector<int> grow_region(const SpatialGraph& g, int start, int size,
                                    const std::vector<bool>& allowed, Rng& rng) {
  std::vector<int> out{start};
  std::vector<bool> in(g.n_regions(), false);
  in[start] = true;
  while (static_cast<int>(out.size()) < size) {
    std::vector<int> frontier;
    for (int r : out)
      for (int nb : g.neighbors(r))
        if (allowed[nb] && !in[nb]) frontier.push_back(nb);
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
    if (frontier.empty()) return {};
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    int r = frontier[pick(rng)];
    in[r] = true;
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

/// Five clusters with the given sizes: cluster 2 (0-based) lies wholly inside
/// cluster 0, clusters 1 and 4 are adjacent, all clusters contiguous.
inline Membership imbalanced_membership(const Lattice& lat, const std::vector<int>& sizes, Rng& rng) {
  const SpatialGraph& g = *lat.graph;
  const int n = g.n_regions();
  std::uniform_int_distribution<int> any(0, n - 1);
  for (int attempt = 0; attempt < 20000; ++attempt) {
    Membership m(n, -1);
    std::vector<bool> free(n, true);
    // inner cluster away from the boundary of the square
    int start = any(rng);
    const Point& c = lat.centroids[start];
    if (std::min({c.x, c.y, 1.0 - c.x, 1.0 - c.y}) < 0.2) continue;
    auto inner = detail::grow_region(g, start, sizes[2], free, rng);
    if (inner.empty()) continue;
    for (int r : inner) m[r] = 2, free[r] = false;
    std::vector<bool> ring(n, false);
    for (int r : inner)
      for (int nb : g.neighbors(r))
        if (m[nb] != 2) ring[nb] = true;
    std::vector<bool> allowed(n);
    for (int r = 0; r < n; ++r) allowed[r] = free[r] && !ring[r];

    bool ok = true;
    for (int k : {3, 1}) {
      int s = any(rng);
      if (!allowed[s]) {
        ok = false;
        break;
      }
      auto grown = detail::grow_region(g, s, sizes[k], allowed, rng);
      if (grown.empty()) {
        ok = false;
        break;
      }
      for (int r : grown) m[r] = k, allowed[r] = false;
    }
    if (!ok) continue;
    std::vector<int> touching;
    for (int r = 0; r < n; ++r)
      if (m[r] == 1)
        for (int nb : g.neighbors(r))
          if (allowed[nb]) touching.push_back(nb);
    if (touching.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, touching.size() - 1);
    auto fifth = detail::grow_region(g, touching[pick(rng)], sizes[4], allowed, rng);
    if (fifth.empty()) continue;
    for (int r : fifth) m[r] = 4;
    for (int r = 0; r < n; ++r)
      if (m[r] == -1) m[r] = 0;
    if (clusters_connected(g, m)) return m;
  }
  throw Error(ErrorKind::InvalidConfig, "could not construct the imbalanced partition");
}

/// Stationary AR2 draws, rescaled to the requested marginal standard deviation.
inline Eigen::VectorXd ar2_series(int length, double phi1, double phi2, double marginal_sd, Rng& rng,
                                  int burn_in = 200) {
  std::normal_distribution<double> normal(0.0, 1.0);
  // marginal variance of a unit-innovation AR2
  const double gamma0 = (1.0 - phi2) / ((1.0 + phi2) * ((1.0 - phi2) * (1.0 - phi2) - phi1 * phi1));
  const double scale = marginal_sd / std::sqrt(gamma0);
  double x1 = 0.0, x2 = 0.0;
  Eigen::VectorXd out(length);
  for (int k = -burn_in; k < length; ++k) {
    double x = phi1 * x1 + phi2 * x2 + normal(rng);
    x2 = x1;
    x1 = x;
    if (k >= 0) out[k] = scale * x;
  }
  return out;
}

/// Curve values h_c(t) on the unit time grid, one column per cluster, each
/// centred to grid mean zero. Spline clusters draw their weights from `rng`.
inline Eigen::MatrixXd latent_curves(const ScenarioSpec& spec, Rng& rng) {
  Eigen::MatrixXd H(spec.T, spec.true_C);
  Eigen::VectorXd t = unit_time_grid(spec.T);
  Eigen::MatrixXd B;
  if (spec.latent == LatentKind::BSpline) B = bspline_basis(spec.T, spec.n_basis, 3);
  for (int c = 0; c < spec.true_C; ++c) {
    const auto& cp = spec.clusters[c];
    Eigen::VectorXd h = Eigen::VectorXd::Zero(spec.T);
    if (spec.latent == LatentKind::Polynomial) {
      for (std::size_t k = 0; k < cp.beta.size(); ++k)
        h += cp.beta[k] * t.array().pow(static_cast<double>(k + 1)).matrix();
    } else {
      h = B * ar2_series(spec.n_basis, cp.ar1, cp.ar2, spec.spline_weight_sd, rng);
    }
    H.col(c) = h.array() - h.mean();
  }
  return H;
}

struct SimulatedPanel {
  ScenarioSpec spec;
  Lattice lattice;
  Membership truth;
  Eigen::MatrixXd curves;      ///< T x C
  Eigen::MatrixXd y;           ///< n x T
  Eigen::VectorXd population;  ///< empty for gaussian data
};

/// Observations given a partition and curves. Gaussian: y = h + N(0, tau^2).
/// Poisson: N_i ~ Poisson(lambda_i), log lambda_i ~ N(mean, var),
/// y ~ Poisson(N_i exp(h + eps)), eps ~ N(0, tau^2).
inline void simulate_panel(SimulatedPanel& out, Rng& rng) {
  const auto& spec = out.spec;
  const int n = spec.n_regions, T = spec.T;
  std::normal_distribution<double> normal(0.0, 1.0);
  out.y.resize(n, T);
  if (spec.family == Family::Poisson) {
    out.population.resize(n);
    const double sd = std::sqrt(spec.population_log_var);
    for (int i = 0; i < n; ++i) {
      std::poisson_distribution<long> pop(std::exp(spec.population_log_mean + sd * normal(rng)));
      out.population[i] = static_cast<double>(std::max(1L, pop(rng)));
    }
  } else {
    out.population.resize(0);
  }
  for (int i = 0; i < n; ++i) {
    const int c = out.truth[i];
    const double tau = spec.clusters[c].tau;
    for (int t = 0; t < T; ++t) {
      const double h = out.curves(t, c);
      const double eps = tau * normal(rng);
      if (spec.family == Family::Gaussian) {
        out.y(i, t) = h + eps;
      } else {
        std::poisson_distribution<long> obs(out.population[i] * std::exp(h + eps));
        out.y(i, t) = static_cast<double>(obs(rng));
      }
    }
  }
}

inline SimulatedPanel simulate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  SimulatedPanel out;
  out.spec = spec;
  Rng lattice_rng = detail::substream(spec.seed, 1);
  Rng truth_rng = detail::substream(spec.seed, 2);
  Rng curve_rng = detail::substream(spec.seed, 3);
  Rng data_rng = detail::substream(spec.seed, 4);
  out.lattice = voronoi_lattice(spec.n_regions, lattice_rng);
  if (spec.truth == TruthKind::Imbalanced)
    out.truth = imbalanced_membership(out.lattice, spec.cluster_sizes, truth_rng);
  else
    out.truth = true_partition_from_mst(out.lattice.graph, spec.true_C, truth_rng).membership();
  out.curves = latent_curves(spec, curve_rng);
  simulate_panel(out, data_rng);
  return out;
}

namespace detail {

inline std::vector<ClusterParams> sim1_clusters(LatentKind kind, int C) {
  static const std::vector<std::vector<double>> betas = {{1, 0}, {-1, 0}, {0, 0}, {-3, 3}, {3, -3}};
  static const std::vector<double> taus = {0.01, 0.05, 0.02, 0.05, 0.02};
  std::vector<ClusterParams> out(C);
  for (int c = 0; c < C; ++c) {
    out[c].tau = taus[c % 5];
    if (kind == LatentKind::Polynomial) {
      out[c].beta = betas[c % 5];
    } else if (c < 5) {
      out[c].ar1 = 0.95, out[c].ar2 = 0.0;
    } else {
      out[c].ar1 = 0.5, out[c].ar2 = 0.44;
    }
  }
  return out;
}

inline std::vector<ClusterParams> sim2_clusters(int scenario) {
  struct Row {
    double b1, b2, tau;
  };
  static const Row table[3][5] = {
      {{1, 0.5, 0.10}, {0.90, 0.4, 0.10}, {1, 0.5, 0.15}, {-0.5, 1, 0.20}, {-1, 0.4, 0.05}},
      {{1, 0.5, 0.15}, {-1, 0.4, 0.10}, {1, 0.5, 0.12}, {1, 0.8, 0.20}, {-1, 0.4, 0.05}},
      {{1, 0.5, 0.15}, {-1, 0.4, 0.10}, {0.9, 0.5, 0.15}, {1, 0.8, 0.20}, {-1, 0.4, 0.05}},
  };
  std::vector<ClusterParams> out(5);
  for (int c = 0; c < 5; ++c) {
    const Row& r = table[scenario - 1][c];
    out[c].beta = {r.b1, r.b2};
    out[c].tau = r.tau;
  }
  return out;
}

}  // namespace detail

/// Named scenarios: the full-size studies and smaller desk-scale variants.
inline std::vector<ScenarioSpec> builtin_scenarios() {
  std::vector<ScenarioSpec> out;
  for (bool desk : {false, true}) {
    for (LatentKind kind : {LatentKind::Polynomial, LatentKind::BSpline}) {
      for (Family fam : {Family::Gaussian, Family::Poisson}) {
        ScenarioSpec s;
        s.name = std::string("sim1-") + (kind == LatentKind::Polynomial ? "poly" : "bspline") + "-" +
                 to_string(fam) + (desk ? "-desk" : "");
        s.n_regions = desk ? 30 : 100;
        s.T = desk ? 40 : 100;
        s.true_C = desk ? 4 : 10;
        s.latent = kind;
        s.family = fam;
        s.clusters = detail::sim1_clusters(kind, s.true_C);
        if (desk) s.n_basis = 10;
        out.push_back(s);
      }
    }
    for (int sc = 1; sc <= 3; ++sc) {
      ScenarioSpec s;
      s.name = "sim2-s" + std::to_string(sc) + (desk ? "-desk" : "");
      // the desk variant keeps the full region layout, where the small
      // clusters have 6 and 2 regions, and shortens the series only
      s.n_regions = 100;
      s.T = desk ? 40 : 100;
      s.true_C = 5;
      s.family = Family::Poisson;
      s.clusters = detail::sim2_clusters(sc);
      s.truth = TruthKind::Imbalanced;
      s.cluster_sizes = {64, 10, 6, 18, 2};
      out.push_back(s);
    }
  }
  return out;
}

inline ScenarioSpec find_scenario(const std::string& name) {
  for (const auto& s : builtin_scenarios())
    if (s.name == name) return s;
  throw Error(ErrorKind::InvalidConfig, "unknown scenario '" + name + "'");
}

}  // namespace spfc
