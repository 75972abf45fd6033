#pragma once

// Birth / death / change / hyper proposals over spanning-tree partitions,
// with the prior and proposal-probability ratios entering the MH acceptance.
//
// Birth cuts one of the n - C within-cluster tree edges chosen uniformly;
// death restores one of the C - 1 cut edges chosen uniformly. The move-kind
// probabilities are renormalized over the kinds feasible at the current C,
// so for a birth from C clusters
//
//   log q(rev)/q(fwd) = log(p_death(C+1) / C) - log(p_birth(C) / (n - C)).

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "spfc/graph.hpp"

namespace spfc {

using Rng = std::mt19937_64;

enum class MoveKind { Birth = 0, Death = 1, Change = 2, Hyper = 3 };

inline constexpr std::array<MoveKind, 4> kAllMoves = {MoveKind::Birth, MoveKind::Death,
                                                     MoveKind::Change, MoveKind::Hyper};

inline const char* to_string(MoveKind k) {
  switch (k) {
    case MoveKind::Birth: return "birth";
    case MoveKind::Death: return "death";
    case MoveKind::Change: return "change";
    case MoveKind::Hyper: return "hyper";
  }
  return "?";
}

inline MoveKind move_kind_from_string(const std::string& s) {
  for (auto k : kAllMoves)
    if (s == to_string(k)) return k;
  throw Error(ErrorKind::TraceCorrupt, "unknown move kind '" + s + "'");
}

struct MoveConfig {
  double r_birth = 0.35;
  double r_death = 0.35;
  double r_change = 0.2;
  double r_hyper = 0.1;
  double q = 0.5;
  /// Include the 1 / binom(n-1, C-1) factor of the uniform partition prior.
  bool partition_binomial = true;

  double prob(MoveKind k) const {
    switch (k) {
      case MoveKind::Birth: return r_birth;
      case MoveKind::Death: return r_death;
      case MoveKind::Change: return r_change;
      case MoveKind::Hyper: return r_hyper;
    }
    return 0.0;
  }

  void validate() const {
    for (auto k : kAllMoves)
      if (!(prob(k) >= 0.0)) throw Error(ErrorKind::InvalidConfig, "move probabilities must be >= 0");
    double s = r_birth + r_death + r_change + r_hyper;
    if (std::abs(s - 1.0) > 1e-12)
      throw Error(ErrorKind::InvalidConfig, "move probabilities must sum to 1");
    if (!(q >= 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidQ, "q must lie in [0,1)");
  }
};

inline bool move_feasible(MoveKind k, int n_clusters, int n_regions) {
  switch (k) {
    case MoveKind::Birth: return n_clusters < n_regions;
    case MoveKind::Death: return n_clusters > 1;
    case MoveKind::Change: return n_clusters > 1 && n_clusters < n_regions;
    case MoveKind::Hyper: return true;
  }
  return false;
}

/// Probability of selecting kind `k` at a state with `n_clusters`, after
/// renormalizing over the feasible kinds.
inline double effective_move_prob(MoveKind k, int n_clusters, int n_regions,
                                  const MoveConfig& cfg) {
  if (!move_feasible(k, n_clusters, n_regions)) return 0.0;
  double total = 0.0;
  for (auto j : kAllMoves)
    if (move_feasible(j, n_clusters, n_regions)) total += cfg.prob(j);
  if (total <= 0.0) throw Error(ErrorKind::InvalidConfig, "no feasible move has positive probability");
  return cfg.prob(k) / total;
}

inline MoveKind draw_move_kind(int n_clusters, int n_regions, const MoveConfig& cfg, Rng& rng) {
  std::array<double, 4> p{};
  for (auto k : kAllMoves)
    p[static_cast<int>(k)] = effective_move_prob(k, n_clusters, n_regions, cfg);
  std::discrete_distribution<int> pick(p.begin(), p.end());
  return static_cast<MoveKind>(pick(rng));
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// Log prior ratio pi(C_new, M_new) / pi(C_old, M_old) under the geometric
/// prior on C and (optionally) the uniform prior over cut-edge subsets.
inline double log_prior_ratio(int c_old, int c_new, double q, int n_regions,
                              bool partition_binomial = true) {
  if (!(q >= 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidQ, "q must lie in [0,1)");
  if (c_old < 1 || c_new < 1 || c_old > n_regions || c_new > n_regions)
    throw Error(ErrorKind::IndexOutOfRange, "cluster counts must lie in [1, n]");
  if (c_old == c_new) return 0.0;
  double r = (c_new - c_old) * std::log1p(-q);
  if (partition_binomial)
    r += log_binomial(n_regions - 1, c_old - 1) - log_binomial(n_regions - 1, c_new - 1);
  return r;
}

struct MoveProposal {
  MoveKind kind = MoveKind::Hyper;
  Partition new_partition;
  double log_prior_ratio = 0.0;
  double log_transition_ratio = 0.0;
  /// Labels (in the current partition) of clusters whose member set changes.
  std::vector<int> affected_old;
  /// Labels (in new_partition) of clusters that did not exist before.
  std::vector<int> affected_new;
};

namespace detail {

inline void fill_affected(const Partition& from, MoveProposal& p) {
  auto old_sets = from.clusters();
  auto new_sets = p.new_partition.clusters();
  std::set<std::vector<int>> olds(old_sets.begin(), old_sets.end());
  std::set<std::vector<int>> news(new_sets.begin(), new_sets.end());
  p.affected_old.clear();
  p.affected_new.clear();
  for (int c = 0; c < static_cast<int>(old_sets.size()); ++c)
    if (!news.count(old_sets[c])) p.affected_old.push_back(c);
  for (int c = 0; c < static_cast<int>(new_sets.size()); ++c)
    if (!olds.count(new_sets[c])) p.affected_new.push_back(c);
}

template <class T>
const T& pick_uniform(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline std::vector<Edge> with_edge(std::vector<Edge> v, const Edge& e) {
  v.insert(std::upper_bound(v.begin(), v.end(), e), e);
  return v;
}

inline std::vector<Edge> without_edge(std::vector<Edge> v, const Edge& e) {
  v.erase(std::find(v.begin(), v.end(), e));
  return v;
}

}  // namespace detail

/// Birth-stage log proposal ratio for a split from `c` to `c + 1` clusters.
inline double birth_log_transition_ratio(int c, int n, const MoveConfig& cfg) {
  double fwd = effective_move_prob(MoveKind::Birth, c, n, cfg) / (n - c);
  double rev = effective_move_prob(MoveKind::Death, c + 1, n, cfg) / c;
  return std::log(rev) - std::log(fwd);
}

/// Death-stage log proposal ratio for a merge from `c` to `c - 1` clusters.
inline double death_log_transition_ratio(int c, int n, const MoveConfig& cfg) {
  double fwd = effective_move_prob(MoveKind::Death, c, n, cfg) / (c - 1);
  double rev = effective_move_prob(MoveKind::Birth, c - 1, n, cfg) / (n - c + 1);
  return std::log(rev) - std::log(fwd);
}

inline MoveProposal propose_birth(const Partition& p, const MoveConfig& cfg, Rng& rng) {
  auto classes = classify_tree_edges(p);
  if (classes.within.empty())
    throw Error(ErrorKind::NoEligibleEdge, "birth impossible: every region is its own cluster");
  const Edge& cut = detail::pick_uniform(classes.within, rng);
  const int c = p.n_clusters(), n = p.n_regions();
  MoveProposal out;
  out.kind = MoveKind::Birth;
  out.new_partition = derive_partition(p.tree(), detail::with_edge(p.removed_edges(), cut));
  out.log_prior_ratio = log_prior_ratio(c, c + 1, cfg.q, n, cfg.partition_binomial);
  out.log_transition_ratio = birth_log_transition_ratio(c, n, cfg);
  detail::fill_affected(p, out);
  return out;
}

inline MoveProposal propose_death(const Partition& p, const MoveConfig& cfg, Rng& rng) {
  if (p.removed_edges().empty())
    throw Error(ErrorKind::NoEligibleEdge, "death impossible: single cluster");
  const Edge& joined = detail::pick_uniform(p.removed_edges(), rng);
  const int c = p.n_clusters(), n = p.n_regions();
  MoveProposal out;
  out.kind = MoveKind::Death;
  out.new_partition = derive_partition(p.tree(), detail::without_edge(p.removed_edges(), joined));
  out.log_prior_ratio = log_prior_ratio(c, c - 1, cfg.q, n, cfg.partition_binomial);
  out.log_transition_ratio = death_log_transition_ratio(c, n, cfg);
  detail::fill_affected(p, out);
  return out;
}

/// Death followed by birth on the merged state; C is preserved.
inline MoveProposal propose_change(const Partition& p, const MoveConfig& cfg, Rng& rng) {
  const int c = p.n_clusters(), n = p.n_regions();
  if (c <= 1 || c >= n)
    throw Error(ErrorKind::NoEligibleEdge, "change needs 1 < C < n");
  const Edge joined = detail::pick_uniform(p.removed_edges(), rng);
  Partition merged = derive_partition(p.tree(), detail::without_edge(p.removed_edges(), joined));
  auto classes = classify_tree_edges(merged);
  const Edge& cut = detail::pick_uniform(classes.within, rng);

  MoveProposal out;
  out.kind = MoveKind::Change;
  out.new_partition = derive_partition(p.tree(), detail::with_edge(merged.removed_edges(), cut));
  out.log_prior_ratio = 0.0;
  // Stage choice ratios: the reverse change restores `joined` and cuts it again.
  double death_stage = std::log(1.0 / (n - c + 1)) - std::log(1.0 / (c - 1));
  double birth_stage = std::log(1.0 / (c - 1)) - std::log(1.0 / (n - c + 1));
  out.log_transition_ratio = death_stage + birth_stage;
  detail::fill_affected(p, out);
  return out;
}

/// Weights for a tree compatible with `p`: within-cluster edges in [0,1),
/// between-cluster edges in [1,2). With `frozen`, the stored base weights are
/// reused and only shifted for between-cluster edges.
inline EdgeWeights compatible_weights(const Partition& p, Rng& rng,
                                      const EdgeWeights* frozen = nullptr) {
  const auto& edges = p.graph().edges();
  std::vector<double> w(edges.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    double base = frozen ? (*frozen)[k] : unif(rng);
    w[k] = base + (p.label(edges[k].u) == p.label(edges[k].v) ? 0.0 : 1.0);
  }
  return EdgeWeights(std::move(w));
}

inline MoveProposal propose_hyper(const Partition& p, Rng& rng,
                                  const EdgeWeights* frozen = nullptr) {
  SpanningTree tree = minimum_spanning_tree(p.tree().graph_ptr(), compatible_weights(p, rng, frozen));
  std::vector<Edge> cut;
  for (const auto& e : tree.edges())
    if (p.label(e.u) != p.label(e.v)) cut.push_back(e);
  MoveProposal out;
  out.kind = MoveKind::Hyper;
  out.new_partition = derive_partition(tree, std::move(cut));
  if (out.new_partition.n_clusters() != p.n_clusters())
    throw Error(ErrorKind::ShapeMismatch, "hyper move produced an incompatible tree");
  return out;
}

inline MoveProposal propose(MoveKind kind, const Partition& p, const MoveConfig& cfg, Rng& rng,
                            const EdgeWeights* frozen = nullptr) {
  switch (kind) {
    case MoveKind::Birth: return propose_birth(p, cfg, rng);
    case MoveKind::Death: return propose_death(p, cfg, rng);
    case MoveKind::Change: return propose_change(p, cfg, rng);
    case MoveKind::Hyper: return propose_hyper(p, rng, frozen);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown move kind");
}

}  // namespace spfc
