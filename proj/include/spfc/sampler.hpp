#pragma once

// Metropolis-Hastings over spanning-tree partitions with cluster marginals
// integrated out. Only clusters whose member sets change are re-evaluated;
// their log marginals are cached by member set.

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <list>
#include <numeric>
#include <optional>
#include <set>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "spfc/graph.hpp"
#include "spfc/laplace.hpp"
#include "spfc/lgm.hpp"
#include "spfc/moves.hpp"

namespace spfc {

/// Full observation panel: rows regions, columns times.
struct Panel {
  Eigen::MatrixXd y;
  Eigen::MatrixXd offset;

  int n_regions() const { return static_cast<int>(y.rows()); }
  int T() const { return static_cast<int>(y.cols()); }

  ClusterData slice(const std::vector<int>& members) const {
    ClusterData d;
    d.y.resize(members.size(), y.cols());
    d.offset.resize(members.size(), y.cols());
    for (std::size_t k = 0; k < members.size(); ++k) {
      d.y.row(k) = y.row(members[k]);
      d.offset.row(k) = offset.row(members[k]);
    }
    d.region_indices = members;
    return d;
  }
};

struct SamplerConfig {
  int iterations = 2000;
  int c0 = 10;
  std::uint64_t seed = 1;
  MoveConfig moves;
  LaplaceOptions laplace;
  /// Reject proposals whose marginals cannot be computed instead of failing.
  bool tolerate_nonconverged = true;
  /// Keep the initial edge weights for every hyper move.
  bool freeze_weights = false;
  /// Maximum cache entries (0 = unbounded). Current clusters are never evicted.
  std::size_t cache_capacity = 0;
  int threads = 1;
  /// Check partition invariants every this many iterations (0 = never).
  int check_every = 0;
  /// Initial edge weights (graph edge order); drawn from U(0,1) when empty.
  std::vector<double> initial_weights;
};

struct CacheEntry {
  double log_marginal = 0.0;
  Eigen::VectorXd theta_mode;
  int optim_iters = 0;
  bool fallback = false;
};

using ClusterKey = std::vector<int>;

/// Log marginals keyed by sorted member list, with optional LRU eviction.
class MarginalCache {
 public:
  explicit MarginalCache(std::size_t capacity = 0) : capacity_(capacity) {}

  static ClusterKey key(std::vector<int> members) {
    std::sort(members.begin(), members.end());
    return members;
  }

  const CacheEntry* find(const ClusterKey& k) {
    auto it = map_.find(k);
    if (it == map_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second.pos);
    return &it->second.entry;
  }

  bool contains(const ClusterKey& k) const { return map_.count(k) > 0; }

  void insert(const ClusterKey& k, CacheEntry e) {
    auto it = map_.find(k);
    if (it != map_.end()) {
      it->second.entry = std::move(e);
      order_.splice(order_.begin(), order_, it->second.pos);
      return;
    }
    order_.push_front(k);
    map_.emplace(k, Slot{std::move(e), order_.begin()});
  }

  /// Drops least recently used entries beyond capacity, sparing `keep`.
  void evict(const std::vector<ClusterKey>& keep) {
    if (capacity_ == 0 || map_.size() <= capacity_) return;
    std::set<ClusterKey> protect(keep.begin(), keep.end());
    for (auto it = order_.end(); it != order_.begin() && map_.size() > capacity_;) {
      --it;
      if (protect.count(*it)) continue;
      map_.erase(*it);
      it = order_.erase(it);
    }
  }

  std::size_t size() const { return map_.size(); }

 private:
  struct Slot {
    CacheEntry entry;
    std::list<ClusterKey>::iterator pos;
  };
  std::size_t capacity_;
  std::list<ClusterKey> order_;
  std::map<ClusterKey, Slot> map_;
};

struct ChainState {
  Partition partition;
  MarginalCache cache;
  long iter = 0;
  Rng rng;
  EdgeWeights base_weights;
  double total_log_marginal = 0.0;

  const SpanningTree& tree() const { return partition.tree(); }
};

struct TraceRecord {
  long iter = 0;
  MoveKind move = MoveKind::Hyper;
  bool accepted = false;
  int n_clusters = 0;
  double log_marginal = 0.0;
  Membership membership;
};

struct MoveStats {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct ChainOutput {
  std::vector<TraceRecord> trace;
  std::map<MoveKind, MoveStats> stats;
  std::uint64_t seed = 0;
  std::string config_echo;
};

/// min(0, sum of new affected marginals - sum of old affected marginals
///        + log prior ratio + log transition ratio). Hyper moves give 0.
inline double acceptance_log_prob(const ChainState& state, const MoveProposal& proposal,
                                  const std::map<ClusterKey, double>& fresh) {
  if (proposal.kind == MoveKind::Hyper) return 0.0;
  double delta = 0.0;
  auto new_sets = proposal.new_partition.clusters();
  for (int c : proposal.affected_new) {
    auto it = fresh.find(new_sets[c]);
    if (it == fresh.end()) throw Error(ErrorKind::MissingMarginal, "new cluster without a marginal");
    delta += it->second;
  }
  auto old_sets = state.partition.clusters();
  auto& cache = const_cast<MarginalCache&>(state.cache);
  for (int c : proposal.affected_old) {
    const CacheEntry* e = cache.find(old_sets[c]);
    if (!e) throw Error(ErrorKind::MissingMarginal, "current cluster missing from cache");
    delta -= e->log_marginal;
  }
  return std::min(0.0, delta + proposal.log_prior_ratio + proposal.log_transition_ratio);
}

class Sampler {
 public:
  using Logger = std::function<void(const std::string&)>;

  Sampler(std::shared_ptr<const SpatialGraph> graph, Panel panel, ModelSpec spec, SamplerConfig cfg)
      : graph_(std::move(graph)), panel_(std::move(panel)), model_(std::move(spec)),
        cfg_(std::move(cfg)) {
    cfg_.moves.validate();
    if (panel_.n_regions() != graph_->n_regions())
      throw Error(ErrorKind::ShapeMismatch, "panel rows differ from graph regions");
    if (panel_.T() != model_.T()) throw Error(ErrorKind::ShapeMismatch, "panel T differs from model T");
    if (cfg_.c0 < 1 || cfg_.c0 > graph_->n_regions())
      throw Error(ErrorKind::InvalidConfig, "c0 must lie in [1, n]");
    validate_cluster_data(panel_.slice(all_regions()), model_.spec().family);
    state_.cache = MarginalCache(cfg_.cache_capacity);
  }

  void set_diagnostics(Logger log) { diag_ = std::move(log); }
  void set_warnings(Logger log) { warn_ = std::move(log); }

  const LatentModel& model() const { return model_; }
  const Panel& panel() const { return panel_; }
  const ChainState& state() const { return state_; }
  ChainState& state() { return state_; }
  const SamplerConfig& config() const { return cfg_; }

  /// Random-weight MST with the c0 - 1 heaviest tree edges removed.
  void init() {
    state_.rng.seed(cfg_.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> w(graph_->n_edges());
    for (auto& v : w) v = unif(state_.rng);
    if (!cfg_.initial_weights.empty()) {
      if (cfg_.initial_weights.size() != w.size())
        throw Error(ErrorKind::MissingWeight, "initial weights do not cover every edge");
      w = cfg_.initial_weights;
    }
    state_.base_weights = EdgeWeights(w);
    SpanningTree tree = minimum_spanning_tree(graph_, state_.base_weights);
    std::vector<std::pair<double, Edge>> ranked;
    for (const auto& e : tree.edges()) ranked.emplace_back(w[*graph_->edge_index(e)], e);
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Edge> cut;
    for (int k = 0; k < cfg_.c0 - 1; ++k) cut.push_back(ranked[k].second);
    state_.partition = derive_partition(tree, std::move(cut));
    state_.iter = 0;
    prime_cache();
  }

  /// Restores a saved position; marginals of current clusters are recomputed.
  /// A saved running total replaces the recomputed one so a resumed trace
  /// matches an uninterrupted run digit for digit.
  void restore(const SpanningTree& tree, std::vector<Edge> removed, long iter,
               const std::string& rng_state, const EdgeWeights& base_weights,
               std::optional<double> total_log_marginal = std::nullopt) {
    state_.partition = derive_partition(tree, std::move(removed));
    state_.iter = iter;
    std::istringstream in(rng_state);
    in >> state_.rng;
    if (!in) throw Error(ErrorKind::TraceCorrupt, "bad rng state in checkpoint");
    state_.base_weights = base_weights;
    prime_cache();
    if (total_log_marginal) state_.total_log_marginal = *total_log_marginal;
  }

  /// One MH iteration. Returns the trace record.
  TraceRecord step() {
    auto& rng = state_.rng;
    const Partition& cur = state_.partition;
    MoveKind kind = draw_move_kind(cur.n_clusters(), cur.n_regions(), cfg_.moves, rng);
    MoveProposal prop = propose(kind, cur, cfg_.moves, rng,
                                cfg_.freeze_weights ? &state_.base_weights : nullptr);
    bool accepted = false;
    double delta = 0.0;
    if (kind == MoveKind::Hyper) {
      accepted = true;
    } else {
      std::map<ClusterKey, double> fresh;
      bool ok = true;
      try {
        fresh = new_marginals(prop);
      } catch (const Error& e) {
        if (!cfg_.tolerate_nonconverged) throw;
        ok = false;
        if (warn_) warn_("iteration " + std::to_string(state_.iter + 1) + ": " + e.what() +
                         "; proposal rejected");
      }
      if (ok) {
        double a = acceptance_log_prob(state_, prop, fresh);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        accepted = a >= 0.0 || std::log(unif(rng)) < a;
        if (accepted) {
          auto old_sets = cur.clusters();
          auto new_sets = prop.new_partition.clusters();
          for (int c : prop.affected_new) delta += fresh.at(new_sets[c]);
          for (int c : prop.affected_old) delta -= state_.cache.find(old_sets[c])->log_marginal;
        }
      }
    }
    auto& st = stats_[kind];
    ++st.proposed;
    if (accepted) {
      ++st.accepted;
      state_.partition = std::move(prop.new_partition);
      state_.total_log_marginal += delta;
    }
    ++state_.iter;
    state_.cache.evict(state_.partition.clusters());
    if (cfg_.check_every > 0 && state_.iter % cfg_.check_every == 0) check_invariants();
    return {state_.iter, kind, accepted, state_.partition.n_clusters(), state_.total_log_marginal,
            state_.partition.membership()};
  }

  /// Sum of current cluster marginals recomputed without the cache.
  double recompute_total() const {
    double s = 0.0;
    for (const auto& members : state_.partition.clusters())
      s += integrate_hyperparameters(panel_.slice(members), model_, cfg_.laplace).log_marginal;
    return s;
  }

  const std::map<MoveKind, MoveStats>& stats() const { return stats_; }
  void set_stats(std::map<MoveKind, MoveStats> stats) { stats_ = std::move(stats); }

  void check_invariants() const {
    const auto& p = state_.partition;
    if (static_cast<int>(p.removed_edges().size()) != p.n_clusters() - 1 ||
        !clusters_connected(p.graph(), p.membership()))
      throw Error(ErrorKind::ShapeMismatch,
                  "partition invariant violated at iteration " + std::to_string(state_.iter));
  }

 private:
  std::vector<int> all_regions() const {
    std::vector<int> v(graph_->n_regions());
    std::iota(v.begin(), v.end(), 0);
    return v;
  }

  CacheEntry evaluate(const ClusterKey& members) const {
    auto r = integrate_hyperparameters(panel_.slice(members), model_, cfg_.laplace);
    CacheEntry e;
    e.log_marginal = r.log_marginal;
    e.theta_mode = model_.spec().pack(r.theta_mode);
    e.optim_iters = r.optim_iters;
    e.fallback = r.fallback;
    return e;
  }

  void record(const ClusterKey& key, const CacheEntry& e) {
    if (!diag_) return;
    std::ostringstream os;
    os.precision(17);
    os << "{\"iter\":" << state_.iter << ",\"cluster\":[";
    for (std::size_t k = 0; k < key.size(); ++k) os << (k ? "," : "") << key[k];
    os << "],\"theta_mode\":[";
    for (Eigen::Index k = 0; k < e.theta_mode.size(); ++k) os << (k ? "," : "") << e.theta_mode[k];
    os << "],\"optim_iters\":" << e.optim_iters << ",\"log_marginal\":" << e.log_marginal
       << ",\"fallback\":" << (e.fallback ? "true" : "false") << "}";
    diag_(os.str());
  }

  void prime_cache() {
    state_.total_log_marginal = 0.0;
    std::map<ClusterKey, double> fresh = marginals_for(state_.partition.clusters());
    for (const auto& members : state_.partition.clusters()) state_.total_log_marginal += fresh.at(members);
  }

  std::map<ClusterKey, double> new_marginals(const MoveProposal& prop) {
    auto new_sets = prop.new_partition.clusters();
    std::vector<ClusterKey> keys;
    for (int c : prop.affected_new) keys.push_back(new_sets[c]);
    return marginals_for(keys);
  }

  // Cache-first; misses are evaluated (in parallel when threads > 1).
  std::map<ClusterKey, double> marginals_for(const std::vector<ClusterKey>& keys) {
    std::map<ClusterKey, double> out;
    std::vector<ClusterKey> missing;
    for (const auto& k : keys) {
      if (const CacheEntry* e = state_.cache.find(k))
        out[k] = e->log_marginal;
      else
        missing.push_back(k);
    }
    std::vector<CacheEntry> computed(missing.size());
    if (cfg_.threads > 1 && missing.size() > 1) {
      std::vector<std::future<CacheEntry>> jobs;
      for (const auto& k : missing)
        jobs.push_back(std::async(std::launch::async, [this, &k] { return evaluate(k); }));
      for (std::size_t i = 0; i < jobs.size(); ++i) computed[i] = jobs[i].get();
    } else {
      for (std::size_t i = 0; i < missing.size(); ++i) computed[i] = evaluate(missing[i]);
    }
    for (std::size_t i = 0; i < missing.size(); ++i) {
      record(missing[i], computed[i]);
      out[missing[i]] = computed[i].log_marginal;
      state_.cache.insert(missing[i], std::move(computed[i]));
    }
    return out;
  }

  std::shared_ptr<const SpatialGraph> graph_;
  Panel panel_;
  LatentModel model_;
  SamplerConfig cfg_;
  ChainState state_;
  std::map<MoveKind, MoveStats> stats_;
  Logger diag_;
  Logger warn_;
};

inline ChainOutput run_chain(std::shared_ptr<const SpatialGraph> graph, Panel panel, ModelSpec spec,
                             SamplerConfig cfg) {
  Sampler s(std::move(graph), std::move(panel), std::move(spec), cfg);
  s.init();
  ChainOutput out;
  out.seed = cfg.seed;
  out.trace.reserve(cfg.iterations);
  for (int i = 0; i < cfg.iterations; ++i) out.trace.push_back(s.step());
  out.stats = s.stats();
  return out;
}

/// Posterior curve summaries of one cluster of a fixed partition.
struct ClusterCurves {
  int label = 0;
  std::vector<int> members;
  MarginalResult marginal;
  LatentSummary summary;
};

/// Composition sampling: within-cluster posteriors given a chosen partition.
inline std::vector<ClusterCurves> composition_sample(const LatentModel& model, const Panel& panel,
                                                     const Membership& membership, int n_draws,
                                                     Rng& rng, const LaplaceOptions& opt = {}) {
  const int C = detail::count_labels(membership);
  std::vector<ClusterCurves> out(C);
  for (int i = 0; i < static_cast<int>(membership.size()); ++i) out[membership[i]].members.push_back(i);
  for (int c = 0; c < C; ++c) {
    out[c].label = c;
    out[c].marginal = integrate_hyperparameters(panel.slice(out[c].members), model, opt);
    out[c].summary = conditional_posterior(model, out[c].marginal, n_draws, rng);
  }
  return out;
}

/// Run-length encoding of a membership vector: "label*count|label*count|...".
inline std::string encode_membership(const Membership& m) {
  std::string s;
  for (std::size_t i = 0; i < m.size();) {
    std::size_t j = i;
    while (j < m.size() && m[j] == m[i]) ++j;
    if (!s.empty()) s += '|';
    s += std::to_string(m[i]) + '*' + std::to_string(j - i);
    i = j;
  }
  return s;
}

inline Membership decode_membership(const std::string& s) {
  Membership m;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t bar = s.find('|', pos);
    std::string run = s.substr(pos, bar == std::string::npos ? std::string::npos : bar - pos);
    std::size_t star = run.find('*');
    if (star == std::string::npos) throw Error(ErrorKind::TraceCorrupt, "bad run '" + run + "'");
    try {
      int label = std::stoi(run.substr(0, star));
      int count = std::stoi(run.substr(star + 1));
      if (label < 0 || count <= 0) throw Error(ErrorKind::TraceCorrupt, "bad run '" + run + "'");
      m.insert(m.end(), count, label);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::TraceCorrupt, "bad run '" + run + "'");
    }
    if (bar == std::string::npos) break;
    pos = bar + 1;
  }
  return m;
}

}  // namespace spfc
