#pragma once

// Region adjacency graphs, spanning trees over them, and the contiguous
// partitions obtained by cutting tree edges.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "spfc/error.hpp"

namespace spfc {

/// Undirected edge, always stored with the smaller endpoint first.
struct Edge {
  int u = 0;
  int v = 0;

  Edge() = default;
  Edge(int a, int b) : u(std::min(a, b)), v(std::max(a, b)) {}

  auto operator<=>(const Edge&) const = default;
};

using Membership = std::vector<int>;

/// Union-find with path halving and union by size.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
};

namespace detail {

// Components of an undirected graph on n nodes, labelled by smallest member.
inline Membership components(int n, std::span<const Edge> edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  Membership label(n, -1);
  int next = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (int y : adj[x]) {
        if (label[y] < 0) {
          label[y] = next;
          stack.push_back(y);
        }
      }
    }
    ++next;
  }
  return label;
}

inline int count_labels(const Membership& m) {
  return m.empty() ? 0 : *std::max_element(m.begin(), m.end()) + 1;
}

}  // namespace detail

class SpatialGraph {
 public:
  int n_regions() const { return n_; }
  std::size_t n_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::string>& region_ids() const { return ids_; }
  const std::vector<int>& neighbors(int i) const { return adj_[i]; }

  /// Position of `e` in edges(), if present.
  std::optional<std::size_t> edge_index(const Edge& e) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
    if (it == edges_.end() || *it != e) return std::nullopt;
    return static_cast<std::size_t>(it - edges_.begin());
  }

  bool has_edge(const Edge& e) const { return edge_index(e).has_value(); }

  std::string region_id(int i) const {
    return ids_.empty() ? std::to_string(i) : ids_[i];
  }

 private:
  friend SpatialGraph build_graph(int, std::vector<std::pair<int, int>>, std::vector<std::string>);

  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::string> ids_;
  std::vector<std::vector<int>> adj_;
};

/// Validates and builds a connected adjacency graph. Edges are kept sorted.
inline SpatialGraph build_graph(int n_regions, std::vector<std::pair<int, int>> edges,
                                std::vector<std::string> region_ids = {}) {
  if (n_regions < 2) throw Error(ErrorKind::InvalidConfig, "graph needs at least 2 regions");
  if (edges.empty()) throw Error(ErrorKind::DisconnectedGraph, "edge list is empty");
  if (!region_ids.empty() && static_cast<int>(region_ids.size()) != n_regions)
    throw Error(ErrorKind::ShapeMismatch, "region_ids length differs from n_regions");

  SpatialGraph g;
  g.n_ = n_regions;
  g.ids_ = std::move(region_ids);
  g.edges_.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_regions || b >= n_regions)
      throw Error(ErrorKind::IndexOutOfRange,
                  "edge (" + std::to_string(a) + "," + std::to_string(b) + ") outside [0," +
                      std::to_string(n_regions) + ")");
    if (a == b) throw Error(ErrorKind::SelfLoop, "self-loop at region " + std::to_string(a));
    g.edges_.emplace_back(a, b);
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  auto dup = std::adjacent_find(g.edges_.begin(), g.edges_.end());
  if (dup != g.edges_.end())
    throw Error(ErrorKind::DuplicateEdge,
                "(" + std::to_string(dup->u) + "," + std::to_string(dup->v) + ")");

  Membership comp = detail::components(n_regions, g.edges_);
  int n_comp = detail::count_labels(comp);
  if (n_comp > 1) {
    std::string msg = std::to_string(n_comp) + " components:";
    for (int c = 0; c < n_comp; ++c) {
      msg += " {";
      bool first = true;
      for (int i = 0; i < n_regions; ++i) {
        if (comp[i] != c) continue;
        msg += (first ? "" : ",") + std::to_string(i);
        first = false;
      }
      msg += "}";
    }
    throw Error(ErrorKind::DisconnectedGraph, msg);
  }

  g.adj_.assign(n_regions, {});
  for (const auto& e : g.edges_) {
    g.adj_[e.u].push_back(e.v);
    g.adj_[e.v].push_back(e.u);
  }
  for (auto& a : g.adj_) std::sort(a.begin(), a.end());
  return g;
}

/// One weight per graph edge, indexed like SpatialGraph::edges().
class EdgeWeights {
 public:
  EdgeWeights() = default;
  explicit EdgeWeights(std::vector<double> w) : w_(std::move(w)) {}

  static EdgeWeights from_map(const SpatialGraph& g, const std::map<Edge, double>& m) {
    std::vector<double> w;
    w.reserve(g.n_edges());
    for (const auto& e : g.edges()) {
      auto it = m.find(e);
      if (it == m.end())
        throw Error(ErrorKind::MissingWeight,
                    "(" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
      w.push_back(it->second);
    }
    return EdgeWeights(std::move(w));
  }

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  const std::vector<double>& values() const { return w_; }

 private:
  std::vector<double> w_;
};

class SpanningTree {
 public:
  SpanningTree() = default;

  /// Checks that `edges` is a spanning tree of `graph`.
  SpanningTree(std::shared_ptr<const SpatialGraph> graph, std::vector<Edge> edges)
      : graph_(std::move(graph)), edges_(std::move(edges)) {
    std::sort(edges_.begin(), edges_.end());
    const int n = graph_->n_regions();
    if (static_cast<int>(edges_.size()) != n - 1)
      throw Error(ErrorKind::ShapeMismatch, "spanning tree needs n-1 edges");
    DisjointSets ds(n);
    for (const auto& e : edges_) {
      if (!graph_->has_edge(e))
        throw Error(ErrorKind::EdgeNotInTree, "tree edge not in graph");
      if (!ds.unite(e.u, e.v)) throw Error(ErrorKind::ShapeMismatch, "tree contains a cycle");
    }
  }

  const SpatialGraph& graph() const { return *graph_; }
  const std::shared_ptr<const SpatialGraph>& graph_ptr() const { return graph_; }
  const std::vector<Edge>& edges() const { return edges_; }
  int n_regions() const { return graph_->n_regions(); }

  bool contains(const Edge& e) const {
    return std::binary_search(edges_.begin(), edges_.end(), e);
  }

  bool operator==(const SpanningTree& o) const { return edges_ == o.edges_; }

 private:
  std::shared_ptr<const SpatialGraph> graph_;
  std::vector<Edge> edges_;
};

/// Kruskal; ties broken by lexicographic edge order so results are reproducible.
inline SpanningTree minimum_spanning_tree(std::shared_ptr<const SpatialGraph> graph,
                                          const EdgeWeights& weights) {
  const auto& edges = graph->edges();
  if (weights.size() != edges.size())
    throw Error(ErrorKind::MissingWeight, "expected " + std::to_string(edges.size()) +
                                              " weights, got " + std::to_string(weights.size()));
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  // edges() is sorted, so index order is lexicographic order.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] < weights[b]; });
  DisjointSets ds(graph->n_regions());
  std::vector<Edge> tree;
  tree.reserve(graph->n_regions() - 1);
  for (std::size_t k : order) {
    if (ds.unite(edges[k].u, edges[k].v)) tree.push_back(edges[k]);
    if (static_cast<int>(tree.size()) == graph->n_regions() - 1) break;
  }
  return SpanningTree(std::move(graph), std::move(tree));
}

class Partition {
 public:
  Partition() = default;

  const SpanningTree& tree() const { return tree_; }
  const SpatialGraph& graph() const { return tree_.graph(); }
  const std::vector<Edge>& removed_edges() const { return removed_; }
  const Membership& membership() const { return membership_; }
  int n_clusters() const { return n_clusters_; }
  int n_regions() const { return static_cast<int>(membership_.size()); }
  int label(int region) const { return membership_[region]; }

  /// Sorted member lists, one per cluster label.
  std::vector<std::vector<int>> clusters() const {
    std::vector<std::vector<int>> out(n_clusters_);
    for (int i = 0; i < n_regions(); ++i) out[membership_[i]].push_back(i);
    return out;
  }

  std::vector<int> members(int label) const {
    std::vector<int> out;
    for (int i = 0; i < n_regions(); ++i)
      if (membership_[i] == label) out.push_back(i);
    return out;
  }

  /// Same clusters under different labels; used by relabelling helpers.
  Partition with_labels(Membership relabelled) const {
    Partition p = *this;
    p.membership_ = std::move(relabelled);
    return p;
  }

 private:
  friend Partition derive_partition(const SpanningTree&, std::vector<Edge>);

  SpanningTree tree_;
  std::vector<Edge> removed_;
  Membership membership_;
  int n_clusters_ = 0;
};

/// Cuts `removed_edges` out of the tree. Labels follow smallest member index.
inline Partition derive_partition(const SpanningTree& tree, std::vector<Edge> removed_edges) {
  std::sort(removed_edges.begin(), removed_edges.end());
  if (std::adjacent_find(removed_edges.begin(), removed_edges.end()) != removed_edges.end())
    throw Error(ErrorKind::DuplicateEdge, "removed edge listed twice");
  std::vector<Edge> kept;
  kept.reserve(tree.edges().size());
  for (const auto& e : removed_edges)
    if (!tree.contains(e))
      throw Error(ErrorKind::EdgeNotInTree,
                  "(" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
  std::set_difference(tree.edges().begin(), tree.edges().end(), removed_edges.begin(),
                      removed_edges.end(), std::back_inserter(kept));
  Partition p;
  p.tree_ = tree;
  p.removed_ = std::move(removed_edges);
  p.membership_ = detail::components(tree.n_regions(), kept);
  p.n_clusters_ = static_cast<int>(p.removed_.size()) + 1;
  return p;
}

struct TreeEdgeClasses {
  std::vector<Edge> within;
  std::vector<Edge> between;
};

inline TreeEdgeClasses classify_tree_edges(const Partition& p) {
  TreeEdgeClasses out;
  out.within.reserve(p.n_regions() - p.n_clusters());
  for (const auto& e : p.tree().edges()) {
    if (p.label(e.u) == p.label(e.v))
      out.within.push_back(e);
    else
      out.between.push_back(e);
  }
  return out;
}

/// True when every cluster of `m` induces a connected subgraph of `g`.
inline bool clusters_connected(const SpatialGraph& g, const Membership& m) {
  std::vector<Edge> inner;
  for (const auto& e : g.edges())
    if (m[e.u] == m[e.v]) inner.push_back(e);
  Membership comp = detail::components(g.n_regions(), inner);
  return detail::count_labels(comp) == detail::count_labels(m);
}

/// Canonical form: labels renumbered by first appearance.
inline Membership canonical_labels(std::span<const int> m) {
  std::map<int, int> remap;
  Membership out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(m[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace spfc
