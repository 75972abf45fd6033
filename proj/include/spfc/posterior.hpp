#pragma once

// Point estimates and agreement metrics for partitions given as membership
// vectors.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "spfc/error.hpp"
#include "spfc/graph.hpp"

namespace spfc {

struct CoclusterMatrix {
  Eigen::MatrixXd p;
  int n_samples_used = 0;
};

inline CoclusterMatrix cocluster_matrix(const std::vector<Membership>& trace) {
  if (trace.empty()) throw Error(ErrorKind::EmptyTrace, "no partitions to summarize");
  const std::size_t n = trace.front().size();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& m : trace) {
    if (m.size() != n) throw Error(ErrorKind::LengthMismatch, "trace partitions differ in length");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (m[i] == m[j]) counts(i, j) += 1.0;
  }
  CoclusterMatrix out;
  out.n_samples_used = static_cast<int>(trace.size());
  out.p = counts / static_cast<double>(trace.size());
  out.p.triangularView<Eigen::StrictlyLower>() = out.p.transpose();
  out.p.diagonal().setOnes();
  return out;
}

inline double binder_loss(const Membership& m, const CoclusterMatrix& cc) {
  double loss = 0.0;
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      loss += m[i] == m[j] ? 1.0 - cc.p(i, j) : cc.p(i, j);
  return loss;
}

/// Index of the traced partition with smallest Binder loss (earliest on ties).
inline std::size_t dahl_index(const std::vector<Membership>& trace, const CoclusterMatrix& cc) {
  if (trace.empty()) throw Error(ErrorKind::EmptyTrace, "no partitions to summarize");
  std::size_t best = 0;
  double best_loss = binder_loss(trace[0], cc);
  // consecutive duplicates are common in MH traces
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace[k] == trace[k - 1]) continue;
    double l = binder_loss(trace[k], cc);
    if (l < best_loss) {
      best_loss = l;
      best = k;
    }
  }
  return best;
}

inline Membership dahl_point_estimate(const std::vector<Membership>& trace, const CoclusterMatrix& cc) {
  return trace[dahl_index(trace, cc)];
}

inline Membership dahl_point_estimate(const std::vector<Membership>& trace) {
  return dahl_point_estimate(trace, cocluster_matrix(trace));
}

namespace detail {

struct Contingency {
  std::map<std::pair<int, int>, long> cells;
  std::map<int, long> rows, cols;
  long n = 0;
};

inline Contingency contingency(const Membership& a, const Membership& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "partitions differ in length");
  Contingency t;
  t.n = static_cast<long>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++t.cells[{a[i], b[i]}];
    ++t.rows[a[i]];
    ++t.cols[b[i]];
  }
  return t;
}

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

struct RandIndices {
  double ari = 0.0;
  double ri = 0.0;
};

inline RandIndices rand_indices(const Membership& a, const Membership& b) {
  auto t = detail::contingency(a, b);
  double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [k, v] : t.cells) sum_cells += detail::choose2(v);
  for (const auto& [k, v] : t.rows) sum_rows += detail::choose2(v);
  for (const auto& [k, v] : t.cols) sum_cols += detail::choose2(v);
  const double pairs = detail::choose2(static_cast<double>(t.n));
  RandIndices out;
  if (pairs == 0.0) {
    out.ari = out.ri = 1.0;
    return out;
  }
  // agreements: pairs together in both plus pairs apart in both
  out.ri = (pairs + 2.0 * sum_cells - sum_rows - sum_cols) / pairs;
  const double expected = sum_rows * sum_cols / pairs;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  const double denom = max_index - expected;
  // both partitions trivial in the same way: identical, perfect agreement
  out.ari = denom == 0.0 ? (sum_cells == max_index ? 1.0 : 0.0) : (sum_cells - expected) / denom;
  return out;
}

inline double adjusted_rand_index(const Membership& a, const Membership& b) { return rand_indices(a, b).ari; }
inline double rand_index(const Membership& a, const Membership& b) { return rand_indices(a, b).ri; }

inline double normalized_information_distance(const Membership& a, const Membership& b) {
  auto t = detail::contingency(a, b);
  const double n = static_cast<double>(t.n);
  // Every entropy sums its terms in sorted order, so swapping the arguments
  // and comparing a partition with a relabelling of itself are both exact.
  auto entropy = [n](auto first, auto last) {
    std::vector<double> terms;
    for (; first != last; ++first) {
      const double p = first->second / n;
      terms.push_back(-p * std::log(p));
    }
    std::sort(terms.begin(), terms.end());
    double h = 0.0;
    for (double x : terms) h += x;
    return h;
  };
  const double hu = entropy(t.rows.begin(), t.rows.end());
  const double hv = entropy(t.cols.begin(), t.cols.end());
  if (hu + hv == 0.0) return 0.0;
  const double huv = entropy(t.cells.begin(), t.cells.end());
  const double mi = hu + hv - huv;
  return std::clamp(1.0 - 2.0 * mi / (hu + hv), 0.0, 1.0);
}

/// Label 0 is the largest cluster; equal sizes are ordered by smallest member.
inline Membership relabel_by_size(const Membership& m) {
  const int C = detail::count_labels(m);
  std::vector<int> size(C, 0), first(C, static_cast<int>(m.size()));
  for (int i = 0; i < static_cast<int>(m.size()); ++i) {
    ++size[m[i]];
    first[m[i]] = std::min(first[m[i]], i);
  }
  std::vector<int> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return size[x] != size[y] ? size[x] > size[y] : first[x] < first[y];
  });
  std::vector<int> new_label(C);
  for (int k = 0; k < C; ++k) new_label[order[k]] = k;
  Membership out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = new_label[m[i]];
  return out;
}

inline Partition relabel_by_size(const Partition& p) { return p.with_labels(relabel_by_size(p.membership())); }

/// Fraction of regions whose estimated label maps to their true label, with
/// labels matched greedily by largest overlap (each label used at most once).
inline double matching_accuracy(const Membership& estimate, const Membership& truth) {
  auto t = detail::contingency(estimate, truth);
  std::vector<std::pair<long, std::pair<int, int>>> cells;
  for (const auto& [k, v] : t.cells) cells.push_back({v, k});
  std::stable_sort(cells.begin(), cells.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::map<int, bool> used_est, used_true;
  long matched = 0;
  for (const auto& [count, key] : cells) {
    if (used_est[key.first] || used_true[key.second]) continue;
    used_est[key.first] = used_true[key.second] = true;
    matched += count;
  }
  return t.n ? static_cast<double>(matched) / t.n : 1.0;
}

struct PartitionMetrics {
  double ari = 0.0, ri = 0.0, nid = 0.0, accuracy = 0.0;
};

inline PartitionMetrics compare_partitions(const Membership& estimate, const Membership& truth) {
  auto r = rand_indices(estimate, truth);
  return {r.ari, r.ri, normalized_information_distance(estimate, truth), matching_accuracy(estimate, truth)};
}

}  // namespace spfc
