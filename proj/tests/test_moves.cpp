#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "spfc/moves.hpp"
#include "spfc/simdata.hpp"

using namespace spfc;

namespace {

std::shared_ptr<const SpatialGraph> path_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return std::make_shared<const SpatialGraph>(build_graph(n, e));
}

Partition path_partition(int n, std::vector<Edge> cuts) {
  auto g = path_graph(n);
  std::vector<double> w(g->n_edges(), 0.5);
  return derive_partition(minimum_spanning_tree(g, EdgeWeights(w)), std::move(cuts));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

// Set of member sets, independent of labels.
std::set<std::vector<int>> groups(const Partition& p) {
  auto c = p.clusters();
  return {c.begin(), c.end()};
}

}  // namespace

TEST(MoveConfigTest, Validation) {
  MoveConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.r_hyper = 0.2;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::InvalidConfig);
  MoveConfig q;
  q.q = 1.0;
  EXPECT_EQ(kind_of([&] { q.validate(); }), ErrorKind::InvalidQ);
}

TEST(Birth, ImpossibleWhenAllSingletons) {
  auto p = path_partition(3, {Edge(0, 1), Edge(1, 2)});
  Rng rng(1);
  EXPECT_EQ(kind_of([&] { propose_birth(p, MoveConfig{}, rng); }), ErrorKind::NoEligibleEdge);
}

TEST(Birth, PriorRatioWithoutPartitionTerm) {
  MoveConfig cfg;
  cfg.partition_binomial = false;
  Rng rng(2);
  auto p = path_partition(6, {Edge(2, 3)});
  auto prop = propose_birth(p, cfg, rng);
  EXPECT_NEAR(prop.log_prior_ratio, std::log(0.5), 1e-15);
  EXPECT_EQ(prop.new_partition.n_clusters(), 3);
}

TEST(Birth, AffectedSetsAreSplitClusterAndChildren) {
  Rng rng(3);
  auto p = path_partition(6, {Edge(2, 3)});
  auto prop = propose_birth(p, MoveConfig{}, rng);
  ASSERT_EQ(prop.affected_old.size(), 1u);
  ASSERT_EQ(prop.affected_new.size(), 2u);
  auto old_sets = p.clusters();
  auto new_sets = prop.new_partition.clusters();
  std::vector<int> merged = new_sets[prop.affected_new[0]];
  merged.insert(merged.end(), new_sets[prop.affected_new[1]].begin(), new_sets[prop.affected_new[1]].end());
  std::sort(merged.begin(), merged.end());
  EXPECT_EQ(merged, old_sets[prop.affected_old[0]]);
}

TEST(Birth, PathReversalByHand) {
  // path 0-1-2 with r_b = r_d = 0.5: from C=1 birth is the only feasible
  // split kind, so forward = 1 * 1/2; from C=2 the reverse death has
  // probability 0.5 * 1/1.
  MoveConfig cfg{0.5, 0.5, 0.0, 0.0, 0.5};
  auto p = path_partition(3, {});
  Rng rng(4);
  auto birth = propose_birth(p, cfg, rng);
  EXPECT_NEAR(birth.log_transition_ratio, std::log(0.5 / 1.0) - std::log(1.0 / 2.0), 1e-15);
  auto death = propose_death(birth.new_partition, cfg, rng);
  EXPECT_EQ(death.new_partition.membership(), p.membership());
  EXPECT_NEAR(birth.log_transition_ratio + death.log_transition_ratio, 0.0, 1e-15);
}

TEST(Death, ImpossibleWithOneCluster) {
  auto p = path_partition(3, {});
  Rng rng(1);
  EXPECT_EQ(kind_of([&] { propose_death(p, MoveConfig{}, rng); }), ErrorKind::NoEligibleEdge);
}

TEST(Death, PriorRatioWithoutPartitionTerm) {
  MoveConfig cfg;
  cfg.partition_binomial = false;
  Rng rng(5);
  auto prop = propose_death(path_partition(5, {Edge(1, 2)}), cfg, rng);
  EXPECT_NEAR(prop.log_prior_ratio, std::log(2.0), 1e-15);
}

TEST(Death, ReverseProbabilityOnFourNodeTree) {
  // 4-node path cut into 3 clusters, merged back to 2: forward picks one of
  // the 2 removed edges with r_d, reverse picks one of the 2 within edges.
  MoveConfig cfg;
  auto p = path_partition(4, {Edge(0, 1), Edge(2, 3)});
  Rng rng(6);
  auto prop = propose_death(p, cfg, rng);
  double fwd = cfg.r_death / 2.0;
  double rev = cfg.r_birth / 2.0;
  EXPECT_NEAR(prop.log_transition_ratio, std::log(rev / fwd), 1e-15);
}

TEST(Change, KeepsClusterCountAndZeroPrior) {
  Rng rng(7);
  auto p = path_partition(3, {Edge(1, 2)});
  for (int k = 0; k < 20; ++k) {
    auto prop = propose_change(p, MoveConfig{}, rng);
    EXPECT_EQ(prop.new_partition.n_clusters(), 2);
    EXPECT_EQ(prop.log_prior_ratio, 0.0);
    EXPECT_EQ(prop.log_transition_ratio, 0.0);
  }
}

TEST(Change, ReselectingSameEdgeIsIdentity) {
  // On a 3-path with one cut, the change either re-cuts the same edge or
  // moves the cut; both outcomes must appear and the identity has no
  // affected clusters.
  Rng rng(8);
  auto p = path_partition(3, {Edge(1, 2)});
  bool saw_identity = false, saw_move = false;
  for (int k = 0; k < 50; ++k) {
    auto prop = propose_change(p, MoveConfig{}, rng);
    if (prop.new_partition.membership() == p.membership()) {
      saw_identity = true;
      EXPECT_TRUE(prop.affected_old.empty());
      EXPECT_TRUE(prop.affected_new.empty());
      EXPECT_EQ(prop.log_transition_ratio, 0.0);
    } else {
      saw_move = true;
    }
  }
  EXPECT_TRUE(saw_identity);
  EXPECT_TRUE(saw_move);
}

TEST(Change, InfeasibleAtBoundaries) {
  Rng rng(9);
  EXPECT_EQ(kind_of([&] { propose_change(path_partition(3, {}), MoveConfig{}, rng); }), ErrorKind::NoEligibleEdge);
  EXPECT_EQ(kind_of([&] { propose_change(path_partition(3, {Edge(0, 1), Edge(1, 2)}), MoveConfig{}, rng); }),
            ErrorKind::NoEligibleEdge);
}

TEST(Hyper, NeverChangesMembership) {
  Rng rng(10);
  auto lat = voronoi_lattice(30, rng);
  for (int k = 0; k < 1000; ++k) {
    auto p = true_partition_from_mst(lat.graph, 1 + k % 30, rng);
    auto prop = propose_hyper(p, rng);
    ASSERT_EQ(prop.new_partition.membership(), p.membership());
    EXPECT_TRUE(prop.affected_old.empty());
    EXPECT_TRUE(prop.affected_new.empty());
  }
}

TEST(Hyper, SingleClusterIsPlainResample) {
  Rng rng(11);
  auto lat = voronoi_lattice(12, rng);
  auto p = true_partition_from_mst(lat.graph, 1, rng);
  auto prop = propose_hyper(p, rng);
  EXPECT_EQ(prop.new_partition.n_clusters(), 1);
  EXPECT_TRUE(prop.new_partition.removed_edges().empty());
}

TEST(Hyper, TreesHaveExactlyCMinusOneBetweenEdges) {
  Rng rng(12);
  auto lat = voronoi_lattice(10, rng);
  auto p = true_partition_from_mst(lat.graph, 3, rng);
  for (int k = 0; k < 100; ++k) {
    auto prop = propose_hyper(p, rng);
    EXPECT_EQ(classify_tree_edges(prop.new_partition).between.size(), 2u);
  }
}

TEST(Hyper, FrozenWeightsGiveSameTree) {
  Rng rng(13);
  auto lat = voronoi_lattice(20, rng);
  auto p = true_partition_from_mst(lat.graph, 4, rng);
  std::vector<double> w(lat.graph->n_edges());
  std::uniform_real_distribution<double> unif(0, 1);
  for (auto& v : w) v = unif(rng);
  EdgeWeights base(w);
  auto a = propose_hyper(p, rng, &base);
  auto b = propose_hyper(p, rng, &base);
  EXPECT_EQ(a.new_partition.tree(), b.new_partition.tree());
}

TEST(PriorRatio, Examples) {
  EXPECT_EQ(log_prior_ratio(4, 4, 0.5, 10), 0.0);
  EXPECT_NEAR(log_prior_ratio(5, 6, 0.0, 10), 0.0, 1e-12);
  EXPECT_NEAR(log_prior_ratio(5, 6, 0.5, 10), std::log(0.5), 1e-12);
  EXPECT_NEAR(log_prior_ratio(2, 3, 0.0, 10), std::log(9.0 / 36.0), 1e-12);
  EXPECT_NEAR(log_prior_ratio(2, 3, 0.0, 10, false), 0.0, 1e-15);
  EXPECT_EQ(kind_of([] { log_prior_ratio(1, 2, 1.0, 10); }), ErrorKind::InvalidQ);
}

TEST(PriorRatio, TelescopesAlongMoveSequences) {
  Rng rng(14);
  auto lat = voronoi_lattice(25, rng);
  MoveConfig cfg;
  for (int rep = 0; rep < 20; ++rep) {
    Partition p = true_partition_from_mst(lat.graph, 5, rng);
    const int c0 = p.n_clusters();
    double total = 0.0;
    for (int step = 0; step < 60; ++step) {
      MoveKind k = draw_move_kind(p.n_clusters(), p.n_regions(), cfg, rng);
      auto prop = propose(k, p, cfg, rng);
      total += prop.log_prior_ratio;
      p = prop.new_partition;
    }
    total += log_prior_ratio(p.n_clusters(), c0, cfg.q, p.n_regions());
    EXPECT_NEAR(total, 0.0, 1e-10);
  }
}

TEST(MoveKinds, BoundaryRenormalisation) {
  MoveConfig cfg;
  // C = 1: death and change infeasible
  EXPECT_EQ(effective_move_prob(MoveKind::Death, 1, 5, cfg), 0.0);
  EXPECT_NEAR(effective_move_prob(MoveKind::Birth, 1, 5, cfg), 0.35 / 0.45, 1e-15);
  // C = n: birth and change infeasible
  EXPECT_NEAR(effective_move_prob(MoveKind::Death, 5, 5, cfg), 0.35 / 0.45, 1e-15);
  double s = 0;
  for (auto k : kAllMoves) s += effective_move_prob(k, 3, 5, cfg);
  EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(MoveKinds, BirthDeathReversibilityOnRandomPartitions) {
  Rng rng(15);
  auto lat = voronoi_lattice(30, rng);
  MoveConfig cfg;
  for (int k = 0; k < 2000; ++k) {
    auto p = true_partition_from_mst(lat.graph, 1 + k % 29, rng);
    auto birth = propose_birth(p, cfg, rng);
    // the death undoing this birth re-inserts the edge just cut
    const int c = birth.new_partition.n_clusters();
    double rev = death_log_transition_ratio(c, p.n_regions(), cfg);
    EXPECT_NEAR(birth.log_transition_ratio + rev, 0.0, 1e-12);
    EXPECT_NEAR(birth.log_prior_ratio + log_prior_ratio(c, c - 1, cfg.q, p.n_regions()), 0.0, 1e-12);
  }
}

TEST(MoveKinds, ProposalsKeepPartitionInvariants) {
  Rng rng(16);
  auto lat = voronoi_lattice(40, rng);
  MoveConfig cfg;
  Partition p = true_partition_from_mst(lat.graph, 6, rng);
  for (int step = 0; step < 500; ++step) {
    MoveKind k = draw_move_kind(p.n_clusters(), p.n_regions(), cfg, rng);
    auto prop = propose(k, p, cfg, rng);
    const auto& np = prop.new_partition;
    ASSERT_EQ(static_cast<int>(np.removed_edges().size()), np.n_clusters() - 1);
    ASSERT_TRUE(clusters_connected(*lat.graph, np.membership()));
    switch (k) {
      case MoveKind::Birth: EXPECT_EQ(np.n_clusters(), p.n_clusters() + 1); break;
      case MoveKind::Death: EXPECT_EQ(np.n_clusters(), p.n_clusters() - 1); break;
      default: EXPECT_EQ(np.n_clusters(), p.n_clusters());
    }
    // affected sets are exactly the clusters whose member sets changed
    auto before = groups(p), after = groups(np);
    std::size_t gone = 0, fresh = 0;
    for (const auto& s : before) gone += !after.count(s);
    for (const auto& s : after) fresh += !before.count(s);
    EXPECT_EQ(prop.affected_old.size(), gone);
    EXPECT_EQ(prop.affected_new.size(), fresh);
    p = np;
  }
}
