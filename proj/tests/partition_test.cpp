#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "esikit/partition.hpp"
#include "esikit/serialize.hpp"
#include "oracle.hpp"

using namespace esi;

namespace {

LocationSet uniform_points(std::size_t n, const Domain& d, std::uint64_t seed) {
  Rng rng(seed);
  LocationSet out(d.dim());
  std::vector<double> x(d.dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d.dim(); ++a)
      x[a] = std::uniform_real_distribution<double>(d.lower(a), d.upper(a))(rng);
    out.push_back(x);
  }
  return out;
}

ConditioningData uniform_data(std::size_t n, const Domain& d, std::uint64_t seed) {
  LocationSet p = uniform_points(n, d, seed);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = p.row(i)[0];
  return ConditioningData(std::move(p), std::move(v));
}

const Domain kUnit({0, 0}, {1, 1});

}  // namespace

TEST(Lambda, MondrianExamples) {
  EXPECT_DOUBLE_EQ(lambda_mondrian(0.8, kUnit), 2.5);
  EXPECT_DOUBLE_EQ(lambda_mondrian(0.0, kUnit), 0.5);
  EXPECT_NEAR(lambda_mondrian(0.99, kUnit), 50.0, 1e-12);
  EXPECT_THROW(lambda_mondrian(0.5, Domain({1, 1}, {1, 1})), InvalidArgument);
  EXPECT_THROW(lambda_mondrian(1.0, kUnit), InvalidArgument);
  EXPECT_LT(lambda_mondrian(0.3, kUnit), lambda_mondrian(0.31, kUnit));
}

TEST(Lambda, VoronoiExamples) {
  EXPECT_DOUBLE_EQ(lambda_voronoi(0.5, 400), 100.0);
  EXPECT_DOUBLE_EQ(lambda_voronoi(0.985, 1000), 492.5);
  EXPECT_DOUBLE_EQ(lambda_voronoi(0.0, 10), 0.0);
  EXPECT_THROW(lambda_voronoi(-0.1, 10), InvalidArgument);
}

TEST(Mondrian, NonPositiveLifetimeGivesSingleLeaf) {
  Rng rng(1);
  EXPECT_EQ(sample_mondrian(kUnit, 0.0, rng).num_cells(), 1u);
  EXPECT_EQ(sample_mondrian(kUnit, -1.0, rng).num_cells(), 1u);
  EXPECT_EQ(sample_mondrian(Domain({2, 2}, {2, 2}), 100.0, rng).num_cells(), 1u);
}

TEST(Mondrian, StructureInvariants) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    double lambda = 8.0;
    MondrianTree t = sample_mondrian(Domain({0, 0, 0}, {1, 2, 0.5}), lambda, rng);
    const auto& nodes = t.nodes();
    for (const auto& n : nodes) {
      if (n.is_leaf()) continue;
      const auto& lo = nodes[n.below];
      const auto& hi = nodes[n.above];
      EXPECT_GT(n.cut_pos, n.box.lower(n.cut_dim));
      EXPECT_LT(n.cut_pos, n.box.upper(n.cut_dim));
      EXPECT_LT(n.time, lambda);
      EXPECT_EQ(lo.box, n.box.split(n.cut_dim, n.cut_pos).first);
      EXPECT_EQ(hi.box, n.box.split(n.cut_dim, n.cut_pos).second);
      for (const auto* c : {&lo, &hi})
        if (!c->is_leaf()) {
          EXPECT_GT(c->time, n.time);
        }
    }
  }
}

TEST(Mondrian, SameSeedSameTree) {
  Rng a(42), b(42);
  auto ta = sample_mondrian(kUnit, 10.0, a);
  auto tb = sample_mondrian(kUnit, 10.0, b);
  EXPECT_EQ(ta, tb);
}

TEST(Mondrian, CellIdConventions) {
  std::vector<MondrianNode> nodes(3);
  nodes[0] = MondrianNode{kUnit, 0, 0.5, 0.1, 2, 1};
  auto [lo, hi] = kUnit.split(0, 0.5);
  nodes[1] = MondrianNode{hi};
  nodes[2] = MondrianNode{lo};
  MondrianTree t(nodes);
  std::vector<double> on_cut{0.5, 0.3}, below{0.49, 0.3};
  EXPECT_EQ(t.cell_id(on_cut), 0u);  // the "above" child is leaf 0 in array order
  EXPECT_EQ(t.cell_id(below), 1u);
  std::vector<double> outside{1.5, 0.0};
  EXPECT_THROW(t.cell_id(outside), OutOfDomain);

  Rng rng(0);
  MondrianTree single = sample_mondrian(kUnit, 0.0, rng);
  auto pts = uniform_points(20, kUnit, 5);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(single.cell_id(pts.row(i)), 0u);
}

TEST(Mondrian, GranularityIncreasesWithAlpha) {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    std::vector<double> mean_leaves;
    for (double alpha : {0.0, 0.5, 0.8}) {
      double lambda = lambda_mondrian(alpha, kUnit);
      double total = 0;
      for (std::size_t k = 0; k < 200; ++k) {
        Rng rng(derive_seed(seed, k));
        total += static_cast<double>(sample_mondrian(kUnit, lambda, rng).num_cells());
      }
      mean_leaves.push_back(total / 200);
    }
    EXPECT_LT(mean_leaves[0], mean_leaves[1]);
    EXPECT_LT(mean_leaves[1], mean_leaves[2]);
  }
}

TEST(TrainedMondrian, SinglePointIsOneLeaf) {
  Rng rng(3);
  LocationSet p(2, {0.3, 0.7});
  EXPECT_EQ(sample_trained_mondrian(kUnit, 1000.0, p, rng).num_cells(), 1u);
}

TEST(TrainedMondrian, RejectsPointsOutsideDomain) {
  Rng rng(3);
  LocationSet p(2, {0.3, 1.7});
  EXPECT_THROW(sample_trained_mondrian(kUnit, 10.0, p, rng), OutOfDomain);
}

TEST(TrainedMondrian, CutsStayInsideDataBoundingBox) {
  LocationSet seg(2);
  for (int i = 0; i <= 20; ++i) seg.push_back(std::vector<double>{0.2 + 0.03 * i, 0.4});
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(s);
    auto t = sample_trained_mondrian(kUnit, 100.0, seg, rng);
    EXPECT_GT(t.num_cells(), 1u);
    for (const auto& n : t.nodes()) {
      if (n.is_leaf()) continue;
      EXPECT_EQ(n.cut_dim, 0);  // the y side of the data box has zero length
      EXPECT_GT(n.cut_pos, 0.2);
      EXPECT_LT(n.cut_pos, 0.8);
    }
  }
}

TEST(TrainedMondrian, EveryCutNodeHoldsAtLeastTwoPoints) {
  auto pts = uniform_points(200, kUnit, 9);
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(s);
    auto t = sample_trained_mondrian(kUnit, 40.0, pts, rng);
    for (const auto& n : t.nodes()) {
      std::size_t inside = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        auto x = pts.row(i);
        bool in = true;
        for (std::size_t a = 0; a < 2; ++a) in = in && x[a] >= n.box.lower(a) && x[a] <= n.box.upper(a);
        inside += in;
      }
      if (!n.is_leaf()) EXPECT_GE(inside, 2u);
      else EXPECT_GE(inside, 1u);
    }
  }
}

TEST(TrainedMondrian, FavoursSeparatingAnOutlier) {
  LocationSet pts(2, {0.10, 0.10, 0.12, 0.10, 0.90, 0.90});
  auto separates = [&](const MondrianTree& t) {
    const auto& root = t.nodes().front();
    if (root.is_leaf()) return false;
    bool a = pts.row(0)[root.cut_dim] < root.cut_pos;
    bool b = pts.row(1)[root.cut_dim] < root.cut_pos;
    bool c = pts.row(2)[root.cut_dim] < root.cut_pos;
    return a == b && a != c;
  };
  std::size_t trained = 0, untrained = 0;
  for (std::size_t k = 0; k < 10000; ++k) {
    Rng r1(derive_seed(100, k)), r2(derive_seed(200, k));
    trained += separates(sample_trained_mondrian(kUnit, 50.0, pts, r1));
    untrained += separates(sample_mondrian(kUnit, 50.0, r2));
  }
  EXPECT_GT(trained, untrained);
  EXPECT_GT(trained, 9500u);
}

TEST(Voronoi, ZeroLambdaGivesOneCell) {
  Rng rng(1);
  auto v = sample_voronoi(kUnit, 0.0, nullptr, false, rng);
  EXPECT_EQ(v.num_cells(), 1u);
  auto data = uniform_data(10, kUnit, 1);
  auto t = sample_voronoi(kUnit, 0.0, &data, true, rng);
  EXPECT_EQ(t.num_cells(), 1u);
}

TEST(Voronoi, DataCondWithoutDataFails) {
  Rng rng(1);
  EXPECT_THROW(sample_voronoi(kUnit, 5.0, nullptr, true, rng), InvalidArgument);
}

TEST(Voronoi, LargeLambdaUsesEveryPointOnce) {
  auto data = uniform_data(40, kUnit, 2);
  Rng rng(5);
  auto v = sample_voronoi(kUnit, 1e6, &data, true, rng);
  ASSERT_EQ(v.num_cells(), 40u);
  auto groups = group_by_cell(v, data.points());
  for (std::size_t c = 0; c < groups.size(); ++c) {
    ASSERT_EQ(groups[c].size(), 1u);
    auto p = data.points().row(groups[c][0]);
    auto n = v.nuclei().row(c);
    EXPECT_TRUE(std::equal(p.begin(), p.end(), n.begin()));
  }
}

TEST(Voronoi, TrainedNucleusCountMatchesPoissonMean) {
  auto data = uniform_data(400, kUnit, 3);
  double lambda = lambda_voronoi(0.5, 400);
  double sum = 0;
  for (std::size_t k = 0; k < 1000; ++k) {
    Rng rng(derive_seed(77, k));
    sum += static_cast<double>(sample_voronoi(kUnit, lambda, &data, true, rng).num_cells());
  }
  EXPECT_LE(std::abs(sum / 1000 - lambda), 3 * std::sqrt(lambda / 1000));
}

TEST(Voronoi, TiesGoToLowestNucleus) {
  VoronoiPartition v(kUnit, LocationSet(2, {0.25, 0.5, 0.75, 0.5}));
  std::vector<double> mid{0.5, 0.9};
  EXPECT_EQ(v.cell_id(mid), 0u);
  VoronoiPartition w(kUnit, LocationSet(2, {0.75, 0.5, 0.25, 0.5}));
  EXPECT_EQ(w.cell_id(mid), 0u);
  std::vector<double> outside{-0.1, 0.5};
  EXPECT_THROW(v.cell_id(outside), OutOfDomain);
}

TEST(Voronoi, DuplicateLocationsStillGiveNonEmptyCells) {
  LocationSet p(2, {0.1, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5, 0.9, 0.2});
  ConditioningData data(p, {1, 2, 3, 4, 5});
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    auto v = sample_voronoi(kUnit, 100.0, &data, true, rng);
    EXPECT_LE(v.num_cells(), 3u);
    for (const auto& g : group_by_cell(v, p)) EXPECT_FALSE(g.empty());
  }
}

TEST(Partition, GroupByCellSingleLeaf) {
  Rng rng(0);
  Partition p = sample_mondrian(kUnit, 0.0, rng);
  auto groups = group_by_cell(p, uniform_points(5, kUnit, 1));
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0], (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Partition, TilingAndMembershipMatchBruteForce) {
  auto data = uniform_data(100, kUnit, 4);
  auto probes = uniform_points(1000, kUnit, 8);
  for (ProcessKind kind : {ProcessKind::mondrian, ProcessKind::voronoi}) {
    for (bool trained : {false, true}) {
      ForestOptions o;
      o.kind = kind;
      o.n_partitions = 50;
      o.alpha = 0.9;
      o.data_cond = trained;
      o.seed = 21;
      Forest f = sample_forest(kUnit, data, o);
      for (const auto& part : f.partitions) {
        auto groups = group_by_cell(part, data.points());
        std::vector<int> seen(data.size(), 0);
        for (std::size_t c = 0; c < groups.size(); ++c) {
          if (kind == ProcessKind::voronoi && trained) {
            EXPECT_FALSE(groups[c].empty());
          }
          for (std::size_t i : groups[c]) {
            ++seen[i];
            EXPECT_EQ(oracle::cell_of(part, data.points().row(i).data()), c);
          }
        }
        for (int s : seen) EXPECT_EQ(s, 1);
        for (std::size_t i = 0; i < probes.size(); ++i) {
          std::size_t c = cell_id(part, probes.row(i));
          EXPECT_LT(c, num_cells(part));
          EXPECT_EQ(oracle::cell_of(part, probes.row(i).data()), c);
        }
      }
    }
  }
}

TEST(Forest, SerializationIsDeterministicAndRoundTrips) {
  auto data = uniform_data(60, kUnit, 6);
  for (ProcessKind kind : {ProcessKind::mondrian, ProcessKind::voronoi}) {
    ForestOptions o;
    o.kind = kind;
    o.n_partitions = 8;
    o.alpha = 0.8;
    o.seed = 99;
    Forest a = sample_forest(kUnit, data, o);
    o.threads = 3;
    Forest b = sample_forest(kUnit, data, o);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    Forest c = forest_from_json(Json::parse(to_json(a).dump()));
    EXPECT_EQ(a, c);
    o.seed = 100;
    EXPECT_NE(to_json(a).dump(), to_json(sample_forest(kUnit, data, o)).dump());
  }
}
