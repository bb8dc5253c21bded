#include <cmath>
#include <cstring>
#include <numeric>

#include <gtest/gtest.h>

#include "esikit/engine.hpp"
#include "esikit/synthetic.hpp"
#include "oracle.hpp"

using namespace esi;

namespace {

std::vector<std::vector<double>> rows(const LocationSet& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.emplace_back(s.row(i).begin(), s.row(i).end());
  return out;
}

LocationSet random_targets(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  LocationSet t(2);
  for (std::size_t i = 0; i < n; ++i) t.push_back(std::vector<double>{u(rng), u(rng)});
  return t;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

EsiConfig idw_config(ProcessKind kind, std::size_t m, double alpha, bool dc, double p, std::uint64_t seed) {
  EsiConfig c;
  c.p_process = kind;
  c.n_partitions = m;
  c.alpha = alpha;
  c.data_cond = dc;
  c.local = IdwParams{p};
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Engine, SingleCellForestGivesGlobalInterpolator) {
  auto data = synth::cubic_samples(30, 1);
  auto targets = random_targets(20, 2);
  // alpha = 0 with a voronoi process gives exactly one nucleus.
  auto r = esi_nongriddata(data, targets, idw_config(ProcessKind::voronoi, 5, 0.0, false, 2.0, 3));
  auto pts = rows(data.points());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    std::vector<double> x(targets.row(j).begin(), targets.row(j).end());
    EXPECT_NEAR(r.estimation()[j], oracle::idw(pts, data.values(), x, 2.0), 1e-12);
  }
  auto mean_cfg = idw_config(ProcessKind::voronoi, 5, 0.0, false, 0.0, 3);
  double mean = std::accumulate(data.values().begin(), data.values().end(), 0.0) / 30;
  auto flat = esi_nongriddata(data, targets, mean_cfg);
  for (double v : flat.estimation()) EXPECT_NEAR(v, mean, 1e-12);
}

TEST(Engine, KrigingWithVoronoiIsUnsupported) {
  auto data = synth::cubic_samples(10, 1);
  EsiConfig c = idw_config(ProcessKind::voronoi, 5, 0.5, true, 2.0, 0);
  c.local = KrigingParams{};
  EXPECT_THROW(esi_nongriddata(data, random_targets(3, 1), c), Unsupported);
}

TEST(Engine, CubeMatchesBruteForceOracle) {
  auto data = synth::cubic_samples(60, 4);
  auto targets = random_targets(40, 5);
  Domain domain = enclosing_domain(data.points(), targets);
  struct Case {
    ProcessKind kind;
    bool dc;
    LocalParams local;
    oracle::LocalSpec spec;
  };
  std::vector<Case> cases = {
      {ProcessKind::mondrian, false, IdwParams{2.0}, {0, 2.0}},
      {ProcessKind::mondrian, true, IdwParams{1.0}, {0, 1.0}},
      {ProcessKind::voronoi, false, IdwParams{3.0}, {0, 3.0}},
      {ProcessKind::voronoi, true, IdwParams{0.5}, {0, 0.5}},
      {ProcessKind::mondrian, true, KrigingParams{CovarianceModel::exponential, 0.1, 0.5, 1.0}, {1, 0, 1, 0.1, 0.5, 1.0}},
      {ProcessKind::mondrian, false, KrigingParams{CovarianceModel::spherical, 0.0, 0.8, 2.0}, {1, 0, 0, 0.0, 0.8, 2.0}},
  };
  for (const auto& c : cases) {
    ForestOptions fo;
    fo.kind = c.kind;
    fo.n_partitions = 20;
    fo.alpha = c.kind == ProcessKind::mondrian ? 0.7 : 0.3;
    fo.data_cond = c.dc;
    fo.seed = 17;
    Forest f = sample_forest(domain, data, fo);
    SampleCube cube = generate_cube(f, data, targets, c.local);
    auto expect = oracle::cube(f, rows(data.points()), data.values(), rows(targets), c.spec);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      for (std::size_t k = 0; k < f.size(); ++k) {
        if (std::isnan(expect[j][k])) {
          EXPECT_TRUE(std::isnan(cube(j, k)));
        } else {
          EXPECT_NEAR(cube(j, k), expect[j][k], 1e-10 * std::max(1.0, std::abs(expect[j][k])));
        }
      }
    }
  }
}

TEST(Engine, SameSeedIsBitwiseReproducible) {
  auto data = synth::cubic_samples(80, 6);
  auto targets = random_targets(50, 7);
  for (auto kind : {ProcessKind::mondrian, ProcessKind::voronoi}) {
    auto c = idw_config(kind, 30, 0.9, true, 2.0, 11);
    auto a = esi_nongriddata(data, targets, c, {1, std::nullopt});
    auto b = esi_nongriddata(data, targets, c, {4, std::nullopt});
    EXPECT_TRUE(bitwise_equal(a.esi_samples().data, b.esi_samples().data));
    c.seed = 12;
    auto d = esi_nongriddata(data, targets, c);
    EXPECT_FALSE(bitwise_equal(a.esi_samples().data, d.esi_samples().data));
  }
}

TEST(Engine, GridAndFlattenedTargetsAgree) {
  auto data = synth::cubic_samples(100, 8);
  GridSpec grid = synth::unit_square_grid(9, 13).spec();
  auto c = idw_config(ProcessKind::mondrian, 25, 0.9, true, 2.0, 5);
  auto g = esi_griddata(data, grid, c);
  auto n = esi_nongriddata(data, flatten_grid(grid), c);
  EXPECT_TRUE(bitwise_equal(g.esi_samples().data, n.esi_samples().data));
  EXPECT_TRUE(bitwise_equal(g.estimation(), n.estimation()));
  EXPECT_EQ(g.estimation_shape(), (std::vector<std::size_t>{9, 13}));
  EXPECT_EQ(g.esi_samples().shape(), (std::vector<std::size_t>{9, 13, 25}));
  EXPECT_EQ(n.estimation_shape(), (std::vector<std::size_t>{117}));
  EXPECT_EQ(n.esi_samples().shape(), (std::vector<std::size_t>{117, 25}));
}

TEST(Engine, ReEstimateWithSameAggregationIsNoOp) {
  auto data = synth::cubic_samples(50, 9);
  auto c = idw_config(ProcessKind::voronoi, 15, 0.5, true, 2.0, 5);
  c.agg_function = "median";
  auto r = esi_nongriddata(data, random_targets(30, 1), c);
  auto before = r.estimation();
  r.re_estimate(agg::median());
  EXPECT_TRUE(bitwise_equal(before, r.estimation()));
  r.re_estimate(agg::mean());
  EXPECT_TRUE(bitwise_equal(agg::mean()(r.esi_samples()), r.estimation()));
}

TEST(Engine, AggregationOverrideInRunOptions) {
  auto data = synth::cubic_samples(50, 9);
  auto t = random_targets(10, 1);
  auto c = idw_config(ProcessKind::voronoi, 15, 0.5, true, 2.0, 5);
  auto r = esi_nongriddata(data, t, c, {0, agg::percentile(90)});
  EXPECT_EQ(r.aggregation().name, "p90");
  EXPECT_TRUE(bitwise_equal(agg::percentile(90)(r.esi_samples()), r.estimation()));
}

TEST(Engine, ColumnsDependOnlyOnTheirPartition) {
  auto data = synth::cubic_samples(70, 10);
  auto targets = random_targets(25, 2);
  auto c = idw_config(ProcessKind::mondrian, 12, 0.9, true, 2.0, 33);
  auto big = esi_nongriddata(data, targets, c).esi_samples();
  c.n_partitions = 5;
  auto small = esi_nongriddata(data, targets, c).esi_samples();
  for (std::size_t j = 0; j < targets.size(); ++j)
    for (std::size_t k = 0; k < 5; ++k) {
      double a = big(j, k), b = small(j, k);
      EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
    }
}

TEST(Engine, InputValidation) {
  auto data = synth::cubic_samples(20, 1);
  auto c = idw_config(ProcessKind::mondrian, 5, 0.5, true, 2.0, 0);
  EXPECT_THROW(esi_nongriddata(data, LocationSet(3, {0, 0, 0}), c), InvalidArgument);
  c.alpha = 1.0;
  EXPECT_THROW(esi_nongriddata(data, random_targets(2, 1), c), InvalidArgument);
  c.alpha = 0.5;
  c.agg_function = "bogus";
  EXPECT_THROW(esi_nongriddata(data, random_targets(2, 1), c), InvalidArgument);
}

TEST(Engine, KrigingDimensionLimit) {
  LocationSet p(4, {0, 0, 0, 0, 1, 1, 1, 1});
  ConditioningData d(p, {1, 2});
  EsiConfig c;
  c.local = KrigingParams{};
  c.n_partitions = 2;
  EXPECT_THROW(esi_nongriddata(d, p, c), Unsupported);
}
