#include <cmath>

#include <gtest/gtest.h>

#include "esikit/baseline_idw.hpp"
#include "esikit/synthetic.hpp"
#include "oracle.hpp"

using namespace esi;

TEST(BaselineIdw, MatchesBruteForceWithinRadius) {
  auto data = synth::cubic_samples(200, 1);
  auto grid = synth::unit_square_grid(15, 11).spec();
  auto targets = flatten_grid(grid);
  for (double radius : {0.05, 0.1, 0.3}) {
    for (double p : {0.5, 2.0}) {
      auto r = idw_griddata(data, grid, GlobalIdwParams{radius, p});
      ASSERT_EQ(r.estimate.size(), targets.size());
      for (std::size_t t = 0; t < targets.size(); ++t) {
        std::vector<double> x(targets.row(t).begin(), targets.row(t).end());
        std::vector<std::vector<double>> pts;
        std::vector<double> vals;
        for (std::size_t i = 0; i < data.size(); ++i) {
          if (oracle::dist(data.points().row(i).data(), x.data(), 2) <= radius) {
            pts.emplace_back(data.points().row(i).begin(), data.points().row(i).end());
            vals.push_back(data.values()[i]);
          }
        }
        if (pts.empty()) {
          EXPECT_TRUE(std::isnan(r.estimate[t]));
        } else {
          EXPECT_NEAR(r.estimate[t], oracle::idw(pts, vals, x, p), 1e-12);
        }
      }
    }
  }
}

TEST(BaselineIdw, ShapeAndValidation) {
  auto data = synth::cubic_samples(20, 2);
  auto grid = synth::unit_square_grid(4, 7).spec();
  auto r = idw_griddata(data, grid, {});
  EXPECT_EQ(r.estimation_shape(), (std::vector<std::size_t>{4, 7}));
  auto n = idw_nongriddata(data, flatten_grid(grid), {});
  EXPECT_EQ(n.estimation_shape(), (std::vector<std::size_t>{28}));
  EXPECT_EQ(r.estimate, n.estimate);
  EXPECT_THROW(idw_nongriddata(data, flatten_grid(grid), {0.0, 2.0}), InvalidArgument);
  EXPECT_THROW(idw_nongriddata(data, flatten_grid(grid), {1.0, -1.0}), InvalidArgument);
}

TEST(BaselineIdw, ExactAtSamples) {
  auto data = synth::cubic_samples(30, 3);
  auto r = idw_nongriddata(data, data.points(), {0.2, 2.0});
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(r.estimate[i], data.values()[i]);
}
