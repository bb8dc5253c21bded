#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "esikit/aggregation.hpp"
#include "esikit/error.hpp"
#include "esikit/geometry.hpp"
#include "esikit/kdtree.hpp"
#include "esikit/local_interp.hpp"
#include "esikit/parallel.hpp"

namespace esi {

struct GlobalIdwParams {
  double radius = 1.0;
  double exponent = 2.0;
  friend bool operator==(const GlobalIdwParams&, const GlobalIdwParams&) = default;
};

inline void validate(const GlobalIdwParams& p) {
  detail::require(std::isfinite(p.radius) && p.radius > 0.0, "IDW radius must be > 0");
  detail::require(std::isfinite(p.exponent) && p.exponent >= 0.0, "IDW exponent must be finite and >= 0");
}

struct IdwResult {
  std::vector<double> estimate;
  GlobalIdwParams params;
  std::optional<GridSpec> grid;

  std::vector<std::size_t> estimation_shape() const {
    return grid ? grid->shape() : std::vector<std::size_t>{estimate.size()};
  }
};

/// Plain IDW over the samples within `radius` of each target; NaN where no
/// sample is in reach.
inline IdwResult idw_nongriddata(const ConditioningData& data, const LocationSet& targets,
                                 const GlobalIdwParams& params, unsigned threads = 0) {
  validate(params);
  detail::require(targets.empty() || targets.dim() == data.dim(), "idw_nongriddata: dimension mismatch");
  KdTree tree(data.points());
  IdwResult r{std::vector<double>(targets.size(), kMissing), params, std::nullopt};
  constexpr std::size_t kBlock = 256;
  std::size_t blocks = (targets.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::vector<double> scratch;
    std::size_t end = std::min(targets.size(), (b + 1) * kBlock);
    for (std::size_t t = b * kBlock; t < end; ++t) {
      auto nb = tree.radius(targets.row(t), params.radius);
      if (nb.empty()) continue;
      r.estimate[t] = detail::idw_at(targets.row(t), data.points(), data.values(), nb, params.exponent, scratch);
    }
  });
  return r;
}

inline IdwResult idw_griddata(const ConditioningData& data, const GridSpec& grid, const GlobalIdwParams& params,
                              unsigned threads = 0) {
  detail::require(grid.dim() == data.dim(), "idw_griddata: grid dimension does not match the data");
  IdwResult r = idw_nongriddata(data, flatten_grid(grid), params, threads);
  r.grid = grid;
  return r;
}

}  // namespace esi
