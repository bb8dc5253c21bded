#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "esikit/aggregation.hpp"
#include "esikit/error.hpp"
#include "esikit/geometry.hpp"
#include "esikit/local_interp.hpp"
#include "esikit/parallel.hpp"
#include "esikit/partition.hpp"

namespace esi {

using LocalParams = std::variant<IdwParams, KrigingParams>;

inline bool is_kriging(const LocalParams& p) noexcept { return std::holds_alternative<KrigingParams>(p); }

/// Maximum dimension supported by the kriging voter.
inline constexpr std::size_t kKrigingMaxDim = 3;

struct EsiConfig {
  ProcessKind p_process = ProcessKind::mondrian;
  std::size_t n_partitions = 500;
  double alpha = 0.8;
  bool data_cond = true;
  LocalParams local = IdwParams{};
  std::string agg_function = "mean";  // selector, see parse_aggregation
  std::uint64_t seed = 0;

  friend bool operator==(const EsiConfig&, const EsiConfig&) = default;
};

inline void validate(const EsiConfig& c) {
  detail::require(c.n_partitions >= 1, "n_partitions must be >= 1");
  detail::require(c.alpha >= 0.0 && c.alpha < 1.0, "alpha must lie in [0, 1)");
  std::visit([](const auto& p) { validate(p); }, c.local);
  if (is_kriging(c.local) && c.p_process == ProcessKind::voronoi)
    throw Unsupported("the kriging local interpolator is only available with the mondrian process");
  parse_aggregation(c.agg_function);
}

struct RunOptions {
  unsigned threads = 0;                    // 0: ESIKIT_THREADS or hardware concurrency
  std::optional<Aggregation> aggregation;  // overrides config.agg_function
};

struct CubeStats {
  std::size_t singular_fallbacks = 0;
};

/// Entry (j, k) is the local interpolator applied at target j to the
/// conditioning points sharing its cell in partition k, or NaN when that cell
/// holds no data.
inline SampleCube generate_cube(const Forest& forest, const ConditioningData& data, const LocationSet& targets,
                                const LocalParams& local, unsigned threads = 0, CubeStats* stats = nullptr) {
  std::visit([](const auto& p) { validate(p); }, local);
  detail::require(forest.size() >= 1, "generate_cube: empty forest");
  detail::require(data.dim() == forest.domain.dim(), "generate_cube: data dimension does not match the forest");
  detail::require(targets.empty() || targets.dim() == data.dim(), "generate_cube: target dimension mismatch");
  if (is_kriging(local)) {
    if (forest.kind == ProcessKind::voronoi)
      throw Unsupported("the kriging local interpolator is only available with the mondrian process");
    if (data.dim() > kKrigingMaxDim) throw Unsupported("the kriging local interpolator supports at most 3 dimensions");
  }

  SampleCube cube(targets.size(), forest.size());
  KrigingDiagnostics diag;
  const auto& pts = data.points();
  const auto& vals = data.values();

  parallel_for(forest.size(), threads, [&](std::size_t k) {
    const Partition& part = forest.partitions[k];
    auto data_groups = group_by_cell(part, pts);
    auto target_groups = group_by_cell(part, targets);
    std::vector<double> scratch;
    for (std::size_t c = 0; c < target_groups.size(); ++c) {
      const auto& tg = target_groups[c];
      const auto& dg = data_groups[c];
      if (tg.empty() || dg.empty()) continue;
      if (const auto* idw = std::get_if<IdwParams>(&local)) {
        for (std::size_t j : tg) cube(j, k) = detail::idw_at(targets.row(j), pts, vals, dg, idw->exponent, scratch);
      } else {
        OrdinaryKriging ok(pts, vals, dg, std::get<KrigingParams>(local));
        if (ok.singular()) ++diag.singular_fallbacks;
        for (std::size_t j : tg) cube(j, k) = ok.estimate(targets.row(j));
      }
    }
  });
  if (stats != nullptr) stats->singular_fallbacks = diag.singular_fallbacks.load();
  return cube;
}

/// Cube, current aggregate and the configuration that produced them.
class EstimationResult {
 public:
  EstimationResult(SampleCube cube, EsiConfig config, Aggregation aggregation, std::optional<GridSpec> grid,
                   CubeStats stats = {})
      : cube_(std::move(cube)), config_(std::move(config)), grid_(std::move(grid)), stats_(stats) {
    if (grid_) {
      detail::require(grid_->size() == cube_.rows, "EstimationResult: grid size does not match the cube");
      cube_.grid_shape = grid_->shape();
    }
    re_estimate(aggregation);
  }

  const SampleCube& esi_samples() const noexcept { return cube_; }
  const std::vector<double>& estimation() const noexcept { return estimate_; }

  /// Grid shape for gridded results, {N} otherwise.
  std::vector<std::size_t> estimation_shape() const {
    return grid_ ? grid_->shape() : std::vector<std::size_t>{cube_.rows};
  }

  const EsiConfig& config() const noexcept { return config_; }
  const std::optional<GridSpec>& grid() const noexcept { return grid_; }
  const Aggregation& aggregation() const noexcept { return agg_; }
  const CubeStats& stats() const noexcept { return stats_; }

  /// Replaces the estimate with agg(cube) and drops cached precision.
  const std::vector<double>& re_estimate(const Aggregation& agg) {
    estimate_ = agg(cube_);
    agg_ = agg;
    precision_cache_.clear();
    return estimate_;
  }

  const std::vector<double>* cached_precision(const std::string& loss_name) const {
    auto it = precision_cache_.find(loss_name);
    return it == precision_cache_.end() ? nullptr : &it->second;
  }
  void cache_precision(const std::string& loss_name, std::vector<double> p) {
    precision_cache_[loss_name] = std::move(p);
  }

 private:
  SampleCube cube_;
  std::vector<double> estimate_;
  EsiConfig config_;
  Aggregation agg_;
  std::optional<GridSpec> grid_;
  CubeStats stats_;
  std::map<std::string, std::vector<double>> precision_cache_;
};

/// Cube for `targets` inside an explicit domain. Shared by the public entry
/// points and cross-validation (which keeps the full-data domain per fold).
inline SampleCube estimate_cube(const ConditioningData& data, const LocationSet& targets, const EsiConfig& config,
                                const Domain& domain, unsigned threads = 0, CubeStats* stats = nullptr) {
  validate(config);
  ForestOptions fo;
  fo.kind = config.p_process;
  fo.n_partitions = config.n_partitions;
  fo.alpha = config.alpha;
  fo.data_cond = config.data_cond;
  fo.seed = config.seed;
  fo.threads = threads;
  Forest forest = sample_forest(domain, data, fo);
  return generate_cube(forest, data, targets, config.local, threads, stats);
}

namespace detail {

inline EstimationResult run_esi(const ConditioningData& data, const LocationSet& targets, const EsiConfig& config,
                                std::optional<GridSpec> grid, const RunOptions& opt) {
  validate(config);
  detail::require(targets.dim() == data.dim(), "targets and conditioning data differ in dimension");
  Domain domain = enclosing_domain(data.points(), targets);
  CubeStats stats;
  SampleCube cube = estimate_cube(data, targets, config, domain, opt.threads, &stats);
  Aggregation agg = opt.aggregation ? *opt.aggregation : parse_aggregation(config.agg_function);
  return EstimationResult(std::move(cube), config, std::move(agg), std::move(grid), stats);
}

}  // namespace detail

/// ESI estimate over every node of `grid`.
inline EstimationResult esi_griddata(const ConditioningData& data, const GridSpec& grid, const EsiConfig& config,
                                     const RunOptions& opt = {}) {
  detail::require(grid.dim() == data.dim(), "esi_griddata: grid dimension does not match the data");
  return detail::run_esi(data, flatten_grid(grid), config, grid, opt);
}

/// ESI estimate at arbitrary target locations.
inline EstimationResult esi_nongriddata(const ConditioningData& data, const LocationSet& targets,
                                        const EsiConfig& config, const RunOptions& opt = {}) {
  return detail::run_esi(data, targets, config, std::nullopt, opt);
}

}  // namespace esi
