#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "esikit/aggregation.hpp"
#include "esikit/baseline_idw.hpp"
#include "esikit/engine.hpp"
#include "esikit/error.hpp"
#include "esikit/geometry.hpp"
#include "esikit/parallel.hpp"
#include "esikit/rng.hpp"

namespace esi {

enum class Metric { mse, mae };

inline const char* to_string(Metric m) noexcept { return m == Metric::mse ? "mse" : "mae"; }

inline Metric parse_metric(std::string_view s) {
  if (s == "mse") return Metric::mse;
  if (s == "mae") return Metric::mae;
  throw InvalidArgument("unknown metric '" + std::string(s) + "'");
}

enum class LocalKind { idw, kriging };

/// Candidate values per ESI argument. Every combination is one scenario.
struct EsiSearchGrid {
  ProcessKind p_process = ProcessKind::mondrian;
  LocalKind local = LocalKind::idw;
  std::vector<std::size_t> n_partitions{500};
  std::vector<double> alpha{0.8};
  std::vector<bool> data_cond{true};
  std::vector<double> exponent{2.0};  // idw
  std::vector<CovarianceModel> model{CovarianceModel::spherical};  // kriging
  std::vector<double> nugget{0.1};
  std::vector<double> range{5000.0};
  std::vector<double> sill{1.0};
  std::vector<std::string> agg_function{"mean"};
};

struct IdwSearchGrid {
  std::vector<double> radius;
  std::vector<double> exponent{2.0};
};

struct SearchOptions {
  int k = 10;  // folds; -1 for leave-one-out
  Metric metric = Metric::mse;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  /// A fold whose held-out predictions are missing for more than this
  /// fraction scores +inf.
  double max_missing_fraction = 0.1;
};

template <class Params>
struct SearchRecord {
  std::size_t index = 0;  // enumeration order
  Params params;
  double cv_error = 0.0;
};

template <class Params>
struct SearchResult {
  std::vector<SearchRecord<Params>> records;
  int k = 10;
  Metric metric = Metric::mse;

  /// Lowest cv_error; ties resolve to the lowest scenario index.
  const SearchRecord<Params>& best_record() const {
    if (records.empty()) throw InvalidArgument("best_result: empty search");
    const SearchRecord<Params>* best = &records.front();
    for (const auto& r : records)
      if (r.cv_error < best->cv_error) best = &r;
    return *best;
  }
  const Params& best_result() const { return best_record().params; }
};

using EsiSearchResult = SearchResult<EsiConfig>;
using IdwSearchResult = SearchResult<GlobalIdwParams>;

// ---------------------------------------------------------------------------

/// Scenario list in enumeration order (aggregation varies fastest).
inline std::vector<EsiConfig> expand_grid(const EsiSearchGrid& g, std::uint64_t seed = 0) {
  auto nonempty = [](bool ok, const char* what) {
    detail::require(ok, std::string("search grid: empty candidate list for ") + what);
  };
  nonempty(!g.n_partitions.empty(), "n_partitions");
  nonempty(!g.alpha.empty(), "alpha");
  nonempty(!g.data_cond.empty(), "data_cond");
  nonempty(!g.agg_function.empty(), "agg_function");
  if (g.local == LocalKind::kriging) {
    if (g.p_process == ProcessKind::voronoi)
      throw Unsupported("search grid: the kriging local interpolator is only available with the mondrian process");
    nonempty(!g.model.empty(), "model");
    nonempty(!g.nugget.empty(), "nugget");
    nonempty(!g.range.empty(), "range");
    nonempty(!g.sill.empty(), "sill");
  } else {
    nonempty(!g.exponent.empty(), "exponent");
  }

  std::vector<LocalParams> locals;
  if (g.local == LocalKind::idw) {
    for (double p : g.exponent) locals.emplace_back(IdwParams{p});
  } else {
    for (auto m : g.model)
      for (double n : g.nugget)
        for (double r : g.range)
          for (double s : g.sill) locals.emplace_back(KrigingParams{m, n, r, s});
  }

  std::vector<EsiConfig> out;
  for (std::size_t m : g.n_partitions)
    for (double a : g.alpha)
      for (bool dc : g.data_cond)
        for (const auto& local : locals)
          for (const auto& agg : g.agg_function) {
            EsiConfig c;
            c.p_process = g.p_process;
            c.n_partitions = m;
            c.alpha = a;
            c.data_cond = dc;
            c.local = local;
            c.agg_function = agg;
            c.seed = seed;
            validate(c);
            out.push_back(std::move(c));
          }
  return out;
}

inline std::vector<GlobalIdwParams> expand_grid(const IdwSearchGrid& g) {
  detail::require(!g.radius.empty(), "search grid: empty candidate list for radius");
  detail::require(!g.exponent.empty(), "search grid: empty candidate list for exponent");
  std::vector<GlobalIdwParams> out;
  for (double r : g.radius)
    for (double p : g.exponent) {
      GlobalIdwParams q{r, p};
      validate(q);
      out.push_back(q);
    }
  return out;
}

/// Seeded shuffle of [0, n) cut into k contiguous folds whose sizes differ by
/// at most one. k = -1 gives n singleton folds.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k == -1) k = static_cast<int>(n);
  if (k < 2 || static_cast<std::size_t>(k) > n)
    throw InvalidArgument("k must satisfy 2 <= k <= number of samples, or be -1 for leave-one-out");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(derive_seed(seed, 0xF01DULL));
  std::shuffle(order.begin(), order.end(), rng);
  auto kk = static_cast<std::size_t>(k);
  std::vector<std::vector<std::size_t>> folds(kk);
  for (std::size_t f = 0; f < kk; ++f) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(f * n / kk);
    auto last = order.begin() + static_cast<std::ptrdiff_t>((f + 1) * n / kk);
    folds[f].assign(first, last);
    std::sort(folds[f].begin(), folds[f].end());
  }
  return folds;
}

/// Error of held-out predictions; +inf when too many are missing.
inline double fold_error(std::span<const double> pred, std::span<const double> truth, Metric metric,
                         double max_missing_fraction = 0.1) {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (is_missing(pred[i])) continue;
    double d = pred[i] - truth[i];
    sum += metric == Metric::mse ? d * d : std::abs(d);
    ++used;
  }
  std::size_t missing = pred.size() - used;
  if (used == 0 || static_cast<double>(missing) > max_missing_fraction * static_cast<double>(pred.size()))
    return std::numeric_limits<double>::infinity();
  return sum / static_cast<double>(used);
}

namespace detail {

struct FoldSplit {
  ConditioningData train;
  LocationSet held;
  std::vector<double> truth;
};

inline std::vector<FoldSplit> split_folds(const ConditioningData& data, int k, std::uint64_t seed) {
  auto folds = make_folds(data.size(), k, seed);
  std::vector<FoldSplit> out;
  out.reserve(folds.size());
  std::vector<char> held_mask(data.size());
  for (const auto& fold : folds) {
    std::fill(held_mask.begin(), held_mask.end(), 0);
    for (std::size_t i : fold) held_mask[i] = 1;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!held_mask[i]) train_idx.push_back(i);
    std::vector<double> truth;
    for (std::size_t i : fold) truth.push_back(data.values()[i]);
    out.push_back({data.subset(train_idx), data.points().subset(fold), std::move(truth)});
  }
  return out;
}

inline double mean_error(std::span<const double> per_fold) {
  double s = 0.0;
  for (double e : per_fold) s += e;
  return s / static_cast<double>(per_fold.size());
}

}  // namespace detail

/// k-fold cross-validated grid search over ESI configurations. Every scenario
/// uses options.seed as its config seed and sees the same folds; the forest of
/// fold f is drawn with derive_seed(seed, f), so scenarios that differ only in
/// the aggregation share one cube per fold. `targets` only widens the domain
/// (as it would in the final estimate).
inline EsiSearchResult esi_hparams_search(const ConditioningData& data, const LocationSet& targets,
                                          const EsiSearchGrid& grid, const SearchOptions& opt = {}) {
  auto configs = expand_grid(grid, opt.seed);
  auto splits = detail::split_folds(data, opt.k, opt.seed);
  Domain domain = enclosing_domain(data.points(), targets);

  // Runs of consecutive scenarios that differ only in agg_function.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    EsiConfig a = configs[i];
    if (!groups.empty()) {
      EsiConfig b = configs[groups.back().first];
      a.agg_function = b.agg_function;
      if (a == b) {
        ++groups.back().second;
        continue;
      }
    }
    groups.emplace_back(i, i + 1);
  }

  std::size_t nf = splits.size();
  std::vector<double> errors(configs.size() * nf);
  parallel_for(groups.size() * nf, opt.threads, [&](std::size_t task) {
    auto [first, last] = groups[task / nf];
    std::size_t f = task % nf;
    const auto& split = splits[f];
    EsiConfig cfg = configs[first];
    cfg.seed = derive_seed(opt.seed, f);
    SampleCube cube = estimate_cube(split.train, split.held, cfg, domain, 1);
    for (std::size_t s = first; s < last; ++s) {
      auto pred = parse_aggregation(configs[s].agg_function)(cube);
      errors[s * nf + f] = fold_error(pred, split.truth, opt.metric, opt.max_missing_fraction);
    }
  });

  EsiSearchResult r;
  r.k = opt.k;
  r.metric = opt.metric;
  for (std::size_t s = 0; s < configs.size(); ++s)
    r.records.push_back({s, configs[s], detail::mean_error({errors.data() + s * nf, nf})});
  return r;
}

inline EsiSearchResult esi_hparams_search(const ConditioningData& data, const GridSpec& targets,
                                          const EsiSearchGrid& grid, const SearchOptions& opt = {}) {
  return esi_hparams_search(data, flatten_grid(targets), grid, opt);
}

/// Same protocol for the global radius-limited IDW baseline.
inline IdwSearchResult idw_hparams_search(const ConditioningData& data, const IdwSearchGrid& grid,
                                          const SearchOptions& opt = {}) {
  auto params = expand_grid(grid);
  auto splits = detail::split_folds(data, opt.k, opt.seed);
  std::size_t nf = splits.size();
  std::vector<double> errors(params.size() * nf);
  parallel_for(params.size() * nf, opt.threads, [&](std::size_t task) {
    std::size_t s = task / nf, f = task % nf;
    auto pred = idw_nongriddata(splits[f].train, splits[f].held, params[s], 1).estimate;
    errors[task] = fold_error(pred, splits[f].truth, opt.metric, opt.max_missing_fraction);
  });
  IdwSearchResult r;
  r.k = opt.k;
  r.metric = opt.metric;
  for (std::size_t s = 0; s < params.size(); ++s)
    r.records.push_back({s, params[s], detail::mean_error({errors.data() + s * nf, nf})});
  return r;
}

// ---------------------------------------------------------------------------

/// Plot-ready summary: a histogram of scenario errors and the error series in
/// scenario order. Non-finite errors land in a trailing bin with edge +inf.
struct CvErrorReport {
  std::vector<double> bin_edges;  // counts.size() + 1 entries
  std::vector<std::size_t> counts;
  std::vector<double> series;
  std::size_t best_index = 0;
};

template <class Params>
CvErrorReport cv_error_report(const SearchResult<Params>& result) {
  const auto& best = result.best_record();
  CvErrorReport rep;
  rep.best_index = best.index;
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  std::size_t finite = 0, non_finite = 0;
  for (const auto& r : result.records) {
    rep.series.push_back(r.cv_error);
    if (std::isfinite(r.cv_error)) {
      lo = std::min(lo, r.cv_error);
      hi = std::max(hi, r.cv_error);
      ++finite;
    } else {
      ++non_finite;
    }
  }
  if (finite > 0) {
    auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(finite))));
    if (!(hi > lo)) bins = 1;
    double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    rep.counts.assign(bins, 0);
    for (std::size_t b = 0; b <= bins; ++b) rep.bin_edges.push_back(lo + width * static_cast<double>(b));
    if (hi > lo) rep.bin_edges.back() = hi;
    for (double e : rep.series) {
      if (!std::isfinite(e)) continue;
      auto b = hi > lo ? std::min(bins - 1, static_cast<std::size_t>((e - lo) / width)) : 0;
      ++rep.counts[b];
    }
  }
  if (non_finite > 0) {
    if (rep.bin_edges.empty()) rep.bin_edges.push_back(HUGE_VAL);
    rep.bin_edges.push_back(HUGE_VAL);
    rep.counts.push_back(non_finite);
  }
  return rep;
}

}  // namespace esi
