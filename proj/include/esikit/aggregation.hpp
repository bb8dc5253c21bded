#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esikit/error.hpp"
#include "esikit/rng.hpp"

namespace esi {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// N x m matrix of weak-voter estimates, one row per target and one column per
/// partition, stored row-major. Missing entries are NaN. `grid_shape` holds the
/// target grid dimensions when targets came from a grid (their product is N).
struct SampleCube {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<std::size_t> grid_shape;

  SampleCube() = default;
  SampleCube(std::size_t n, std::size_t m, std::vector<std::size_t> grid = {})
      : rows(n), cols(m), data(n * m, kMissing), grid_shape(std::move(grid)) {}

  double& operator()(std::size_t j, std::size_t k) noexcept { return data[j * cols + k]; }
  double operator()(std::size_t j, std::size_t k) const noexcept { return data[j * cols + k]; }
  std::span<const double> row(std::size_t j) const noexcept { return {data.data() + j * cols, cols}; }

  bool gridded() const noexcept { return !grid_shape.empty(); }

  /// d1 x ... x dn x m for gridded cubes, N x m otherwise.
  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s = gridded() ? grid_shape : std::vector<std::size_t>{rows};
    s.push_back(cols);
    return s;
  }

  friend bool operator==(const SampleCube&, const SampleCube&) = default;
};

/// An aggregation G: cube -> one value per row. The identity aggregation has
/// no reducer; callers that accept it keep the cube as is.
struct Aggregation {
  std::string name;
  std::function<std::vector<double>(const SampleCube&)> reduce;

  bool is_identity() const noexcept { return !reduce; }

  std::vector<double> operator()(const SampleCube& cube) const {
    if (is_identity()) throw Unsupported("aggregation '" + name + "' does not reduce the cube");
    return reduce(cube);
  }
};

namespace agg {

namespace detail {

template <class RowFn>
std::vector<double> by_row(const SampleCube& cube, RowFn&& fn) {
  std::vector<double> out(cube.rows, kMissing);
  std::vector<double> valid;
  valid.reserve(cube.cols);
  for (std::size_t j = 0; j < cube.rows; ++j) {
    valid.clear();
    for (double v : cube.row(j))
      if (!is_missing(v)) valid.push_back(v);
    if (!valid.empty()) out[j] = fn(valid);
  }
  return out;
}

// Linear interpolation between closest ranks of sorted data.
inline double sorted_percentile(std::span<const double> sorted, double q) {
  double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline std::pair<double, double> finite_range(const SampleCube& cube) {
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (double v : cube.data) {
    if (is_missing(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

}  // namespace detail

inline std::vector<double> mean_of(const SampleCube& cube) {
  return detail::by_row(cube, [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  });
}

inline Aggregation mean() { return {"mean", mean_of}; }

inline Aggregation percentile(double q) {
  esi::detail::require(q >= 0.0 && q <= 100.0, "percentile: q must lie in [0, 100]");
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, q);
  std::string name = "p" + std::string(buf, res.ptr);
  return {name, [q](const SampleCube& cube) {
            return detail::by_row(cube, [q](std::span<const double> v) {
              std::vector<double> s(v.begin(), v.end());
              std::sort(s.begin(), s.end());
              return detail::sorted_percentile(s, q);
            });
          }};
}

inline Aggregation median() {
  Aggregation a = percentile(50.0);
  a.name = "median";
  return a;
}

/// Histogram mode with ceil(sqrt(n)) equal bins over the row's range; returns
/// the mean of the samples in the densest bin (lowest bin on ties).
inline Aggregation map_mode() {
  return {"map", [](const SampleCube& cube) {
            return detail::by_row(cube, [](std::span<const double> v) {
              auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
              double lo = *lo_it, hi = *hi_it;
              if (!(hi > lo)) return lo;
              auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(v.size()))));
              bins = std::max<std::size_t>(bins, 1);
              double width = (hi - lo) / static_cast<double>(bins);
              std::vector<std::size_t> count(bins, 0);
              std::vector<double> sum(bins, 0.0);
              for (double x : v) {
                auto b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
                ++count[b];
                sum[b] += x;
              }
              std::size_t best = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
              return sum[best] / static_cast<double>(count[best]);
            });
          }};
}

struct WeightedAverageOptions {
  std::optional<std::vector<double>> weights;  // simplex over the m columns
  bool normalize = false;
  bool force_resample = true;
  std::uint64_t seed = 0x5EEDULL;
};

/// Per-row weighted average, weights renormalized over the non-missing
/// entries. Without explicit weights they are drawn from a flat Dirichlet;
/// with force_resample every call draws new ones. The generator is guarded by
/// a mutex, so copies of the returned object share one weight stream.
inline Aggregation weighted_average(WeightedAverageOptions opt = {}) {
  if (opt.weights) {
    double total = 0.0;
    for (double w : *opt.weights) {
      esi::detail::require(std::isfinite(w) && w >= 0.0, "weighted_average: weights must be nonnegative");
      total += w;
    }
    esi::detail::require(!opt.weights->empty() && std::abs(total - 1.0) <= 1e-9,
                         "weighted_average: weights must sum to 1");
  }
  struct State {
    std::mutex mutex;
    Rng rng;
    std::optional<std::vector<double>> fixed;
  };
  auto state = std::make_shared<State>();
  state->rng = make_rng(opt.seed);
  state->fixed = opt.weights;
  bool resample = !opt.weights && opt.force_resample;
  bool normalize = opt.normalize;

  auto draw = [](Rng& rng, std::size_t m) {
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<double> w(m);
    double total = 0.0;
    for (auto& x : w) total += (x = g(rng));
    for (auto& x : w) x /= total;
    return w;
  };

  return {"wavg", [state, resample, normalize, draw](const SampleCube& cube) {
            std::vector<double> w;
            {
              std::lock_guard lock(state->mutex);
              if (resample || !state->fixed || state->fixed->size() != cube.cols) {
                if (state->fixed && !resample && state->fixed->size() != cube.cols)
                  throw InvalidArgument("weighted_average: weight count does not match the number of samples");
                w = draw(state->rng, cube.cols);
                if (!resample) state->fixed = w;
              } else {
                w = *state->fixed;
              }
            }
            std::vector<double> out(cube.rows, kMissing);
            for (std::size_t j = 0; j < cube.rows; ++j) {
              double num = 0.0, den = 0.0;
              for (std::size_t k = 0; k < cube.cols; ++k) {
                double v = cube(j, k);
                if (is_missing(v)) continue;
                num += w[k] * v;
                den += w[k];
              }
              if (den > 0.0) out[j] = num / den;
            }
            if (normalize) {
              auto [clo, chi] = detail::finite_range(cube);
              double elo = HUGE_VAL, ehi = -HUGE_VAL;
              for (double v : out)
                if (!is_missing(v)) elo = std::min(elo, v), ehi = std::max(ehi, v);
              if (ehi > elo)
                for (double& v : out)
                  if (!is_missing(v)) v = clo + (v - elo) * (chi - clo) / (ehi - elo);
            }
            return out;
          }};
}

struct BilateralOptions {
  double sigma_space = 1.5;         // grid cells
  double sigma_range_fraction = 0.1;  // of the cube's dynamic range
};

/// Edge-preserving filter over a 2-D gridded cube. Each output pools every
/// sample of the locations in a (2 ceil(2 sigma_space) + 1)^2 window, weighted
/// by a spatial Gaussian and a range Gaussian on the difference between the
/// neighbour's and the centre's sample means.
inline Aggregation bilateral_filter(BilateralOptions opt = {}) {
  esi::detail::require(opt.sigma_space > 0.0, "bilateral_filter: sigma_space must be > 0");
  esi::detail::require(opt.sigma_range_fraction > 0.0, "bilateral_filter: sigma_range_fraction must be > 0");
  return {"bilateral", [opt](const SampleCube& cube) {
            if (cube.grid_shape.size() != 2)
              throw Unsupported("bilateral_filter: requires a cube over a two-axis grid");
            std::size_t nx = cube.grid_shape[0], ny = cube.grid_shape[1];
            std::vector<double> loc_mean = mean_of(cube);
            auto [lo, hi] = detail::finite_range(cube);
            double sigma_r = opt.sigma_range_fraction * (hi > lo ? hi - lo : 0.0);
            auto radius = static_cast<std::ptrdiff_t>(std::ceil(2.0 * opt.sigma_space));
            double two_ss2 = 2.0 * opt.sigma_space * opt.sigma_space;
            double two_sr2 = 2.0 * sigma_r * sigma_r;

            std::vector<double> out(cube.rows, kMissing);
            for (std::size_t i = 0; i < nx; ++i) {
              for (std::size_t j = 0; j < ny; ++j) {
                std::size_t c = i * ny + j;
                if (is_missing(loc_mean[c])) continue;
                double num = 0.0, den = 0.0;
                for (std::ptrdiff_t di = -radius; di <= radius; ++di) {
                  for (std::ptrdiff_t dj = -radius; dj <= radius; ++dj) {
                    auto ii = static_cast<std::ptrdiff_t>(i) + di, jj = static_cast<std::ptrdiff_t>(j) + dj;
                    if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(nx) ||
                        jj >= static_cast<std::ptrdiff_t>(ny))
                      continue;
                    std::size_t y = static_cast<std::size_t>(ii) * ny + static_cast<std::size_t>(jj);
                    if (is_missing(loc_mean[y])) continue;
                    double ws = std::exp(-static_cast<double>(di * di + dj * dj) / two_ss2);
                    double dv = loc_mean[y] - loc_mean[c];
                    double wr = two_sr2 > 0.0 ? std::exp(-dv * dv / two_sr2) : 1.0;
                    double w = ws * wr;
                    if (w == 0.0) continue;
                    for (double v : cube.row(y)) {
                      if (is_missing(v)) continue;
                      num += w * v;
                      den += w;
                    }
                  }
                }
                out[c] = num / den;
              }
            }
            return out;
          }};
}

inline Aggregation identity() { return {"identity", nullptr}; }

}  // namespace agg

/// Parses an aggregation selector: mean | median | map | p<q> | wavg | bilateral | identity.
inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean") return agg::mean();
  if (s == "median") return agg::median();
  if (s == "map") return agg::map_mode();
  if (s == "wavg") return agg::weighted_average();
  if (s == "bilateral") return agg::bilateral_filter();
  if (s == "identity") return agg::identity();
  if (s.size() > 1 && s.front() == 'p') {
    double q = 0.0;
    auto res = std::from_chars(s.data() + 1, s.data() + s.size(), q);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size()) {
      Aggregation a = agg::percentile(q);
      a.name = std::string(s);
      return a;
    }
  }
  throw InvalidArgument("unknown aggregation '" + std::string(s) + "'");
}

}  // namespace esi
