#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "esikit/error.hpp"

namespace esi {

/// Row-major N x d matrix of coordinates.
class LocationSet {
 public:
  LocationSet() = default;
  explicit LocationSet(std::size_t dim) : dim_(dim) {
    detail::require(dim >= 1, "LocationSet: dimension must be >= 1");
  }
  LocationSet(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
    detail::require(dim >= 1, "LocationSet: dimension must be >= 1");
    detail::require(coords_.size() % dim == 0, "LocationSet: coordinate count is not a multiple of the dimension");
    for (double c : coords_) detail::require(std::isfinite(c), "LocationSet: non-finite coordinate");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool empty() const noexcept { return coords_.empty(); }

  std::span<const double> row(std::size_t i) const noexcept { return {coords_.data() + i * dim_, dim_}; }
  std::span<const double> operator[](std::size_t i) const noexcept { return row(i); }

  void push_back(std::span<const double> x) {
    detail::require(x.size() == dim_, "LocationSet: row has wrong dimension");
    for (double c : x) detail::require(std::isfinite(c), "LocationSet: non-finite coordinate");
    coords_.insert(coords_.end(), x.begin(), x.end());
  }
  void reserve(std::size_t rows) { coords_.reserve(rows * dim_); }

  const std::vector<double>& coords() const noexcept { return coords_; }

  /// Rows selected by index, in the given order.
  LocationSet subset(std::span<const std::size_t> idx) const {
    LocationSet out(dim_);
    out.coords_.reserve(idx.size() * dim_);
    for (std::size_t i : idx) {
      auto r = row(i);
      out.coords_.insert(out.coords_.end(), r.begin(), r.end());
    }
    return out;
  }

  friend bool operator==(const LocationSet&, const LocationSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

/// Axis-aligned box [a1,b1] x ... x [ad,bd].
class Domain {
 public:
  Domain() = default;
  Domain(std::vector<double> lower, std::vector<double> upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    detail::require(!lower_.empty(), "Domain: dimension must be >= 1");
    detail::require(lower_.size() == upper_.size(), "Domain: lower/upper dimension mismatch");
    for (std::size_t i = 0; i < lower_.size(); ++i) {
      detail::require(std::isfinite(lower_[i]) && std::isfinite(upper_[i]), "Domain: non-finite bound");
      detail::require(upper_[i] >= lower_[i], "Domain: upper bound below lower bound");
    }
  }

  std::size_t dim() const noexcept { return lower_.size(); }
  const std::vector<double>& lower() const noexcept { return lower_; }
  const std::vector<double>& upper() const noexcept { return upper_; }
  double lower(std::size_t i) const noexcept { return lower_[i]; }
  double upper(std::size_t i) const noexcept { return upper_[i]; }
  double side(std::size_t i) const noexcept { return upper_[i] - lower_[i]; }

  bool contains(std::span<const double> x) const noexcept {
    if (x.size() != dim()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] >= lower_[i] && x[i] <= upper_[i])) return false;
    return true;
  }

  /// The two halves of this box cut at `pos` along `dim`: {below, above}.
  std::pair<Domain, Domain> split(std::size_t dim, double pos) const {
    Domain lo = *this, hi = *this;
    lo.upper_[dim] = pos;
    hi.lower_[dim] = pos;
    return {std::move(lo), std::move(hi)};
  }

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// Sum of side lengths; the rate of the Mondrian cut clock.
inline double measure(const Domain& box) noexcept {
  double m = 0.0;
  for (std::size_t i = 0; i < box.dim(); ++i) m += box.side(i);
  return m;
}

/// Smallest box holding every row of `points` and `targets`, each side grown
/// by pad_fraction * side on both ends (pad_fraction * 1 for zero-length sides).
inline Domain enclosing_domain(const LocationSet& points, const LocationSet& targets, double pad_fraction = 1e-9) {
  detail::require(pad_fraction >= 0.0 && std::isfinite(pad_fraction), "enclosing_domain: pad_fraction must be >= 0");
  detail::require(points.size() + targets.size() > 0, "enclosing_domain: empty input set");
  std::size_t d = points.empty() ? targets.dim() : points.dim();
  detail::require(points.empty() || targets.empty() || points.dim() == targets.dim(),
                  "enclosing_domain: points and targets differ in dimension");
  std::vector<double> lo(d, HUGE_VAL), hi(d, -HUGE_VAL);
  for (const LocationSet* set : {&points, &targets}) {
    for (std::size_t r = 0; r < set->size(); ++r) {
      auto x = set->row(r);
      for (std::size_t i = 0; i < d; ++i) {
        lo[i] = std::min(lo[i], x[i]);
        hi[i] = std::max(hi[i], x[i]);
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    double side = hi[i] - lo[i];
    double pad = pad_fraction * (side > 0.0 ? side : 1.0);
    lo[i] -= pad;
    hi[i] += pad;
  }
  return Domain(std::move(lo), std::move(hi));
}

/// Bounding box of the selected rows. Requires a nonempty selection.
inline Domain bounding_box(const LocationSet& points, std::span<const std::size_t> idx) {
  detail::require(!idx.empty(), "bounding_box: empty selection");
  std::size_t d = points.dim();
  std::vector<double> lo(d, HUGE_VAL), hi(d, -HUGE_VAL);
  for (std::size_t r : idx) {
    auto x = points.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      lo[i] = std::min(lo[i], x[i]);
      hi[i] = std::max(hi[i], x[i]);
    }
  }
  return Domain(std::move(lo), std::move(hi));
}

/// Regular or irregular rectilinear grid given by one coordinate vector per
/// axis. Flattening is row-major: the last axis varies fastest.
class GridSpec {
 public:
  GridSpec() = default;
  explicit GridSpec(std::vector<std::vector<double>> axes) : axes_(std::move(axes)) {
    detail::require(!axes_.empty(), "GridSpec: at least one axis required");
    for (const auto& ax : axes_) {
      detail::require(!ax.empty(), "GridSpec: empty axis");
      for (std::size_t j = 0; j < ax.size(); ++j) {
        detail::require(std::isfinite(ax[j]), "GridSpec: non-finite coordinate");
        if (j > 0) detail::require(ax[j] > ax[j - 1], "GridSpec: axis coordinates must be strictly increasing");
      }
    }
  }

  /// origin + j * step for j in [0, count) on each axis.
  static GridSpec regular(std::span<const double> origin, std::span<const double> step,
                          std::span<const std::size_t> count) {
    detail::require(origin.size() == step.size() && step.size() == count.size(),
                    "GridSpec::regular: origin/step/count lengths differ");
    std::vector<std::vector<double>> axes(origin.size());
    for (std::size_t a = 0; a < origin.size(); ++a) {
      detail::require(count[a] >= 1, "GridSpec::regular: count must be >= 1");
      detail::require(count[a] == 1 || step[a] > 0.0, "GridSpec::regular: step must be positive");
      axes[a].resize(count[a]);
      for (std::size_t j = 0; j < count[a]; ++j) axes[a][j] = origin[a] + static_cast<double>(j) * step[a];
    }
    return GridSpec(std::move(axes));
  }

  std::size_t dim() const noexcept { return axes_.size(); }
  const std::vector<std::vector<double>>& axes() const noexcept { return axes_; }

  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s;
    for (const auto& ax : axes_) s.push_back(ax.size());
    return s;
  }

  std::size_t size() const noexcept {
    std::size_t n = axes_.empty() ? 0 : 1;
    for (const auto& ax : axes_) n *= ax.size();
    return n;
  }

  std::size_t flat_index(std::span<const std::size_t> idx) const noexcept {
    std::size_t f = 0;
    for (std::size_t a = 0; a < axes_.size(); ++a) f = f * axes_[a].size() + idx[a];
    return f;
  }

  std::vector<std::size_t> grid_index(std::size_t flat) const {
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t a = axes_.size(); a-- > 0;) {
      idx[a] = flat % axes_[a].size();
      flat /= axes_[a].size();
    }
    return idx;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  std::vector<std::vector<double>> axes_;
};

inline LocationSet flatten_grid(const GridSpec& grid) {
  LocationSet out(grid.dim());
  out.reserve(grid.size());
  std::vector<double> x(grid.dim());
  for (std::size_t f = 0; f < grid.size(); ++f) {
    auto idx = grid.grid_index(f);
    for (std::size_t a = 0; a < grid.dim(); ++a) x[a] = grid.axes()[a][idx[a]];
    out.push_back(x);
  }
  return out;
}

/// Measured locations P with values M.
class ConditioningData {
 public:
  ConditioningData() = default;
  ConditioningData(LocationSet points, std::vector<double> values)
      : points_(std::move(points)), values_(std::move(values)) {
    detail::require(points_.size() >= 1, "ConditioningData: at least one sample required");
    detail::require(points_.size() == values_.size(), "ConditioningData: points/values length mismatch");
    for (double v : values_) detail::require(std::isfinite(v), "ConditioningData: missing or non-finite value");
  }

  const LocationSet& points() const noexcept { return points_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim() const noexcept { return points_.dim(); }

  ConditioningData subset(std::span<const std::size_t> idx) const {
    std::vector<double> v;
    v.reserve(idx.size());
    for (std::size_t i : idx) v.push_back(values_[i]);
    return ConditioningData(points_.subset(idx), std::move(v));
  }

 private:
  LocationSet points_;
  std::vector<double> values_;
};

}  // namespace esi
