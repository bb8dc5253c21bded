#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esikit/error.hpp"
#include "esikit/geometry.hpp"

namespace esi {

/// Absolute distance under which a target is treated as sitting on a sample.
inline constexpr double kCoincideTolerance = 1e-12;

struct IdwParams {
  double exponent = 2.0;
  friend bool operator==(const IdwParams&, const IdwParams&) = default;
};

enum class CovarianceModel { spherical, exponential, cubic, gaussian };

inline const char* to_string(CovarianceModel m) noexcept {
  switch (m) {
    case CovarianceModel::spherical: return "spherical";
    case CovarianceModel::exponential: return "exponential";
    case CovarianceModel::cubic: return "cubic";
    case CovarianceModel::gaussian: return "gaussian";
  }
  return "?";
}

inline CovarianceModel parse_covariance_model(std::string_view s) {
  if (s == "spherical") return CovarianceModel::spherical;
  if (s == "exponential") return CovarianceModel::exponential;
  if (s == "cubic") return CovarianceModel::cubic;
  if (s == "gaussian") return CovarianceModel::gaussian;
  throw InvalidArgument("unknown covariance model '" + std::string(s) + "'");
}

struct KrigingParams {
  CovarianceModel model = CovarianceModel::spherical;
  double nugget = 0.1;
  double range = 5000.0;
  double sill = 1.0;
  friend bool operator==(const KrigingParams&, const KrigingParams&) = default;
};

inline void validate(const IdwParams& p) {
  detail::require(std::isfinite(p.exponent) && p.exponent >= 0.0, "IDW exponent must be finite and >= 0");
}

inline void validate(const KrigingParams& p) {
  detail::require(p.nugget >= 0.0 && p.nugget <= 1.0, "kriging nugget must lie in [0, 1]");
  detail::require(std::isfinite(p.range) && p.range > 0.0, "kriging range must be > 0");
  detail::require(std::isfinite(p.sill) && p.sill > 0.0, "kriging sill must be > 0");
}

// ---------------------------------------------------------------------------
// Inverse distance weighting

namespace detail {

// IDW at x over the rows `idx` of `pts`. Weights are formed in log space so
// large exponents do not overflow.
inline double idw_at(std::span<const double> x, const LocationSet& pts, std::span<const double> vals,
                     std::span<const std::size_t> idx, double exponent, std::vector<double>& scratch) {
  double coincide_sum = 0.0;
  std::size_t coincide_n = 0;
  scratch.resize(idx.size());
  double min_log = HUGE_VAL;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    double d = distance(x, pts.row(idx[j]));
    if (d < kCoincideTolerance) {
      coincide_sum += vals[idx[j]];
      ++coincide_n;
    }
    scratch[j] = std::log(d);
    min_log = std::min(min_log, scratch[j]);
  }
  if (coincide_n > 0) return coincide_sum / static_cast<double>(coincide_n);

  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    double w = exponent == 0.0 ? 1.0 : std::exp(-exponent * (scratch[j] - min_log));
    num += w * vals[idx[j]];
    den += w;
  }
  return num / den;
}

}  // namespace detail

/// IDW estimate at each target from one cell's samples. Returns NaN per target
/// when the cell is empty.
inline std::vector<double> idw_estimate(const LocationSet& targets, const LocationSet& cell_points,
                                        std::span<const double> cell_values, const IdwParams& params) {
  validate(params);
  detail::require(cell_points.size() == cell_values.size(), "idw_estimate: points/values length mismatch");
  std::vector<double> out(targets.size(), std::numeric_limits<double>::quiet_NaN());
  if (cell_points.empty()) return out;
  detail::require(cell_points.dim() == targets.dim(), "idw_estimate: dimension mismatch");
  std::vector<std::size_t> idx(cell_points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> scratch;
  for (std::size_t t = 0; t < targets.size(); ++t)
    out[t] = detail::idw_at(targets.row(t), cell_points, cell_values, idx, params.exponent, scratch);
  return out;
}

// ---------------------------------------------------------------------------
// Covariance models

/// Unit-sill structure model(h) for the chosen family. Spherical and cubic are
/// held at 1 from the range on.
inline double structure_function(double h, const KrigingParams& p) noexcept {
  double u = h / p.range;
  switch (p.model) {
    case CovarianceModel::spherical:
      return u >= 1.0 ? 1.0 : 1.5 * u - 0.5 * u * u * u;
    case CovarianceModel::exponential:
      return 1.0 - std::exp(-3.0 * u);
    case CovarianceModel::cubic: {
      if (u >= 1.0) return 1.0;
      double u2 = u * u;
      return u2 * (7.0 - 8.75 * u + 3.5 * u2 * u - 0.75 * u2 * u2 * u);
    }
    case CovarianceModel::gaussian:
      return 1.0 - std::exp(-3.0 * u * u);
  }
  return 1.0;
}

/// s * clamp((1 - n)(1 - model(h)), 0, 1).
inline double covariance(double h, const KrigingParams& p) noexcept {
  double m = (1.0 - p.nugget) * (1.0 - structure_function(h, p));
  return p.sill * std::clamp(m, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Ordinary kriging

/// Counts weak voters that fell back to the cell mean.
struct KrigingDiagnostics {
  std::atomic<std::size_t> singular_fallbacks{0};
};

/// Ordinary kriging system for one cell, factorized once and reused for every
/// target in the cell. Coincident samples are merged (values averaged) before
/// the system is assembled.
class OrdinaryKriging {
 public:
  static constexpr double kPivotTolerance = 1e-12;
  // Systems whose estimated reciprocal condition number falls below this are
  // treated as singular too.
  static constexpr double kConditionLimit = 1e-9;

  OrdinaryKriging(const LocationSet& pts, std::span<const double> vals, std::span<const std::size_t> idx,
                  const KrigingParams& params)
      : params_(params), unique_(pts.dim()) {
    validate(params);
    detail::require(!idx.empty(), "OrdinaryKriging: empty cell");
    double total = 0.0;
    for (std::size_t i : idx) total += vals[i];
    mean_ = total / static_cast<double>(idx.size());

    std::vector<std::size_t> count;
    for (std::size_t i : idx) {
      auto x = pts.row(i);
      std::size_t hit = unique_.size();
      for (std::size_t u = 0; u < unique_.size(); ++u) {
        if (distance(x, unique_.row(u)) < kCoincideTolerance) {
          hit = u;
          break;
        }
      }
      if (hit == unique_.size()) {
        unique_.push_back(x);
        values_.push_back(vals[i]);
        count.push_back(1);
      } else {
        values_[hit] += vals[i];
        ++count[hit];
      }
    }
    for (std::size_t u = 0; u < values_.size(); ++u) values_[u] /= static_cast<double>(count[u]);
    factorize();
  }

  OrdinaryKriging(const LocationSet& pts, std::span<const double> vals, const KrigingParams& params)
      : OrdinaryKriging(pts, vals, all_indices(pts.size()), params) {}

  bool singular() const noexcept { return singular_; }
  /// Estimated reciprocal 1-norm condition number of the kriging system (0 when
  /// a pivot vanished, 1 for single-sample cells).
  double rcond() const noexcept { return rcond_; }
  const LocationSet& unique_points() const noexcept { return unique_; }
  const std::vector<double>& unique_values() const noexcept { return values_; }

  /// Kriging interpolates exactly, so a target on a (merged) sample location
  /// returns that sample's value, also in the fallback case.
  double estimate(std::span<const double> x) const {
    std::size_t n = unique_.size();
    if (n == 1) return values_[0];
    // Dual form: z^T w = (A^-1 [z; 0])^T [c*; 1].
    double e = singular_ ? mean_ : dual_[n];
    for (std::size_t i = 0; i < n; ++i) {
      double d = distance(x, unique_.row(i));
      if (d < kCoincideTolerance) return values_[i];
      if (!singular_) e += dual_[i] * covariance(d, params_);
    }
    return e;
  }

  /// Kriging weights of the merged samples at x (uniform in the fallback case).
  std::vector<double> weights(std::span<const double> x) const {
    std::size_t n = unique_.size();
    if (singular_) return std::vector<double>(n, 1.0 / static_cast<double>(n));
    std::vector<double> rhs(n + 1);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = covariance(distance(x, unique_.row(i)), params_);
    rhs[n] = 1.0;
    auto sol = solve(rhs);
    sol.resize(n);
    return sol;
  }

 private:
  static std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  }

  void assemble(std::vector<double>& a) const {
    std::size_t n = unique_.size(), s = n + 1;
    a.assign(s * s, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double c = covariance(distance(unique_.row(i), unique_.row(j)), params_);
        a[i * s + j] = c;
        a[j * s + i] = c;
      }
      a[i * s + n] = 1.0;
      a[n * s + i] = 1.0;
    }
  }

  // LU with partial pivoting of the bordered (n+1)x(n+1) system.
  void factorize() {
    std::size_t n = unique_.size();
    if (n == 1) return;
    std::size_t s = n + 1;
    assemble(a_);
    lu_ = a_;
    double scale = 1.0;
    for (double v : lu_) scale = std::max(scale, std::abs(v));
    perm_.resize(s);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t k = 0; k < s; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < s; ++i)
        if (std::abs(lu_[i * s + k]) > std::abs(lu_[p * s + k])) p = i;
      if (std::abs(lu_[p * s + k]) < kPivotTolerance * scale) {
        singular_ = true;
        rcond_ = 0.0;
        return;
      }
      if (p != k) {
        for (std::size_t j = 0; j < s; ++j) std::swap(lu_[k * s + j], lu_[p * s + j]);
        std::swap(perm_[k], perm_[p]);
      }
      for (std::size_t i = k + 1; i < s; ++i) {
        double f = lu_[i * s + k] /= lu_[k * s + k];
        if (f == 0.0) continue;
        for (std::size_t j = k + 1; j < s; ++j) lu_[i * s + j] -= f * lu_[k * s + j];
      }
    }
    rcond_ = rcond_estimate();
    if (rcond_ < kConditionLimit) {
      singular_ = true;
      return;
    }
    std::vector<double> rhs(s, 0.0);
    std::copy(values_.begin(), values_.end(), rhs.begin());
    dual_ = solve(rhs);
  }

  // Hager's estimate of 1 / (|A|_1 |A^-1|_1), using that A is symmetric.
  double rcond_estimate() const {
    std::size_t s = perm_.size();
    double norm_a = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < s; ++i) col += std::abs(a_[i * s + j]);
      norm_a = std::max(norm_a, col);
    }
    auto norm1 = [](const std::vector<double>& v) {
      double t = 0.0;
      for (double x : v) t += std::abs(x);
      return t;
    };
    std::vector<double> x(s, 1.0 / static_cast<double>(s));
    double est = 0.0;
    for (int iter = 0; iter < 5; ++iter) {
      auto y = substitute(x);
      est = std::max(est, norm1(y));
      std::vector<double> sign(s);
      for (std::size_t i = 0; i < s; ++i) sign[i] = y[i] >= 0.0 ? 1.0 : -1.0;
      auto z = substitute(sign);
      std::size_t j = 0;
      double ztx = 0.0;
      for (std::size_t i = 0; i < s; ++i) {
        ztx += z[i] * x[i];
        if (std::abs(z[i]) > std::abs(z[j])) j = i;
      }
      if (std::abs(z[j]) <= ztx) break;
      std::fill(x.begin(), x.end(), 0.0);
      x[j] = 1.0;
    }
    // Higham's extra probe guards against the iteration stalling early.
    std::vector<double> b(s);
    for (std::size_t i = 0; i < s; ++i)
      b[i] = (i % 2 ? -1.0 : 1.0) * (1.0 + static_cast<double>(i) / static_cast<double>(s > 1 ? s - 1 : 1));
    est = std::max(est, 2.0 * norm1(substitute(b)) / (3.0 * static_cast<double>(s)));
    if (!std::isfinite(est) || est == 0.0) return 0.0;
    return 1.0 / (norm_a * est);
  }

  std::vector<double> substitute(const std::vector<double>& b) const {
    std::size_t s = perm_.size();
    std::vector<double> y(s);
    for (std::size_t i = 0; i < s; ++i) {
      double v = b[perm_[i]];
      for (std::size_t j = 0; j < i; ++j) v -= lu_[i * s + j] * y[j];
      y[i] = v;
    }
    for (std::size_t i = s; i-- > 0;) {
      double v = y[i];
      for (std::size_t j = i + 1; j < s; ++j) v -= lu_[i * s + j] * y[j];
      y[i] = v / lu_[i * s + i];
    }
    return y;
  }

  // One step of iterative refinement against the unfactored matrix.
  std::vector<double> solve(const std::vector<double>& b) const {
    auto x = substitute(b);
    const auto& a = a_;
    std::size_t s = perm_.size();
    std::vector<double> r(s);
    for (std::size_t i = 0; i < s; ++i) {
      double v = b[i];
      for (std::size_t j = 0; j < s; ++j) v -= a[i * s + j] * x[j];
      r[i] = v;
    }
    auto dx = substitute(r);
    for (std::size_t i = 0; i < s; ++i) x[i] += dx[i];
    return x;
  }

  KrigingParams params_;
  LocationSet unique_;
  std::vector<double> values_;
  double mean_ = 0.0;
  bool singular_ = false;
  double rcond_ = 1.0;
  std::vector<double> a_, lu_;
  std::vector<std::size_t> perm_;
  std::vector<double> dual_;
};

/// Ordinary kriging estimate at each target from one cell's samples. A
/// numerically singular system yields the cell mean and bumps
/// diagnostics->singular_fallbacks. Empty cells give NaN.
inline std::vector<double> kriging_estimate(const LocationSet& targets, const LocationSet& cell_points,
                                            std::span<const double> cell_values, const KrigingParams& params,
                                            KrigingDiagnostics* diagnostics = nullptr) {
  validate(params);
  detail::require(cell_points.size() == cell_values.size(), "kriging_estimate: points/values length mismatch");
  std::vector<double> out(targets.size(), std::numeric_limits<double>::quiet_NaN());
  if (cell_points.empty()) return out;
  detail::require(cell_points.dim() == targets.dim(), "kriging_estimate: dimension mismatch");
  OrdinaryKriging ok(cell_points, cell_values, params);
  if (ok.singular() && diagnostics != nullptr) ++diagnostics->singular_fallbacks;
  for (std::size_t t = 0; t < targets.size(); ++t) out[t] = ok.estimate(targets.row(t));
  return out;
}

}  // namespace esi
