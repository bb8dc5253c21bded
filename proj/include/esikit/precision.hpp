#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <charconv>
#include <vector>

#include "esikit/aggregation.hpp"
#include "esikit/engine.hpp"
#include "esikit/error.hpp"

namespace esi {

/// Precision model p = aggregator_k( L(estimate_j, sample_jk) ). The loss
/// stage sees the whole estimate so losses such as the operational error can
/// derive a scale from it.
struct LossFunction {
  std::string name;
  std::function<SampleCube(std::span<const double> estimate, const SampleCube& samples)> losses;
  Aggregation aggregator;

  bool cube_output() const noexcept { return aggregator.is_identity(); }
};

using ElementwiseLoss = std::function<double(double estimate, double sample)>;

namespace detail {

inline SampleCube apply_elementwise(std::span<const double> estimate, const SampleCube& samples,
                                    const ElementwiseLoss& fn) {
  require(estimate.size() == samples.rows, "loss: estimate length does not match the cube");
  SampleCube out(samples.rows, samples.cols, samples.grid_shape);
  for (std::size_t j = 0; j < samples.rows; ++j) {
    double e = estimate[j];
    for (std::size_t k = 0; k < samples.cols; ++k) {
      double v = samples(j, k);
      if (!is_missing(v) && !is_missing(e)) out(j, k) = fn(e, v);
    }
  }
  return out;
}

}  // namespace detail

inline LossFunction make_loss(std::string name, ElementwiseLoss elementwise, Aggregation aggregator) {
  return {std::move(name),
          [fn = std::move(elementwise)](std::span<const double> e, const SampleCube& s) {
            return detail::apply_elementwise(e, s, fn);
          },
          std::move(aggregator)};
}

inline double squared_error(double x, double y) { return (x - y) * (x - y); }
inline double absolute_error(double x, double y) { return std::abs(x - y); }

inline LossFunction mse_loss() { return make_loss("mse", squared_error, agg::mean()); }
inline LossFunction mae_loss() { return make_loss("mae", absolute_error, agg::mean()); }
inline LossFunction mse_cube() { return make_loss("mse_cube", squared_error, agg::identity()); }
inline LossFunction mae_cube() { return make_loss("mae_cube", absolute_error, agg::identity()); }

/// |x_k - e| / d_r, mean-aggregated (or kept per sample with use_cube). Without
/// dyn_range, d_r is the range of the estimate, then of the cube; when both are
/// zero the loss is identically zero.
inline LossFunction operational_error_loss(std::optional<double> dyn_range = std::nullopt, bool use_cube = false) {
  if (dyn_range)
    detail::require(std::isfinite(*dyn_range) && *dyn_range > 0.0, "operational_error_loss: dyn_range must be > 0");
  std::string name = "operr";
  if (dyn_range) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, *dyn_range);
    name += ":" + std::string(buf, res.ptr);
  }
  if (use_cube) name += "_cube";

  auto losses = [dyn_range](std::span<const double> e, const SampleCube& s) {
    double range = 0.0;
    if (dyn_range) {
      range = *dyn_range;
    } else {
      auto span_of = [](auto begin, auto end) {
        double lo = HUGE_VAL, hi = -HUGE_VAL;
        for (auto it = begin; it != end; ++it) {
          if (is_missing(*it)) continue;
          lo = std::min(lo, *it);
          hi = std::max(hi, *it);
        }
        return hi > lo ? hi - lo : 0.0;
      };
      range = span_of(e.begin(), e.end());
      if (range == 0.0) range = span_of(s.data.begin(), s.data.end());
    }
    if (range == 0.0) return detail::apply_elementwise(e, s, [](double, double) { return 0.0; });
    return detail::apply_elementwise(e, s, [range](double x, double y) { return std::abs(x - y) / range; });
  };
  return {std::move(name), std::move(losses), use_cube ? agg::identity() : agg::mean()};
}

/// Loss selector: mse | mae | mse_cube | mae_cube | operr[:range][_cube].
inline LossFunction parse_loss(std::string_view s) {
  if (s == "mse") return mse_loss();
  if (s == "mae") return mae_loss();
  if (s == "mse_cube") return mse_cube();
  if (s == "mae_cube") return mae_cube();
  if (s.starts_with("operr")) {
    std::string_view rest = s.substr(5);
    bool use_cube = false;
    if (rest.ends_with("_cube")) {
      use_cube = true;
      rest.remove_suffix(5);
    }
    if (rest.empty()) return operational_error_loss(std::nullopt, use_cube);
    if (rest.front() == ':') {
      double r = 0.0;
      auto res = std::from_chars(rest.data() + 1, rest.data() + rest.size(), r);
      if (res.ec == std::errc() && res.ptr == rest.data() + rest.size()) return operational_error_loss(r, use_cube);
    }
  }
  throw InvalidArgument("unknown loss '" + std::string(s) + "'");
}

/// Per-location loss of the ESI samples against an estimate.
inline std::vector<double> precision(std::span<const double> estimate, const SampleCube& samples,
                                     const LossFunction& loss) {
  if (loss.cube_output())
    throw InvalidArgument("precision: loss '" + loss.name + "' keeps the cube; use precision_cube");
  return loss.aggregator(loss.losses(estimate, samples));
}

inline SampleCube precision_cube(std::span<const double> estimate, const SampleCube& samples,
                                 const LossFunction& loss) {
  if (!loss.cube_output())
    throw InvalidArgument("precision_cube: loss '" + loss.name + "' aggregates; use precision");
  return loss.losses(estimate, samples);
}

/// Precision of a result; cached per loss name until the next re_estimate.
inline const std::vector<double>& precision(EstimationResult& result, const LossFunction& loss = mse_loss()) {
  if (const auto* hit = result.cached_precision(loss.name)) return *hit;
  result.cache_precision(loss.name, precision(result.estimation(), result.esi_samples(), loss));
  return *result.cached_precision(loss.name);
}

inline SampleCube precision_cube(const EstimationResult& result, const LossFunction& loss = mse_cube()) {
  return precision_cube(result.estimation(), result.esi_samples(), loss);
}

}  // namespace esi
