#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "esikit/geometry.hpp"
#include "esikit/rng.hpp"

namespace esi::synth {

/// Benchmark surface x (1 - x) cos(4 pi x) sin(4 pi y^2)^2 on the unit square.
inline double cubic_surface(double x, double y) {
  double s = std::sin(4.0 * std::numbers::pi * y * y);
  return x * (1.0 - x) * std::cos(4.0 * std::numbers::pi * x) * s * s;
}

/// `rows` uniform samples of cubic_surface on [0, 1]^2.
inline ConditioningData cubic_samples(std::size_t rows, std::uint64_t seed) {
  detail::require(rows >= 1, "cubic_samples: rows must be >= 1");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> coords(rows * 2), values(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    coords[2 * i] = u(rng);
    coords[2 * i + 1] = u(rng);
    values[i] = cubic_surface(coords[2 * i], coords[2 * i + 1]);
  }
  return ConditioningData(LocationSet(2, std::move(coords)), std::move(values));
}

struct RegularGrid {
  std::vector<double> origin, step;
  std::vector<std::size_t> count;
  GridSpec spec() const { return GridSpec::regular(origin, step, count); }
};

/// nx x ny nodes spanning [0, 1]^2 inclusive.
inline RegularGrid unit_square_grid(std::size_t nx = 100, std::size_t ny = 200) {
  detail::require(nx >= 2 && ny >= 2, "unit_square_grid: at least two nodes per axis");
  return {{0.0, 0.0}, {1.0 / static_cast<double>(nx - 1), 1.0 / static_cast<double>(ny - 1)}, {nx, ny}};
}

}  // namespace esi::synth
