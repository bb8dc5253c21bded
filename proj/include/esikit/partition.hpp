#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "esikit/error.hpp"
#include "esikit/geometry.hpp"
#include "esikit/kdtree.hpp"
#include "esikit/parallel.hpp"
#include "esikit/rng.hpp"

namespace esi {

enum class ProcessKind { mondrian, voronoi };

inline const char* to_string(ProcessKind k) noexcept { return k == ProcessKind::mondrian ? "mondrian" : "voronoi"; }

// ---------------------------------------------------------------------------
// Granularity: alpha in [0, 1) -> process parameter lambda.

/// Mondrian lifetime 1 / (mu(domain) (1 - alpha)).
inline double lambda_mondrian(double alpha, const Domain& domain) {
  detail::require(alpha >= 0.0 && alpha < 1.0, "lambda_mondrian: alpha must lie in [0, 1)");
  double mu = measure(domain);
  if (!(mu > 0.0)) throw InvalidArgument("lambda_mondrian: degenerate domain (zero measure)");
  return 1.0 / (mu * (1.0 - alpha));
}

/// Poisson mean of the Voronoi nucleus count, N_s * alpha / 2.
inline double lambda_voronoi(double alpha, std::size_t n_samples) {
  detail::require(alpha >= 0.0 && alpha < 1.0, "lambda_voronoi: alpha must lie in [0, 1)");
  detail::require(n_samples >= 1, "lambda_voronoi: at least one sample required");
  return 0.5 * static_cast<double>(n_samples) * alpha;
}

// ---------------------------------------------------------------------------
// Mondrian trees

struct MondrianNode {
  Domain box;
  // Internal nodes only. Coordinates < cut_pos descend to `below`, the rest to `above`.
  std::int32_t cut_dim = -1;
  double cut_pos = 0.0;
  double time = 0.0;  // tau + E at which the cut happened
  std::int32_t below = -1;
  std::int32_t above = -1;
  std::int32_t leaf_id = -1;  // leaves only

  bool is_leaf() const noexcept { return cut_dim < 0; }
  friend bool operator==(const MondrianNode&, const MondrianNode&) = default;
};

class MondrianTree {
 public:
  MondrianTree() = default;
  /// Takes a node array in which node 0 is the root. Leaf ids are (re)assigned
  /// in array order.
  explicit MondrianTree(std::vector<MondrianNode> nodes) : nodes_(std::move(nodes)) {
    detail::require(!nodes_.empty(), "MondrianTree: empty node list");
    std::int32_t leaf = 0;
    for (auto& n : nodes_) {
      if (n.is_leaf()) {
        n.leaf_id = leaf++;
      } else {
        n.leaf_id = -1;
        detail::require(n.below > 0 && n.above > 0 && static_cast<std::size_t>(n.below) < nodes_.size() &&
                            static_cast<std::size_t>(n.above) < nodes_.size(),
                        "MondrianTree: dangling child index");
      }
    }
    n_leaves_ = static_cast<std::size_t>(leaf);
  }

  const Domain& domain() const noexcept { return nodes_.front().box; }
  const std::vector<MondrianNode>& nodes() const noexcept { return nodes_; }
  std::size_t num_cells() const noexcept { return n_leaves_; }

  std::size_t cell_id(std::span<const double> x) const {
    if (!domain().contains(x)) throw OutOfDomain("MondrianTree::cell_id: location outside the partition domain");
    const MondrianNode* n = &nodes_.front();
    while (!n->is_leaf()) n = &nodes_[static_cast<std::size_t>(x[n->cut_dim] < n->cut_pos ? n->below : n->above)];
    return static_cast<std::size_t>(n->leaf_id);
  }

  friend bool operator==(const MondrianTree&, const MondrianTree&) = default;

 private:
  std::vector<MondrianNode> nodes_;
  std::size_t n_leaves_ = 0;
};

namespace detail {

// Uniform draw strictly inside (lo, hi); requires hi > lo.
inline double uniform_interior(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (;;) {
    double x = u(rng);
    if (x > lo && x < hi) return x;
  }
}

inline std::size_t draw_cut_dimension(const Domain& box, Rng& rng) {
  std::vector<double> sides(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) sides[i] = box.side(i);
  std::discrete_distribution<std::size_t> pick(sides.begin(), sides.end());
  return pick(rng);
}

class MondrianSampler {
 public:
  MondrianSampler(double lambda, Rng& rng, const LocationSet* points) : lambda_(lambda), rng_(rng), points_(points) {}

  std::vector<MondrianNode> run(const Domain& root, std::vector<std::size_t> members) {
    nodes_.clear();
    branch(root, 0.0, std::move(members));
    return std::move(nodes_);
  }

 private:
  // Returns the index of the created node.
  std::int32_t branch(const Domain& box, double tau, std::vector<std::size_t> members) {
    auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(MondrianNode{box});
    if (!(lambda_ > 0.0)) return id;

    // Untrained: clock and cut run on the box itself. Trained: on the
    // bounding box of the conditioning points it holds.
    Domain cut_box = box;
    if (points_ != nullptr) {
      if (members.size() <= 1) return id;
      cut_box = bounding_box(*points_, members);
    }
    double rate = measure(cut_box);
    if (!(rate > 0.0)) return id;

    double e = std::exponential_distribution<double>(rate)(rng_);
    if (!(tau + e < lambda_)) return id;

    std::size_t dim = draw_cut_dimension(cut_box, rng_);
    double pos = uniform_interior(cut_box.lower(dim), cut_box.upper(dim), rng_);
    auto [lo_box, hi_box] = box.split(dim, pos);

    std::vector<std::size_t> lo_members, hi_members;
    if (points_ != nullptr) {
      for (std::size_t i : members) (points_->row(i)[dim] < pos ? lo_members : hi_members).push_back(i);
    }

    nodes_[id].cut_dim = static_cast<std::int32_t>(dim);
    nodes_[id].cut_pos = pos;
    nodes_[id].time = tau + e;
    std::int32_t above = branch(hi_box, tau + e, std::move(hi_members));
    std::int32_t below = branch(lo_box, tau + e, std::move(lo_members));
    nodes_[id].above = above;
    nodes_[id].below = below;
    return id;
  }

  double lambda_;
  Rng& rng_;
  const LocationSet* points_;
  std::vector<MondrianNode> nodes_;
};

}  // namespace detail

/// One draw of the Mondrian process on `domain` with lifetime `lambda`.
/// A non-positive lifetime yields a single leaf.
inline MondrianTree sample_mondrian(const Domain& domain, double lambda, Rng& rng) {
  detail::MondrianSampler s(lambda, rng, nullptr);
  return MondrianTree(s.run(domain, {}));
}

/// Data-conditioned Mondrian draw: every clock and cut uses the bounding box of
/// the conditioning points inside the current sub-box, so boxes holding one
/// point (or several coincident ones) are never split.
inline MondrianTree sample_trained_mondrian(const Domain& domain, double lambda, const LocationSet& points, Rng& rng) {
  detail::require(!points.empty(), "sample_trained_mondrian: no conditioning points");
  detail::require(points.dim() == domain.dim(), "sample_trained_mondrian: dimension mismatch");
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!domain.contains(points.row(i)))
      throw OutOfDomain("sample_trained_mondrian: conditioning point outside the domain");
  std::vector<std::size_t> all(points.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  detail::MondrianSampler s(lambda, rng, &points);
  return MondrianTree(s.run(domain, std::move(all)));
}

// ---------------------------------------------------------------------------
// Voronoi partitions

class VoronoiPartition {
 public:
  VoronoiPartition() = default;
  VoronoiPartition(Domain domain, LocationSet nuclei, bool trained = false)
      : domain_(std::move(domain)), trained_(trained) {
    detail::require(nuclei.size() >= 1, "VoronoiPartition: at least one nucleus required");
    detail::require(nuclei.dim() == domain_.dim(), "VoronoiPartition: dimension mismatch");
    index_ = std::make_shared<const Index>(std::move(nuclei));
  }

  const Domain& domain() const noexcept { return domain_; }
  const LocationSet& nuclei() const noexcept { return index_->nuclei; }
  std::size_t num_cells() const noexcept { return index_->nuclei.size(); }
  bool trained() const noexcept { return trained_; }

  /// Nearest nucleus; ties go to the lowest nucleus index.
  std::size_t cell_id(std::span<const double> x) const {
    if (!domain_.contains(x)) throw OutOfDomain("VoronoiPartition::cell_id: location outside the partition domain");
    return index_->tree.nearest(x);
  }

  friend bool operator==(const VoronoiPartition& a, const VoronoiPartition& b) {
    return a.domain_ == b.domain_ && a.trained_ == b.trained_ && a.nuclei() == b.nuclei();
  }

 private:
  struct Index {
    explicit Index(LocationSet n) : nuclei(std::move(n)), tree(nuclei) {}
    Index(const Index&) = delete;
    Index& operator=(const Index&) = delete;
    LocationSet nuclei;
    KdTree tree;
  };

  Domain domain_;
  bool trained_ = false;
  std::shared_ptr<const Index> index_;
};

namespace detail {

// First index of every distinct location, in increasing order.
inline std::vector<std::size_t> distinct_locations(const LocationSet& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = points.row(a), rb = points.row(b);
    if (std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end())) return true;
    if (std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end())) return false;
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<std::size_t> firsts;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0) {
      firsts.push_back(order[i]);
      continue;
    }
    auto ra = points.row(order[i - 1]), rb = points.row(order[i]);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) firsts.push_back(order[i]);
  }
  std::sort(firsts.begin(), firsts.end());
  return firsts;
}

inline std::uint64_t draw_poisson(double lambda, Rng& rng) {
  if (!(lambda > 0.0)) return 0;
  return static_cast<std::uint64_t>(std::poisson_distribution<std::int64_t>(lambda)(rng));
}

inline VoronoiPartition sample_voronoi_with(const Domain& domain, double lambda, const LocationSet* points,
                                            std::span<const std::size_t> candidates, Rng& rng) {
  std::uint64_t k = std::max<std::uint64_t>(1, draw_poisson(lambda, rng));
  LocationSet nuclei(domain.dim());
  if (points != nullptr) {
    k = std::min<std::uint64_t>(k, candidates.size());
    // Partial Fisher-Yates: the first k entries become a uniform sample
    // without replacement.
    std::vector<std::size_t> pool(candidates.begin(), candidates.end());
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    nuclei.reserve(k);
    for (std::size_t i = 0; i < k; ++i) nuclei.push_back(points->row(pool[i]));
    return VoronoiPartition(domain, std::move(nuclei), true);
  }
  nuclei.reserve(k);
  std::vector<double> c(domain.dim());
  for (std::uint64_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < domain.dim(); ++i) {
      c[i] = domain.side(i) > 0.0 ? std::uniform_real_distribution<double>(domain.lower(i), domain.upper(i))(rng)
                                  : domain.lower(i);
    }
    nuclei.push_back(c);
  }
  return VoronoiPartition(domain, std::move(nuclei), false);
}

}  // namespace detail

/// K ~ Poisson(lambda) nuclei, at least one. With data_cond the nuclei are
/// distinct measured locations (K capped at their count); otherwise they are
/// uniform on the domain.
inline VoronoiPartition sample_voronoi(const Domain& domain, double lambda, const ConditioningData* data,
                                       bool data_cond, Rng& rng) {
  detail::require(lambda >= 0.0, "sample_voronoi: lambda must be >= 0");
  if (!data_cond) return detail::sample_voronoi_with(domain, lambda, nullptr, {}, rng);
  if (data == nullptr) throw InvalidArgument("sample_voronoi: data_cond requires conditioning data");
  for (std::size_t i = 0; i < data->size(); ++i)
    if (!domain.contains(data->points().row(i)))
      throw OutOfDomain("sample_voronoi: conditioning point outside the domain");
  auto candidates = detail::distinct_locations(data->points());
  return detail::sample_voronoi_with(domain, lambda, &data->points(), candidates, rng);
}

// ---------------------------------------------------------------------------
// Forests

using Partition = std::variant<MondrianTree, VoronoiPartition>;

inline std::size_t cell_id(const Partition& p, std::span<const double> x) {
  return std::visit([&](const auto& part) { return part.cell_id(x); }, p);
}

inline std::size_t num_cells(const Partition& p) {
  return std::visit([](const auto& part) { return part.num_cells(); }, p);
}

/// Index lists of `points` per cell, indexed by cell id. Lists are in
/// increasing index order; cells without points get an empty list.
inline std::vector<std::vector<std::size_t>> group_by_cell(const Partition& p, const LocationSet& points) {
  std::vector<std::vector<std::size_t>> groups(num_cells(p));
  for (std::size_t i = 0; i < points.size(); ++i) groups[cell_id(p, points.row(i))].push_back(i);
  return groups;
}

struct Forest {
  ProcessKind kind = ProcessKind::mondrian;
  Domain domain;
  std::vector<Partition> partitions;
  double lambda = 0.0;
  double alpha = 0.0;
  bool trained = false;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return partitions.size(); }
  friend bool operator==(const Forest&, const Forest&) = default;
};

struct ForestOptions {
  ProcessKind kind = ProcessKind::mondrian;
  std::size_t n_partitions = 500;
  double alpha = 0.8;
  bool data_cond = true;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Samples m partitions; partition k draws from its own generator seeded with
/// derive_seed(seed, k).
inline Forest sample_forest(const Domain& domain, const ConditioningData& data, const ForestOptions& opt) {
  detail::require(opt.n_partitions >= 1, "sample_forest: n_partitions must be >= 1");
  detail::require(data.dim() == domain.dim(), "sample_forest: dimension mismatch");
  Forest f;
  f.kind = opt.kind;
  f.domain = domain;
  f.alpha = opt.alpha;
  f.trained = opt.data_cond;
  f.seed = opt.seed;
  f.lambda = opt.kind == ProcessKind::mondrian ? lambda_mondrian(opt.alpha, domain)
                                               : lambda_voronoi(opt.alpha, data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!domain.contains(data.points().row(i)))
      throw OutOfDomain("sample_forest: conditioning point outside the domain");

  std::vector<std::size_t> candidates;
  if (opt.kind == ProcessKind::voronoi && opt.data_cond) candidates = detail::distinct_locations(data.points());

  f.partitions.resize(opt.n_partitions);
  parallel_for(opt.n_partitions, opt.threads, [&](std::size_t k) {
    Rng rng = make_rng(derive_seed(opt.seed, k));
    if (opt.kind == ProcessKind::mondrian) {
      f.partitions[k] = opt.data_cond ? sample_trained_mondrian(domain, f.lambda, data.points(), rng)
                                      : sample_mondrian(domain, f.lambda, rng);
    } else {
      f.partitions[k] = detail::sample_voronoi_with(domain, f.lambda, opt.data_cond ? &data.points() : nullptr,
                                                    candidates, rng);
    }
  });
  return f;
}

}  // namespace esi
