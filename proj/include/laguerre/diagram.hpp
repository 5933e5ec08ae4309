#pragma once

#include <optional>
#include <span>
#include <vector>

#include "laguerre/geometry.hpp"

namespace laguerre {

/// Axis-aligned box, optionally periodic in every direction.
template <int D>
struct Domain {
  Vec<D> lower = Vec<D>::Zero();
  Vec<D> upper = Vec<D>::Ones();
  bool periodic = false;

  static Domain unit(bool periodic = false) { return {Vec<D>::Zero(), Vec<D>::Ones(), periodic}; }

  Vec<D> lengths() const { return upper - lower; }
  double volume() const { return lengths().prod(); }
  double diameter() const { return lengths().norm(); }
  double tolerance() const { return kRelativeGeometricTolerance * diameter(); }
  bool contains(const Vec<D>& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }

  /// Throws DegenerateDomain unless lower < upper componentwise.
  void validate() const;
  /// Maps a point into [lower, upper) along every axis.
  Vec<D> wrap(const Vec<D>& x) const;
  /// b - a, replaced by its minimal image when the domain is periodic.
  Vec<D> difference(const Vec<D>& a, const Vec<D>& b) const;
  double distance(const Vec<D>& a, const Vec<D>& b) const { return difference(a, b).norm(); }
};

template <int D>
struct WeightedSeed {
  Vec<D> position;
  double weight = 0.0;
};

/// One shared face of a cell. `neighbor` < 0 encodes a domain wall (see
/// FaceTag); for periodic diagrams the same neighbor can appear several
/// times through distinct images.
struct Adjacency {
  int neighbor = 0;
  std::array<std::int8_t, 3> image{0, 0, 0};
  double area = 0.0;
  /// |x_i - (x_j + image offset)|; zero for walls.
  double distance = 0.0;

  bool is_wall() const { return neighbor < 0; }
};

template <int D>
struct Cell {
  /// Unwrapped convex cell; for periodic diagrams it surrounds its seed and
  /// may stick out of the domain.
  ConvexPolytope<D> polytope;
  /// Volume, centroid and second moment about the seed.
  CellMeasures<D> measures;
  std::vector<Adjacency> adjacency;

  bool empty() const { return polytope.empty(); }
};

template <int D>
struct LaguerreDiagram {
  Domain<D> domain;
  std::vector<WeightedSeed<D>> generators;
  std::vector<Cell<D>> cells;

  std::size_t size() const { return cells.size(); }
  double total_volume() const;
  std::vector<double> volumes() const;
  std::vector<std::size_t> empty_cells() const;
  /// Face areas between `cell` and seed `neighbor`, summed over images.
  double shared_area(std::size_t cell, int neighbor) const;
};

/// {x : |x - x_i|^2 - w_i <= |x - x_j|^2 - w_j}. Throws CoincidentSeeds.
template <int D>
HalfSpace<D> bisector(const WeightedSeed<D>& seed_i, const WeightedSeed<D>& seed_j);

/// One candidate neighbour of a query seed: seed index, periodic image and the
/// image's position.
template <int D>
struct Candidate {
  int seed = 0;
  std::array<std::int8_t, 3> image{0, 0, 0};
  Vec<D> point;
  double distance_squared = 0.0;
};

/// Uniform bucket grid over the seeds, about one seed per bucket.
template <int D>
class SeedGrid {
 public:
  SeedGrid(const Domain<D>& domain, std::span<const Vec<D>> positions);

  const Domain<D>& domain() const { return domain_; }
  std::span<const Vec<D>> positions() const { return positions_; }
  const Eigen::Matrix<int, D, 1>& dims() const { return dims_; }
  const Vec<D>& origin() const { return origin_; }
  const Vec<D>& spacing() const { return spacing_; }
  Eigen::Matrix<int, D, 1> bucket_of(const Vec<D>& x) const;
  std::span<const int> bucket(const Eigen::Matrix<int, D, 1>& index) const;

 private:
  int linear(const Eigen::Matrix<int, D, 1>& index) const;

  Domain<D> domain_;
  std::span<const Vec<D>> positions_;
  Vec<D> origin_;
  Vec<D> spacing_;
  Eigen::Matrix<int, D, 1> dims_;
  std::vector<int> start_;
  std::vector<int> items_;
};

/// Streams the neighbours of a seed in nondecreasing distance (ties by seed
/// index, then image) by visiting grid rings of increasing Chebyshev radius.
/// Periodic grids also yield images in the 3^d neighbour shell; the seed
/// itself and its images are never yielded.
template <int D>
class CandidateStream {
 public:
  CandidateStream(const SeedGrid<D>& grid, int query);

  /// Next candidate if its distance can still be below `limit`; the stream
  /// avoids scanning rings that lie entirely beyond the limit.
  const Candidate<D>* peek(double limit = std::numeric_limits<double>::infinity());
  void pop();
  /// Collects everything (test helper).
  std::vector<Candidate<D>> drain();

 private:
  bool add_ring();
  double unseen_bound() const;

  const SeedGrid<D>& grid_;
  int query_;
  Vec<D> point_;
  Eigen::Matrix<int, D, 1> home_;
  int ring_ = -1;
  bool exhausted_ = false;
  std::vector<Candidate<D>> heap_;
};

/// Bounded Laguerre diagram with grid acceleration.
template <int D>
LaguerreDiagram<D> compute_diagram(const Domain<D>& domain,
                                   std::span<const WeightedSeed<D>> seeds);

/// Periodic Laguerre diagram; seeds are wrapped into the box.
template <int D>
LaguerreDiagram<D> compute_periodic_diagram(const Domain<D>& domain,
                                            std::span<const WeightedSeed<D>> seeds);

/// Dispatches on domain.periodic.
template <int D>
LaguerreDiagram<D> build_diagram(const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds);

/// O(n^2) reference construction clipping against every seed (and every image
/// in the 3^d shell when periodic).
template <int D>
LaguerreDiagram<D> build_diagram_naive(const Domain<D>& domain,
                                       std::span<const WeightedSeed<D>> seeds);

template <int D>
std::vector<WeightedSeed<D>> make_seeds(std::span<const Vec<D>> positions,
                                        std::span<const double> weights);

}  // namespace laguerre
