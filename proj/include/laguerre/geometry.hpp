#pragma once

// Convex polygons (d = 2) and convex polyhedra (d = 3) in boundary
// representation, with in-place half-space clipping and exact polynomial
// measures (volume, centroid, second moment) by simplex decomposition.

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "laguerre/errors.hpp"

namespace laguerre {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

/// Relative geometric tolerance; multiplied by a length scale (usually the
/// domain diameter) to obtain the absolute tolerance used for vertex
/// classification and degenerate-face culling.
inline constexpr double kRelativeGeometricTolerance = 1e-9;

/// {x : normal . x <= offset}
template <int D>
struct HalfSpace {
  Vec<D> normal;
  double offset = 0.0;

  double signed_distance(const Vec<D>& x) const {
    return (normal.dot(x) - offset) / normal.norm();
  }
  HalfSpace flipped() const { return {-normal, -offset}; }
};

/// Label attached to every face of a cell. Non-negative `neighbor` values are
/// seed indices (with `image` giving the periodic image offset in box
/// lengths); negative values identify domain walls, wall k = 2*axis + side
/// being encoded as -(k + 1).
struct FaceTag {
  std::int32_t neighbor = kUnset;
  std::array<std::int8_t, 3> image{0, 0, 0};

  static constexpr std::int32_t kUnset = std::numeric_limits<std::int32_t>::min();

  static FaceTag wall(int axis, bool upper) { return {-(2 * axis + (upper ? 1 : 0) + 1), {0, 0, 0}}; }
  static FaceTag seed(int index, std::array<std::int8_t, 3> image = {0, 0, 0}) {
    return {index, image};
  }

  bool is_wall() const { return neighbor < 0 && neighbor != kUnset; }
  bool is_seed() const { return neighbor >= 0; }
  int wall_id() const { return -neighbor - 1; }
  bool has_image() const { return image[0] != 0 || image[1] != 0 || image[2] != 0; }

  friend bool operator==(const FaceTag&, const FaceTag&) = default;
};

template <int D>
struct CellMeasures {
  double volume = 0.0;
  Vec<D> centroid = Vec<D>::Zero();
  /// Integral of |x - reference|^2 over the cell.
  double second_moment = 0.0;
};

enum class ClipOutcome { kUnchanged, kClipped, kEmptied };

template <int D>
class ConvexPolytope;

/// Convex polygon; vertices counter-clockwise, edge k runs from vertex k to
/// vertex k+1 and carries tag k.
template <>
class ConvexPolytope<2> {
 public:
  using Point = Vec<2>;

  ConvexPolytope() = default;
  ConvexPolytope(std::vector<Point> vertices, std::vector<FaceTag> edge_tags);

  /// Axis-aligned rectangle; `wall_tags` indexed by wall id 2*axis + side.
  static ConvexPolytope box(const Point& lower, const Point& upper,
                            const std::array<FaceTag, 4>& wall_tags);

  bool empty() const { return vertices_.empty(); }
  void clear();

  std::span<const Point> vertices() const { return vertices_; }
  std::size_t num_faces() const { return tags_.size(); }
  const FaceTag& face_tag(std::size_t face) const { return tags_[face]; }
  /// Vertex indices of a face (an edge: two indices).
  std::array<int, 2> face_vertices(std::size_t face) const;
  double face_area(std::size_t face) const;
  double surface_area() const;

  ClipOutcome clip(const HalfSpace<2>& h, const FaceTag& tag, double eps);

  CellMeasures<2> measures(const Point& reference) const;
  double max_distance_squared(const Point& p) const;
  double boundary_distance(const Point& p) const;
  void translate(const Point& t);
  /// Throws MalformedPolytope when convexity or orientation fails within eps.
  void validate(double eps) const;

 private:
  std::vector<Point> vertices_;
  std::vector<FaceTag> tags_;
};

/// Convex polyhedron; each face is a cyclic list of vertex indices ordered
/// counter-clockwise when seen from outside.
template <>
class ConvexPolytope<3> {
 public:
  using Point = Vec<3>;

  ConvexPolytope() = default;
  ConvexPolytope(std::vector<Point> vertices, const std::vector<std::vector<int>>& faces,
                 std::vector<FaceTag> face_tags);

  static ConvexPolytope box(const Point& lower, const Point& upper,
                            const std::array<FaceTag, 6>& wall_tags);

  bool empty() const { return vertices_.empty(); }
  void clear();

  std::span<const Point> vertices() const { return vertices_; }
  std::size_t num_faces() const { return tags_.size(); }
  const FaceTag& face_tag(std::size_t face) const { return tags_[face]; }
  std::span<const int> face_vertices(std::size_t face) const {
    return {face_indices_.data() + face_offsets_[face],
            face_indices_.data() + face_offsets_[face + 1]};
  }
  double face_area(std::size_t face) const;
  double surface_area() const;
  std::size_t num_edges() const;

  ClipOutcome clip(const HalfSpace<3>& h, const FaceTag& tag, double eps);

  CellMeasures<3> measures(const Point& reference) const;
  double max_distance_squared(const Point& p) const;
  double boundary_distance(const Point& p) const;
  void translate(const Point& t);
  void validate(double eps) const;

 private:
  std::vector<Point> vertices_;
  std::vector<int> face_indices_;
  std::vector<int> face_offsets_{0};
  std::vector<FaceTag> tags_;
};

// Value-returning free functions over either dimension.

template <int D>
double default_tolerance(const ConvexPolytope<D>& poly);

/// poly ∩ h. New face (if any) carries `tag`. Validates the input polytope.
template <int D>
ConvexPolytope<D> clip_halfspace(const ConvexPolytope<D>& poly, const HalfSpace<D>& h,
                                 const FaceTag& tag);

template <int D>
double volume(const ConvexPolytope<D>& poly) {
  return poly.empty() ? 0.0 : poly.measures(Vec<D>::Zero()).volume;
}

/// Throws EmptyCell for an empty polytope.
template <int D>
Vec<D> centroid(const ConvexPolytope<D>& poly);

template <int D>
double second_moment(const ConvexPolytope<D>& poly, const Vec<D>& p) {
  return poly.empty() ? 0.0 : poly.measures(p).second_moment;
}

template <int D>
double face_area(const ConvexPolytope<D>& poly, std::size_t face) {
  return poly.face_area(face);
}

/// Surface of the volume-equivalent ball over the polytope's surface (3D);
/// perimeter of the area-equivalent disc over the perimeter (2D).
template <int D>
double sphericity(const ConvexPolytope<D>& poly);

/// Radius of the ball (d = 3) or disc (d = 2) of the given volume.
template <int D>
double equivalent_radius(double volume);

}  // namespace laguerre
