#include "laguerre/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace laguerre {

namespace {

// Integral of |x|^2 over a simplex with vertices q (relative to the
// reference point) and measure `size`: size/((d+1)(d+2)) * (sum|q|^2 + |sum q|^2).
template <int D, std::size_t N>
double simplex_second_moment(double size, const std::array<Vec<D>, N>& q) {
  Vec<D> sum = Vec<D>::Zero();
  double sq = 0.0;
  for (const auto& v : q) {
    sum += v;
    sq += v.squaredNorm();
  }
  constexpr double denom = (D + 1) * (D + 2);
  return size / denom * (sq + sum.squaredNorm());
}

// Scratch storage reused across clips on the same thread.
struct ClipScratch {
  std::vector<double> dist;
  std::vector<signed char> side;
  std::vector<int> remap;
  std::vector<std::array<int, 3>> edge_cut;  // (lo, hi, new index)
  std::vector<int> cap;
  std::vector<std::pair<double, int>> cap_order;
  std::vector<Vec<3>> vertices;
  std::vector<int> face_indices;
  std::vector<int> face_offsets;
  std::vector<FaceTag> tags;
};

ClipScratch& scratch() {
  thread_local ClipScratch s;
  return s;
}

}  // namespace

// ---------------------------------------------------------------- polygon --

ConvexPolytope<2>::ConvexPolytope(std::vector<Point> vertices, std::vector<FaceTag> edge_tags)
    : vertices_(std::move(vertices)), tags_(std::move(edge_tags)) {
  if (vertices_.size() != tags_.size())
    throw MalformedPolytope("polygon needs one tag per edge");
  if (!vertices_.empty() && vertices_.size() < 3)
    throw MalformedPolytope("polygon needs at least three vertices");
}

ConvexPolytope<2> ConvexPolytope<2>::box(const Point& lower, const Point& upper,
                                         const std::array<FaceTag, 4>& wall_tags) {
  ConvexPolytope p;
  p.vertices_ = {Point(lower.x(), lower.y()), Point(upper.x(), lower.y()),
                 Point(upper.x(), upper.y()), Point(lower.x(), upper.y())};
  p.tags_ = {wall_tags[2], wall_tags[1], wall_tags[3], wall_tags[0]};
  return p;
}

void ConvexPolytope<2>::clear() {
  vertices_.clear();
  tags_.clear();
}

std::array<int, 2> ConvexPolytope<2>::face_vertices(std::size_t face) const {
  const int a = static_cast<int>(face);
  return {a, static_cast<int>((face + 1) % vertices_.size())};
}

double ConvexPolytope<2>::face_area(std::size_t face) const {
  const auto [a, b] = face_vertices(face);
  return (vertices_[b] - vertices_[a]).norm();
}

double ConvexPolytope<2>::surface_area() const {
  double total = 0.0;
  for (std::size_t f = 0; f < num_faces(); ++f) total += face_area(f);
  return total;
}

ClipOutcome ConvexPolytope<2>::clip(const HalfSpace<2>& h, const FaceTag& tag, double eps) {
  if (empty()) return ClipOutcome::kUnchanged;
  const double tol = eps * h.normal.norm();
  const std::size_t n = vertices_.size();
  auto& s = scratch();
  s.dist.resize(n);
  s.side.resize(n);
  bool any_out = false, any_in = false;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = h.normal.dot(vertices_[k]) - h.offset;
    s.dist[k] = d;
    s.side[k] = d > tol ? 1 : (d < -tol ? -1 : 0);
    any_out |= s.side[k] > 0;
    any_in |= s.side[k] < 0;
  }
  if (!any_out) return ClipOutcome::kUnchanged;
  if (!any_in) {
    clear();
    return ClipOutcome::kEmptied;
  }

  std::vector<Point> out;
  std::vector<FaceTag> out_tags;
  out.reserve(n + 2);
  out_tags.reserve(n + 2);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t next = (k + 1) % n;
    const int sa = s.side[k], sb = s.side[next];
    if (sa <= 0) {
      out.push_back(vertices_[k]);
      out_tags.push_back((sb > 0 && sa == 0) ? tag : tags_[k]);
    }
    if (sa * sb < 0) {
      const double t = s.dist[k] / (s.dist[k] - s.dist[next]);
      out.push_back(vertices_[k] + t * (vertices_[next] - vertices_[k]));
      // Leaving the half-space starts the new edge; entering continues edge k.
      out_tags.push_back(sa < 0 ? tag : tags_[k]);
    }
  }
  if (out.size() < 3) {
    clear();
    return ClipOutcome::kEmptied;
  }
  vertices_ = std::move(out);
  tags_ = std::move(out_tags);
  return ClipOutcome::kClipped;
}

CellMeasures<2> ConvexPolytope<2>::measures(const Point& reference) const {
  CellMeasures<2> m;
  if (empty()) return m;
  Point apex = Point::Zero();
  for (const auto& v : vertices_) apex += v;
  apex /= static_cast<double>(vertices_.size());

  Point first = Point::Zero();
  const std::size_t n = vertices_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Point& a = vertices_[k];
    const Point& b = vertices_[(k + 1) % n];
    const Point ea = a - apex, eb = b - apex;
    const double area = 0.5 * (ea.x() * eb.y() - ea.y() * eb.x());
    m.volume += area;
    first += area * (apex + a + b) / 3.0;
    m.second_moment += simplex_second_moment<2, 3>(
        area, std::array<Point, 3>{apex - reference, a - reference, b - reference});
  }
  m.centroid = m.volume > 0.0 ? Point(first / m.volume) : apex;
  return m;
}

double ConvexPolytope<2>::max_distance_squared(const Point& p) const {
  double r = 0.0;
  for (const auto& v : vertices_) r = std::max(r, (v - p).squaredNorm());
  return r;
}

double ConvexPolytope<2>::boundary_distance(const Point& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < num_faces(); ++f) {
    const auto [a, b] = face_vertices(f);
    const Point e = vertices_[b] - vertices_[a];
    const double len = e.norm();
    if (len == 0.0) continue;
    // Outward normal of a counter-clockwise edge.
    const Point normal(e.y() / len, -e.x() / len);
    best = std::min(best, normal.dot(vertices_[a] - p));
  }
  return best;
}

void ConvexPolytope<2>::translate(const Point& t) {
  for (auto& v : vertices_) v += t;
}

void ConvexPolytope<2>::validate(double eps) const {
  if (empty()) return;
  if (vertices_.size() < 3 || vertices_.size() != tags_.size())
    throw MalformedPolytope("polygon has fewer than three vertices or mismatched tags");
  for (std::size_t f = 0; f < num_faces(); ++f) {
    const auto [a, b] = face_vertices(f);
    const Point e = vertices_[b] - vertices_[a];
    const double len = e.norm();
    if (len <= eps) continue;
    const Point normal(e.y() / len, -e.x() / len);
    for (const auto& v : vertices_) {
      if (normal.dot(v - vertices_[a]) > eps)
        throw MalformedPolytope("polygon is not convex or not counter-clockwise");
    }
  }
}

// ------------------------------------------------------------- polyhedron --

ConvexPolytope<3>::ConvexPolytope(std::vector<Point> vertices,
                                  const std::vector<std::vector<int>>& faces,
                                  std::vector<FaceTag> face_tags)
    : vertices_(std::move(vertices)), tags_(std::move(face_tags)) {
  if (faces.size() != tags_.size()) throw MalformedPolytope("polyhedron needs one tag per face");
  for (const auto& f : faces) {
    if (f.size() < 3) throw MalformedPolytope("face with fewer than three vertices");
    for (int v : f) {
      if (v < 0 || static_cast<std::size_t>(v) >= vertices_.size())
        throw MalformedPolytope("face references a missing vertex");
      face_indices_.push_back(v);
    }
    face_offsets_.push_back(static_cast<int>(face_indices_.size()));
  }
}

ConvexPolytope<3> ConvexPolytope<3>::box(const Point& lower, const Point& upper,
                                         const std::array<FaceTag, 6>& wall_tags) {
  ConvexPolytope p;
  p.vertices_.reserve(8);
  for (int k = 0; k < 8; ++k) {
    p.vertices_.emplace_back((k & 1) ? upper.x() : lower.x(), (k & 2) ? upper.y() : lower.y(),
                             (k & 4) ? upper.z() : lower.z());
  }
  static constexpr int kFaces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                       {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (int f = 0; f < 6; ++f) {
    p.face_indices_.insert(p.face_indices_.end(), kFaces[f], kFaces[f] + 4);
    p.face_offsets_.push_back(static_cast<int>(p.face_indices_.size()));
    p.tags_.push_back(wall_tags[f]);
  }
  return p;
}

void ConvexPolytope<3>::clear() {
  vertices_.clear();
  face_indices_.clear();
  face_offsets_.assign(1, 0);
  tags_.clear();
}

double ConvexPolytope<3>::face_area(std::size_t face) const {
  const auto idx = face_vertices(face);
  const Point& origin = vertices_[idx[0]];
  Point normal = Point::Zero();
  for (std::size_t k = 1; k + 1 < idx.size(); ++k)
    normal += (vertices_[idx[k]] - origin).cross(vertices_[idx[k + 1]] - origin);
  return 0.5 * normal.norm();
}

double ConvexPolytope<3>::surface_area() const {
  double total = 0.0;
  for (std::size_t f = 0; f < num_faces(); ++f) total += face_area(f);
  return total;
}

std::size_t ConvexPolytope<3>::num_edges() const { return face_indices_.size() / 2; }

ClipOutcome ConvexPolytope<3>::clip(const HalfSpace<3>& h, const FaceTag& tag, double eps) {
  if (empty()) return ClipOutcome::kUnchanged;
  const double tol = eps * h.normal.norm();
  const std::size_t nv = vertices_.size();
  auto& s = scratch();
  s.dist.resize(nv);
  s.side.resize(nv);
  bool any_out = false, any_in = false;
  for (std::size_t k = 0; k < nv; ++k) {
    const double d = h.normal.dot(vertices_[k]) - h.offset;
    s.dist[k] = d;
    s.side[k] = d > tol ? 1 : (d < -tol ? -1 : 0);
    any_out |= s.side[k] > 0;
    any_in |= s.side[k] < 0;
  }
  if (!any_out) return ClipOutcome::kUnchanged;
  if (!any_in) {
    clear();
    return ClipOutcome::kEmptied;
  }

  s.remap.assign(nv, -1);
  s.vertices.clear();
  s.cap.clear();
  for (std::size_t k = 0; k < nv; ++k) {
    if (s.side[k] <= 0) {
      s.remap[k] = static_cast<int>(s.vertices.size());
      s.vertices.push_back(vertices_[k]);
      if (s.side[k] == 0) s.cap.push_back(s.remap[k]);
    }
  }
  s.edge_cut.clear();
  auto cut = [&](int a, int b) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    for (const auto& e : s.edge_cut)
      if (e[0] == lo && e[1] == hi) return e[2];
    const double t = s.dist[lo] / (s.dist[lo] - s.dist[hi]);
    const int idx = static_cast<int>(s.vertices.size());
    s.vertices.push_back(vertices_[lo] + t * (vertices_[hi] - vertices_[lo]));
    s.edge_cut.push_back({lo, hi, idx});
    s.cap.push_back(idx);
    return idx;
  };

  s.face_indices.clear();
  s.face_offsets.assign(1, 0);
  s.tags.clear();
  for (std::size_t f = 0; f < tags_.size(); ++f) {
    const int begin = face_offsets_[f], end = face_offsets_[f + 1];
    const std::size_t start = s.face_indices.size();
    for (int k = begin; k < end; ++k) {
      const int a = face_indices_[k];
      const int b = face_indices_[k + 1 < end ? k + 1 : begin];
      if (s.side[a] <= 0) s.face_indices.push_back(s.remap[a]);
      if (s.side[a] * s.side[b] < 0) s.face_indices.push_back(cut(a, b));
    }
    if (s.face_indices.size() - start < 3) {
      s.face_indices.resize(start);
      continue;
    }
    s.face_offsets.push_back(static_cast<int>(s.face_indices.size()));
    s.tags.push_back(tags_[f]);
  }

  // The cap polygon: every kept vertex on the plane, ordered
  // counter-clockwise about the outward normal h.normal.
  if (s.cap.size() >= 3) {
    const Point n = h.normal.normalized();
    Point u = std::abs(n.x()) < 0.9 ? Point::UnitX() : Point::UnitY();
    u = (u - n * n.dot(u)).normalized();
    const Point v = n.cross(u);
    Point mid = Point::Zero();
    for (int c : s.cap) mid += s.vertices[c];
    mid /= static_cast<double>(s.cap.size());
    s.cap_order.clear();
    for (int c : s.cap) {
      const Point q = s.vertices[c] - mid;
      s.cap_order.emplace_back(std::atan2(q.dot(v), q.dot(u)), c);
    }
    std::sort(s.cap_order.begin(), s.cap_order.end());
    for (const auto& [angle, c] : s.cap_order) s.face_indices.push_back(c);
    s.face_offsets.push_back(static_cast<int>(s.face_indices.size()));
    s.tags.push_back(tag);
  }

  if (s.tags.size() < 4) {
    clear();
    return ClipOutcome::kEmptied;
  }
  vertices_.assign(s.vertices.begin(), s.vertices.end());
  face_indices_.assign(s.face_indices.begin(), s.face_indices.end());
  face_offsets_.assign(s.face_offsets.begin(), s.face_offsets.end());
  tags_.assign(s.tags.begin(), s.tags.end());
  return ClipOutcome::kClipped;
}

CellMeasures<3> ConvexPolytope<3>::measures(const Point& reference) const {
  CellMeasures<3> m;
  if (empty()) return m;
  Point apex = Point::Zero();
  for (const auto& v : vertices_) apex += v;
  apex /= static_cast<double>(vertices_.size());

  Point first = Point::Zero();
  const Point qa = apex - reference;
  for (std::size_t f = 0; f < tags_.size(); ++f) {
    const auto idx = face_vertices(f);
    const Point& p0 = vertices_[idx[0]];
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
      const Point& p1 = vertices_[idx[k]];
      const Point& p2 = vertices_[idx[k + 1]];
      const double vol = (p0 - apex).dot((p1 - apex).cross(p2 - apex)) / 6.0;
      m.volume += vol;
      first += vol * (apex + p0 + p1 + p2) / 4.0;
      m.second_moment += simplex_second_moment<3, 4>(
          vol, std::array<Point, 4>{qa, p0 - reference, p1 - reference, p2 - reference});
    }
  }
  m.centroid = m.volume > 0.0 ? Point(first / m.volume) : apex;
  return m;
}

double ConvexPolytope<3>::max_distance_squared(const Point& p) const {
  double r = 0.0;
  for (const auto& v : vertices_) r = std::max(r, (v - p).squaredNorm());
  return r;
}

double ConvexPolytope<3>::boundary_distance(const Point& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < num_faces(); ++f) {
    const auto idx = face_vertices(f);
    const Point& origin = vertices_[idx[0]];
    Point normal = Point::Zero();
    for (std::size_t k = 1; k + 1 < idx.size(); ++k)
      normal += (vertices_[idx[k]] - origin).cross(vertices_[idx[k + 1]] - origin);
    const double len = normal.norm();
    if (len == 0.0) continue;
    best = std::min(best, normal.dot(origin - p) / len);
  }
  return best;
}

void ConvexPolytope<3>::translate(const Point& t) {
  for (auto& v : vertices_) v += t;
}

void ConvexPolytope<3>::validate(double eps) const {
  if (empty()) return;
  if (tags_.size() < 4 || face_offsets_.size() != tags_.size() + 1)
    throw MalformedPolytope("polyhedron needs at least four faces");
  for (std::size_t f = 0; f < num_faces(); ++f) {
    const auto idx = face_vertices(f);
    if (idx.size() < 3) throw MalformedPolytope("face with fewer than three vertices");
    const Point& origin = vertices_[idx[0]];
    Point normal = Point::Zero();
    for (std::size_t k = 1; k + 1 < idx.size(); ++k)
      normal += (vertices_[idx[k]] - origin).cross(vertices_[idx[k + 1]] - origin);
    const double len = normal.norm();
    if (len <= eps * eps) continue;
    normal /= len;
    for (int v : idx) {
      if (std::abs(normal.dot(vertices_[v] - origin)) > eps)
        throw MalformedPolytope("non-planar face");
    }
    for (const auto& v : vertices_) {
      if (normal.dot(v - origin) > eps)
        throw MalformedPolytope("polyhedron is not convex or a face is mis-oriented");
    }
  }
}

// ------------------------------------------------------------ free funcs --

template <int D>
double default_tolerance(const ConvexPolytope<D>& poly) {
  if (poly.empty()) return 0.0;
  Vec<D> lo = poly.vertices()[0], hi = lo;
  for (const auto& v : poly.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return kRelativeGeometricTolerance * std::max((hi - lo).norm(), 1e-300);
}

template <int D>
ConvexPolytope<D> clip_halfspace(const ConvexPolytope<D>& poly, const HalfSpace<D>& h,
                                 const FaceTag& tag) {
  if (!(h.normal.squaredNorm() > 0.0)) throw MalformedPolytope("half-space normal is zero");
  const double eps = default_tolerance(poly);
  poly.validate(std::max(eps, 1e-12));
  ConvexPolytope<D> out = poly;
  out.clip(h, tag, eps);
  return out;
}

template <int D>
Vec<D> centroid(const ConvexPolytope<D>& poly) {
  if (poly.empty()) throw EmptyCell("centroid of an empty polytope");
  return poly.measures(Vec<D>::Zero()).centroid;
}

template <int D>
double equivalent_radius(double vol) {
  if constexpr (D == 2) {
    return std::sqrt(vol / std::numbers::pi);
  } else {
    return std::cbrt(3.0 * vol / (4.0 * std::numbers::pi));
  }
}

template <int D>
double sphericity(const ConvexPolytope<D>& poly) {
  if (poly.empty()) throw EmptyCell("sphericity of an empty polytope");
  const double vol = volume(poly);
  const double r = equivalent_radius<D>(vol);
  const double ball_surface =
      D == 2 ? 2.0 * std::numbers::pi * r : 4.0 * std::numbers::pi * r * r;
  return ball_surface / poly.surface_area();
}

template double default_tolerance(const ConvexPolytope<2>&);
template double default_tolerance(const ConvexPolytope<3>&);
template ConvexPolytope<2> clip_halfspace(const ConvexPolytope<2>&, const HalfSpace<2>&,
                                          const FaceTag&);
template ConvexPolytope<3> clip_halfspace(const ConvexPolytope<3>&, const HalfSpace<3>&,
                                          const FaceTag&);
template Vec<2> centroid(const ConvexPolytope<2>&);
template Vec<3> centroid(const ConvexPolytope<3>&);
template double equivalent_radius<2>(double);
template double equivalent_radius<3>(double);
template double sphericity(const ConvexPolytope<2>&);
template double sphericity(const ConvexPolytope<3>&);

}  // namespace laguerre
