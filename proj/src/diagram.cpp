#include "laguerre/diagram.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <sstream>

namespace laguerre {

namespace {

template <int D>
using Index = Eigen::Matrix<int, D, 1>;

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

bool candidate_after(const auto& a, const auto& b) {
  if (a.distance_squared != b.distance_squared) return a.distance_squared > b.distance_squared;
  if (a.seed != b.seed) return a.seed > b.seed;
  return a.image > b.image;
}

template <int D>
Vec<D> image_offset(const Domain<D>& domain, const std::array<std::int8_t, 3>& image) {
  Vec<D> offset;
  const Vec<D> len = domain.lengths();
  for (int k = 0; k < D; ++k) offset[k] = image[k] * len[k];
  return offset;
}

template <int D>
std::array<FaceTag, 2 * D> wall_tags() {
  std::array<FaceTag, 2 * D> tags;
  for (int k = 0; k < D; ++k) {
    tags[2 * k] = FaceTag::wall(k, false);
    tags[2 * k + 1] = FaceTag::wall(k, true);
  }
  return tags;
}

// Walls of the box centred on seed i are bisectors with i's own images.
template <int D>
std::array<FaceTag, 2 * D> self_image_tags(int i) {
  std::array<FaceTag, 2 * D> tags;
  for (int k = 0; k < D; ++k) {
    std::array<std::int8_t, 3> lo{0, 0, 0}, hi{0, 0, 0};
    lo[k] = -1;
    hi[k] = 1;
    tags[2 * k] = FaceTag::seed(i, lo);
    tags[2 * k + 1] = FaceTag::seed(i, hi);
  }
  return tags;
}

template <int D>
ConvexPolytope<D> starting_polytope(const Domain<D>& domain, const Vec<D>& seed, int i) {
  if (domain.periodic) {
    const Vec<D> half = 0.5 * domain.lengths();
    return ConvexPolytope<D>::box(seed - half, seed + half, self_image_tags<D>(i));
  }
  return ConvexPolytope<D>::box(domain.lower, domain.upper, wall_tags<D>());
}

template <int D>
HalfSpace<D> power_bisector(const Vec<D>& xi, double wi, const Vec<D>& xj, double wj) {
  const Vec<D> e = xj - xi;
  return {e, 0.5 * e.dot(xi + xj) + 0.5 * (wi - wj)};
}

template <int D>
void finish_cell(Cell<D>& cell, const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds,
                 int i) {
  const Vec<D>& xi = seeds[i].position;
  cell.measures = cell.polytope.measures(xi);
  cell.adjacency.clear();
  if (cell.polytope.empty()) return;
  const double min_area = std::pow(domain.tolerance(), D - 1);
  for (std::size_t f = 0; f < cell.polytope.num_faces(); ++f) {
    const FaceTag& tag = cell.polytope.face_tag(f);
    const double area = cell.polytope.face_area(f);
    if (area < min_area) continue;
    Adjacency adj;
    adj.neighbor = tag.neighbor;
    adj.image = tag.image;
    adj.area = area;
    if (tag.is_seed())
      adj.distance = (seeds[tag.neighbor].position + image_offset(domain, tag.image) - xi).norm();
    cell.adjacency.push_back(adj);
  }
}

template <int D>
void check_inputs(const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds) {
  domain.validate();
  for (const auto& s : seeds) {
    if (!s.position.allFinite() || !std::isfinite(s.weight))
      throw CoincidentSeeds("seed position or weight is not finite");
  }
}

template <int D>
Cell<D> build_cell(const SeedGrid<D>& grid, const Domain<D>& domain,
                   std::span<const WeightedSeed<D>> seeds, int i, double max_weight) {
  const double eps = domain.tolerance();
  const Vec<D>& xi = seeds[i].position;
  const double wi = seeds[i].weight;
  Cell<D> cell;
  cell.polytope = starting_polytope(domain, xi, i);

  // A neighbour at distance d can only cut the cell if
  // d < rho + sqrt(rho^2 + max_weight - w_i), rho bounding the cell about x_i.
  auto security_radius = [&] {
    const double rho2 = cell.polytope.max_distance_squared(xi);
    return std::sqrt(rho2) + std::sqrt(std::max(0.0, rho2 + max_weight - wi));
  };
  double radius = security_radius();
  CandidateStream<D> stream(grid, i);
  while (const Candidate<D>* c = stream.peek(radius)) {
    if (c->distance_squared >= radius * radius) break;
    if (c->distance_squared <= eps * eps) {
      std::ostringstream msg;
      msg << "seeds " << i << " and " << c->seed << " coincide";
      throw CoincidentSeeds(msg.str());
    }
    const auto h = power_bisector<D>(xi, wi, c->point, seeds[c->seed].weight);
    const auto outcome = cell.polytope.clip(h, FaceTag::seed(c->seed, c->image), eps);
    stream.pop();
    if (outcome == ClipOutcome::kEmptied) break;
    if (outcome == ClipOutcome::kClipped) radius = security_radius();
  }
  finish_cell(cell, domain, seeds, i);
  return cell;
}

template <int D>
Cell<D> build_cell_naive(const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds, int i) {
  const double eps = domain.tolerance();
  const Vec<D>& xi = seeds[i].position;
  Cell<D> cell;
  cell.polytope = starting_polytope(domain, xi, i);
  const int shells = domain.periodic ? 1 : 0;
  const int span = 2 * shells + 1;
  int combos = 1;
  for (int k = 0; k < D; ++k) combos *= span;
  for (int j = 0; j < static_cast<int>(seeds.size()); ++j) {
    if (j == i) continue;
    for (int c = 0; c < combos; ++c) {
      std::array<std::int8_t, 3> image{0, 0, 0};
      int rest = c;
      for (int k = 0; k < D; ++k) {
        image[k] = static_cast<std::int8_t>(rest % span - shells);
        rest /= span;
      }
      const Vec<D> xj = seeds[j].position + image_offset(domain, image);
      if ((xj - xi).squaredNorm() <= eps * eps) throw CoincidentSeeds("coincident seeds");
      cell.polytope.clip(power_bisector<D>(xi, seeds[i].weight, xj, seeds[j].weight),
                         FaceTag::seed(j, image), eps);
    }
  }
  finish_cell(cell, domain, seeds, i);
  return cell;
}

template <int D>
LaguerreDiagram<D> assemble(const Domain<D>& domain, std::vector<WeightedSeed<D>> seeds,
                            const std::function<Cell<D>(int)>& make_cell) {
  LaguerreDiagram<D> diagram;
  diagram.domain = domain;
  diagram.generators = std::move(seeds);
  const int n = static_cast<int>(diagram.generators.size());
  diagram.cells.resize(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) {
    try {
      diagram.cells[i] = make_cell(i);
    } catch (...) {
#pragma omp critical(laguerre_diagram_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return diagram;
}

template <int D>
std::vector<WeightedSeed<D>> prepared_seeds(const Domain<D>& domain,
                                            std::span<const WeightedSeed<D>> seeds) {
  std::vector<WeightedSeed<D>> out(seeds.begin(), seeds.end());
  if (domain.periodic)
    for (auto& s : out) s.position = domain.wrap(s.position);
  return out;
}

}  // namespace

// ----------------------------------------------------------------- domain --

template <int D>
void Domain<D>::validate() const {
  if (!lower.allFinite() || !upper.allFinite() || !((upper - lower).array() > 0.0).all())
    throw DegenerateDomain("domain needs lower < upper along every axis");
}

template <int D>
Vec<D> Domain<D>::wrap(const Vec<D>& x) const {
  Vec<D> out = x;
  const Vec<D> len = lengths();
  for (int k = 0; k < D; ++k) {
    double t = std::fmod(x[k] - lower[k], len[k]);
    if (t < 0.0) t += len[k];
    if (t >= len[k]) t = 0.0;
    out[k] = lower[k] + t;
  }
  return out;
}

template <int D>
Vec<D> Domain<D>::difference(const Vec<D>& a, const Vec<D>& b) const {
  Vec<D> d = b - a;
  if (!periodic) return d;
  const Vec<D> len = lengths();
  for (int k = 0; k < D; ++k) d[k] -= len[k] * std::round(d[k] / len[k]);
  return d;
}

// ---------------------------------------------------------------- diagram --

template <int D>
double LaguerreDiagram<D>::total_volume() const {
  double total = 0.0;
  for (const auto& c : cells) total += c.measures.volume;
  return total;
}

template <int D>
std::vector<double> LaguerreDiagram<D>::volumes() const {
  std::vector<double> v;
  v.reserve(cells.size());
  for (const auto& c : cells) v.push_back(c.measures.volume);
  return v;
}

template <int D>
std::vector<std::size_t> LaguerreDiagram<D>::empty_cells() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].empty()) out.push_back(i);
  return out;
}

template <int D>
double LaguerreDiagram<D>::shared_area(std::size_t cell, int neighbor) const {
  double total = 0.0;
  for (const auto& a : cells[cell].adjacency)
    if (a.neighbor == neighbor) total += a.area;
  return total;
}

template <int D>
HalfSpace<D> bisector(const WeightedSeed<D>& seed_i, const WeightedSeed<D>& seed_j) {
  const double scale = std::max({1.0, seed_i.position.norm(), seed_j.position.norm()});
  if ((seed_j.position - seed_i.position).norm() <= kRelativeGeometricTolerance * scale)
    throw CoincidentSeeds("bisector of coincident seeds");
  return power_bisector<D>(seed_i.position, seed_i.weight, seed_j.position, seed_j.weight);
}

// ------------------------------------------------------------------- grid --

template <int D>
SeedGrid<D>::SeedGrid(const Domain<D>& domain, std::span<const Vec<D>> positions)
    : domain_(domain), positions_(positions) {
  Vec<D> lo = domain.lower, hi = domain.upper;
  if (!domain.periodic) {
    for (const auto& p : positions) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  origin_ = lo;
  const Vec<D> len = hi - lo;
  const double n = std::max<double>(1.0, static_cast<double>(positions.size()));
  const double per_axis = std::pow(n / len.prod(), 1.0 / D);
  std::size_t total = 1;
  for (int k = 0; k < D; ++k) {
    dims_[k] = std::clamp(static_cast<int>(std::lround(len[k] * per_axis)), 1,
                          std::max(1, static_cast<int>(2 * n)));
    spacing_[k] = len[k] / dims_[k];
    total *= static_cast<std::size_t>(dims_[k]);
  }
  std::vector<int> count(total + 1, 0);
  std::vector<int> owner(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    owner[i] = linear(bucket_of(positions[i]));
    ++count[owner[i] + 1];
  }
  for (std::size_t b = 0; b < total; ++b) count[b + 1] += count[b];
  start_ = count;
  items_.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) items_[count[owner[i]]++] = static_cast<int>(i);
}

template <int D>
Eigen::Matrix<int, D, 1> SeedGrid<D>::bucket_of(const Vec<D>& x) const {
  Index<D> idx;
  for (int k = 0; k < D; ++k) {
    const int b = static_cast<int>(std::floor((x[k] - origin_[k]) / spacing_[k]));
    idx[k] = std::clamp(b, 0, dims_[k] - 1);
  }
  return idx;
}

template <int D>
int SeedGrid<D>::linear(const Eigen::Matrix<int, D, 1>& index) const {
  int l = 0;
  for (int k = D - 1; k >= 0; --k) l = l * dims_[k] + index[k];
  return l;
}

template <int D>
std::span<const int> SeedGrid<D>::bucket(const Eigen::Matrix<int, D, 1>& index) const {
  const int l = linear(index);
  return {items_.data() + start_[l], items_.data() + start_[l + 1]};
}

// ----------------------------------------------------------------- stream --

template <int D>
CandidateStream<D>::CandidateStream(const SeedGrid<D>& grid, int query)
    : grid_(grid), query_(query), point_(grid.positions()[query]), home_(grid.bucket_of(point_)) {}

template <int D>
double CandidateStream<D>::unseen_bound() const {
  if (exhausted_) return std::numeric_limits<double>::infinity();
  if (ring_ < 0) return 0.0;
  const bool periodic = grid_.domain().periodic;
  double bound = std::numeric_limits<double>::infinity();
  for (int k = 0; k < D; ++k) {
    const int n = grid_.dims()[k];
    const int range_lo = periodic ? -n : 0, range_hi = periodic ? 2 * n - 1 : n - 1;
    if (home_[k] - ring_ > range_lo) {
      const double edge = grid_.origin()[k] + (home_[k] - ring_) * grid_.spacing()[k];
      bound = std::min(bound, point_[k] - edge);
    }
    if (home_[k] + ring_ < range_hi) {
      const double edge = grid_.origin()[k] + (home_[k] + ring_ + 1) * grid_.spacing()[k];
      bound = std::min(bound, edge - point_[k]);
    }
  }
  return std::max(bound, 0.0);
}

template <int D>
bool CandidateStream<D>::add_ring() {
  if (exhausted_) return false;
  ++ring_;
  const int r = ring_;
  const bool periodic = grid_.domain().periodic;
  const Vec<D> len = grid_.domain().lengths();
  Index<D> offset = Index<D>::Constant(-r);
  while (true) {
    if (offset.cwiseAbs().maxCoeff() == r) {
      Index<D> cell = home_ + offset;
      std::array<std::int8_t, 3> image{0, 0, 0};
      bool valid = true;
      for (int k = 0; k < D && valid; ++k) {
        const int n = grid_.dims()[k];
        if (periodic) {
          if (cell[k] < -n || cell[k] >= 2 * n) valid = false;
          const int shift = floor_div(cell[k], n);
          image[k] = static_cast<std::int8_t>(shift);
          cell[k] -= shift * n;
        } else if (cell[k] < 0 || cell[k] >= n) {
          valid = false;
        }
      }
      if (valid) {
        Vec<D> shift = Vec<D>::Zero();
        for (int k = 0; k < D; ++k) shift[k] = image[k] * len[k];
        for (int j : grid_.bucket(cell)) {
          if (j == query_) continue;
          Candidate<D> c;
          c.seed = j;
          c.image = image;
          c.point = grid_.positions()[j] + shift;
          c.distance_squared = (c.point - point_).squaredNorm();
          heap_.push_back(c);
          std::push_heap(heap_.begin(), heap_.end(), [](const auto& a, const auto& b) {
            return candidate_after(a, b);
          });
        }
      }
    }
    int k = 0;
    for (; k < D; ++k) {
      if (offset[k] < r) {
        ++offset[k];
        break;
      }
      offset[k] = -r;
    }
    if (k == D) break;
  }
  // Nothing remains once the ring cube covers the whole searchable range.
  bool covers = true;
  for (int k = 0; k < D; ++k) {
    const int n = grid_.dims()[k];
    const int range_lo = periodic ? -n : 0, range_hi = periodic ? 2 * n - 1 : n - 1;
    covers &= home_[k] - r <= range_lo && home_[k] + r >= range_hi;
  }
  exhausted_ = covers;
  return true;
}

template <int D>
const Candidate<D>* CandidateStream<D>::peek(double limit) {
  const double limit2 = limit * limit;
  while (!exhausted_) {
    const double bound = unseen_bound();
    const double bound2 = bound * bound;
    if (!heap_.empty() && heap_.front().distance_squared <= bound2) break;
    if (bound2 >= limit2) break;
    add_ring();
  }
  if (heap_.empty()) return nullptr;
  const double bound = unseen_bound();
  if (heap_.front().distance_squared > bound * bound) return nullptr;  // beyond limit
  return &heap_.front();
}

template <int D>
void CandidateStream<D>::pop() {
  std::pop_heap(heap_.begin(), heap_.end(),
                [](const auto& a, const auto& b) { return candidate_after(a, b); });
  heap_.pop_back();
}

template <int D>
std::vector<Candidate<D>> CandidateStream<D>::drain() {
  std::vector<Candidate<D>> out;
  while (const Candidate<D>* c = peek()) {
    out.push_back(*c);
    pop();
  }
  return out;
}

// ---------------------------------------------------------- construction --

template <int D>
LaguerreDiagram<D> compute_diagram(const Domain<D>& domain,
                                   std::span<const WeightedSeed<D>> seeds) {
  if (domain.periodic) return compute_periodic_diagram(domain, seeds);
  check_inputs(domain, seeds);
  auto prepared = prepared_seeds(domain, seeds);
  std::vector<Vec<D>> positions;
  positions.reserve(prepared.size());
  double max_weight = -std::numeric_limits<double>::infinity();
  for (const auto& s : prepared) {
    positions.push_back(s.position);
    max_weight = std::max(max_weight, s.weight);
  }
  const SeedGrid<D> grid(domain, positions);
  const std::span<const WeightedSeed<D>> view(prepared);
  return assemble<D>(domain, std::move(prepared), [&](int i) {
    return build_cell<D>(grid, domain, view, i, max_weight);
  });
}

template <int D>
LaguerreDiagram<D> compute_periodic_diagram(const Domain<D>& domain,
                                            std::span<const WeightedSeed<D>> seeds) {
  Domain<D> periodic = domain;
  periodic.periodic = true;
  check_inputs(periodic, seeds);
  auto prepared = prepared_seeds(periodic, seeds);
  std::vector<Vec<D>> positions;
  double max_weight = -std::numeric_limits<double>::infinity();
  for (const auto& s : prepared) {
    positions.push_back(s.position);
    max_weight = std::max(max_weight, s.weight);
  }
  const SeedGrid<D> grid(periodic, positions);
  const std::span<const WeightedSeed<D>> view(prepared);
  return assemble<D>(periodic, std::move(prepared), [&](int i) {
    return build_cell<D>(grid, periodic, view, i, max_weight);
  });
}

template <int D>
LaguerreDiagram<D> build_diagram(const Domain<D>& domain, std::span<const WeightedSeed<D>> seeds) {
  return domain.periodic ? compute_periodic_diagram(domain, seeds) : compute_diagram(domain, seeds);
}

template <int D>
LaguerreDiagram<D> build_diagram_naive(const Domain<D>& domain,
                                       std::span<const WeightedSeed<D>> seeds) {
  check_inputs(domain, seeds);
  auto prepared = prepared_seeds(domain, seeds);
  const std::span<const WeightedSeed<D>> view(prepared);
  return assemble<D>(domain, std::move(prepared),
                     [&](int i) { return build_cell_naive<D>(domain, view, i); });
}

template <int D>
std::vector<WeightedSeed<D>> make_seeds(std::span<const Vec<D>> positions,
                                        std::span<const double> weights) {
  std::vector<WeightedSeed<D>> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out[i].position = positions[i];
    out[i].weight = weights.empty() ? 0.0 : weights[i];
  }
  return out;
}

#define LAGUERRE_INSTANTIATE(D)                                                               \
  template struct Domain<D>;                                                                  \
  template struct LaguerreDiagram<D>;                                                         \
  template class SeedGrid<D>;                                                                 \
  template class CandidateStream<D>;                                                          \
  template HalfSpace<D> bisector(const WeightedSeed<D>&, const WeightedSeed<D>&);            \
  template LaguerreDiagram<D> compute_diagram(const Domain<D>&,                               \
                                              std::span<const WeightedSeed<D>>);              \
  template LaguerreDiagram<D> compute_periodic_diagram(const Domain<D>&,                      \
                                                       std::span<const WeightedSeed<D>>);     \
  template LaguerreDiagram<D> build_diagram(const Domain<D>&, std::span<const WeightedSeed<D>>); \
  template LaguerreDiagram<D> build_diagram_naive(const Domain<D>&,                           \
                                                  std::span<const WeightedSeed<D>>);          \
  template std::vector<WeightedSeed<D>> make_seeds(std::span<const Vec<D>>,                   \
                                                   std::span<const double>);

LAGUERRE_INSTANTIATE(2)
LAGUERRE_INSTANTIATE(3)

#undef LAGUERRE_INSTANTIATE

}  // namespace laguerre
