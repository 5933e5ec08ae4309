#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "laguerre/diagram.hpp"
#include "laguerre/oracle.hpp"
#include "test_support.hpp"

using namespace laguerre;
using namespace laguerre::testing;

namespace {

template <int D>
double max_volume_gap(const LaguerreDiagram<D>& a, const LaguerreDiagram<D>& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    gap = std::max(gap, std::abs(a.cells[i].measures.volume - b.cells[i].measures.volume));
  return gap;
}

// Every vertex of `a` has a partner in `b` within tol, and vice versa.
template <int D>
bool same_vertex_sets(const ConvexPolytope<D>& a, const ConvexPolytope<D>& b, double tol) {
  auto covered = [tol](const ConvexPolytope<D>& p, const ConvexPolytope<D>& q) {
    for (const auto& v : p.vertices()) {
      bool found = false;
      for (const auto& w : q.vertices()) found = found || (v - w).norm() <= tol;
      if (!found) return false;
    }
    return true;
  };
  return covered(a, b) && covered(b, a);
}

template <int D>
void check_adjacency_symmetry(const LaguerreDiagram<D>& diagram) {
  for (std::size_t i = 0; i < diagram.size(); ++i) {
    for (const auto& adj : diagram.cells[i].adjacency) {
      if (adj.is_wall()) continue;
      const double back = diagram.shared_area(adj.neighbor, static_cast<int>(i));
      CHECK(back == doctest::Approx(diagram.shared_area(i, adj.neighbor)).epsilon(1e-9));
    }
  }
}

}  // namespace

TEST_CASE("bisector: examples") {
  const WeightedSeed<2> a{Vec<2>(0, 0), 0.0};
  const WeightedSeed<2> b{Vec<2>(1, 0), 0.0};
  auto h = bisector(a, b);
  CHECK(h.offset / h.normal.x() == doctest::Approx(0.5));
  CHECK(h.normal.y() == 0.0);

  h = bisector(WeightedSeed<2>{Vec<2>(0, 0), 0.25}, b);
  CHECK(h.offset / h.normal.x() == doctest::Approx(0.625));
  // Boundary point has equal power distance.
  const Vec<2> x(0.625, 0.3);
  CHECK(x.squaredNorm() - 0.25 == doctest::Approx((x - b.position).squaredNorm()));

  Rng rng(1);
  for (double c : {-5.0, 1e3, 0.37}) {
    const WeightedSeed<3> p{Vec<3>(uniform(rng), uniform(rng), uniform(rng)), uniform(rng)};
    const WeightedSeed<3> q{Vec<3>(uniform(rng), uniform(rng), uniform(rng)), uniform(rng)};
    const auto h0 = bisector(p, q);
    const auto h1 = bisector(WeightedSeed<3>{p.position, p.weight + c},
                             WeightedSeed<3>{q.position, q.weight + c});
    CHECK((h0.normal - h1.normal).norm() == 0.0);
    CHECK(h1.offset == doctest::Approx(h0.offset).epsilon(1e-12));
  }
  CHECK_THROWS_AS(bisector(a, WeightedSeed<2>{Vec<2>(0, 0), 1.0}), CoincidentSeeds);
}

TEST_CASE("compute_diagram: examples") {
  const auto square = Domain<2>::unit();
  SUBCASE("single seed fills the domain") {
    for (double w : {-3.0, 0.0, 11.0}) {
      std::vector<WeightedSeed<2>> seeds{{Vec<2>(0.3, 0.8), w}};
      const auto d = compute_diagram<2>(square, seeds);
      CHECK(d.cells[0].measures.volume == doctest::Approx(1.0));
    }
  }
  SUBCASE("two symmetric seeds") {
    std::vector<WeightedSeed<2>> seeds{{Vec<2>(0.25, 0.5), 0}, {Vec<2>(0.75, 0.5), 0}};
    const auto d = compute_diagram<2>(square, seeds);
    CHECK(d.cells[0].measures.volume == doctest::Approx(0.5));
    CHECK(d.cells[1].measures.volume == doctest::Approx(0.5));
    CHECK(d.shared_area(0, 1) == doctest::Approx(1.0));
    CHECK(d.shared_area(1, 0) == doctest::Approx(1.0));
    for (const auto& adj : d.cells[0].adjacency)
      if (!adj.is_wall()) CHECK(adj.distance == doctest::Approx(0.5));
  }
  SUBCASE("seed outside its own cell is allowed") {
    // A heavy seed swallows the light seed's position.
    std::vector<WeightedSeed<2>> seeds{{Vec<2>(0.2, 0.5), 0.0}, {Vec<2>(0.8, 0.5), 0.9}};
    const auto d = compute_diagram<2>(square, seeds);
    CHECK(d.total_volume() == doctest::Approx(1.0));
    CHECK(d.cells[1].polytope.boundary_distance(Vec<2>(0.2, 0.5)) > 0.0);
  }
  SUBCASE("errors") {
    std::vector<WeightedSeed<2>> twins{{Vec<2>(0.5, 0.5), 0}, {Vec<2>(0.5, 0.5), 1}};
    CHECK_THROWS_AS(compute_diagram<2>(square, twins), CoincidentSeeds);
    const Domain<2> flat{Vec<2>(0, 0), Vec<2>(1, 0), false};
    std::vector<WeightedSeed<2>> one{{Vec<2>(0.5, 0.0), 0}};
    CHECK_THROWS_AS(compute_diagram<2>(flat, one), DegenerateDomain);
  }
}

TEST_CASE("compute_periodic_diagram: examples") {
  const auto cube = Domain<3>::unit(true);
  SUBCASE("single seed") {
    std::vector<WeightedSeed<3>> seeds{{Vec<3>(0.1, 0.7, 0.2), 0.5}};
    const auto d = compute_periodic_diagram<3>(cube, seeds);
    CHECK(d.cells[0].measures.volume == doctest::Approx(1.0));
    CHECK(d.cells[0].polytope.boundary_distance(seeds[0].position) == doctest::Approx(0.5));
  }
  SUBCASE("two slabs share a direct and a wrapped face") {
    std::vector<WeightedSeed<3>> seeds{{Vec<3>(0.25, 0.5, 0.5), 0}, {Vec<3>(0.75, 0.5, 0.5), 0}};
    const auto d = compute_periodic_diagram<3>(cube, seeds);
    for (int i = 0; i < 2; ++i) {
      CHECK(d.cells[i].measures.volume == doctest::Approx(0.5));
      int faces_to_other = 0;
      for (const auto& adj : d.cells[i].adjacency) {
        if (adj.neighbor != 1 - i) continue;
        ++faces_to_other;
        CHECK(adj.area == doctest::Approx(1.0));
        CHECK(adj.distance == doctest::Approx(0.5));
      }
      CHECK(faces_to_other == 2);
      CHECK(d.shared_area(i, 1 - i) == doctest::Approx(2.0));
    }
  }
  SUBCASE("translation equivariance") {
    Rng rng(21);
    const auto seeds = random_seeds<3>(rng, cube, 60, 0.002);
    const auto base = compute_periodic_diagram<3>(cube, seeds);
    const Vec<3> t(uniform(rng), uniform(rng), uniform(rng));
    auto moved = seeds;
    for (auto& s : moved) s.position = cube.wrap(s.position + t);
    const auto shifted = compute_periodic_diagram<3>(cube, moved);
    CHECK(max_volume_gap(base, shifted) <= 1e-10);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto p = base.cells[i].polytope;
      p.translate(moved[i].position - seeds[i].position);
      CHECK(same_vertex_sets(p, shifted.cells[i].polytope, 1e-9));
    }
  }
}

TEST_CASE("candidate stream") {
  const auto square = Domain<2>::unit();
  SUBCASE("n=2 yields the other seed only") {
    std::vector<Vec<2>> pts{Vec<2>(0.2, 0.2), Vec<2>(0.7, 0.6)};
    const SeedGrid<2> grid(square, pts);
    CandidateStream<2> stream(grid, 0);
    const auto all = stream.drain();
    REQUIRE(all.size() == 1);
    CHECK(all[0].seed == 1);
  }
  SUBCASE("nondecreasing distances, everything seen once") {
    Rng rng(4);
    for (bool periodic : {false, true}) {
      const Domain<3> cube = Domain<3>::unit(periodic);
      const auto pts = positions_of(random_seeds<3>(rng, cube, 150));
      const SeedGrid<3> grid(cube, pts);
      CandidateStream<3> stream(grid, 17);
      const auto all = stream.drain();
      CHECK(all.size() == (periodic ? 149u * 27u : 149u));
      for (std::size_t k = 1; k < all.size(); ++k)
        CHECK(all[k - 1].distance_squared <= all[k].distance_squared);
      for (const auto& c : all)
        CHECK(c.distance_squared == doctest::Approx((c.point - pts[17]).squaredNorm()));
    }
  }
  SUBCASE("10x10 lattice matches naive clipping") {
    std::vector<WeightedSeed<2>> seeds;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) seeds.push_back({Vec<2>((i + 0.5) / 10, (j + 0.5) / 10), 1.0});
    const auto fast = compute_diagram<2>(square, seeds);
    const auto slow = build_diagram_naive<2>(square, seeds);
    CHECK(max_volume_gap(fast, slow) <= 1e-12);
    for (const auto& c : fast.cells) CHECK(c.measures.volume == doctest::Approx(0.01));
  }
  SUBCASE("random n=100 weights in [-0.01, 0.01] matches naive clipping") {
    Rng rng(8);
    const auto seeds = random_seeds<2>(rng, square, 100, 0.01);
    CHECK(max_volume_gap(compute_diagram<2>(square, seeds), build_diagram_naive<2>(square, seeds)) <=
          1e-12);
  }
}

TEST_CASE("accelerated equals naive on 50 random instances") {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + static_cast<int>(uniform(rng) * 198);
    const bool periodic = t % 2 == 1;
    const double amp = (t % 5) * 0.003;
    if (t % 3 == 0) {
      const Domain<2> dom{Vec<2>(-1, 0), Vec<2>(1, 0.5), periodic};
      const auto seeds = random_seeds<2>(rng, dom, n, amp);
      const auto fast = build_diagram<2>(dom, seeds);
      const auto slow = build_diagram_naive<2>(dom, seeds);
      CHECK(max_volume_gap(fast, slow) <= 1e-12 * dom.volume());
      CHECK(std::abs(fast.total_volume() - dom.volume()) <= 1e-9 * dom.volume());
    } else {
      const Domain<3> dom{Vec<3>(0, 0, 0), Vec<3>(1, 2, 0.5), periodic};
      const auto seeds = random_seeds<3>(rng, dom, n, amp);
      const auto fast = build_diagram<3>(dom, seeds);
      const auto slow = build_diagram_naive<3>(dom, seeds);
      CHECK(max_volume_gap(fast, slow) <= 1e-12 * dom.volume());
      CHECK(std::abs(fast.total_volume() - dom.volume()) <= 1e-9 * dom.volume());
    }
  }
}

TEST_CASE("tessellation, symmetry and convexity") {
  Rng rng(31);
  for (bool periodic : {false, true}) {
    const auto cube = Domain<3>::unit(periodic);
    const auto seeds = random_seeds<3>(rng, cube, 300, 0.005);
    const auto d = build_diagram<3>(cube, seeds);
    CHECK(std::abs(d.total_volume() - 1.0) <= 1e-9);
    check_adjacency_symmetry(d);
    for (const auto& c : d.cells) {
      if (c.empty()) continue;
      c.polytope.validate(cube.tolerance());
      CHECK(static_cast<long>(c.polytope.vertices().size()) -
                static_cast<long>(c.polytope.num_edges()) +
                static_cast<long>(c.polytope.num_faces()) ==
            2);
    }
    const auto square = Domain<2>::unit(periodic);
    const auto seeds2 = random_seeds<2>(rng, square, 400, 0.001);
    const auto d2 = build_diagram<2>(square, seeds2);
    CHECK(std::abs(d2.total_volume() - 1.0) <= 1e-9);
    check_adjacency_symmetry(d2);
  }
}

TEST_CASE("weight-shift invariance") {
  Rng rng(12);
  for (bool periodic : {false, true}) {
    const auto cube = Domain<3>::unit(periodic);
    const auto seeds = random_seeds<3>(rng, cube, 120, 0.004);
    const auto base = build_diagram<3>(cube, seeds);
    for (double c : {-5.0, 1e3}) {
      auto shifted = seeds;
      for (auto& s : shifted) s.weight += c;
      const auto d = build_diagram<3>(cube, shifted);
      CHECK(max_volume_gap(base, d) <= 1e-12);
      for (std::size_t i = 0; i < seeds.size(); ++i)
        CHECK(same_vertex_sets(base.cells[i].polytope, d.cells[i].polytope, cube.tolerance()));
    }
  }
}

TEST_CASE("equal weights give the Voronoi diagram") {
  Rng rng(41);
  for (bool periodic : {false, true}) {
    const auto square = Domain<2>::unit(periodic);
    auto seeds = random_seeds<2>(rng, square, 30);
    for (auto& s : seeds) s.weight = 0.42;
    const auto d = build_diagram<2>(square, seeds);
    const auto grid = oracle::voxel_assign<2>(square, seeds, 64);
    int strict_points = 0;
    for (std::size_t v = 0; v < grid.num_voxels(); ++v) {
      const Vec<2> x(square.lower.x() + (v % 64 + 0.5) * grid.voxel_size.x(),
                     square.lower.y() + (v / 64 + 0.5) * grid.voxel_size.y());
      const int label = grid.labels[v];
      // Owner by plain distance.
      int nearest = 0;
      for (std::size_t i = 1; i < seeds.size(); ++i)
        if (square.distance(x, seeds[i].position) < square.distance(x, seeds[nearest].position))
          nearest = static_cast<int>(i);
      CHECK(label == nearest);
      // Points strictly inside a cell are strictly nearest to their own seed.
      Vec<2> local = seeds[label].position + square.difference(seeds[label].position, x);
      const double depth = d.cells[label].polytope.boundary_distance(local);
      if (depth > 1e-9) {
        ++strict_points;
        for (std::size_t i = 0; i < seeds.size(); ++i)
          if (static_cast<int>(i) != label)
            CHECK(square.distance(x, seeds[i].position) > square.distance(x, seeds[label].position));
      }
    }
    CHECK(strict_points > 4000);
  }
}

TEST_CASE("empty cells are flagged, not dropped") {
  const auto square = Domain<2>::unit();
  std::vector<WeightedSeed<2>> seeds{{Vec<2>(0.2, 0.5), 0.0},
                                     {Vec<2>(0.5, 0.5), -1.0},
                                     {Vec<2>(0.8, 0.5), 0.0}};
  const auto d = compute_diagram<2>(square, seeds);
  REQUIRE(d.size() == 3);
  CHECK(d.cells[1].empty());
  CHECK(d.cells[1].measures.volume == 0.0);
  CHECK(d.cells[1].adjacency.empty());
  CHECK(d.empty_cells() == std::vector<std::size_t>{1});
  CHECK(d.total_volume() == doctest::Approx(1.0));
  CHECK(d.shared_area(0, 2) == doctest::Approx(1.0));

  const auto cube = Domain<3>::unit(true);
  std::vector<WeightedSeed<3>> seeds3{{Vec<3>(0.2, 0.5, 0.5), 0.0},
                                      {Vec<3>(0.5, 0.5, 0.5), -2.0},
                                      {Vec<3>(0.8, 0.5, 0.5), 0.0}};
  const auto d3 = compute_periodic_diagram<3>(cube, seeds3);
  CHECK(d3.empty_cells() == std::vector<std::size_t>{1});
  CHECK(d3.total_volume() == doctest::Approx(1.0));
}

TEST_CASE("domain helpers") {
  const Domain<2> box{Vec<2>(-1, 2), Vec<2>(1, 3), true};
  CHECK(box.volume() == doctest::Approx(2.0));
  CHECK(box.wrap(Vec<2>(1.5, 1.25)).isApprox(Vec<2>(-0.5, 2.25)));
  CHECK(box.wrap(Vec<2>(1.0, 3.0)).isApprox(Vec<2>(-1.0, 2.0)));
  CHECK(box.difference(Vec<2>(-0.9, 2.1), Vec<2>(0.9, 2.9)).isApprox(Vec<2>(-0.2, -0.2)));
  const Domain<2> open{Vec<2>(-1, 2), Vec<2>(1, 3), false};
  CHECK(open.difference(Vec<2>(-0.9, 2.1), Vec<2>(0.9, 2.9)).isApprox(Vec<2>(1.8, 0.8)));
  CHECK_THROWS_AS((Domain<3>{Vec<3>(0, 0, 0), Vec<3>(1, -1, 1), false}.validate()), DegenerateDomain);
}
