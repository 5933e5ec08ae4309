#include <doctest.h>

#include <cmath>

#include "laguerre/lloyd.hpp"
#include "laguerre/seeding.hpp"
#include "test_support.hpp"

using namespace laguerre;

namespace {

template <int D>
LaguerreDiagram<D> single_cell(const Domain<D>& domain, const Vec<D>& seed) {
  const std::vector<WeightedSeed<D>> seeds{{seed, 0.0}};
  return build_diagram<D>(domain, seeds);
}

struct Fixture {
  std::vector<Vec<2>> positions;
  TargetSpec targets;
};

Fixture bimodal(std::uint64_t seed, int n1, int n2, double ratio = 10.0,
               std::uint64_t position_seed = 0) {
  laguerre::Rng rng(seed);
  VolumeSpec spec;
  spec.kind = VolumeKind::kBimodal;
  spec.n1 = n1;
  spec.n2 = n2;
  spec.ratio = ratio;
  Fixture f;
  f.targets = make_targets(1.0, 2, spec, rng).targets;
  SpatialSpec where;
  where.rng_seed = position_seed ? position_seed : seed + 1;
  f.positions = sample_positions<2>(Domain<2>::unit(), n1 + n2, where);
  return f;
}

}  // namespace

TEST_CASE("lloyd_step examples") {
  const auto d = single_cell<2>(Domain<2>::unit(), Vec<2>(0.1, 0.9));
  const auto x = lloyd_step(d, 1.0);
  CHECK(x[0].isApprox(Vec<2>(0.5, 0.5), 1e-14));

  testing::Rng rng(3);
  const auto seeds = testing::random_seeds<2>(rng, Domain<2>::unit(), 12);
  const auto diagram = build_diagram<2>(Domain<2>::unit(), seeds);
  const auto same = lloyd_step(diagram, 0.0);
  for (std::size_t i = 0; i < seeds.size(); ++i) CHECK(same[i] == seeds[i].position);

  // Cell [0,2]^2 has centroid (1,1).
  const Domain<2> big{Vec<2>::Zero(), Vec<2>::Constant(2.0), false};
  const auto half = lloyd_step(single_cell<2>(big, Vec<2>(0.0, 0.0)), 0.5);
  CHECK(half[0].isApprox(Vec<2>(0.5, 0.5), 1e-14));
}

TEST_CASE("lloyd_step with lambda one lands on centroids") {
  testing::Rng rng(4);
  const auto seeds = testing::random_seeds<3>(rng, Domain<3>::unit(), 30, 0.01);
  const auto diagram = build_diagram<3>(Domain<3>::unit(), seeds);
  const auto x = lloyd_step(diagram, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK((x[i] - diagram.cells[i].measures.centroid).norm() < 1e-15);
}

TEST_CASE("periodic lloyd_step wraps into the box") {
  const auto domain = Domain<2>::unit(true);
  const std::vector<WeightedSeed<2>> seeds{{Vec<2>(0.05, 0.5), 0.0}, {Vec<2>(0.45, 0.5), 0.0}};
  const auto diagram = build_diagram<2>(domain, seeds);
  // Cell 0 spans x in [-0.25, 0.25], cell 1 spans [0.25, 0.75].
  const auto x = lloyd_step(diagram, 1.0);
  CHECK(x[0].isApprox(Vec<2>(0.0, 0.5), 1e-12));
  CHECK(x[1].isApprox(Vec<2>(0.5, 0.5), 1e-12));

  const std::vector<WeightedSeed<2>> edge{{Vec<2>(0.01, 0.5), 0.0}, {Vec<2>(0.31, 0.5), 0.0}};
  const auto shifted = lloyd_step(build_diagram<2>(domain, edge), 1.0);
  // Centroid of [-0.34, 0.16] is -0.09, wrapped to 0.91.
  CHECK(shifted[0][0] == doctest::Approx(0.91).epsilon(1e-12));
  CHECK(domain.contains(shifted[0]));
}

TEST_CASE("lloyd_step rejects empty cells") {
  const std::vector<WeightedSeed<2>> seeds{{Vec<2>(0.3, 0.5), 0.0}, {Vec<2>(0.7, 0.5), -5.0}};
  const auto diagram = build_diagram<2>(Domain<2>::unit(), seeds);
  REQUIRE(diagram.cells[1].empty());
  CHECK_THROWS_AS(lloyd_step(diagram, 1.0), EmptyCell);
  CHECK_THROWS_AS(energy_gradient(diagram), EmptyCell);
}

TEST_CASE("energy examples") {
  const auto domain = Domain<2>::unit();
  const TargetSpec one{{1.0}};
  const std::vector<Vec<2>> centre{Vec<2>(0.5, 0.5)};
  const std::vector<Vec<2>> corner{Vec<2>(0.0, 0.0)};
  CHECK(energy<2>(domain, centre, one, 1e-9) == doctest::Approx(1.0 / 6.0).epsilon(1e-13));
  CHECK(energy<2>(domain, corner, one, 1e-9) == doctest::Approx(2.0 / 3.0).epsilon(1e-13));

  // Four equal squares, seeds at their centres: 4 * (1/6) * (1/4)^2.
  const std::vector<Vec<2>> lattice{Vec<2>(0.25, 0.25), Vec<2>(0.75, 0.25), Vec<2>(0.25, 0.75),
                                    Vec<2>(0.75, 0.75)};
  const TargetSpec quarters{{0.25, 0.25, 0.25, 0.25}};
  CHECK(energy<2>(domain, lattice, quarters, 1e-9) == doctest::Approx(1.0 / 24.0).epsilon(1e-12));
}

TEST_CASE("energy gradient examples") {
  const auto g = energy_gradient(single_cell<2>(Domain<2>::unit(), Vec<2>(0.6, 0.5)));
  CHECK(g[0].isApprox(Vec<2>(0.2, 0.0), 1e-14));

  const std::vector<WeightedSeed<2>> lattice{{Vec<2>(0.25, 0.25), 0.0}, {Vec<2>(0.75, 0.25), 0.0},
                                             {Vec<2>(0.25, 0.75), 0.0}, {Vec<2>(0.75, 0.75), 0.0}};
  for (const auto& v : energy_gradient(build_diagram<2>(Domain<2>::unit(), lattice)))
    CHECK(v.norm() < 1e-15);
}

TEST_CASE("energy gradient matches finite differences") {
  const auto domain = Domain<2>::unit();
  testing::Rng rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    auto x = testing::positions_of(testing::random_seeds<2>(rng, domain, 5));
    std::vector<double> m(5);
    for (auto& v : m) v = testing::uniform(rng, 1.0, 3.0);
    double sum = 0.0;
    for (double v : m) sum += v;
    for (auto& v : m) v /= sum;
    const TargetSpec targets = TargetSpec::normalised(m, 1.0);

    Vector w;
    energy<2>(domain, x, targets, 1e-12, nullptr, &w);
    const std::vector<double> weights(w.data(), w.data() + w.size());
    const auto diagram = build_diagram<2>(domain, make_seeds<2>(x, weights));
    const auto grad = energy_gradient(diagram);
    double scale = 0.0;
    for (const auto& v : grad) scale = std::max(scale, v.cwiseAbs().maxCoeff());

    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      for (int k = 0; k < 2; ++k) {
        auto plus = x, minus = x;
        plus[i][k] += h;
        minus[i][k] -= h;
        const double fd = (energy<2>(domain, plus, targets, 1e-12, &w) -
                           energy<2>(domain, minus, targets, 1e-12, &w)) /
                          (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad[i][k]));
      }
    }
    CHECK(worst < 1e-4 * scale);
  }
}

TEST_CASE("algorithm2 on the bimodal 35/15 fixture") {
  const Fixture f = bimodal(42, 35, 15, 10.0, 42);
  LloydConfig config;
  config.K = 100;
  config.epsilon = 0.01;
  const auto r = algorithm2<2>(Domain<2>::unit(), f.targets, f.positions, config);
  CHECK(r.trace.records.size() == 100);
  CHECK(r.trace.stop_reason == "fixed-K");
  CHECK(r.last_report.max_relative_error() < 0.01);
  CHECK(max_centroid_offset(r.state.diagram) <= 0.002);
  for (const auto& rec : r.trace.records) CHECK(rec.max_relative_error < 0.01);
  // Displacements settle down.
  CHECK(r.trace.records.back().max_displacement < 0.1 * r.trace.records.front().max_displacement);
}

TEST_CASE("vanishing regularisation matches algorithm1") {
  const Fixture f = bimodal(21, 20, 10);
  const auto domain = Domain<2>::unit();
  LloydConfig config;
  config.K = 1;
  config.lambda = 1e-8;
  config.epsilon = 0.01;
  const auto r = algorithm2<2>(domain, f.targets, f.positions, config);
  const auto a1 = algorithm1<2>(domain, f.targets, f.positions, config.solver);
  const auto v2 = r.state.diagram.volumes();
  const auto v1 = a1.state.diagram.volumes();
  for (std::size_t i = 0; i < v1.size(); ++i) {
    CHECK(std::abs(v2[i] - v1[i]) < 2.0 * 0.01 * f.targets[i]);
    CHECK(std::abs(v2[i] - f.targets[i]) < 0.01 * f.targets[i]);
  }
}

TEST_CASE("algorithm2 warm-starts from the previous weights") {
  const Fixture f = bimodal(5, 20, 10);
  const auto domain = Domain<2>::unit();
  LloydConfig config;
  config.K = 3;
  const auto three = algorithm2<2>(domain, f.targets, f.positions, config);
  config.K = 2;
  const auto two = algorithm2<2>(domain, f.targets, f.positions, config);
  const auto x3 = lloyd_step(two.state.diagram, 1.0);
  const auto manual = solve_weights<2>(domain, x3, f.targets, two.state.weights, config.solver);
  CHECK((manual.state.weights - three.state.weights).norm() == 0.0);
  CHECK(manual.report.function_evaluations == three.trace.records.back().evaluations);
}

TEST_CASE("warm starts cut the work per iteration") {
  const Fixture f = bimodal(8, 350, 150);
  LloydConfig config;
  config.K = 15;
  const auto r = algorithm2<2>(Domain<2>::unit(), f.targets, f.positions, config);
  const int first = r.trace.records.front().evaluations;
  bool dropped = false;
  for (const auto& rec : r.trace.records) dropped = dropped || 10 * rec.evaluations < first;
  CHECK(dropped);
}

TEST_CASE("energy decreases and the centroid bounds hold") {
  for (std::uint64_t seed : {31u, 32u}) {
    const Fixture f = bimodal(seed, 42, 18);
    LloydConfig config;
    config.K = 10;
    config.epsilon = 1e-3;
    config.track_energy = true;
    const auto r = algorithm2<2>(Domain<2>::unit(), f.targets, f.positions, config);
    double previous = r.trace.initial_energy;
    CHECK(previous > 0.0);
    for (const auto& rec : r.trace.records) {
      CHECK(rec.energy <= previous + 1e-9 * r.trace.initial_energy);
      CHECK(rec.boundary_ratio >= 1.0 / 2048.0);
      CHECK(rec.separation_ratio >= 2.0 / 2048.0);
      previous = rec.energy;
    }
  }
}

TEST_CASE("energy check aborts on an increase") {
  const Fixture f = bimodal(41, 10, 5);
  LloydConfig config;
  config.K = 3;
  config.track_energy = true;
  // A negative tolerance demands a drop larger than E^(0), which cannot happen.
  config.energy_tolerance = -1.0;
  CHECK_THROWS_AS(algorithm2<2>(Domain<2>::unit(), f.targets, f.positions, config), EnergyIncrease);
  config.check_energy = false;
  CHECK_NOTHROW(algorithm2<2>(Domain<2>::unit(), f.targets, f.positions, config));
}

TEST_CASE("stop policies") {
  const Fixture f = bimodal(51, 20, 10);
  const auto domain = Domain<2>::unit();
  LloydConfig config;
  config.K = 200;
  config.displacement_stop = 0.0;
  auto r = algorithm2<2>(domain, f.targets, f.positions, config);
  CHECK(r.trace.stop_reason == "displacement");
  CHECK(r.trace.records.back().max_displacement < 1e-4 * std::sqrt(2.0));
  CHECK(r.trace.records.size() < 200);

  config.displacement_stop.reset();
  config.sphericity_stop = 0.5;
  r = algorithm2<2>(domain, f.targets, f.positions, config);
  CHECK(r.trace.stop_reason == "sphericity");
  CHECK(r.trace.records.size() == 1);

  config.sphericity_stop.reset();
  config.K = 4;
  config.epsilon_schedule = [](int k) { return k < 4 ? 0.1 : 1e-4; };
  r = algorithm2<2>(domain, f.targets, f.positions, config);
  CHECK(r.trace.records.size() == 4);
  CHECK(r.trace.records[2].max_relative_error < 0.1);
  CHECK(r.trace.records[3].max_relative_error < 1e-4);
}

TEST_CASE("periodic 3D algorithm2") {
  const auto domain = Domain<3>::unit(true);
  laguerre::Rng rng(61);
  VolumeSpec spec;
  spec.kind = VolumeKind::kBimodal;
  spec.n1 = 60;
  spec.n2 = 20;
  spec.ratio = 5.0;
  const auto targets = make_targets(1.0, 3, spec, rng).targets;
  SpatialSpec where;
  where.rng_seed = 62;
  const auto x0 = sample_positions<3>(domain, 80, where);
  LloydConfig config;
  config.K = 5;
  config.track_energy = true;
  const auto r = algorithm2<3>(domain, targets, x0, config);
  CHECK(r.last_report.max_relative_error() < 0.01);
  CHECK(r.state.diagram.total_volume() == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& x : r.positions) CHECK(domain.contains(x));
  CHECK(r.trace.records.back().energy < r.trace.initial_energy);
}

TEST_CASE("algorithm2 validates its configuration") {
  const Fixture f = bimodal(71, 4, 2);
  const auto domain = Domain<2>::unit();
  LloydConfig config;
  config.K = 0;
  CHECK_THROWS_AS(algorithm2<2>(domain, f.targets, f.positions, config), ConfigError);
  config.K = 1;
  config.lambda = 0.0;
  CHECK_THROWS_AS(algorithm2<2>(domain, f.targets, f.positions, config), ConfigError);
  config.lambda = 1.5;
  CHECK_THROWS_AS(algorithm2<2>(domain, f.targets, f.positions, config), ConfigError);
  config.lambda = 1.0;
  config.epsilon = 1.0;
  CHECK_THROWS_AS(algorithm2<2>(domain, f.targets, f.positions, config), ConfigError);
  config.epsilon = 0.01;
  const std::vector<Vec<2>> short_list(f.positions.begin(), f.positions.end() - 1);
  CHECK_THROWS_AS(algorithm2<2>(domain, f.targets, short_list, config), InvalidTargets);
}
