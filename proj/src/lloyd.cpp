#include "laguerre/lloyd.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace laguerre {

namespace {

template <int D>
std::vector<Vec<D>> blended_positions(const LaguerreDiagram<D>& diagram, double lambda) {
  std::vector<Vec<D>> out(diagram.size());
  for (std::size_t i = 0; i < diagram.size(); ++i) {
    const Cell<D>& cell = diagram.cells[i];
    if (cell.empty() || cell.measures.volume <= 0.0) {
      std::ostringstream msg;
      msg << "cell " << i << " is empty; its centroid is undefined";
      throw EmptyCell(msg.str());
    }
    out[i] = (1.0 - lambda) * diagram.generators[i].position + lambda * cell.measures.centroid;
  }
  return out;
}

// Distance from every seed to its nearest other seed (periodic images included).
template <int D>
double min_separation(const Domain<D>& domain, std::span<const Vec<D>> positions) {
  if (positions.size() < 2) return std::numeric_limits<double>::infinity();
  SeedGrid<D> grid(domain, positions);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    CandidateStream<D> stream(grid, static_cast<int>(i));
    if (const Candidate<D>* c = stream.peek()) best = std::min(best, std::sqrt(c->distance_squared));
  }
  return best;
}

double bound_scale(double diameter, int d) { return std::pow(diameter, 2 * d - 1); }

}  // namespace

double centroid_boundary_bound(double m, double diameter, int d, double C) {
  return C * m * m / bound_scale(diameter, d);
}

template <int D>
std::vector<Vec<D>> lloyd_step(const LaguerreDiagram<D>& diagram, double lambda) {
  std::vector<Vec<D>> out = blended_positions(diagram, lambda);
  if (diagram.domain.periodic) {
    for (Vec<D>& x : out) x = diagram.domain.wrap(x);
  }
  return out;
}

template <int D>
double energy(const Domain<D>& domain, std::span<const Vec<D>> positions,
              const TargetSpec& targets, double inner_epsilon, const Vector* w_init,
              Vector* optimal_weights) {
  SolveOptions options;
  options.epsilon = inner_epsilon;
  options.method = SolverMethod::kDampedNewton;
  const Vector start =
      w_init ? *w_init : Vector::Zero(static_cast<Eigen::Index>(positions.size()));
  WeightSolution<D> sol = solve_weights(domain, positions, targets, start, options);
  if (optimal_weights) *optimal_weights = sol.state.weights;
  // At the maximiser g equals E; near it g underestimates E only to second
  // order in the residual volume error.
  return sol.state.g;
}

template <int D>
std::vector<Vec<D>> energy_gradient(const LaguerreDiagram<D>& diagram) {
  std::vector<Vec<D>> out(diagram.size());
  for (std::size_t i = 0; i < diagram.size(); ++i) {
    const Cell<D>& cell = diagram.cells[i];
    if (cell.empty() || cell.measures.volume <= 0.0) {
      std::ostringstream msg;
      msg << "cell " << i << " is empty";
      throw EmptyCell(msg.str());
    }
    out[i] = 2.0 * cell.measures.volume * (diagram.generators[i].position - cell.measures.centroid);
  }
  return out;
}

template <int D>
double mean_sphericity(const LaguerreDiagram<D>& diagram) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Cell<D>& cell : diagram.cells) {
    if (cell.empty()) continue;
    sum += sphericity(cell.polytope);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

template <int D>
double max_centroid_offset(const LaguerreDiagram<D>& diagram) {
  double worst = 0.0;
  for (std::size_t i = 0; i < diagram.size(); ++i) {
    const Cell<D>& cell = diagram.cells[i];
    if (cell.empty()) continue;
    worst = std::max(worst, (diagram.generators[i].position - cell.measures.centroid).norm());
  }
  return worst;
}

template <int D>
LloydResult<D> algorithm2(const Domain<D>& domain, const TargetSpec& targets,
                          std::span<const Vec<D>> seeds0, const LloydConfig& config) {
  using Clock = std::chrono::steady_clock;
  domain.validate();
  if (config.K < 1) throw ConfigError("lloyd: K must be at least 1");
  if (!(config.lambda > 0.0 && config.lambda <= 1.0))
    throw ConfigError("lloyd: lambda must lie in (0, 1]");
  if (!(config.epsilon > 0.0 && config.epsilon < 1.0))
    throw ConfigError("lloyd: epsilon must lie in (0, 1)");
  if (seeds0.size() != targets.size())
    throw InvalidTargets("lloyd: number of seeds and targets differ");

  const std::size_t n = seeds0.size();
  const double diameter = domain.diameter();
  const double scale = bound_scale(diameter, D);
  const double delta_stop =
      config.displacement_stop
          ? (*config.displacement_stop > 0.0 ? *config.displacement_stop : 1e-4 * diameter)
          : -1.0;

  LloydResult<D> result;
  result.positions.assign(seeds0.begin(), seeds0.end());
  if (domain.periodic) {
    for (Vec<D>& x : result.positions) x = domain.wrap(x);
  }
  Vector w = Vector::Zero(static_cast<Eigen::Index>(n));
  std::span<const Vec<D>> current(result.positions);
  result.state = objective_g(domain, current, targets, w);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  double previous_energy = nan;
  Vector energy_weights = w;
  if (config.track_energy) {
    previous_energy = energy(domain, current, targets, config.energy_epsilon, &energy_weights,
                             &energy_weights);
  }
  result.trace.initial_energy = previous_energy;

  for (int k = 1; k <= config.K; ++k) {
    const auto start = Clock::now();
    LloydRecord rec;
    rec.iteration = k;
    rec.energy = nan;

    // Regularisation step on L^(k-1).
    const LaguerreDiagram<D>& old = result.state.diagram;
    std::vector<Vec<D>> unwrapped = blended_positions(old, config.lambda);
    std::vector<Vec<D>> next = unwrapped;
    if (domain.periodic) {
      for (Vec<D>& x : next) x = domain.wrap(x);
    }

    rec.boundary_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double d = old.cells[i].polytope.boundary_distance(unwrapped[i]);
      rec.boundary_ratio = std::min(rec.boundary_ratio, d * scale / (targets[i] * targets[i]));
      rec.max_displacement =
          std::max(rec.max_displacement, domain.distance(result.positions[i], next[i]));
    }
    const double min_m = targets.min();
    rec.separation_ratio =
        min_separation<D>(domain, next) * scale / (min_m * min_m);
    // The boundary bound is about exact centroids, so only the undamped step
    // is checked.
    if (config.bound_constant > 0.0 &&
        ((config.lambda == 1.0 && rec.boundary_ratio < config.bound_constant) ||
         rec.separation_ratio < 2.0 * config.bound_constant)) {
      std::ostringstream msg;
      msg << "lloyd iteration " << k << ": centroid bound violated (boundary ratio "
          << rec.boundary_ratio << ", separation ratio " << rec.separation_ratio
          << ", C = " << config.bound_constant << ")";
      throw Error("BoundViolation", msg.str());
    }

    result.positions = std::move(next);
    current = std::span<const Vec<D>>(result.positions);

    // Optimisation step, warm-started from w^(k-1).
    SolveOptions options = config.solver;
    options.epsilon = config.epsilon_schedule ? config.epsilon_schedule(k) : config.epsilon;
    WeightSolution<D> sol = solve_weights(domain, current, targets, w, options);
    w = sol.state.weights;
    result.state = std::move(sol.state);
    result.last_report = sol.report;

    rec.evaluations = sol.report.function_evaluations;
    rec.solver_iterations = sol.report.outer_iterations;
    rec.max_relative_error = sol.report.max_relative_error();
    rec.volumes = result.state.diagram.volumes();
    rec.mean_sphericity = mean_sphericity(result.state.diagram);

    if (config.track_energy) {
      energy_weights = w;
      rec.energy = energy(domain, current, targets, config.energy_epsilon, &energy_weights,
                          &energy_weights);
      const double slack = config.energy_tolerance * std::abs(result.trace.initial_energy);
      if (config.check_energy && rec.energy > previous_energy + slack) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "lloyd iteration " << k << ": energy rose from " << previous_energy << " to "
            << rec.energy << " (tolerance " << slack << ")";
        throw EnergyIncrease(msg.str());
      }
      previous_energy = rec.energy;
    }
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.trace.records.push_back(std::move(rec));

    const LloydRecord& last = result.trace.records.back();
    if (delta_stop > 0.0 && last.max_displacement < delta_stop) {
      result.trace.stop_reason = "displacement";
      break;
    }
    if (config.sphericity_stop && last.mean_sphericity >= *config.sphericity_stop) {
      result.trace.stop_reason = "sphericity";
      break;
    }
  }
  return result;
}

#define LAGUERRE_INSTANTIATE(D)                                                              \
  template std::vector<Vec<D>> lloyd_step<D>(const LaguerreDiagram<D>&, double);             \
  template double energy<D>(const Domain<D>&, std::span<const Vec<D>>, const TargetSpec&,    \
                            double, const Vector*, Vector*);                                 \
  template std::vector<Vec<D>> energy_gradient<D>(const LaguerreDiagram<D>&);                \
  template double mean_sphericity<D>(const LaguerreDiagram<D>&);                             \
  template double max_centroid_offset<D>(const LaguerreDiagram<D>&);                         \
  template LloydResult<D> algorithm2<D>(const Domain<D>&, const TargetSpec&,                 \
                                        std::span<const Vec<D>>, const LloydConfig&);

LAGUERRE_INSTANTIATE(2)
LAGUERRE_INSTANTIATE(3)

#undef LAGUERRE_INSTANTIATE

}  // namespace laguerre
