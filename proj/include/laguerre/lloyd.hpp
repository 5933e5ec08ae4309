#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "laguerre/transport.hpp"

namespace laguerre {

struct LloydConfig {
  /// Maximum number of regularisation steps.
  int K = 20;
  /// Damping: x <- (1 - lambda) x + lambda centroid.
  double lambda = 1.0;
  /// Relative volume tolerance of every optimisation step.
  double epsilon = 0.01;
  /// Optional per-iteration override of epsilon (k = 1..K).
  std::function<double(int)> epsilon_schedule;
  /// Stop once max seed displacement < this; <= 0 means 1e-4 diam(domain).
  std::optional<double> displacement_stop;
  /// Stop once the mean cell sphericity reaches this value.
  std::optional<double> sphericity_stop;
  SolveOptions solver;

  /// Record E(x^(k)) for k = 0..K (costs one tight extra solve per step).
  bool track_energy = false;
  double energy_epsilon = 1e-9;
  /// Throw EnergyIncrease when E^(k+1) > E^(k) + tolerance * E^(0).
  bool check_energy = true;
  double energy_tolerance = 1e-9;
  /// Assert the centroid-boundary and seed-separation bounds with this C
  /// (0 disables the check). Throws an Error of kind "BoundViolation".
  double bound_constant = 1.0 / 2048.0;
};

struct LloydRecord {
  int iteration = 0;
  /// NaN unless energies are tracked.
  double energy = 0.0;
  double max_displacement = 0.0;
  int evaluations = 0;
  int solver_iterations = 0;
  double max_relative_error = 0.0;
  double mean_sphericity = 0.0;
  /// min_i dist(x_i^(k), boundary of L_i^(k-1)) / (m_i^2 / diam^(2d-1)).
  double boundary_ratio = 0.0;
  /// Minimum pairwise seed distance / ((min m)^2 / diam^(2d-1)).
  double separation_ratio = 0.0;
  double wall_seconds = 0.0;
  std::vector<double> volumes;
};

struct LloydTrace {
  /// Energy of the initial seeds (NaN unless tracked).
  double initial_energy = 0.0;
  std::vector<LloydRecord> records;
  /// "fixed-K", "displacement" or "sphericity".
  std::string stop_reason = "fixed-K";
};

template <int D>
struct LloydResult {
  /// Final generators and their diagram.
  std::vector<Vec<D>> positions;
  DualState<D> state;
  SolveReport last_report;
  LloydTrace trace;
};

/// New seed positions x <- (1 - lambda) x + lambda centroid(L_i); periodic
/// positions are wrapped back into the box. Throws EmptyCell.
template <int D>
std::vector<Vec<D>> lloyd_step(const LaguerreDiagram<D>& diagram, double lambda);

/// E(x) = sum_i int_{L_i} |x - x_i|^2 at the optimal weights, evaluated as
/// the maximum of the dual after a tight solve. `w_init` seeds the solve.
template <int D>
double energy(const Domain<D>& domain, std::span<const Vec<D>> positions,
              const TargetSpec& targets, double inner_epsilon,
              const Vector* w_init = nullptr, Vector* optimal_weights = nullptr);

/// dE/dx_i = 2 |L_i| (x_i - centroid(L_i)); rows are seeds. Throws EmptyCell.
template <int D>
std::vector<Vec<D>> energy_gradient(const LaguerreDiagram<D>& diagram);

/// C m^2 / diam^(2d-1).
double centroid_boundary_bound(double m, double diameter, int d, double C);

template <int D>
LloydResult<D> algorithm2(const Domain<D>& domain, const TargetSpec& targets,
                          std::span<const Vec<D>> seeds0, const LloydConfig& config);

template <int D>
double mean_sphericity(const LaguerreDiagram<D>& diagram);

template <int D>
double max_centroid_offset(const LaguerreDiagram<D>& diagram);

}  // namespace laguerre
