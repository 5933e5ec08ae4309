#pragma once

// Semi-discrete transport dual for a uniform density on a box:
//   g(w) = sum_i (m_i - |L_i|) w_i + sum_i int_{L_i} |x - x_i|^2 dx,
// concave, with dg/dw_i = m_i - |L_i|.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "laguerre/diagram.hpp"

namespace laguerre {

using Vector = Eigen::VectorXd;

/// Target cell volumes, positive and summing to the domain volume.
struct TargetSpec {
  std::vector<double> targets;

  /// Rescales when the relative mass mismatch is at most 1e-6, otherwise
  /// throws InvalidTargets. Also rejects non-positive entries.
  static TargetSpec normalised(std::vector<double> volumes, double domain_volume);

  std::size_t size() const { return targets.size(); }
  double min() const;
  double operator[](std::size_t i) const { return targets[i]; }
};

template <int D>
struct DualState {
  Vector weights;
  LaguerreDiagram<D> diagram;
  double g = 0.0;
  Vector gradient;
  double grad_inf_norm = 0.0;
};

template <int D>
DualState<D> objective_g(const Domain<D>& domain, std::span<const Vec<D>> positions,
                         const TargetSpec& targets, const Vector& weights);

/// Sparse symmetric Hessian of g: a_ij / (2 |x_i - x_j|) off the diagonal
/// (summed over periodic images), negative row sum on the diagonal.
template <int D>
Eigen::SparseMatrix<double> hessian_g(const LaguerreDiagram<D>& diagram);

enum class SolverMethod { kQuasiNewton, kDampedNewton };

const char* to_string(SolverMethod method);
SolverMethod solver_method_from_string(const std::string& name);

struct SolveOptions {
  double epsilon = 0.01;
  SolverMethod method = SolverMethod::kQuasiNewton;
  /// <= 0 selects 500 (1 + log10 n).
  int max_iterations = 0;
  int memory = 10;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 60;
  /// Scale the quasi-Newton initial matrix by the inverse Hessian diagonal
  /// instead of the usual s.y / y.y. Tiny cells make this overshoot.
  bool diagonal_scaling = false;
  double cg_tolerance = 1e-10;
};

struct SolveReport {
  int outer_iterations = 0;
  int function_evaluations = 0;
  double grad_inf_norm = 0.0;
  double threshold = 0.0;
  std::vector<double> grad_history;
  /// (|L_i| - m_i) / m_i.
  std::vector<double> relative_errors;
  double wall_seconds = 0.0;
  std::string method;
  bool converged = false;

  double max_relative_error() const;
};

template <int D>
struct WeightSolution {
  DualState<D> state;
  SolveReport report;
};

/// Thrown after the iteration cap; carries the best weights seen.
class MaxIterationsExceeded : public Error {
 public:
  MaxIterationsExceeded(const std::string& what, Vector best_weights, SolveReport report)
      : Error("MaxIterationsExceeded", what),
        best_weights_(std::move(best_weights)),
        report_(std::move(report)) {}
  const Vector& best_weights() const { return best_weights_; }
  const SolveReport& report() const { return report_; }

 private:
  Vector best_weights_;
  SolveReport report_;
};

/// Maximises g from w_init until max_i |m_i - |L_i|| < epsilon * min_j m_j.
template <int D>
WeightSolution<D> solve_weights(const Domain<D>& domain, std::span<const Vec<D>> positions,
                                const TargetSpec& targets, const Vector& w_init,
                                const SolveOptions& options = {});

/// solve_weights from w = 0.
template <int D>
WeightSolution<D> algorithm1(const Domain<D>& domain, const TargetSpec& targets,
                             std::span<const Vec<D>> positions, const SolveOptions& options = {});

/// w_i = r_i^2 with r_i the radius of the ball of measure m_i.
Vector sphere_packing_init(const TargetSpec& targets, int d);

int default_max_iterations(std::size_t n);

}  // namespace laguerre
