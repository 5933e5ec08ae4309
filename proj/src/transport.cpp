#include "laguerre/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>

namespace laguerre {

// ----------------------------------------------------------------- targets --

TargetSpec TargetSpec::normalised(std::vector<double> volumes, double domain_volume) {
  if (volumes.empty()) throw InvalidTargets("no targets");
  double sum = 0.0;
  for (double m : volumes) {
    if (!(m > 0.0) || !std::isfinite(m)) throw InvalidTargets("targets must be positive and finite");
    sum += m;
  }
  const double mismatch = std::abs(sum - domain_volume) / domain_volume;
  if (mismatch > 1e-6) {
    std::ostringstream msg;
    msg << "targets sum to " << sum << " but the domain volume is " << domain_volume;
    throw InvalidTargets(msg.str());
  }
  const double scale = domain_volume / sum;
  for (double& m : volumes) m *= scale;
  return {std::move(volumes)};
}

double TargetSpec::min() const { return *std::min_element(targets.begin(), targets.end()); }

double SolveReport::max_relative_error() const {
  double worst = 0.0;
  for (double e : relative_errors) worst = std::max(worst, std::abs(e));
  return worst;
}

const char* to_string(SolverMethod method) {
  return method == SolverMethod::kDampedNewton ? "damped-newton" : "quasi-newton";
}

SolverMethod solver_method_from_string(const std::string& name) {
  if (name == "quasi-newton" || name == "lbfgs") return SolverMethod::kQuasiNewton;
  if (name == "damped-newton" || name == "newton") return SolverMethod::kDampedNewton;
  throw ConfigError("unknown solver method '" + name + "'");
}

int default_max_iterations(std::size_t n) {
  return static_cast<int>(500.0 * (1.0 + std::log10(static_cast<double>(std::max<std::size_t>(n, 1)))));
}

Vector sphere_packing_init(const TargetSpec& targets, int d) {
  Vector w(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double m = targets[i];
    w[i] = d == 2 ? m / std::numbers::pi : std::pow(3.0 * m / (4.0 * std::numbers::pi), 2.0 / 3.0);
  }
  return w;
}

// ------------------------------------------------------------------ dual --

template <int D>
DualState<D> objective_g(const Domain<D>& domain, std::span<const Vec<D>> positions,
                         const TargetSpec& targets, const Vector& weights) {
  const std::size_t n = positions.size();
  if (targets.size() != n || static_cast<std::size_t>(weights.size()) != n)
    throw InvalidTargets("targets, weights and seeds differ in length");
  std::vector<WeightedSeed<D>> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = {positions[i], weights[i]};

  DualState<D> state;
  state.weights = weights;
  state.diagram = build_diagram<D>(domain, seeds);
  state.gradient.resize(n);
  double g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = state.diagram.cells[i].measures;
    state.gradient[i] = targets[i] - m.volume;
    g += state.gradient[i] * weights[i] + m.second_moment;
  }
  state.g = g;
  state.grad_inf_norm = state.gradient.template lpNorm<Eigen::Infinity>();
  return state;
}

template <int D>
Eigen::SparseMatrix<double> hessian_g(const LaguerreDiagram<D>& diagram) {
  const int n = static_cast<int>(diagram.size());
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < n; ++i) {
    for (const auto& adj : diagram.cells[i].adjacency) {
      if (adj.is_wall() || adj.neighbor == i || adj.distance <= 0.0) continue;
      const double v = 0.25 * adj.area / adj.distance;
      triplets.emplace_back(i, adj.neighbor, v);
      triplets.emplace_back(adj.neighbor, i, v);
    }
  }
  Eigen::SparseMatrix<double> h(n, n);
  h.setFromTriplets(triplets.begin(), triplets.end());
  Vector rowsum = h * Vector::Ones(n);
  for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, -rowsum[i]);
  h.setFromTriplets(triplets.begin(), triplets.end());
  h.makeCompressed();
  return h;
}

namespace {

using Clock = std::chrono::steady_clock;

// |H_ii| computed straight from the adjacency; empty cells get the mean.
template <int D>
Vector hessian_diagonal(const LaguerreDiagram<D>& diagram) {
  const int n = static_cast<int>(diagram.size());
  Vector diag = Vector::Zero(n);
  for (int i = 0; i < n; ++i)
    for (const auto& adj : diagram.cells[i].adjacency)
      if (!adj.is_wall() && adj.neighbor != i && adj.distance > 0.0)
        diag[i] += 0.5 * adj.area / adj.distance;
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i)
    if (diag[i] > 0.0) {
      sum += diag[i];
      ++count;
    }
  const double fallback = count > 0 ? sum / count : 1.0;
  for (int i = 0; i < n; ++i)
    if (!(diag[i] > 0.0)) diag[i] = fallback;
  return diag;
}

// Scale of roundoff in g, used to judge f-differences that are pure noise.
template <int D>
double g_noise(const DualState<D>& s, const TargetSpec& targets) {
  double scale = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& m = s.diagram.cells[i].measures;
    scale += (targets[i] + m.volume) * std::abs(s.weights[i]) + m.second_moment;
  }
  return 1e-13 * scale;
}

template <int D>
class Solver {
 public:
  Solver(const Domain<D>& domain, std::span<const Vec<D>> positions, const TargetSpec& targets,
         const SolveOptions& options)
      : domain_(domain), positions_(positions), targets_(targets), options_(options) {
    report_.method = to_string(options.method);
    report_.threshold = options.epsilon * targets.min();
  }

  WeightSolution<D> run(const Vector& w_init) {
    const auto start = Clock::now();
    DualState<D> state = evaluate(w_init);
    best_ = state.weights;
    best_norm_ = state.grad_inf_norm;
    const int cap = options_.max_iterations > 0 ? options_.max_iterations
                                                : default_max_iterations(targets_.size());
    while (!converged(state)) {
      if (report_.outer_iterations >= cap) {
        finish(state, start);
        std::ostringstream msg;
        msg << "weight solve did not converge in " << cap << " iterations (max |grad| "
            << state.grad_inf_norm << ", threshold " << report_.threshold << ")";
        throw MaxIterationsExceeded(msg.str(), best_, report_);
      }
      state = options_.method == SolverMethod::kDampedNewton ? newton_step(std::move(state))
                                                             : lbfgs_step(std::move(state));
      ++report_.outer_iterations;
      if (state.grad_inf_norm < best_norm_) {
        best_norm_ = state.grad_inf_norm;
        best_ = state.weights;
      }
    }
    report_.converged = true;
    finish(state, start);
    return {std::move(state), std::move(report_)};
  }

 private:
  bool converged(const DualState<D>& s) const { return s.grad_inf_norm < report_.threshold; }

  DualState<D> evaluate(const Vector& w) {
    ++report_.function_evaluations;
    auto s = objective_g<D>(domain_, positions_, targets_, w);
    report_.grad_history.push_back(s.grad_inf_norm);
    return s;
  }

  void finish(const DualState<D>& s, Clock::time_point start) {
    report_.grad_inf_norm = s.grad_inf_norm;
    report_.relative_errors.resize(targets_.size());
    for (std::size_t i = 0; i < targets_.size(); ++i)
      report_.relative_errors[i] = -s.gradient[i] / targets_[i];
    report_.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }

  // ---- quasi-Newton: limited-memory BFGS on f = -g.

  Vector initial_scale(const DualState<D>& s) const {
    if (options_.diagonal_scaling) return hessian_diagonal(s.diagram).cwiseInverse();
    const double n = static_cast<double>(targets_.size());
    const double spacing = std::pow(domain_.volume() / n, 1.0 / D);
    double gamma = std::pow(spacing, 2.0 - D) / (2.0 * D);
    if (!history_.empty()) {
      const auto& last = history_.back();
      gamma = last.sy / last.y.squaredNorm();
    }
    return Vector::Constant(static_cast<Eigen::Index>(n), gamma);
  }

  Vector lbfgs_direction(const Vector& q_grad, const Vector& h0) const {
    Vector q = q_grad;
    std::vector<double> alpha(history_.size());
    for (int k = static_cast<int>(history_.size()) - 1; k >= 0; --k) {
      alpha[k] = history_[k].s.dot(q) / history_[k].sy;
      q -= alpha[k] * history_[k].y;
    }
    Vector r = h0.cwiseProduct(q);
    for (std::size_t k = 0; k < history_.size(); ++k) {
      const double beta = history_[k].y.dot(r) / history_[k].sy;
      r += (alpha[k] - beta) * history_[k].s;
    }
    return -r;
  }

  DualState<D> lbfgs_step(DualState<D> state) {
    // f = -g, grad f = -gradient.
    const Vector grad_f = -state.gradient;
    const Vector h0 = initial_scale(state);
    Vector p = lbfgs_direction(grad_f, h0);
    if (grad_f.dot(p) >= 0.0) {
      history_.clear();
      p = -h0.cwiseProduct(grad_f);
    }
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (auto next = backtrack(state, grad_f, p)) {
        const Vector s = next->weights - state.weights;
        const Vector y = -next->gradient - grad_f;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          history_.push_back({s, y, sy});
          if (static_cast<int>(history_.size()) > options_.memory) history_.pop_front();
        }
        return std::move(*next);
      }
      // Forget the curvature pairs and retry along the scaled gradient once.
      history_.clear();
      p = -h0.cwiseProduct(grad_f);
    }
    std::ostringstream msg;
    msg << "backtracking failed to find sufficient increase of g (max |grad| "
        << state.grad_inf_norm << ")";
    throw LineSearchFailure(msg.str());
  }

  std::optional<DualState<D>> backtrack(const DualState<D>& state, const Vector& grad_f,
                                        const Vector& p) {
    const double slope = grad_f.dot(p);
    const double f0 = -state.g;
    const double noise = g_noise(state, targets_);
    double alpha = 1.0;
    for (int k = 0; k < options_.max_backtracks; ++k, alpha *= options_.shrink) {
      DualState<D> trial = evaluate(state.weights + alpha * p);
      const double f1 = -trial.g;
      if (f1 <= f0 + options_.armijo * alpha * slope) return trial;
      // Near the optimum f-differences drown in roundoff; fall back on the
      // gradient, which is still measured accurately.
      if (f1 <= f0 + noise && trial.gradient.norm() < state.gradient.norm()) return trial;
    }
    return std::nullopt;
  }

  // ---- damped Newton.

  DualState<D> newton_step(DualState<D> state) {
    const int n = static_cast<int>(targets_.size());
    std::vector<int> active_index(n, -1);
    std::vector<int> active;
    for (int i = 0; i < n; ++i)
      if (!state.diagram.cells[i].empty()) {
        active_index[i] = static_cast<int>(active.size());
        active.push_back(i);
      }
    const int na = static_cast<int>(active.size());

    Vector delta = Vector::Zero(n);
    const Eigen::SparseMatrix<double> h = hessian_g(state.diagram);
    std::vector<Eigen::Triplet<double>> triplets;
    for (int col = 0; col < h.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(h, col); it; ++it) {
        const int r = active_index[it.row()];
        const int c = active_index[it.col()];
        if (r >= 0 && c >= 0) triplets.emplace_back(r, c, -it.value());
      }
    Eigen::SparseMatrix<double> a(na, na);
    a.setFromTriplets(triplets.begin(), triplets.end());
    double mean_diag = 0.0;
    for (int r = 0; r < na; ++r) mean_diag += a.coeff(r, r);
    mean_diag = na > 0 ? mean_diag / na : 1.0;
    if (!(mean_diag > 0.0)) mean_diag = 1.0;
    // Tiny shift keeps CG well posed on the constant kernel.
    for (int r = 0; r < na; ++r) a.coeffRef(r, r) += 1e-12 * mean_diag;

    Vector b(na);
    for (int r = 0; r < na; ++r) b[r] = state.gradient[active[r]];
    b.array() -= b.mean();
    if (na > 1) {
      Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
      cg.setTolerance(options_.cg_tolerance);
      cg.setMaxIterations(std::max(1000, 4 * na));
      cg.compute(a);
      Vector x = cg.solve(b);
      x.array() -= x.mean();
      for (int r = 0; r < na; ++r) delta[active[r]] = x[r];
    }
    // Empty cells: the Hessian row vanishes, take a scaled gradient component.
    for (int i = 0; i < n; ++i)
      if (active_index[i] < 0) delta[i] = state.gradient[i] / mean_diag;

    // With empty cells the volume-based damping has nothing to work with;
    // the direction is still an ascent direction, so backtrack on g instead.
    if (na < n) {
      if (auto next = backtrack(state, -state.gradient, delta)) return std::move(*next);
    } else {
      double floor = std::numeric_limits<double>::infinity();
      for (int i : active) floor = std::min(floor, state.diagram.cells[i].measures.volume);
      floor = std::min(floor, (1.0 - options_.epsilon) * targets_.min());
      floor *= 0.5;
      const double norm0 = state.gradient.norm();
      double alpha = 1.0;
      for (int k = 0; k < std::min(options_.max_backtracks, 40); ++k, alpha *= 0.5) {
        DualState<D> trial = evaluate(state.weights + alpha * delta);
        bool ok = trial.gradient.norm() <= (1.0 - 0.5 * alpha) * norm0;
        for (int i : active) ok = ok && trial.diagram.cells[i].measures.volume >= floor;
        if (ok) return trial;
      }
    }
    std::ostringstream msg;
    msg << "damped Newton step could not be accepted (max |grad| " << state.grad_inf_norm << ")";
    throw LineSearchFailure(msg.str());
  }

  struct Pair {
    Vector s, y;
    double sy;
  };

  const Domain<D>& domain_;
  std::span<const Vec<D>> positions_;
  const TargetSpec& targets_;
  SolveOptions options_;
  SolveReport report_;
  std::deque<Pair> history_;
  Vector best_;
  double best_norm_ = std::numeric_limits<double>::infinity();
};

}  // namespace

template <int D>
WeightSolution<D> solve_weights(const Domain<D>& domain, std::span<const Vec<D>> positions,
                                const TargetSpec& targets, const Vector& w_init,
                                const SolveOptions& options) {
  if (!(options.epsilon > 0.0 && options.epsilon < 1.0))
    throw InvalidTargets("epsilon must lie in (0, 1)");
  if (!w_init.allFinite()) throw InvalidTargets("initial weights must be finite");
  if (targets.size() != positions.size())
    throw InvalidTargets("number of targets differs from number of seeds");
  if (std::abs(std::accumulate(targets.targets.begin(), targets.targets.end(), 0.0) -
               domain.volume()) > 1e-9 * domain.volume())
    throw InvalidTargets("targets do not sum to the domain volume");
  Solver<D> solver(domain, positions, targets, options);
  return solver.run(w_init);
}

template <int D>
WeightSolution<D> algorithm1(const Domain<D>& domain, const TargetSpec& targets,
                             std::span<const Vec<D>> positions, const SolveOptions& options) {
  return solve_weights<D>(domain, positions, targets, Vector::Zero(positions.size()), options);
}

#define LAGUERRE_INSTANTIATE(D)                                                               \
  template DualState<D> objective_g(const Domain<D>&, std::span<const Vec<D>>,                \
                                    const TargetSpec&, const Vector&);                        \
  template Eigen::SparseMatrix<double> hessian_g(const LaguerreDiagram<D>&);                  \
  template WeightSolution<D> solve_weights(const Domain<D>&, std::span<const Vec<D>>,         \
                                           const TargetSpec&, const Vector&,                  \
                                           const SolveOptions&);                              \
  template WeightSolution<D> algorithm1(const Domain<D>&, const TargetSpec&,                  \
                                        std::span<const Vec<D>>, const SolveOptions&);

LAGUERRE_INSTANTIATE(2)
LAGUERRE_INSTANTIATE(3)

}  // namespace laguerre
