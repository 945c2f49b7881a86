#pragma once

#include "conprox/lower.hpp"

namespace conprox {

enum class SolveStatus {
  Converged,
  MaxOuter,
  LowerStalledAtOptimum,
};

const char* to_string(SolveStatus status);

struct OuterResult {
  Vec z_star;
  int outer_iterations = 0;
  /// Merit of the consensus problem at z^k, index 0..K.
  std::vector<double> merit_trajectory;
  /// |z^j - z^{j+1}|^2 per executed outer step.
  std::vector<double> z_step_squares;
  /// Whether each step passed the merit gate (always false for the plain
  /// baselines, which advance z unconditionally).
  std::vector<bool> step_accepted;
  SolveStatus status = SolveStatus::MaxOuter;
  /// Critical-point residual of the final lower state.
  double final_kkt_residual = 0.0;

  bool succeeded() const {
    return status == SolveStatus::Converged ||
           status == SolveStatus::LowerStalledAtOptimum;
  }
};

/// Raises sigma_i to |lambda_i+|_inf (1 + margin) + margin wherever
/// sigma_i < |lambda_i+|_inf; sigma never decreases.
UpperState update_sigma(const UpperState& upper,
                        const std::vector<Vec>& lambda_plus, double margin);

/// Accepts y+ as the new z iff the merit dropped strictly. On acceptance the
/// cached merit becomes the consensus merit at y+ (objective sum only).
std::pair<UpperState, bool> accept_z(const UpperState& upper,
                                     const std::vector<AgentProblem>& problems,
                                     const Vec& y_plus, double merit_at_y_plus,
                                     double merit_at_z, double gamma);

/// True iff the last `window` squared z-steps are all <= eps_z.
bool stopping_test(std::span<const double> z_step_squares, double eps_z,
                   int window = 1);

struct SolveCallbacks {
  std::function<void(int outer_index, const SweepReport&)> on_sweep;
  std::function<void(int outer_index, const UpperState&, double z_step_sq,
                     bool accepted)>
      on_outer_step;
};

/// Full bi-level solve for the prox methods: repeat
/// { run_lower -> update_sigma -> accept_z -> stopping_test }.
/// Plain baselines run single-level: one sweep per outer index, z tracking
/// the consensus variable without a merit gate.
OuterResult solve(const std::vector<AgentProblem>& problems,
                  const SolverConfig& config, const Vec& z0,
                  const SolveCallbacks* callbacks = nullptr,
                  const std::vector<SpdMatrix>* user_B = nullptr,
                  SweepExecutor* executor = nullptr);

struct CriticalPointVerdict {
  enum class Label { LocalMinimizer, SaddleOrOther };
  Label label = Label::LocalMinimizer;
  int trials = 0;
  std::optional<Vec> escaped_to;
};

const char* to_string(CriticalPointVerdict::Label label);

/// Restarts the solver from z_star + s*d for seeded random unit directions d
/// and each perturbation scale s. LocalMinimizer iff every restart returns
/// within tol_return of z_star (default 10*sqrt(eps_z)). Heuristic; with
/// num_trials = 0 the verdict is vacuously LocalMinimizer.
CriticalPointVerdict classify_critical_point(
    const std::vector<AgentProblem>& problems, const SolverConfig& config,
    const Vec& z_star, int num_trials,
    std::span<const double> perturb_scales = {}, double tol_return = -1.0);

/// Largest gamma suggested by negative directional curvature of the agents
/// at z0 along seeded random directions: 2 * max(0, -curvature).
double gamma_probe(const std::vector<AgentProblem>& problems, const Vec& z0,
                   int directions, std::uint64_t seed);

}  // namespace conprox
