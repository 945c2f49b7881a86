#include "conprox/diagnostics.hpp"

#include <cmath>
#include <limits>

namespace conprox {

namespace {

void check_dual_sum(const std::vector<Vec>& lambda_star) {
  Vec sum = fixed_order_sum(lambda_star);
  double scale = 0.0;
  for (const Vec& l : lambda_star) {
    scale = std::max(scale, l.lpNorm<Eigen::Infinity>());
  }
  if (sum.lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + scale)) {
    throw SolverError(ErrorCode::ConfigError,
                      "reference duals do not sum to zero");
  }
}

}  // namespace

ReferenceSolution make_analytic_reference(
    const std::vector<AgentProblem>& problems, const Vec& y_star, double gamma,
    const Vec& z) {
  ReferenceSolution ref;
  ref.source = ReferenceSolution::Source::Analytic;
  ref.y_star = y_star;
  for (const AgentProblem& p : problems) {
    ref.lambda_star.push_back(
        -(eval_subgradient(p, y_star) + gamma * (y_star - z)));
  }
  check_dual_sum(ref.lambda_star);
  return ref;
}

ReferenceSolution make_long_run_reference(
    const std::vector<AgentProblem>& problems, const SolverConfig& config,
    const UpperState& upper, int sweeps) {
  LowerState state = init_lower_state(problems, config, upper.z);
  DirectSweepExecutor executor(problems, config);
  executor.begin_phase(state, upper);
  for (int s = 0; s < sweeps; ++s) {
    state = executor.run_sweep(state, upper).state_after;
  }
  ReferenceSolution ref;
  ref.source = ReferenceSolution::Source::LongRun;
  ref.y_star = state.y;
  ref.lambda_star = state.lambda;
  check_dual_sum(ref.lambda_star);
  return ref;
}

double lyapunov(const LowerState& state, const ReferenceSolution& ref) {
  const int n_agents = state.agent_count();
  if (static_cast<int>(ref.lambda_star.size()) != n_agents) {
    throw SolverError(ErrorCode::DimMismatch, "lyapunov: reference count");
  }
  require_dim(ref.y_star, state.dim(), "lyapunov y_star");
  double value = 0.0;
  const Vec dy = state.y - ref.y_star;
  for (int i = 0; i < n_agents; ++i) {
    value += state.B[i].quad(dy);
    value += state.B[i].inv_quad(state.lambda[i] - ref.lambda_star[i]);
  }
  return value;
}

bool LyapunovCheck::monotone(double tol_scale) const {
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    if (!(differences[k] <= tol_scale * (1.0 + values[k]))) return false;
  }
  return true;
}

LyapunovCheck lyapunov_decrease_check(std::span<const LowerState> trace,
                                      const ReferenceSolution& ref,
                                      bool suite_is_convex) {
  LyapunovCheck check;
  check.hypothesis_violation = !suite_is_convex;
  check.values.reserve(trace.size());
  for (const LowerState& s : trace) check.values.push_back(lyapunov(s, ref));
  for (std::size_t k = 0; k + 1 < check.values.size(); ++k) {
    check.differences.push_back(check.values[k + 1] - check.values[k]);
  }
  return check;
}

TelescopingCheck telescoping_monitor(const OuterResult& outer, double gamma,
                                     int agent_count) {
  if (outer.merit_trajectory.empty()) {
    throw SolverError(ErrorCode::DimMismatch, "telescoping: empty trajectory");
  }
  TelescopingCheck check;
  const double phi0 = outer.merit_trajectory.front();
  const double coeff =
      gamma > 0.0 ? 2.0 / (gamma * static_cast<double>(agent_count))
                  : std::numeric_limits<double>::infinity();
  double running = 0.0;
  for (std::size_t k = 0; k < outer.z_step_squares.size(); ++k) {
    running += outer.z_step_squares[k];
    const double drop = phi0 - outer.merit_trajectory[k + 1];
    const double bound = coeff * drop;
    check.prefix_sums.push_back(running);
    check.bounds.push_back(bound);
    // 1e-12-scale slack: the strict inequality sits within rounding of
    // equality when the lower-level decrease is tiny.
    if (!(running < bound + 1e-12 * (1.0 + std::abs(drop)))) check.ok = false;
  }
  return check;
}

double kkt_residual(const std::vector<AgentProblem>& problems, const Vec& y,
                    const std::vector<Vec>& lambda, double gamma, const Vec& z) {
  if (problems.size() != lambda.size()) {
    throw SolverError(ErrorCode::DimMismatch, "kkt_residual: count mismatch");
  }
  require_dim(z, y.size(), "kkt_residual z");
  double residual = 0.0;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const Vec stat = eval_subgradient(problems[i], y) + gamma * (y - z) +
                     lambda[i];
    residual = std::max(residual, stat.lpNorm<Eigen::Infinity>());
  }
  residual = std::max(
      residual, fixed_order_sum(lambda).lpNorm<Eigen::Infinity>());
  return residual;
}

OracleValidationReport validate_oracles(const AgentProblem& problem,
                                        std::span<const Vec> sample_points,
                                        double h) {
  if (!(h > 0.0)) {
    throw SolverError(ErrorCode::ConfigError, "validate_oracles: h <= 0");
  }
  OracleValidationReport report;
  for (const Vec& x : sample_points) {
    const Vec g = eval_subgradient(problem, x);
    Vec fd(x.size());
    Vec probe = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      probe(j) = x(j) + h;
      const double fp = eval_value(problem, probe);
      probe(j) = x(j) - h;
      const double fm = eval_value(problem, probe);
      probe(j) = x(j);
      fd(j) = (fp - fm) / (2.0 * h);
    }
    const double err = (fd - g).lpNorm<Eigen::Infinity>();
    if (err > 1e-4 * (1.0 + g.norm())) {
      report.mismatches.push_back({x, err});
    }
    ++report.points_checked;
  }
  return report;
}

}  // namespace conprox
