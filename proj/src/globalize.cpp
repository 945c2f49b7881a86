#include "conprox/globalize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace conprox {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "CONVERGED";
    case SolveStatus::MaxOuter: return "MAX_OUTER";
    case SolveStatus::LowerStalledAtOptimum: return "LOWER_STALLED_AT_OPTIMUM";
  }
  return "?";
}

const char* to_string(CriticalPointVerdict::Label label) {
  switch (label) {
    case CriticalPointVerdict::Label::LocalMinimizer: return "LOCAL_MINIMIZER";
    case CriticalPointVerdict::Label::SaddleOrOther: return "SADDLE_OR_OTHER";
  }
  return "?";
}

UpperState update_sigma(const UpperState& upper,
                        const std::vector<Vec>& lambda_plus, double margin) {
  if (margin < 0.0) {
    throw SolverError(ErrorCode::ConfigError, "update_sigma: margin < 0");
  }
  if (lambda_plus.size() != upper.sigma.size()) {
    throw SolverError(ErrorCode::DimMismatch, "update_sigma: count mismatch");
  }
  UpperState out = upper;
  for (std::size_t i = 0; i < lambda_plus.size(); ++i) {
    const double linf = lambda_plus[i].lpNorm<Eigen::Infinity>();
    if (out.sigma[i] < linf) {
      out.sigma[i] = linf * (1.0 + margin) + margin;
    }
  }
  return out;
}

std::pair<UpperState, bool> accept_z(const UpperState& upper,
                                     const std::vector<AgentProblem>& problems,
                                     const Vec& y_plus, double merit_at_y_plus,
                                     double merit_at_z, double gamma) {
  if (merit_at_y_plus < merit_at_z) {
    UpperState next = upper;
    next.z = y_plus;
    next.merit_at_z =
        merit_at_consensus(problems, y_plus, y_plus, upper.sigma, gamma).total;
    return {std::move(next), true};
  }
  return {upper, false};
}

bool stopping_test(std::span<const double> z_step_squares, double eps_z,
                   int window) {
  if (window < 1) {
    throw SolverError(ErrorCode::ConfigError, "stopping_test: window < 1");
  }
  if (z_step_squares.size() < static_cast<std::size_t>(window)) return false;
  for (std::size_t i = z_step_squares.size() - window;
       i < z_step_squares.size(); ++i) {
    if (!(z_step_squares[i] <= eps_z)) return false;
  }
  return true;
}

double gamma_probe(const std::vector<AgentProblem>& problems, const Vec& z0,
                   int directions, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = 1e-3;
  double min_curvature = 0.0;
  for (const AgentProblem& p : problems) {
    const double f0 = eval_value(p, z0);
    for (int d = 0; d < directions; ++d) {
      Vec dir(z0.size());
      for (Eigen::Index j = 0; j < dir.size(); ++j) dir(j) = normal(rng);
      const double norm = dir.norm();
      if (norm == 0.0) continue;
      dir /= norm;
      const double fp = eval_value(p, z0 + h * dir);
      const double fm = eval_value(p, z0 - h * dir);
      min_curvature = std::min(min_curvature, (fp - 2.0 * f0 + fm) / (h * h));
    }
  }
  return 2.0 * std::max(0.0, -min_curvature);
}

namespace {

OuterResult solve_plain(const std::vector<AgentProblem>& problems,
                        const SolverConfig& config, const Vec& z0,
                        const SolveCallbacks* callbacks,
                        const std::vector<SpdMatrix>* user_B,
                        SweepExecutor& executor) {
  const double gamma = config.effective_gamma();  // zero for the baselines
  UpperState upper;
  upper.z = z0;
  upper.sigma.assign(problems.size(), 0.0);
  upper.merit_at_z =
      merit_at_consensus(problems, z0, z0, upper.sigma, gamma).total;

  OuterResult result;
  result.merit_trajectory.push_back(upper.merit_at_z);

  LowerState state = init_lower_state(problems, config, z0, user_B);
  executor.begin_phase(state, upper);
  for (int k = 0; k < config.max_outer; ++k) {
    SweepReport rep = executor.run_sweep(state, upper);
    state = rep.state_after;
    const double step_sq = (state.y - upper.z).squaredNorm();
    upper.z = state.y;
    upper.merit_at_z = rep.merit_after.total;
    upper.outer_index = k + 1;
    result.merit_trajectory.push_back(upper.merit_at_z);
    result.z_step_squares.push_back(step_sq);
    result.step_accepted.push_back(false);
    if (callbacks && callbacks->on_sweep) callbacks->on_sweep(k, rep);
    if (callbacks && callbacks->on_outer_step) {
      callbacks->on_outer_step(k, upper, step_sq, false);
    }
    result.outer_iterations = k + 1;
    if (stopping_test(result.z_step_squares, config.eps_z,
                      config.stopping_window)) {
      result.status = SolveStatus::Converged;
      break;
    }
  }
  result.z_star = upper.z;
  result.final_kkt_residual = stall_residual(state);
  return result;
}

}  // namespace

OuterResult solve(const std::vector<AgentProblem>& problems,
                  const SolverConfig& config, const Vec& z0,
                  const SolveCallbacks* callbacks,
                  const std::vector<SpdMatrix>* user_B,
                  SweepExecutor* executor) {
  config.validate();
  if (problems.empty()) {
    throw SolverError(ErrorCode::DimMismatch, "solve: no agents");
  }
  require_finite(z0, "solve z0");
  require_dim(z0, problems.front().dim, "solve z0");

  SolverConfig cfg = config;
  if (cfg.use_gamma_probe && !cfg.is_plain()) {
    cfg.gamma = std::max(
        cfg.gamma,
        gamma_probe(problems, z0, cfg.probe_directions, cfg.seed));
  }

  std::optional<DirectSweepExecutor> direct;
  if (executor == nullptr) {
    direct.emplace(problems, cfg);
    executor = &*direct;
  }

  if (cfg.is_plain()) {
    return solve_plain(problems, cfg, z0, callbacks, user_B, *executor);
  }

  const double gamma = cfg.effective_gamma();
  UpperState upper;
  upper.z = z0;
  upper.sigma.assign(problems.size(), 0.0);
  upper.merit_at_z =
      merit_at_consensus(problems, z0, z0, upper.sigma, gamma).total;

  OuterResult result;
  result.merit_trajectory.push_back(upper.merit_at_z);
  result.status = SolveStatus::MaxOuter;

  // The lower level persists across z updates: x, y and the duals keep
  // maturing while z trails the accepted consensus points. Every accepted
  // phase ends with y+ = z+, so each new phase again starts at y = z.
  LowerState state = init_lower_state(problems, cfg, z0, user_B);

  for (int k = 0; k < cfg.max_outer; ++k) {
    executor->begin_phase(state, upper);
    LowerRunResult run = run_lower(state, upper, cfg, *executor);
    state = run.state;
    if (callbacks && callbacks->on_sweep) {
      for (const SweepReport& rep : run.sweeps) callbacks->on_sweep(k, rep);
    }
    result.outer_iterations = k + 1;
    result.final_kkt_residual = stall_residual(run.state);

    if (!run.accepted) {
      result.status = result.final_kkt_residual <= cfg.kkt_tol
                          ? SolveStatus::LowerStalledAtOptimum
                          : SolveStatus::MaxOuter;
      break;
    }

    const SweepReport& last = run.sweeps.back();
    upper = update_sigma(upper, last.lambda_plus, cfg.sigma_margin);
    auto [next_upper, accepted] =
        accept_z(upper, problems, state.y, last.merit_after.total,
                 upper.merit_at_z, gamma);
    const double step_sq = (next_upper.z - upper.z).squaredNorm();
    upper = std::move(next_upper);
    upper.outer_index = k + 1;
    if (cfg.hessian_mode == HessianMode::CurvatureRefresh) {
      refresh_curvature_models(state, problems, cfg);
    }
    result.merit_trajectory.push_back(upper.merit_at_z);
    result.z_step_squares.push_back(step_sq);
    result.step_accepted.push_back(accepted);
    if (callbacks && callbacks->on_outer_step) {
      callbacks->on_outer_step(k, upper, step_sq, accepted);
    }
    if (stopping_test(result.z_step_squares, cfg.eps_z, cfg.stopping_window)) {
      result.status = SolveStatus::Converged;
      break;
    }
  }
  result.z_star = upper.z;
  return result;
}

CriticalPointVerdict classify_critical_point(
    const std::vector<AgentProblem>& problems, const SolverConfig& config,
    const Vec& z_star, int num_trials, std::span<const double> perturb_scales,
    double tol_return) {
  static constexpr std::array<double, 3> kDefaultScales = {1e-2, 1e-3, 1e-4};
  if (perturb_scales.empty()) perturb_scales = kDefaultScales;
  if (tol_return <= 0.0) tol_return = 10.0 * std::sqrt(config.eps_z);

  CriticalPointVerdict verdict;
  verdict.trials = std::max(num_trials, 0);
  verdict.label = CriticalPointVerdict::Label::LocalMinimizer;

  std::mt19937_64 rng(config.seed ^ 0xa5a5a5a5deadbeefULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < num_trials; ++t) {
    Vec dir(z_star.size());
    for (Eigen::Index j = 0; j < dir.size(); ++j) dir(j) = normal(rng);
    const double norm = dir.norm();
    if (norm == 0.0) {
      dir.setZero();
      dir(0) = 1.0;
    } else {
      dir /= norm;
    }
    for (double scale : perturb_scales) {
      OuterResult restart = solve(problems, config, z_star + scale * dir);
      const bool returned =
          restart.succeeded() && (restart.z_star - z_star).norm() <= tol_return;
      if (!returned) {
        verdict.label = CriticalPointVerdict::Label::SaddleOrOther;
        verdict.escaped_to = restart.z_star;
        return verdict;
      }
    }
  }
  return verdict;
}

}  // namespace conprox
