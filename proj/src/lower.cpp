#include "conprox/lower.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace conprox {

bool SweepReport::all_consensus_descent_ok() const {
  return std::all_of(consensus_descent_ok.begin(), consensus_descent_ok.end(),
                     [](bool ok) { return ok; });
}

double SweepReport::max_delta_x_tilde() const {
  double m = 0.0;
  for (double v : delta_x_tilde_norms) m = std::max(m, v);
  return m;
}

// ----------------------------------------------------------------------------
// Local update kernels
// ----------------------------------------------------------------------------

Vec local_update_linearized_upper(const AgentProblem& problem, const Vec& y,
                                  const Vec& z, const Vec& lambda,
                                  const SpdMatrix& B, double gamma) {
  require_dim(z, y.size(), "linearized_upper z");
  require_dim(lambda, y.size(), "linearized_upper lambda");
  const Vec r = gamma * (z - y) - lambda - eval_subgradient(problem, y);
  return y + B.solve(r);
}

Vec local_update_fixed_point(const AgentProblem& problem, const Vec& y,
                             const Vec& z, const Vec& lambda, const SpdMatrix& B,
                             double gamma, int iters) {
  if (iters < 1) {
    throw SolverError(ErrorCode::ConfigError, "fixed_point: iters must be >= 1");
  }
  require_dim(z, y.size(), "fixed_point z");
  require_dim(lambda, y.size(), "fixed_point lambda");
  const SpdMatrix shifted = B.add_ridge(gamma);
  const Vec base = gamma * z + B.apply(y) - lambda;
  Vec x = y;
  for (int k = 0; k < iters; ++k) {
    x = shifted.solve(base - eval_subgradient(problem, x));
    if (x.norm() > 1e12) {
      throw SolverError(ErrorCode::Diverged, "fixed_point iterate blew up");
    }
  }
  return x;
}

Vec local_update_linearized_lower(const AgentProblem& problem, const Vec& y,
                                  const Vec& z, const Vec& lambda,
                                  const SpdMatrix& B, double gamma) {
  return local_update_fixed_point(problem, y, z, lambda, B, gamma, 1);
}

Vec local_update_exact(const AgentProblem& problem, const Vec& y, const Vec& z,
                       const Vec& lambda, const SpdMatrix& B, double gamma) {
  require_dim(z, y.size(), "exact z");
  require_dim(lambda, y.size(), "exact lambda");
  if (B.is_scaled_identity() && problem.has_exact_solve()) {
    Vec x = problem.exact_local_solve(lambda, y, z, B.scale(), gamma);
    if (x.size() != y.size() || !x.allFinite()) {
      throw SolverError(ErrorCode::OracleFailure,
                        "exact_local_solve returned a bad vector");
    }
    return x;
  }
  if (problem.curvature_hint) {
    // Constant-curvature closed form: with df(x) = df(y) + h (x - y),
    // stationarity gives (B + (h + gamma) I)(x - y) = -(df(y) + gamma(y-z) + lambda).
    const double tau = *problem.curvature_hint + gamma;
    if (tau < 0.0) {
      throw SolverError(ErrorCode::NoExactOracle,
                        "curvature hint leaves the local subproblem nonconvex");
    }
    const Vec r = eval_subgradient(problem, y) + gamma * (y - z) + lambda;
    return y - B.add_ridge(tau).solve(r);
  }
  throw SolverError(ErrorCode::NoExactOracle,
                    "agent has no exact local solve for this curvature model");
}

Vec subgradient_surrogate(const LowerState& state, int i) {
  return state.B[i].apply(state.y - state.x[i]) - state.lambda[i];
}

// ----------------------------------------------------------------------------
// Consensus and dual kernels
// ----------------------------------------------------------------------------

namespace {

SpdMatrix build_consensus_system(std::span<const SpdMatrix> B, double beta) {
  if (B.empty()) {
    throw SolverError(ErrorCode::DimMismatch, "consensus: no agents");
  }
  const Eigen::Index n = B[0].dim();
  bool all_scaled = true;
  for (const SpdMatrix& b : B) {
    if (b.dim() != n) {
      throw SolverError(ErrorCode::DimMismatch, "consensus: mixed dimensions");
    }
    all_scaled = all_scaled && b.is_scaled_identity();
  }
  if (all_scaled) {
    double s = 0.0;
    for (const SpdMatrix& b : B) s += b.scale();
    return SpdMatrix::scaled_identity(n, s + beta);
  }
  Mat acc = Mat::Zero(n, n);
  for (const SpdMatrix& b : B) acc += b.dense();
  acc += beta * Mat::Identity(n, n);
  return SpdMatrix::from_dense(acc);
}

}  // namespace

ConsensusKernel::ConsensusKernel(std::span<const SpdMatrix> B, double beta)
    : B_(B.begin(), B.end()),
      beta_(beta),
      system_(build_consensus_system(B, beta)) {}

Vec ConsensusKernel::aladin_update(std::span<const Vec> x_plus,
                                   std::span<const Vec> g,
                                   const Vec& y_prev) const {
  if (x_plus.size() != B_.size() || g.size() != B_.size()) {
    throw SolverError(ErrorCode::DimMismatch, "aladin_update: count mismatch");
  }
  std::vector<Vec> terms;
  terms.reserve(B_.size());
  for (std::size_t i = 0; i < B_.size(); ++i) {
    terms.push_back(B_[i].apply(x_plus[i]) - g[i]);
  }
  Vec rhs = beta_ * y_prev + fixed_order_sum(terms);
  return system_.solve(rhs);
}

Vec consensus_update_aladin(const LowerState& state, double beta,
                            const Vec& y_prev) {
  ConsensusKernel kernel(state.B, beta);
  return kernel.aladin_update(state.x, state.g, y_prev);
}

Vec consensus_update_admm(const LowerState& state, double rho, double beta,
                          const Vec& y_prev) {
  if (!(rho > 0.0)) {
    throw SolverError(ErrorCode::ConfigError, "consensus_update_admm: rho <= 0");
  }
  const int n_agents = state.agent_count();
  std::vector<Vec> terms;
  terms.reserve(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    terms.push_back(rho * state.x[i] + state.lambda[i]);
  }
  Vec rhs = beta * y_prev + fixed_order_sum(terms);
  return rhs / (static_cast<double>(n_agents) * rho + beta);
}

Vec dual_update_aladin(const LowerState& state, const Vec& y_plus, int i) {
  return state.B[i].apply(state.x[i] - y_plus) - state.g[i];
}

Vec dual_update_admm(const Vec& lambda, double rho, const Vec& x, const Vec& y) {
  require_dim(x, lambda.size(), "dual_update_admm x");
  require_dim(y, lambda.size(), "dual_update_admm y");
  return lambda + rho * (x - y);
}

// ----------------------------------------------------------------------------
// Sweep
// ----------------------------------------------------------------------------

namespace {

void for_each_agent(int count, bool parallel, const std::function<void(int)>& fn) {
  if (!parallel || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 2;
  workers = std::min<unsigned>(workers, static_cast<unsigned>(count));
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

Vec run_local_update(const AgentProblem& problem, const SolverConfig& config,
                     const Vec& y, const Vec& z, const Vec& lambda,
                     const SpdMatrix& B) {
  const double gamma = config.effective_gamma();
  // The plain baselines solve their local subproblems exactly.
  const LocalUpdate strategy =
      config.is_plain() ? LocalUpdate::Exact : config.local_update_strategy;
  switch (strategy) {
    case LocalUpdate::LinearizedUpper:
      return local_update_linearized_upper(problem, y, z, lambda, B, gamma);
    case LocalUpdate::LinearizedLower:
      return local_update_linearized_lower(problem, y, z, lambda, B, gamma);
    case LocalUpdate::FixedPoint:
      return local_update_fixed_point(problem, y, z, lambda, B, gamma,
                                      config.fixed_point_inner_iters);
    case LocalUpdate::Exact:
      return local_update_exact(problem, y, z, lambda, B, gamma);
  }
  throw SolverError(ErrorCode::ConfigError, "unknown local update strategy");
}

SweepReport assemble_sweep_report(const LowerState& state,
                                  const std::vector<AgentProblem>& problems,
                                  const SolverConfig& config,
                                  const UpperState& upper,
                                  std::vector<Vec> lambda_used,
                                  std::vector<Vec> x_plus,
                                  std::vector<Vec> g_plus, Vec y_plus,
                                  std::vector<Vec> lambda_next,
                                  std::vector<Vec> lambda_report) {
  const double gamma = config.effective_gamma();
  const int n_agents = state.agent_count();

  SweepReport rep;
  rep.sweep_index = state.sweep_index;
  rep.merit_before =
      merit_at_consensus(problems, state.y, upper.z, upper.sigma, gamma);
  rep.merit_after_local =
      merit(problems, x_plus, state.y, upper.z, upper.sigma, gamma);
  rep.merit_after =
      merit_at_consensus(problems, y_plus, upper.z, upper.sigma, gamma);

  LowerState after_local;
  after_local.x = x_plus;
  after_local.y = state.y;
  after_local.lambda = lambda_used;
  after_local.g = state.g;
  after_local.B = state.B;
  const DescentCondition local = local_descent_condition(after_local, upper.sigma);
  rep.local_descent_ok = local.holds;
  rep.local_descent_margin = local.margin;
  rep.consensus_descent_ok =
      consensus_descent_condition(upper.sigma, lambda_report);

  rep.delta_x_norms.resize(n_agents);
  rep.delta_x_tilde_norms.resize(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    rep.delta_x_norms[i] = (x_plus[i] - state.y).norm();
    rep.delta_x_tilde_norms[i] = (y_plus - x_plus[i]).norm();
  }

  rep.lambda_plus = std::move(lambda_report);
  rep.state_after.x = std::move(x_plus);
  rep.state_after.y = std::move(y_plus);
  rep.state_after.lambda = std::move(lambda_next);
  rep.state_after.g = std::move(g_plus);
  rep.state_after.B = state.B;
  rep.state_after.sweep_index = state.sweep_index + 1;
  return rep;
}

SweepReport sweep(const LowerState& state,
                  const std::vector<AgentProblem>& problems,
                  const SolverConfig& config, const UpperState& upper,
                  const ConsensusKernel* consensus) {
  const int n_agents = state.agent_count();
  if (static_cast<int>(problems.size()) != n_agents ||
      static_cast<int>(upper.sigma.size()) != n_agents) {
    throw SolverError(ErrorCode::DimMismatch, "sweep: agent count mismatch");
  }
  require_dim(upper.z, state.dim(), "sweep z");

  // Proximal ADMM ordering: duals advance from the pre-sweep (x, y) first.
  std::vector<Vec> lambda_used = state.lambda;
  if (config.method == Method::CadmmProx) {
    for (int i = 0; i < n_agents; ++i) {
      lambda_used[i] =
          dual_update_admm(state.lambda[i], config.rho, state.x[i], state.y);
    }
  }

  // Jacobian local updates: independent per agent.
  std::vector<Vec> x_plus(n_agents);
  for_each_agent(n_agents, config.parallel_local_updates, [&](int i) {
    x_plus[i] = run_local_update(problems[i], config, state.y, upper.z,
                                 lambda_used[i], state.B[i]);
  });

  LowerState post_local;
  post_local.x = x_plus;
  post_local.y = state.y;
  post_local.lambda = lambda_used;
  post_local.g = state.g;
  post_local.B = state.B;

  std::vector<Vec> g_plus(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    g_plus[i] = subgradient_surrogate(post_local, i);
  }
  post_local.g = g_plus;

  Vec y_plus;
  if (config.is_caladin_family()) {
    if (consensus != nullptr) {
      y_plus = consensus->aladin_update(post_local.x, post_local.g, state.y);
    } else {
      y_plus = consensus_update_aladin(post_local, config.beta, state.y);
    }
  } else {
    y_plus = consensus_update_admm(post_local, config.rho, config.beta, state.y);
  }

  std::vector<Vec> lambda_next(n_agents);
  std::vector<Vec> lambda_report(n_agents);
  switch (config.method) {
    case Method::CaladinProx:
    case Method::PlainCaladin:
      for (int i = 0; i < n_agents; ++i) {
        lambda_next[i] = dual_update_aladin(post_local, y_plus, i);
        lambda_report[i] = lambda_next[i];
      }
      break;
    case Method::PlainCadmm:
      for (int i = 0; i < n_agents; ++i) {
        lambda_next[i] =
            dual_update_admm(lambda_used[i], config.rho, x_plus[i], y_plus);
        lambda_report[i] = lambda_next[i];
      }
      break;
    case Method::CadmmProx:
      // The stored duals stay one step behind; the sigma rule sees the
      // increment the next sweep will apply.
      for (int i = 0; i < n_agents; ++i) {
        lambda_next[i] = lambda_used[i];
        lambda_report[i] =
            dual_update_admm(lambda_used[i], config.rho, x_plus[i], y_plus);
      }
      break;
  }

  return assemble_sweep_report(state, problems, config, upper,
                               std::move(lambda_used), std::move(x_plus),
                               std::move(g_plus), std::move(y_plus),
                               std::move(lambda_next), std::move(lambda_report));
}

// ----------------------------------------------------------------------------
// Phase loop
// ----------------------------------------------------------------------------

LowerState init_lower_state(const std::vector<AgentProblem>& problems,
                            const SolverConfig& config, const Vec& z,
                            const std::vector<SpdMatrix>* user_B) {
  const int n_agents = static_cast<int>(problems.size());
  if (n_agents == 0) {
    throw SolverError(ErrorCode::DimMismatch, "init_lower_state: no agents");
  }
  const Eigen::Index n = z.size();
  require_finite(z, "init_lower_state z");

  LowerState state;
  state.x.assign(static_cast<std::size_t>(n_agents), z);
  state.y = z;
  state.lambda.assign(static_cast<std::size_t>(n_agents), Vec::Zero(n));
  state.g.assign(static_cast<std::size_t>(n_agents), Vec::Zero(n));
  state.sweep_index = 0;

  if (user_B != nullptr) {
    if (static_cast<int>(user_B->size()) != n_agents) {
      throw SolverError(ErrorCode::DimMismatch, "init_lower_state: |user_B| != N");
    }
    state.B = *user_B;
    return state;
  }
  switch (config.hessian_mode) {
    case HessianMode::UserFixed:
      throw SolverError(ErrorCode::ConfigError,
                        "hessian_mode user-fixed requires B matrices");
    case HessianMode::ScaledIdentity:
      state.B.assign(static_cast<std::size_t>(n_agents),
                     SpdMatrix::scaled_identity(n, config.rho));
      break;
    case HessianMode::CurvatureRefresh: {
      const double gamma = config.effective_gamma();
      for (const AgentProblem& p : problems) {
        const double s = p.curvature_hint
                             ? std::max(*p.curvature_hint + gamma, 1e-8)
                             : config.rho;
        state.B.push_back(SpdMatrix::scaled_identity(n, s));
      }
      break;
    }
  }
  return state;
}

DirectSweepExecutor::DirectSweepExecutor(
    const std::vector<AgentProblem>& problems, const SolverConfig& config)
    : problems_(problems), config_(config) {}

void DirectSweepExecutor::begin_phase(const LowerState& init,
                                      const UpperState& /*upper*/) {
  if (config_.is_caladin_family()) {
    consensus_.emplace(init.B, config_.beta);
  }
}

SweepReport DirectSweepExecutor::run_sweep(const LowerState& state,
                                           const UpperState& upper) {
  return sweep(state, problems_, config_, upper,
               consensus_ ? &*consensus_ : nullptr);
}

LowerRunResult run_lower(const LowerState& init, const UpperState& upper,
                         const SolverConfig& config, SweepExecutor& executor) {
  LowerRunResult result;
  result.state = init;
  for (int s = 0; s < config.max_lower_sweeps; ++s) {
    SweepReport rep = executor.run_sweep(result.state, upper);
    result.state = rep.state_after;
    const double after = rep.merit_after.total;
    result.sweeps.push_back(std::move(rep));
    if (after < upper.merit_at_z) {
      result.accepted = true;
      return result;
    }
  }
  result.accepted = false;
  return result;
}

LowerRunResult run_lower(const std::vector<AgentProblem>& problems,
                         const SolverConfig& config, const UpperState& upper,
                         const LowerState& init) {
  DirectSweepExecutor executor(problems, config);
  executor.begin_phase(init, upper);
  return run_lower(init, upper, config, executor);
}

void refresh_curvature_models(LowerState& state,
                              const std::vector<AgentProblem>& problems,
                              const SolverConfig& config) {
  const double gamma = config.effective_gamma();
  for (int i = 0; i < state.agent_count(); ++i) {
    const auto& hint = problems[static_cast<std::size_t>(i)].curvature_hint;
    if (!hint) continue;
    state.B[static_cast<std::size_t>(i)] =
        SpdMatrix::scaled_identity(state.dim(), std::max(*hint + gamma, 1e-8));
  }
}

double stall_residual(const LowerState& state) {
  Vec g_sum = fixed_order_sum(state.g);
  double residual = g_sum.lpNorm<Eigen::Infinity>();
  for (const Vec& xi : state.x) {
    residual = std::max(residual, (xi - state.y).lpNorm<Eigen::Infinity>());
  }
  return residual;
}

}  // namespace conprox
