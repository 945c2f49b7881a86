#pragma once

#include "conprox/core.hpp"
#include "conprox/merit.hpp"

namespace conprox {

/// Diagnostics for one lower-level sweep.
///
/// merit_before      merit of the pre-sweep consensus point (x = y, ref y)
/// merit_after_local merit of the local updates against the old reference
/// merit_after       merit of the new consensus point (x = y+, ref y+)
struct SweepReport {
  LowerState state_after;
  MeritBreakdown merit_before;
  MeritBreakdown merit_after_local;
  MeritBreakdown merit_after;
  bool local_descent_ok = false;
  double local_descent_margin = 0.0;
  std::vector<bool> consensus_descent_ok;
  std::vector<double> delta_x_norms;        // |x_i+ - y| per agent
  std::vector<double> delta_x_tilde_norms;  // |y+ - x_i+| per agent
  /// Duals entering the sigma rule and the consensus descent test. For the
  /// consensus-QP methods these are the stored new duals; for the proximal
  /// ADMM ordering they are the next pre-sweep increments (not yet stored).
  std::vector<Vec> lambda_plus;
  int sweep_index = 0;

  bool all_consensus_descent_ok() const;
  double max_delta_x_tilde() const;
};

// ----------------------------------------------------------------------------
// Local update kernels
// ----------------------------------------------------------------------------

/// y + B^{-1}(gamma (z - y) - lambda - df(y)); with B = rho*I this is the
/// scalar form y + (1/rho)(gamma (z - y) - lambda - df(y)).
Vec local_update_linearized_upper(const AgentProblem& problem, const Vec& y,
                                  const Vec& z, const Vec& lambda,
                                  const SpdMatrix& B, double gamma);

/// (B + gamma I)^{-1}(gamma z + B y - lambda - df(y)).
Vec local_update_linearized_lower(const AgentProblem& problem, const Vec& y,
                                  const Vec& z, const Vec& lambda,
                                  const SpdMatrix& B, double gamma);

/// Iterates x <- (B + gamma I)^{-1}(gamma z + B y - lambda - df(x)) from
/// x = y. One iteration reproduces the linearized-lower kernel bit for bit.
Vec local_update_fixed_point(const AgentProblem& problem, const Vec& y,
                             const Vec& z, const Vec& lambda, const SpdMatrix& B,
                             double gamma, int iters);

/// argmin_x f(x) + (gamma/2)|x-z|^2 + lambda'x + (1/2)|x-y|^2_B.
/// Scalar B uses the agent's exact_local_solve oracle; a dense B needs the
/// agent's constant-curvature closed form (exact for quadratic objectives).
Vec local_update_exact(const AgentProblem& problem, const Vec& y, const Vec& z,
                       const Vec& lambda, const SpdMatrix& B, double gamma);

/// g_i = B_i (y - x_i+) - lambda_i, the gradient surrogate consistent with
/// the consensus QP. `state.x` holds the post-update x+.
Vec subgradient_surrogate(const LowerState& state, int i);

/// Strategy dispatch for one agent (the plain baselines always solve the
/// local subproblem exactly, with gamma = 0).
Vec run_local_update(const AgentProblem& problem, const SolverConfig& config,
                     const Vec& y, const Vec& z, const Vec& lambda,
                     const SpdMatrix& B);

/// Consensus operator (sum B_i + beta I), factorized once per phase.
class ConsensusKernel {
 public:
  ConsensusKernel(std::span<const SpdMatrix> B, double beta);
  /// (sum B_i + beta I)^{-1} (beta y_prev + sum_i (B_i x_i+ - g_i)).
  Vec aladin_update(std::span<const Vec> x_plus, std::span<const Vec> g,
                    const Vec& y_prev) const;

 private:
  std::vector<SpdMatrix> B_;
  double beta_;
  SpdMatrix system_;
};

Vec consensus_update_aladin(const LowerState& state, double beta,
                            const Vec& y_prev);

/// (1/(N rho + beta)) (beta y_prev + sum_i (rho x_i+ + lambda_i)).
Vec consensus_update_admm(const LowerState& state, double rho, double beta,
                          const Vec& y_prev);

/// lambda_i+ = B_i (x_i+ - y+) - g_i (consensus-QP multiplier).
Vec dual_update_aladin(const LowerState& state, const Vec& y_plus, int i);

/// lambda + rho (x - y); the caller picks pre- or post-sweep iterates.
Vec dual_update_admm(const Vec& lambda, double rho, const Vec& x, const Vec& y);

// ----------------------------------------------------------------------------
// Sweep and phase loop
// ----------------------------------------------------------------------------

/// Fresh phase state at the proximal center z: x_i = y = z, lambda_i = 0,
/// g_i = -lambda_i. B_i per config.hessian_mode (`user_B` required for
/// UserFixed, used as override otherwise when provided).
LowerState init_lower_state(const std::vector<AgentProblem>& problems,
                            const SolverConfig& config, const Vec& z,
                            const std::vector<SpdMatrix>* user_B = nullptr);

/// One Jacobian sweep: (proximal ADMM ordering) pre-sweep dual update, then
/// parallel local updates, gradient-surrogate refresh, consensus step, and
/// the method's dual update. Pure: the successor state lives in the report.
SweepReport sweep(const LowerState& state,
                  const std::vector<AgentProblem>& problems,
                  const SolverConfig& config, const UpperState& upper,
                  const ConsensusKernel* consensus = nullptr);

/// Builds the SweepReport from the sweep's constituents. Shared with the
/// protocol simulator so both paths produce bit-identical diagnostics.
SweepReport assemble_sweep_report(const LowerState& state,
                                  const std::vector<AgentProblem>& problems,
                                  const SolverConfig& config,
                                  const UpperState& upper,
                                  std::vector<Vec> lambda_used,
                                  std::vector<Vec> x_plus,
                                  std::vector<Vec> g_plus, Vec y_plus,
                                  std::vector<Vec> lambda_next,
                                  std::vector<Vec> lambda_report);

/// Runs sweeps against one fixed z. Implementations must be numerically
/// identical to `sweep`; the simulated-protocol executor reproduces it bit
/// for bit through the message schedule.
class SweepExecutor {
 public:
  virtual ~SweepExecutor() = default;
  virtual void begin_phase(const LowerState& init, const UpperState& upper) = 0;
  virtual SweepReport run_sweep(const LowerState& state,
                                const UpperState& upper) = 0;
};

class DirectSweepExecutor : public SweepExecutor {
 public:
  DirectSweepExecutor(const std::vector<AgentProblem>& problems,
                      const SolverConfig& config);
  void begin_phase(const LowerState& init, const UpperState& upper) override;
  SweepReport run_sweep(const LowerState& state,
                        const UpperState& upper) override;

 private:
  const std::vector<AgentProblem>& problems_;
  const SolverConfig& config_;
  std::optional<ConsensusKernel> consensus_;
};

struct LowerRunResult {
  LowerState state;
  std::vector<SweepReport> sweeps;
  bool accepted = false;  // false means the phase stalled at max_lower_sweeps
};

/// Sweeps until the consensus merit drops strictly below upper.merit_at_z or
/// config.max_lower_sweeps is exhausted.
LowerRunResult run_lower(const LowerState& init, const UpperState& upper,
                         const SolverConfig& config, SweepExecutor& executor);

/// Convenience overload with a direct executor.
LowerRunResult run_lower(const std::vector<AgentProblem>& problems,
                         const SolverConfig& config, const UpperState& upper,
                         const LowerState& init);

/// Residual used to decide whether a stalled phase sits at a critical point:
/// max(|sum_i g_i|_inf, max_i |x_i - y|_inf) of the final sweep state.
double stall_residual(const LowerState& state);

/// Rebuilds each B_i from the agent's curvature hint (hint + gamma, floored);
/// agents without hints keep their current model. Used when z advances under
/// HessianMode::CurvatureRefresh.
void refresh_curvature_models(LowerState& state,
                              const std::vector<AgentProblem>& problems,
                              const SolverConfig& config);

}  // namespace conprox
