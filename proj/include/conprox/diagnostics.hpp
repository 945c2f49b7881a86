#pragma once

#include "conprox/globalize.hpp"
#include "conprox/lower.hpp"

namespace conprox {

/// KKT point of the lower-level consensus problem for a fixed proximal
/// center. Duals must sum to zero across agents.
struct ReferenceSolution {
  enum class Source { Analytic, LongRun };
  Vec y_star;
  std::vector<Vec> lambda_star;
  Source source = Source::Analytic;
};

/// Builds a reference from a known minimizer: lambda_i* = -grad F_i^z(y*)
/// via the subgradient oracle. Verifies that the duals sum to zero.
ReferenceSolution make_analytic_reference(
    const std::vector<AgentProblem>& problems, const Vec& y_star, double gamma,
    const Vec& z);

/// Builds a reference by sweeping the lower level `sweeps` times at fixed z.
ReferenceSolution make_long_run_reference(
    const std::vector<AgentProblem>& problems, const SolverConfig& config,
    const UpperState& upper, int sweeps);

/// L(y, lambda) = sum_i |y - y*|^2_{B_i} + sum_i |lambda_i - lambda_i*|^2_{B_i^{-1}}.
double lyapunov(const LowerState& state, const ReferenceSolution& ref);

struct LyapunovCheck {
  std::vector<double> values;       // L per state
  std::vector<double> differences;  // successive L(k+1) - L(k)
  bool hypothesis_violation = false;  // suite not convex; report-only mode
  bool monotone(double tol_scale = 1e-10) const;
};

/// Successive Lyapunov differences along a lower-level trace. When the suite
/// is not convex the monitor still reports but flags the broken hypothesis.
LyapunovCheck lyapunov_decrease_check(std::span<const LowerState> trace,
                                      const ReferenceSolution& ref,
                                      bool suite_is_convex);

struct TelescopingCheck {
  std::vector<double> prefix_sums;  // sum of step^2 up to each prefix
  std::vector<double> bounds;       // (2/(gamma N)) (Phi_0 - Phi_K)
  bool ok = true;
};

/// Verifies sum_{j<K} |z^j - z^{j+1}|^2 < (2/(gamma N)) (Phi_0 - Phi_K) at
/// every prefix, with an absolute 1e-12-scale slack for rounding. A zero
/// effective gamma (plain baselines) makes the bound vacuous.
TelescopingCheck telescoping_monitor(const OuterResult& outer, double gamma,
                                     int agent_count);

/// max_i |df_i(y) + gamma (y - z) + lambda_i|_inf combined (max) with
/// |sum_i lambda_i|_inf.
double kkt_residual(const std::vector<AgentProblem>& problems, const Vec& y,
                    const std::vector<Vec>& lambda, double gamma, const Vec& z);

struct OracleValidationReport {
  struct Mismatch {
    Vec point;
    double error = 0.0;
  };
  std::vector<Mismatch> mismatches;
  int points_checked = 0;
  bool ok() const { return mismatches.empty(); }
};

/// Central finite differences of the value oracle against the subgradient
/// oracle at smooth sample points: |fd - g|_inf <= 1e-4 (1 + |g|).
OracleValidationReport validate_oracles(const AgentProblem& problem,
                                        std::span<const Vec> sample_points,
                                        double h = 1e-6);

}  // namespace conprox
