#pragma once

#include "conprox/core.hpp"

namespace conprox {

/// Merit value split into its smooth (sum of proximal objectives) and L1
/// consensus-penalty parts.
struct MeritBreakdown {
  double smooth_part = 0.0;
  double penalty_part = 0.0;
  double total = 0.0;
};

/// f_i(x) + (gamma/2) |x - z|^2.
double proximal_objective(const AgentProblem& problem, const Vec& x,
                          const Vec& z, double gamma);

/// Sum_i [ f_i(x_i) + (gamma/2)|x_i - z|^2 ] + sum_i sigma_i |x_i - y|_1.
MeritBreakdown merit(const std::vector<AgentProblem>& problems,
                     const std::vector<Vec>& x, const Vec& y, const Vec& z,
                     const std::vector<double>& sigma, double gamma);

/// Merit with every local copy at `point` and penalty reference `point`:
/// the penalty vanishes and the smooth part is the proximal objective sum.
MeritBreakdown merit_at_consensus(const std::vector<AgentProblem>& problems,
                                  const Vec& point, const Vec& z,
                                  const std::vector<double>& sigma, double gamma);

struct DirectionalDerivativeEstimate {
  double value = 0.0;             // extrapolated one-sided limit
  std::vector<double> slopes;     // difference quotient per step size
};

/// One-sided numeric directional derivative of `phi` at `point` along
/// `direction`: difference quotients over a strictly decreasing positive step
/// sequence (default 1e-2 .. 1e-6), with a linear-in-t extrapolation of the
/// last two slopes. One-sided only; the merit is non-smooth.
DirectionalDerivativeEstimate directional_derivative_numeric(
    const std::function<double(const Vec&)>& phi, const Vec& point,
    const Vec& direction, std::span<const double> t_sequence = {});

/// Closed-form directional derivative of the merit at x+ along
/// dx~_i = y+ - x_i+:  sum_i g_i' dx~_i - sum_i sigma_i |dx~_i|_1.
/// Uses the g_i stored in the state (the solver-side gradient surrogates),
/// never a fresh subgradient call.
double consensus_directional_derivative(const LowerState& state,
                                        const std::vector<double>& sigma,
                                        const Vec& y_plus);

struct DescentCondition {
  bool holds = false;
  double margin = 0.0;  // lhs - rhs, signed
};

/// Local-step descent test on dx_i = x_i+ - y:
///   sum_i lambda_i' dx_i + sum_i |dx_i|^2_{B_i}  >  sum_i sigma_i |dx_i|_1.
/// `state` carries the post-local-update x (as x+) together with the
/// pre-consensus y, lambda and B actually used by the update.
DescentCondition local_descent_condition(const LowerState& state,
                                         const std::vector<double>& sigma);

/// Per-agent consensus-step descent test: sigma_i > |lambda_i+|_inf, strictly.
std::vector<bool> consensus_descent_condition(
    const std::vector<double>& sigma, const std::vector<Vec>& lambda_plus);

}  // namespace conprox
