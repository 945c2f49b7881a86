#pragma once

#include "conprox/core.hpp"

namespace conprox {

enum class ConvexityTag {
  StronglyConvex,
  Convex,
  NonconvexSmooth,
  NonconvexNonsmooth,
};

const char* to_string(ConvexityTag tag);

/// A named set of agent problems with ground-truth metadata for testing.
struct SuiteInstance {
  std::string name;
  std::vector<AgentProblem> agents;
  ConvexityTag convexity = ConvexityTag::Convex;
  std::optional<Vec> analytic_optimum;
  double lower_bound = 0.0;
  /// True when finite differencing at x is safe (away from declared kinks).
  /// Unset means everywhere is safe.
  std::function<bool(const Vec&)> safe_sample;

  int agent_count() const { return static_cast<int>(agents.size()); }
  int dim() const { return agents.empty() ? 0 : agents.front().dim; }
  bool is_convex() const {
    return convexity == ConvexityTag::StronglyConvex ||
           convexity == ConvexityTag::Convex;
  }
};

/// f_i(x) = (a_i/2) |x - c_i|^2 with closed-form exact local solves.
SuiteInstance quadratic_suite(const std::vector<double>& a,
                              const std::vector<Vec>& c);

/// Scalar f_i(x) = (x^2 - 1)^2 + d_i * x. Exact local solves minimize the
/// resulting quartic by enumerating the real roots of its cubic derivative.
SuiteInstance double_well_suite(const std::vector<double>& tilts);

/// f_i(x) = (1/2)|A_i x - b_i|^2 + mu |x|_1 with minimum-norm subgradients at
/// kinks. A closed-form (soft-threshold) exact local solve is provided for
/// the scalar case only.
SuiteInstance lasso_consensus_suite(const std::vector<Mat>& A,
                                    const std::vector<Vec>& b, double mu);

/// Scalar ground-truth oracle: scans [lo, hi] at `step` resolution for the
/// minimizer of sum_i f_i, then polishes with 50 bisection steps on the
/// derivative sum. Authority for the non-convex scalar suites.
double grid_minimize_scalar(const SuiteInstance& suite, double lo = -3.0,
                            double hi = 3.0, double step = 1e-6);

}  // namespace conprox
