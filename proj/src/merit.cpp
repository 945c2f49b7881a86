#include "conprox/merit.hpp"

#include <array>
#include <cmath>

namespace conprox {

double proximal_objective(const AgentProblem& problem, const Vec& x,
                          const Vec& z, double gamma) {
  require_dim(z, x.size(), "proximal_objective z");
  if (!(gamma >= 0.0)) {
    throw SolverError(ErrorCode::ConfigError, "proximal_objective: gamma < 0");
  }
  return eval_value(problem, x) + 0.5 * gamma * (x - z).squaredNorm();
}

MeritBreakdown merit(const std::vector<AgentProblem>& problems,
                     const std::vector<Vec>& x, const Vec& y, const Vec& z,
                     const std::vector<double>& sigma, double gamma) {
  const std::size_t n_agents = problems.size();
  if (x.size() != n_agents || sigma.size() != n_agents) {
    throw SolverError(ErrorCode::DimMismatch,
                      "merit: problems/x/sigma counts differ");
  }
  MeritBreakdown out;
  for (std::size_t i = 0; i < n_agents; ++i) {
    require_dim(x[i], y.size(), "merit x_i");
    out.smooth_part += proximal_objective(problems[i], x[i], z, gamma);
    out.penalty_part += sigma[i] * (x[i] - y).lpNorm<1>();
  }
  out.total = out.smooth_part + out.penalty_part;
  return out;
}

MeritBreakdown merit_at_consensus(const std::vector<AgentProblem>& problems,
                                  const Vec& point, const Vec& z,
                                  const std::vector<double>& sigma,
                                  double gamma) {
  std::vector<Vec> x(problems.size(), point);
  return merit(problems, x, point, z, sigma, gamma);
}

static constexpr std::array<double, 5> kDefaultSteps = {1e-2, 1e-3, 1e-4, 1e-5,
                                                        1e-6};

DirectionalDerivativeEstimate directional_derivative_numeric(
    const std::function<double(const Vec&)>& phi, const Vec& point,
    const Vec& direction, std::span<const double> t_sequence) {
  if (t_sequence.empty()) t_sequence = kDefaultSteps;
  double prev_t = std::numeric_limits<double>::infinity();
  for (double t : t_sequence) {
    if (!(t > 0.0) || t >= prev_t) {
      throw SolverError(ErrorCode::ConfigError,
                        "t_sequence must be strictly decreasing and positive");
    }
    prev_t = t;
  }
  require_dim(direction, point.size(), "directional derivative direction");

  const double base = phi(point);
  if (!std::isfinite(base)) {
    throw SolverError(ErrorCode::NonFinite, "phi(point) is non-finite");
  }
  DirectionalDerivativeEstimate est;
  est.slopes.reserve(t_sequence.size());
  for (double t : t_sequence) {
    const double v = phi(point + t * direction);
    if (!std::isfinite(v)) {
      throw SolverError(ErrorCode::NonFinite, "phi(point + t*p) is non-finite");
    }
    est.slopes.push_back((v - base) / t);
  }
  const std::size_t k = est.slopes.size();
  if (k == 1) {
    est.value = est.slopes[0];
  } else {
    // Linear model s(t) = s0 + c*t through the last two quotients.
    const double t1 = t_sequence[k - 2], t2 = t_sequence[k - 1];
    const double s1 = est.slopes[k - 2], s2 = est.slopes[k - 1];
    est.value = (s2 * t1 - s1 * t2) / (t1 - t2);
  }
  return est;
}

double consensus_directional_derivative(const LowerState& state,
                                        const std::vector<double>& sigma,
                                        const Vec& y_plus) {
  const int n_agents = state.agent_count();
  if (static_cast<int>(sigma.size()) != n_agents ||
      static_cast<int>(state.g.size()) != n_agents) {
    throw SolverError(ErrorCode::DimMismatch,
                      "consensus_directional_derivative: count mismatch");
  }
  require_dim(y_plus, state.dim(), "consensus_directional_derivative y_plus");
  double value = 0.0;
  for (int i = 0; i < n_agents; ++i) {
    const Vec dxt = y_plus - state.x[i];
    value += state.g[i].dot(dxt) - sigma[i] * dxt.lpNorm<1>();
  }
  return value;
}

DescentCondition local_descent_condition(const LowerState& state,
                                         const std::vector<double>& sigma) {
  const int n_agents = state.agent_count();
  if (static_cast<int>(sigma.size()) != n_agents) {
    throw SolverError(ErrorCode::DimMismatch,
                      "local_descent_condition: sigma count mismatch");
  }
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < n_agents; ++i) {
    const Vec dx = state.x[i] - state.y;
    lhs += state.lambda[i].dot(dx) + state.B[i].quad(dx);
    rhs += sigma[i] * dx.lpNorm<1>();
  }
  DescentCondition out;
  out.margin = lhs - rhs;
  out.holds = lhs > rhs;
  return out;
}

std::vector<bool> consensus_descent_condition(
    const std::vector<double>& sigma, const std::vector<Vec>& lambda_plus) {
  if (sigma.size() != lambda_plus.size()) {
    throw SolverError(ErrorCode::DimMismatch,
                      "consensus_descent_condition: count mismatch");
  }
  std::vector<bool> out(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    out[i] = sigma[i] > lambda_plus[i].lpNorm<Eigen::Infinity>();
  }
  return out;
}

}  // namespace conprox
