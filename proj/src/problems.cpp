#include "conprox/problems.hpp"

#include <algorithm>
#include <cmath>

namespace conprox {

const char* to_string(ConvexityTag tag) {
  switch (tag) {
    case ConvexityTag::StronglyConvex: return "strongly-convex";
    case ConvexityTag::Convex: return "convex";
    case ConvexityTag::NonconvexSmooth: return "nonconvex-smooth";
    case ConvexityTag::NonconvexNonsmooth: return "nonconvex-nonsmooth";
  }
  return "?";
}

// ----------------------------------------------------------------------------
// Quadratic suite
// ----------------------------------------------------------------------------

SuiteInstance quadratic_suite(const std::vector<double>& a,
                              const std::vector<Vec>& c) {
  if (a.empty() || a.size() != c.size()) {
    throw SolverError(ErrorCode::DimMismatch, "quadratic_suite: |a| != |c|");
  }
  const Eigen::Index n = c.front().size();
  SuiteInstance suite;
  suite.name = "quadratic";
  suite.convexity = ConvexityTag::StronglyConvex;

  double a_sum = 0.0;
  Vec ac_sum = Vec::Zero(n);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0)) {
      throw SolverError(ErrorCode::ConfigError, "quadratic_suite: a_i must be > 0");
    }
    require_dim(c[i], n, "quadratic_suite c_i");
    const double ai = a[i];
    const Vec ci = c[i];
    AgentProblem p;
    p.dim = static_cast<int>(n);
    p.value = [ai, ci](const Vec& x) { return 0.5 * ai * (x - ci).squaredNorm(); };
    p.subgradient = [ai, ci](const Vec& x) -> Vec { return ai * (x - ci); };
    p.exact_local_solve = [ai, ci](const Vec& lambda, const Vec& y, const Vec& z,
                                   double rho, double gamma) -> Vec {
      // Stationarity of a*(x-c) + gamma*(x-z) + lambda + rho*(x-y) = 0.
      return (ai * ci + gamma * z + rho * y - lambda) / (ai + gamma + rho);
    };
    p.curvature_hint = ai;
    suite.agents.push_back(std::move(p));
    a_sum += ai;
    ac_sum += ai * ci;
  }
  suite.analytic_optimum = Vec(ac_sum / a_sum);
  suite.lower_bound = 0.0;
  return suite;
}

// ----------------------------------------------------------------------------
// Double-well suite
// ----------------------------------------------------------------------------

namespace {

// Real roots of x^3 + p*x + q = 0.
std::vector<double> depressed_cubic_roots(double p, double q) {
  std::vector<double> roots;
  const double disc = 0.25 * q * q + p * p * p / 27.0;
  if (disc > 0.0) {
    const double s = std::sqrt(disc);
    const double u = std::cbrt(-0.5 * q + s);
    const double v = std::cbrt(-0.5 * q - s);
    roots.push_back(u + v);
  } else if (p == 0.0 && q == 0.0) {
    roots.push_back(0.0);
  } else {
    // Three real roots (p < 0 here).
    const double r = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    const double two_pi_3 = 2.0943951023931953;
    for (int k = 0; k < 3; ++k) {
      roots.push_back(r * std::cos(theta - two_pi_3 * k));
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace

SuiteInstance double_well_suite(const std::vector<double>& tilts) {
  if (tilts.empty()) {
    throw SolverError(ErrorCode::DimMismatch, "double_well_suite: empty tilts");
  }
  SuiteInstance suite;
  suite.name = "double-well";
  suite.convexity = ConvexityTag::NonconvexSmooth;
  double bound = 0.0;
  for (double d : tilts) {
    AgentProblem p;
    p.dim = 1;
    p.value = [d](const Vec& x) {
      const double t = x(0) * x(0) - 1.0;
      return t * t + d * x(0);
    };
    p.subgradient = [d](const Vec& x) -> Vec {
      Vec g(1);
      g(0) = 4.0 * x(0) * (x(0) * x(0) - 1.0) + d;
      return g;
    };
    p.exact_local_solve = [d](const Vec& lambda, const Vec& y, const Vec& z,
                              double rho, double gamma) -> Vec {
      // Minimize (x^2-1)^2 + d x + (gamma/2)(x-z)^2 + lambda x + (rho/2)(x-y)^2.
      // Derivative: 4x^3 + (gamma + rho - 4) x + (d + lambda - gamma z - rho y).
      const double pc = (gamma + rho - 4.0) / 4.0;
      const double qc = (d + lambda(0) - gamma * z(0) - rho * y(0)) / 4.0;
      auto objective = [&](double x) {
        const double t = x * x - 1.0;
        return t * t + d * x + 0.5 * gamma * (x - z(0)) * (x - z(0)) +
               lambda(0) * x + 0.5 * rho * (x - y(0)) * (x - y(0));
      };
      auto derivative = [&](double x) {
        return 4.0 * x * x * x + (gamma + rho - 4.0) * x +
               (d + lambda(0) - gamma * z(0) - rho * y(0));
      };
      double best_x = 0.0;
      double best_v = std::numeric_limits<double>::infinity();
      for (double r : depressed_cubic_roots(pc, qc)) {
        // Two Newton polish steps on the derivative.
        for (int it = 0; it < 2; ++it) {
          const double d2 = 12.0 * r * r + (gamma + rho - 4.0);
          if (d2 <= 0.0) break;
          r -= derivative(r) / d2;
        }
        const double v = objective(r);
        if (v < best_v || (v == best_v && r < best_x)) {
          best_v = v;
          best_x = r;
        }
      }
      Vec out(1);
      out(0) = best_x;
      return out;
    };
    suite.agents.push_back(std::move(p));
    bound += -2.0 * std::abs(d);  // coarse: quartic >= 0, tilt over |x| <~ 2
  }
  suite.lower_bound = bound;
  return suite;
}

// ----------------------------------------------------------------------------
// Consensus lasso suite
// ----------------------------------------------------------------------------

SuiteInstance lasso_consensus_suite(const std::vector<Mat>& A,
                                    const std::vector<Vec>& b, double mu) {
  if (A.empty() || A.size() != b.size()) {
    throw SolverError(ErrorCode::DimMismatch, "lasso_consensus_suite: |A| != |b|");
  }
  if (mu < 0.0) {
    throw SolverError(ErrorCode::ConfigError, "lasso_consensus_suite: mu < 0");
  }
  const Eigen::Index n = A.front().cols();
  SuiteInstance suite;
  suite.name = "lasso";
  suite.convexity = ConvexityTag::Convex;
  for (std::size_t i = 0; i < A.size(); ++i) {
    if (A[i].cols() != n || A[i].rows() != b[i].size()) {
      throw SolverError(ErrorCode::DimMismatch, "lasso_consensus_suite: shapes");
    }
    const Mat Ai = A[i];
    const Vec bi = b[i];
    AgentProblem p;
    p.dim = static_cast<int>(n);
    p.value = [Ai, bi, mu](const Vec& x) {
      return 0.5 * (Ai * x - bi).squaredNorm() + mu * x.lpNorm<1>();
    };
    p.subgradient = [Ai, bi, mu](const Vec& x) -> Vec {
      Vec g = Ai.transpose() * (Ai * x - bi);
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        // Minimum-norm selection: subgradient 0 at the kink.
        if (x(j) > 0.0) g(j) += mu;
        else if (x(j) < 0.0) g(j) -= mu;
      }
      return g;
    };
    if (n == 1) {
      p.exact_local_solve = [Ai, bi, mu](const Vec& lambda, const Vec& y,
                                         const Vec& z, double rho,
                                         double gamma) -> Vec {
        const double a2 = Ai.col(0).squaredNorm();
        const double q = a2 + gamma + rho;
        const double l = -(Ai.col(0).dot(bi)) - gamma * z(0) + lambda(0) -
                         rho * y(0);
        const double v = -l;
        Vec out(1);
        out(0) = (std::abs(v) <= mu) ? 0.0
                                     : (v > 0.0 ? (v - mu) / q : (v + mu) / q);
        return out;
      };
    }
    suite.agents.push_back(std::move(p));
  }
  suite.lower_bound = 0.0;
  suite.safe_sample = [](const Vec& x) {
    return x.cwiseAbs().minCoeff() > 1e-3;
  };
  if (mu == 0.0) {
    Mat gram = Mat::Zero(n, n);
    Vec rhs = Vec::Zero(n);
    for (std::size_t i = 0; i < A.size(); ++i) {
      gram += A[i].transpose() * A[i];
      rhs += A[i].transpose() * b[i];
    }
    Eigen::LDLT<Mat> ldlt(gram);
    if (ldlt.info() == Eigen::Success) {
      Vec opt = ldlt.solve(rhs);
      if ((gram * opt - rhs).lpNorm<Eigen::Infinity>() <=
          1e-9 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
        suite.analytic_optimum = opt;
      }
    }
  }
  return suite;
}

// ----------------------------------------------------------------------------
// Grid oracle
// ----------------------------------------------------------------------------

double grid_minimize_scalar(const SuiteInstance& suite, double lo, double hi,
                            double step) {
  if (suite.dim() != 1) {
    throw SolverError(ErrorCode::DimMismatch, "grid oracle needs scalar suites");
  }
  Vec xb(1);
  auto total = [&](double x) {
    xb(0) = x;
    double s = 0.0;
    for (const AgentProblem& p : suite.agents) s += p.value(xb);
    return s;
  };
  auto slope = [&](double x) {
    xb(0) = x;
    double s = 0.0;
    for (const AgentProblem& p : suite.agents) s += p.subgradient(xb)(0);
    return s;
  };

  const auto count = static_cast<long long>(std::floor((hi - lo) / step));
  double best_x = lo;
  double best_v = total(lo);
  for (long long k = 1; k <= count; ++k) {
    const double x = lo + static_cast<double>(k) * step;
    const double v = total(x);
    if (v < best_v) {
      best_v = v;
      best_x = x;
    }
  }

  // Bisection polish on the derivative around the grid winner.
  double a = best_x - step, b = best_x + step;
  double ga = slope(a), gb = slope(b);
  if (ga > 0.0 || gb < 0.0) return best_x;  // no sign change; keep grid point
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (a + b);
    const double gm = slope(mid);
    if (gm == 0.0) return mid;
    if ((ga < 0.0) == (gm < 0.0)) {
      a = mid;
      ga = gm;
    } else {
      b = mid;
      gb = gm;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace conprox
