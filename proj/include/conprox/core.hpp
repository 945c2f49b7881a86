#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace conprox {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ============================================================================
// Errors
// ============================================================================

enum class ErrorCode {
  DimMismatch,
  NonSpd,
  OracleFailure,
  NonFinite,
  Diverged,
  NoExactOracle,
  MissingUpload,
  DuplicateUpload,
  MalformedFrame,
  ConfigError,
};

const char* to_string(ErrorCode code);

class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

bool all_finite(const Vec& v);
void require_finite(const Vec& v, const char* what);
void require_dim(const Vec& v, Eigen::Index n, const char* what);

// ============================================================================
// Small dense SPD linear algebra
// ============================================================================

/// Symmetric positive definite matrix with a cached Cholesky factorization.
///
/// Two storage forms: a dense n-by-n matrix, or a tagged scalar multiple of
/// the identity (the common B_i = rho*I case, kept exact by using scalar
/// arithmetic). Construction symmetrizes the input and, if the factorization
/// fails, retries once with a ridge of 1e-8*(1 + trace/n) added to the
/// diagonal before reporting NonSpd.
class SpdMatrix {
 public:
  static SpdMatrix scaled_identity(Eigen::Index n, double scale);
  static SpdMatrix from_dense(const Mat& a);

  Eigen::Index dim() const noexcept { return n_; }
  bool is_scaled_identity() const noexcept { return scale_.has_value(); }
  /// Scalar s with A = s*I. Only valid for the scaled-identity form.
  double scale() const;
  Mat dense() const;

  Vec apply(const Vec& v) const;     // A v
  Vec solve(const Vec& b) const;     // A^{-1} b, with iterative refinement
  double quad(const Vec& v) const;   // v' A v
  double inv_quad(const Vec& v) const;  // v' A^{-1} v
  double trace() const;

  /// A + tau*I as a new SpdMatrix (tau >= 0).
  SpdMatrix add_ridge(double tau) const;

 private:
  SpdMatrix() = default;
  void factorize();

  Eigen::Index n_ = 0;
  std::optional<double> scale_;
  Mat dense_;
  Eigen::LLT<Mat> llt_;
};

/// Solves A u = b for SPD A. Deterministic for identical inputs; the residual
/// satisfies |A u - b|_inf <= 1e-10 * (1 + |b|_inf) for desk-scale systems.
Vec spd_solve(const SpdMatrix& a, const Vec& b);

/// Sums vectors in index order, independent of any execution schedule, so
/// parallel sweeps reduce to bit-identical results.
Vec fixed_order_sum(std::span<const Vec> terms);

/// Stacks agent blocks [v_0; v_1; ...] into one vector and back.
Vec stack(const std::vector<Vec>& blocks);
std::vector<Vec> unstack(const Vec& stacked, int count);

// ============================================================================
// Domain types
// ============================================================================

/// Oracle bundle for one agent's objective f_i.
struct AgentProblem {
  int dim = 0;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> subgradient;
  /// Optional exact solve of
  ///   argmin_x f(x) + (gamma/2)|x - z|^2 + lambda'x + (rho/2)|x - y|^2.
  std::function<Vec(const Vec& lambda, const Vec& y, const Vec& z, double rho,
                    double gamma)>
      exact_local_solve;
  /// Scalar curvature of f (exact Hessian scale for quadratic objectives).
  std::optional<double> curvature_hint;

  bool has_exact_solve() const { return static_cast<bool>(exact_local_solve); }
};

double eval_value(const AgentProblem& problem, const Vec& x);
Vec eval_subgradient(const AgentProblem& problem, const Vec& x);

/// Per-sweep iterate of the lower level: local copies, the consensus
/// variable, duals, gradient surrogates and curvature models.
struct LowerState {
  std::vector<Vec> x;
  Vec y;
  std::vector<Vec> lambda;
  std::vector<Vec> g;
  std::vector<SpdMatrix> B;
  int sweep_index = 0;

  int agent_count() const { return static_cast<int>(x.size()); }
  Eigen::Index dim() const { return y.size(); }
};

/// Upper-level state: the proximal center z, the L1 penalty weights and the
/// cached merit value at z.
struct UpperState {
  Vec z;
  std::vector<double> sigma;
  int outer_index = 0;
  double merit_at_z = 0.0;
};

enum class LocalUpdate {
  LinearizedUpper,  // linearize the full proximal objective around y
  LinearizedLower,  // linearize only f, keep the proximal term exact
  FixedPoint,       // iterate the linearized-lower map a fixed number of times
  Exact,            // agent-provided (or constant-curvature) exact solve
};

enum class Method {
  CadmmProx,
  CaladinProx,
  PlainCadmm,
  PlainCaladin,
};

enum class HessianMode {
  ScaledIdentity,    // B_i = rho * I
  UserFixed,         // caller-provided B_i, constant across phases
  CurvatureRefresh,  // B_i = (curvature_hint + gamma) * I, refreshed per phase
};

struct SolverConfig {
  double gamma = 1.0;
  double rho = 1.0;
  double beta = 0.0;
  double sigma_margin = 1e-8;
  double eps_z = 1e-16;  // stopping threshold on |z+ - z|^2
  int max_outer = 500;
  int max_lower_sweeps = 100;
  LocalUpdate local_update_strategy = LocalUpdate::Exact;
  int fixed_point_inner_iters = 10;
  Method method = Method::CadmmProx;
  HessianMode hessian_mode = HessianMode::ScaledIdentity;
  int stopping_window = 1;
  double kkt_tol = 1e-6;
  std::uint64_t seed = 0;
  bool use_gamma_probe = false;
  int probe_directions = 8;
  bool parallel_local_updates = false;
  int tick_budget = 256;  // simulated-protocol upload timeout, in ticks

  bool is_plain() const {
    return method == Method::PlainCadmm || method == Method::PlainCaladin;
  }
  bool is_caladin_family() const {
    return method == Method::CaladinProx || method == Method::PlainCaladin;
  }
  /// Plain baselines carry no proximal term; prox methods use gamma.
  double effective_gamma() const { return is_plain() ? 0.0 : gamma; }

  void validate() const;  // throws ConfigError
};

const char* to_string(Method m);
const char* to_string(LocalUpdate s);
const char* to_string(HessianMode m);

}  // namespace conprox
