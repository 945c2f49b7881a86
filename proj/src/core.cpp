#include "conprox/core.hpp"

#include <cmath>
#include <sstream>

namespace conprox {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::NonSpd: return "NON_SPD";
    case ErrorCode::OracleFailure: return "ORACLE_FAILURE";
    case ErrorCode::NonFinite: return "NON_FINITE";
    case ErrorCode::Diverged: return "DIVERGED";
    case ErrorCode::NoExactOracle: return "NO_EXACT_ORACLE";
    case ErrorCode::MissingUpload: return "MISSING_UPLOAD";
    case ErrorCode::DuplicateUpload: return "DUPLICATE_UPLOAD";
    case ErrorCode::MalformedFrame: return "MALFORMED_FRAME";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
  }
  return "UNKNOWN";
}

SolverError::SolverError(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

bool all_finite(const Vec& v) { return v.allFinite(); }

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) {
    throw SolverError(ErrorCode::NonFinite,
                      std::string(what) + " has non-finite entries");
  }
}

void require_dim(const Vec& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    std::ostringstream oss;
    oss << what << ": expected dim " << n << ", got " << v.size();
    throw SolverError(ErrorCode::DimMismatch, oss.str());
  }
}

// ----------------------------------------------------------------------------
// SpdMatrix
// ----------------------------------------------------------------------------

SpdMatrix SpdMatrix::scaled_identity(Eigen::Index n, double scale) {
  if (n <= 0) {
    throw SolverError(ErrorCode::DimMismatch, "scaled_identity: n must be > 0");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw SolverError(ErrorCode::NonSpd,
                      "scaled_identity: scale must be positive and finite");
  }
  SpdMatrix m;
  m.n_ = n;
  m.scale_ = scale;
  return m;
}

SpdMatrix SpdMatrix::from_dense(const Mat& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw SolverError(ErrorCode::DimMismatch, "from_dense: matrix must be square");
  }
  if (!a.allFinite()) {
    throw SolverError(ErrorCode::NonFinite, "from_dense: non-finite entries");
  }
  SpdMatrix m;
  m.n_ = a.rows();
  m.dense_ = 0.5 * (a + a.transpose());
  m.factorize();
  return m;
}

void SpdMatrix::factorize() {
  llt_.compute(dense_);
  if (llt_.info() != Eigen::Success) {
    const double mu = 1e-8 * (1.0 + dense_.trace() / static_cast<double>(n_));
    dense_ += mu * Mat::Identity(n_, n_);
    llt_.compute(dense_);
    if (llt_.info() != Eigen::Success) {
      throw SolverError(ErrorCode::NonSpd,
                        "eigenvalue floor violated after regularization");
    }
  }
}

double SpdMatrix::scale() const {
  if (!scale_) {
    throw SolverError(ErrorCode::NonSpd, "scale() on a dense SpdMatrix");
  }
  return *scale_;
}

Mat SpdMatrix::dense() const {
  if (scale_) return *scale_ * Mat::Identity(n_, n_);
  return dense_;
}

Vec SpdMatrix::apply(const Vec& v) const {
  require_dim(v, n_, "SpdMatrix::apply");
  if (scale_) return *scale_ * v;
  return dense_ * v;
}

Vec SpdMatrix::solve(const Vec& b) const {
  require_dim(b, n_, "SpdMatrix::solve");
  if (scale_) return b / *scale_;
  Vec u = llt_.solve(b);
  const double target = 1e-12 * (1.0 + b.lpNorm<Eigen::Infinity>());
  for (int pass = 0; pass < 2; ++pass) {
    Vec r = b - dense_ * u;
    if (r.lpNorm<Eigen::Infinity>() <= target) break;
    u += llt_.solve(r);
  }
  return u;
}

double SpdMatrix::quad(const Vec& v) const {
  require_dim(v, n_, "SpdMatrix::quad");
  if (scale_) return *scale_ * v.squaredNorm();
  return v.dot(dense_ * v);
}

double SpdMatrix::inv_quad(const Vec& v) const {
  require_dim(v, n_, "SpdMatrix::inv_quad");
  if (scale_) return v.squaredNorm() / *scale_;
  return v.dot(solve(v));
}

double SpdMatrix::trace() const {
  if (scale_) return *scale_ * static_cast<double>(n_);
  return dense_.trace();
}

SpdMatrix SpdMatrix::add_ridge(double tau) const {
  if (tau < 0.0 || !std::isfinite(tau)) {
    throw SolverError(ErrorCode::NonSpd, "add_ridge: tau must be >= 0");
  }
  if (scale_) return scaled_identity(n_, *scale_ + tau);
  SpdMatrix m;
  m.n_ = n_;
  m.dense_ = dense_ + tau * Mat::Identity(n_, n_);
  m.factorize();
  return m;
}

Vec spd_solve(const SpdMatrix& a, const Vec& b) {
  require_finite(b, "spd_solve rhs");
  return a.solve(b);
}

Vec fixed_order_sum(std::span<const Vec> terms) {
  if (terms.empty()) {
    throw SolverError(ErrorCode::DimMismatch, "fixed_order_sum: empty list");
  }
  Vec acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) {
    if (terms[i].size() != acc.size()) {
      throw SolverError(ErrorCode::DimMismatch,
                        "fixed_order_sum: mixed dimensions");
    }
    acc += terms[i];
  }
  return acc;
}

Vec stack(const std::vector<Vec>& blocks) {
  Eigen::Index total = 0;
  for (const Vec& b : blocks) total += b.size();
  Vec out(total);
  Eigen::Index at = 0;
  for (const Vec& b : blocks) {
    out.segment(at, b.size()) = b;
    at += b.size();
  }
  return out;
}

std::vector<Vec> unstack(const Vec& stacked, int count) {
  if (count <= 0 || stacked.size() % count != 0) {
    throw SolverError(ErrorCode::DimMismatch, "unstack: size not divisible");
  }
  const Eigen::Index n = stacked.size() / count;
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(stacked.segment(i * n, n));
  return out;
}

// ----------------------------------------------------------------------------
// Oracles and config
// ----------------------------------------------------------------------------

double eval_value(const AgentProblem& problem, const Vec& x) {
  if (!problem.value) {
    throw SolverError(ErrorCode::OracleFailure, "missing value oracle");
  }
  const double v = problem.value(x);
  if (!std::isfinite(v)) {
    throw SolverError(ErrorCode::OracleFailure, "value oracle returned non-finite");
  }
  return v;
}

Vec eval_subgradient(const AgentProblem& problem, const Vec& x) {
  if (!problem.subgradient) {
    throw SolverError(ErrorCode::OracleFailure, "missing subgradient oracle");
  }
  Vec g = problem.subgradient(x);
  if (g.size() != x.size() || !g.allFinite()) {
    throw SolverError(ErrorCode::OracleFailure,
                      "subgradient oracle returned bad vector");
  }
  return g;
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw SolverError(ErrorCode::ConfigError, msg);
  };
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail("gamma must be > 0");
  if (!(rho > 0.0) || !std::isfinite(rho)) fail("rho must be > 0");
  if (beta < 0.0 || !std::isfinite(beta)) fail("beta must be >= 0");
  if (sigma_margin < 0.0) fail("sigma_margin must be >= 0");
  if (!(eps_z > 0.0)) fail("eps_z must be > 0");
  if (max_outer < 1) fail("max_outer must be >= 1");
  if (max_lower_sweeps < 1) fail("max_lower_sweeps must be >= 1");
  if (fixed_point_inner_iters < 1) fail("fixed_point_inner_iters must be >= 1");
  if (stopping_window < 1) fail("stopping_window must be >= 1");
  if (!(kkt_tol > 0.0)) fail("kkt_tol must be > 0");
  if (probe_directions < 1) fail("probe_directions must be >= 1");
  if (tick_budget < 1) fail("tick_budget must be >= 1");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::CadmmProx: return "cadmm-prox";
    case Method::CaladinProx: return "caladin-prox";
    case Method::PlainCadmm: return "plain-cadmm";
    case Method::PlainCaladin: return "plain-caladin";
  }
  return "?";
}

const char* to_string(LocalUpdate s) {
  switch (s) {
    case LocalUpdate::LinearizedUpper: return "lin-upper";
    case LocalUpdate::LinearizedLower: return "lin-lower";
    case LocalUpdate::FixedPoint: return "fixed-point";
    case LocalUpdate::Exact: return "exact";
  }
  return "?";
}

const char* to_string(HessianMode m) {
  switch (m) {
    case HessianMode::ScaledIdentity: return "scaled-identity";
    case HessianMode::UserFixed: return "user-fixed";
    case HessianMode::CurvatureRefresh: return "curvature-refresh";
  }
  return "?";
}

}  // namespace conprox
