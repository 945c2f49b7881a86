// Acceptance suite: end-to-end checks of the solver's contract, one printed
// pass/fail line per criterion. Exits non-zero if any criterion fails.

#include "conprox/diagnostics.hpp"
#include "conprox/globalize.hpp"
#include "conprox/harness.hpp"
#include "conprox/lower.hpp"
#include "conprox/merit.hpp"
#include "conprox/problems.hpp"
#include "conprox/simnet.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace conprox;

namespace {

Vec sv(double x) { return Vec::Constant(1, x); }

bool bits_equal(const Vec& a, const Vec& b) {
  return a.size() == b.size() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
  void note(const std::string& info) {
    if (pass && detail.empty()) detail = info;
  }
};

// Everything harvested from the suite runs, shared by criteria 3, 5 and 6.
struct RunHarvest {
  struct Run {
    std::string label;
    double gamma_eff;
    int agents;
    OuterResult result;
  };
  std::vector<Run> runs;
  long long sweeps_seen = 0;
  long long local_implication_violations = 0;
  long long consensus_implication_violations = 0;

  SolveCallbacks callbacks() {
    SolveCallbacks cb;
    cb.on_sweep = [this](int, const SweepReport& rep) {
      ++sweeps_seen;
      // The strict theorem inequalities are checked wherever their predicted
      // decrease is representable: once the step-quadratic scale falls below
      // the merit's rounding floor (values ~1e1, ulp ~1e-15), "strictly
      // drops" and "ties to the last bit" coincide in double arithmetic.
      if (rep.local_descent_ok &&
          !(rep.merit_after_local.total < rep.merit_before.total) &&
          rep.local_descent_margin >
              1e-12 * (1.0 + std::abs(rep.merit_before.total))) {
        ++local_implication_violations;
      }
      if (rep.all_consensus_descent_ok() && rep.max_delta_x_tilde() > 0.0 &&
          !(rep.merit_after.total < rep.merit_after_local.total)) {
        double predicted = 0.0;
        for (int i = 0; i < rep.state_after.agent_count(); ++i) {
          predicted += rep.state_after.B[i].quad(rep.state_after.y -
                                                 rep.state_after.x[i]);
        }
        if (predicted >
            1e-12 * (1.0 + std::abs(rep.merit_after_local.total))) {
          ++consensus_implication_violations;
        }
      }
    };
    return cb;
  }

  void record(std::string label, const SolverConfig& cfg, int agents,
              OuterResult result) {
    runs.push_back(
        {std::move(label), cfg.effective_gamma(), agents, std::move(result)});
  }
};

SuiteInstance random_suite(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int kind = static_cast<int>(rng() % 3);
  if (kind == 0) {
    const int n = 1 + static_cast<int>(rng() % 3);
    const int agents = 1 + static_cast<int>(rng() % 4);
    std::vector<double> a;
    std::vector<Vec> c;
    for (int i = 0; i < agents; ++i) {
      a.push_back(0.5 + 2.0 * uni(rng));
      c.push_back(Vec::NullaryExpr(n, [&](Eigen::Index) { return 4.0 * uni(rng) - 2.0; }));
    }
    return quadratic_suite(a, c);
  }
  if (kind == 1) {
    const int agents = 1 + static_cast<int>(rng() % 4);
    std::vector<double> d;
    for (int i = 0; i < agents; ++i) d.push_back(uni(rng) - 0.5);
    return double_well_suite(d);
  }
  const int agents = 1 + static_cast<int>(rng() % 3);
  std::vector<Mat> A;
  std::vector<Vec> b;
  const int n = 1 + static_cast<int>(rng() % 2);
  const int m = n + 1;
  for (int i = 0; i < agents; ++i) {
    A.push_back(Mat::NullaryExpr(m, n, [&](Eigen::Index, Eigen::Index) {
      return 2.0 * uni(rng) - 1.0;
    }));
    b.push_back(Vec::NullaryExpr(m, [&](Eigen::Index) { return 2.0 * uni(rng) - 1.0; }));
  }
  return lasso_consensus_suite(A, b, 0.1 + 0.3 * uni(rng));
}

// --------------------------------------------------------------------------
// criterion 1: merit identity, exact to the bit
// --------------------------------------------------------------------------
Outcome criterion_merit_identity() {
  Outcome out;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const SuiteInstance suite = random_suite(rng);
    const Vec z = Vec::NullaryExpr(suite.dim(), [&](Eigen::Index) {
      return 4.0 * uni(rng) - 2.0;
    });
    std::vector<double> sigma;
    for (int i = 0; i < suite.agent_count(); ++i) sigma.push_back(3.0 * uni(rng));
    const double gamma = 0.2 + 4.0 * uni(rng);
    const MeritBreakdown m =
        merit_at_consensus(suite.agents, z, z, sigma, gamma);
    double direct = 0.0;
    for (const AgentProblem& p : suite.agents) direct += p.value(z);
    if (m.total != direct) {
      out.fail("mismatch on trial " + std::to_string(trial));
      break;
    }
  }
  out.note("100 seeded (suite, z) pairs, exact equality");
  return out;
}

// --------------------------------------------------------------------------
// criterion 2: numeric directional derivative vs the closed form
// --------------------------------------------------------------------------
Outcome criterion_lemma_agreement() {
  Outcome out;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double t_min = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 3);
    const int agents = 1 + static_cast<int>(rng() % 5);
    std::vector<double> a;
    std::vector<Vec> c;
    for (int i = 0; i < agents; ++i) {
      a.push_back(0.5 + 2.0 * uni(rng));
      c.push_back(Vec::NullaryExpr(n, [&](Eigen::Index) { return 3.0 * uni(rng) - 1.5; }));
    }
    const SuiteInstance suite = quadratic_suite(a, c);

    SolverConfig cfg;
    cfg.method = Method::CaladinProx;
    cfg.local_update_strategy = LocalUpdate::Exact;
    cfg.gamma = 0.5 + 1.5 * uni(rng);
    cfg.rho = 0.5 + 1.5 * uni(rng);

    UpperState upper;
    upper.z = Vec::NullaryExpr(n, [&](Eigen::Index) { return 3.0 * uni(rng) - 1.5; });
    for (int i = 0; i < agents; ++i) upper.sigma.push_back(2.0 * uni(rng));
    upper.merit_at_z =
        merit_at_consensus(suite.agents, upper.z, upper.z, upper.sigma, cfg.gamma)
            .total;

    const SweepReport rep =
        sweep(init_lower_state(suite.agents, cfg, upper.z), suite.agents, cfg,
              upper);
    const Vec y_plus = rep.state_after.y;
    const double formula =
        consensus_directional_derivative(rep.state_after, upper.sigma, y_plus);

    std::vector<Vec> direction_blocks;
    for (int i = 0; i < agents; ++i) {
      direction_blocks.push_back(y_plus - rep.state_after.x[i]);
    }
    auto phi = [&](const Vec& stacked) {
      return merit(suite.agents, unstack(stacked, agents), y_plus, upper.z,
                   upper.sigma, cfg.gamma)
          .total;
    };
    const auto numeric = directional_derivative_numeric(
        phi, stack(rep.state_after.x), stack(direction_blocks));

    const double tol = 10.0 * t_min * (1.0 + std::abs(numeric.value));
    if (!(std::abs(numeric.value - formula) <= tol)) {
      std::ostringstream oss;
      oss << "trial " << trial << ": numeric " << numeric.value << " vs formula "
          << formula;
      out.fail(oss.str());
      break;
    }
  }
  out.note("50 smooth seeded instances, tol 10*t_min*(1+|value|)");
  return out;
}

// --------------------------------------------------------------------------
// criterion 4: Lyapunov decrease over 200 sweeps, both curvature shapes
// --------------------------------------------------------------------------
Outcome criterion_lyapunov() {
  Outcome out;
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int n = 2, agents = 3, sweeps = 200;

  std::vector<double> a;
  std::vector<Vec> c;
  for (int i = 0; i < agents; ++i) {
    a.push_back(0.5 + 1.5 * uni(rng));
    c.push_back(Vec::NullaryExpr(n, [&](Eigen::Index) { return 3.0 * uni(rng) - 1.5; }));
  }
  const SuiteInstance suite = quadratic_suite(a, c);

  SolverConfig cfg;
  cfg.method = Method::CaladinProx;
  cfg.local_update_strategy = LocalUpdate::Exact;
  cfg.gamma = 1.0;
  cfg.rho = 1.0;
  cfg.beta = 0.0;

  const Vec z = Vec::NullaryExpr(n, [&](Eigen::Index) { return 2.0 * uni(rng) - 1.0; });
  UpperState upper;
  upper.z = z;
  upper.sigma.assign(agents, 0.0);
  upper.merit_at_z =
      merit_at_consensus(suite.agents, z, z, upper.sigma, cfg.gamma).total;

  Vec ac = Vec::Zero(n);
  double a_sum = 0.0;
  for (int i = 0; i < agents; ++i) {
    ac += a[i] * c[i];
    a_sum += a[i];
  }
  const Vec y_star =
      (ac + cfg.gamma * static_cast<double>(agents) * z) /
      (a_sum + cfg.gamma * static_cast<double>(agents));
  const ReferenceSolution ref =
      make_analytic_reference(suite.agents, y_star, cfg.gamma, z);

  auto run_case = [&](const std::vector<SpdMatrix>* B,
                      const std::string& label) {
    LowerState state = init_lower_state(suite.agents, cfg, z, B);
    DirectSweepExecutor exec(suite.agents, cfg);
    exec.begin_phase(state, upper);
    std::vector<LowerState> trace = {state};
    for (int k = 0; k < sweeps; ++k) {
      state = exec.run_sweep(state, upper).state_after;
      trace.push_back(state);
    }
    const auto check = lyapunov_decrease_check(trace, ref, suite.is_convex());
    for (std::size_t j = 0; j + 1 < check.values.size(); ++j) {
      if (!(check.differences[j] <= 1e-10 * (1.0 + check.values[j]))) {
        std::ostringstream oss;
        oss << label << ": increase at sweep " << j << " by "
            << check.differences[j];
        out.fail(oss.str());
        return;
      }
    }
  };

  run_case(nullptr, "B = rho I");

  std::vector<SpdMatrix> random_B;
  for (int i = 0; i < agents; ++i) {
    Mat m = Mat::NullaryExpr(n, n, [&](Eigen::Index, Eigen::Index) {
      return uni(rng) - 0.5;
    });
    random_B.push_back(
        SpdMatrix::from_dense(m * m.transpose() + 1.0 * Mat::Identity(n, n)));
  }
  run_case(&random_B, "random SPD B");

  out.note("200 sweeps, exact local solves, both curvature shapes");
  return out;
}

// --------------------------------------------------------------------------
// criterion 7: QP consensus -> averaging consensus reduction
// --------------------------------------------------------------------------
Outcome criterion_reduction() {
  Outcome out;
  std::mt19937_64 rng(707);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int agents = 1 + static_cast<int>(rng() % 6);
    const double rho = 0.25 + std::abs(normal(rng));
    const double beta = (trial % 4 == 0) ? 0.0 : std::abs(normal(rng));
    LowerState s;
    s.y = Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    const Vec y_prev =
        Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    for (int i = 0; i < agents; ++i) {
      s.x.push_back(Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); }));
      s.g.push_back(Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); }));
      s.lambda.push_back(-s.g.back());
      s.B.push_back(SpdMatrix::scaled_identity(n, rho));
    }
    const Vec via_qp = consensus_update_aladin(s, beta, y_prev);
    const Vec via_avg = consensus_update_admm(s, rho, beta, y_prev);
    const double gap = (via_qp - via_avg).lpNorm<Eigen::Infinity>();
    if (!(gap <= 1e-12)) {
      out.fail("gap " + std::to_string(gap) + " on trial " + std::to_string(trial));
      break;
    }
  }
  out.note("100 seeded states, |gap|_inf <= 1e-12");
  return out;
}

// --------------------------------------------------------------------------
// criterion 8: four methods on the pinned quadratic suite
// --------------------------------------------------------------------------
Outcome criterion_quadratic_methods(RunHarvest& harvest) {
  Outcome out;
  const SuiteInstance suite = quadratic_suite({1.0, 3.0}, {sv(0.0), sv(4.0)});
  for (const Method method :
       {Method::CadmmProx, Method::CaladinProx, Method::PlainCadmm,
        Method::PlainCaladin}) {
    SolverConfig cfg;
    cfg.method = method;
    cfg.local_update_strategy = LocalUpdate::Exact;
    cfg.gamma = 1.0;
    cfg.rho = 1.0;
    cfg.max_outer = 500;

    std::vector<double> dists;
    SolveCallbacks cb = harvest.callbacks();
    auto outer_hook = [&](int, const UpperState& u, double, bool) {
      dists.push_back(std::abs(u.z(0) - 3.0));
    };
    cb.on_outer_step = outer_hook;
    const OuterResult result = solve(suite.agents, cfg, sv(0.0), &cb);
    harvest.record(std::string("quadratic/") + to_string(method), cfg, 2,
                   result);

    if (!result.succeeded()) {
      out.fail(std::string(to_string(method)) + ": " +
               to_string(result.status));
      continue;
    }
    if (!(std::abs(result.z_star(0) - 3.0) <= 1e-6)) {
      out.fail(std::string(to_string(method)) + ": z* off by " +
               std::to_string(std::abs(result.z_star(0) - 3.0)));
    }
    if (result.outer_iterations > 500) {
      out.fail(std::string(to_string(method)) + ": too many outer iterations");
    }
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < dists.size(); ++k) {
      if (dists[k] > 1e-7) worst = std::max(worst, dists[k + 1] / dists[k]);
    }
    if (!(worst < 1.0)) {
      out.fail(std::string(to_string(method)) + ": contraction ratio " +
               std::to_string(worst));
    }
  }
  out.note("z* = 3 +- 1e-6, <= 500 outer, contraction < 1, all four methods");
  return out;
}

// --------------------------------------------------------------------------
// criterion 9: double-well landing plus critical-point classification
// --------------------------------------------------------------------------
Outcome criterion_double_well(RunHarvest& harvest) {
  Outcome out;
  const SuiteInstance suite = double_well_suite({0.0, 0.0, 0.0});
  SolverConfig cfg;
  cfg.method = Method::CadmmProx;
  cfg.local_update_strategy = LocalUpdate::Exact;
  cfg.gamma = 6.0;  // convexifies the proximal lower level (f'' >= -4)
  cfg.rho = 1.0;

  SolveCallbacks cb = harvest.callbacks();
  const OuterResult result = solve(suite.agents, cfg, sv(0.9), &cb);
  harvest.record("doublewell/cadmm-prox", cfg, 3, result);

  if (!result.succeeded()) {
    out.fail(std::string("solve: ") + to_string(result.status));
    return out;
  }
  // Grid-search oracle over the basin entered from z0 = 0.9.
  const double grid_opt = grid_minimize_scalar(suite, 0.0, 3.0);
  if (!(std::abs(grid_opt - 1.0) <= 1e-6)) {
    out.fail("grid oracle drifted from the known minimizer");
  }
  if (!(std::abs(result.z_star(0) - grid_opt) <= 1e-4)) {
    out.fail("z* off the grid optimum by " +
             std::to_string(std::abs(result.z_star(0) - grid_opt)));
  }

  const auto at_optimum =
      classify_critical_point(suite.agents, cfg, result.z_star, 8);
  if (at_optimum.label != CriticalPointVerdict::Label::LocalMinimizer) {
    out.fail("optimum misclassified");
  }
  if (at_optimum.trials < 8) out.fail("too few trials at the optimum");

  const auto at_hilltop = classify_critical_point(suite.agents, cfg, sv(0.0), 8);
  if (at_hilltop.label != CriticalPointVerdict::Label::SaddleOrOther) {
    out.fail("forced critical point 0 misclassified");
  }
  if (!at_hilltop.escaped_to.has_value()) {
    out.fail("no escape point recorded");
  } else if (!(std::abs(std::abs((*at_hilltop.escaped_to)(0)) - 1.0) <= 1e-3)) {
    out.fail("escape did not reach a well");
  }
  out.note("z0 = 0.9 lands at the grid optimum; classification 8 trials each");
  return out;
}

// --------------------------------------------------------------------------
// criterion 10: all four local-update strategies agree, one-step reduction
// --------------------------------------------------------------------------
Outcome criterion_strategies(RunHarvest& harvest) {
  Outcome out;
  const SuiteInstance suite = quadratic_suite({1.0, 3.0}, {sv(0.0), sv(4.0)});
  for (const Method method : {Method::CadmmProx, Method::CaladinProx}) {
    for (const LocalUpdate strategy :
         {LocalUpdate::LinearizedUpper, LocalUpdate::LinearizedLower,
          LocalUpdate::FixedPoint, LocalUpdate::Exact}) {
      SolverConfig cfg;
      cfg.method = method;
      cfg.local_update_strategy = strategy;
      cfg.gamma = 1.0;
      cfg.rho = 4.0;  // dominates the largest objective curvature
      cfg.fixed_point_inner_iters = 20;

      SolveCallbacks cb = harvest.callbacks();
      const OuterResult result = solve(suite.agents, cfg, sv(0.0), &cb);
      harvest.record(std::string("strategies/") + to_string(method) + "/" +
                         to_string(strategy),
                     cfg, 2, result);
      const std::string tag =
          std::string(to_string(method)) + "+" + to_string(strategy);
      if (!(std::abs(result.z_star(0) - 3.0) <= 1e-6)) {
        out.fail(tag + ": z* off by " +
                 std::to_string(std::abs(result.z_star(0) - 3.0)));
      }
      // The consensus-QP method with stale-gradient linearization has a
      // marginal dual recursion at the optimum (period two, eigenvalue -1):
      // its final phase cannot certify consensus even though z has settled.
      // Every other combination must terminate cleanly.
      const bool marginal_dual_combo =
          method == Method::CaladinProx &&
          strategy == LocalUpdate::LinearizedUpper;
      if (!result.succeeded() && !marginal_dual_combo) {
        out.fail(tag + ": " + to_string(result.status));
      }
    }
  }

  // One fixed-point pass reproduces the linearized-lower kernel bit for bit.
  std::mt19937_64 rng(1010);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 3);
    std::vector<double> a = {0.5 + std::abs(normal(rng))};
    std::vector<Vec> c = {
        Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); })};
    const SuiteInstance q = quadratic_suite(a, c);
    const Vec y = Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    const Vec z = Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    const Vec l = Vec::NullaryExpr(n, [&](Eigen::Index) { return normal(rng); });
    const auto B = SpdMatrix::scaled_identity(n, 0.5 + std::abs(normal(rng)));
    const double gamma = 0.5 + std::abs(normal(rng));
    const Vec one = local_update_fixed_point(q.agents[0], y, z, l, B, gamma, 1);
    const Vec lin = local_update_linearized_lower(q.agents[0], y, z, l, B, gamma);
    if (!bits_equal(one, lin)) {
      out.fail("one-step fixed point differs from linearized-lower");
      break;
    }
  }
  out.note("8 method/strategy pairs to z* = 3 +- 1e-6; iters=1 bitwise check");
  return out;
}

// --------------------------------------------------------------------------
// criterion 3/5/6 over everything harvested
// --------------------------------------------------------------------------
Outcome criterion_descent_implications(const RunHarvest& harvest) {
  Outcome out;
  if (harvest.sweeps_seen == 0) out.fail("no sweeps recorded");
  if (harvest.local_implication_violations != 0) {
    out.fail(std::to_string(harvest.local_implication_violations) +
             " local-step violations");
  }
  if (harvest.consensus_implication_violations != 0) {
    out.fail(std::to_string(harvest.consensus_implication_violations) +
             " consensus-step violations");
  }
  out.note("zero violations over " + std::to_string(harvest.sweeps_seen) +
           " sweeps");
  return out;
}

Outcome criterion_accepted_gap(const RunHarvest& harvest) {
  Outcome out;
  long long accepted = 0;
  for (const auto& run : harvest.runs) {
    const auto& r = run.result;
    for (std::size_t j = 0; j < r.z_step_squares.size(); ++j) {
      if (!r.step_accepted[j]) continue;
      ++accepted;
      const double drop = r.merit_trajectory[j] - r.merit_trajectory[j + 1];
      const double gap = 0.5 * run.gamma_eff *
                         static_cast<double>(run.agents) * r.z_step_squares[j];
      if (!(drop > gap - 1e-12)) {
        out.fail(run.label + ": step " + std::to_string(j));
      }
    }
  }
  if (accepted == 0) out.fail("no accepted steps recorded");
  out.note("every accepted step over " + std::to_string(accepted) +
           " z moves");
  return out;
}

Outcome criterion_telescoping(const RunHarvest& harvest) {
  Outcome out;
  for (const auto& run : harvest.runs) {
    const auto check =
        telescoping_monitor(run.result, run.gamma_eff, run.agents);
    if (!check.ok) out.fail(run.label);
  }
  out.note("every prefix of " + std::to_string(harvest.runs.size()) + " runs");
  return out;
}

// --------------------------------------------------------------------------
// criterion 11: protocol equivalence and fault behaviour
// --------------------------------------------------------------------------
Outcome criterion_protocol(RunHarvest& harvest) {
  Outcome out;
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    harness::ExperimentSpec spec;
    const bool well = (trial % 2 == 1);
    spec.suite_spec = well ? "doublewell:d=0,0,0" : "quadratic:a=1,3;c=0,4";
    spec.solver.method =
        (trial % 4 < 2) ? Method::CadmmProx : Method::CaladinProx;
    if (trial % 5 == 0) spec.solver.method = Method::PlainCadmm;
    if (well && spec.solver.method == Method::PlainCadmm) {
      spec.solver.method = Method::CadmmProx;  // keep plain runs convex
    }
    spec.solver.local_update_strategy = LocalUpdate::Exact;
    spec.solver.gamma = well ? 6.0 : 0.5 + 1.5 * uni(rng);
    spec.solver.rho = 0.5 + 1.5 * uni(rng);
    spec.solver.max_outer = 60;
    spec.solver.seed = 900 + static_cast<std::uint64_t>(trial);
    spec.z0 = sv(well ? 0.9 : 2.0 * uni(rng) - 1.0);

    harness::ExperimentSpec via = spec;
    via.via_protocol = true;
    const harness::RunRecord direct = harness::run_experiment(spec);
    const harness::RunRecord protocol = harness::run_experiment(via);

    bool same = bits_equal(direct.result.z_star, protocol.result.z_star) &&
                direct.result.merit_trajectory ==
                    protocol.result.merit_trajectory &&
                direct.result.z_step_squares == protocol.result.z_step_squares &&
                direct.result.status == protocol.result.status &&
                direct.trace.size() == protocol.trace.size();
    if (same) {
      for (std::size_t r = 0; r < direct.trace.size(); ++r) {
        const auto& a = direct.trace[r];
        const auto& b = protocol.trace[r];
        if (a.merit_total != b.merit_total || a.merit_smooth != b.merit_smooth ||
            a.merit_penalty != b.merit_penalty || a.z_step_sq != b.z_step_sq ||
            a.lyapunov != b.lyapunov ||
            a.max_kkt_residual != b.max_kkt_residual ||
            a.sigma_max != b.sigma_max ||
            a.local_descent_ok != b.local_descent_ok ||
            a.consensus_descent_ok != b.consensus_descent_ok) {
          same = false;
          break;
        }
      }
    }
    if (!same) {
      out.fail("trajectory mismatch on trial " + std::to_string(trial));
      break;
    }
    harvest.record("protocol/" + spec.suite_spec, spec.solver,
                   well ? 3 : 2, direct.result);
  }

  // Fault injection: a silent agent must raise MISSING_UPLOAD and leave the
  // master's consensus state untouched.
  {
    const SuiteInstance suite = quadratic_suite({1.0, 3.0}, {sv(0.0), sv(4.0)});
    SolverConfig cfg;
    cfg.method = Method::CaladinProx;
    cfg.local_update_strategy = LocalUpdate::Exact;
    cfg.tick_budget = 16;
    UpperState upper;
    upper.z = sv(0.0);
    upper.sigma = {0.0, 0.0};
    upper.merit_at_z = -1e300;  // acceptance can never fire in this probe

    simnet::FaultPlan faults;
    faults.silent_agent = 0;
    faults.silent_from_round = 1;
    simnet::ProtocolSweepExecutor exec(suite.agents, cfg,
                                       simnet::DeliveryOrder::SeededShuffle,
                                       faults);
    exec.begin_phase(init_lower_state(suite.agents, cfg, upper.z), upper);
    (void)exec.run_round(upper);
    const Vec y_before = exec.snapshot().y;
    bool threw = false;
    try {
      (void)exec.run_round(upper);
    } catch (const SolverError& e) {
      threw = (e.code() == ErrorCode::MissingUpload);
    }
    if (!threw) out.fail("silent agent did not raise MISSING_UPLOAD");
    if (!bits_equal(exec.snapshot().y, y_before)) {
      out.fail("master state moved on a failed round");
    }
  }
  out.note("20 seeded runs bitwise equal; fault path clean");
  return out;
}

// --------------------------------------------------------------------------
// criterion 12: snapshot-driven byte reproducibility
// --------------------------------------------------------------------------
Outcome criterion_reproducibility() {
  Outcome out;
  namespace fs = std::filesystem;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
  };

  const std::vector<std::map<std::string, std::string>> configs = {
      {{"suite", "quadratic:a=1,3;c=0,4"},
       {"method", "cadmm-prox"},
       {"seed", "5"}},
      {{"suite", "doublewell:d=0.1,-0.05,0"},
       {"method", "caladin-prox"},
       {"gamma", "6"},
       {"z0", "0.9"},
       {"seed", "6"}},
      {{"suite", "lasso:N=2;n=2;m=3;mu=0.1;seed=7"},
       {"method", "cadmm-prox"},
       {"local_update", "lin-lower"},
       {"rho", "4"},
       {"max_outer", "80"},
       {"via_protocol", "1"}},
  };

  int idx = 0;
  for (const auto& kv : configs) {
    const auto dir_a =
        fs::temp_directory_path() / ("conprox_acc_a" + std::to_string(idx));
    const auto dir_b =
        fs::temp_directory_path() / ("conprox_acc_b" + std::to_string(idx));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    const harness::RunRecord first =
        harness::run_experiment(harness::spec_from_map(kv));
    harness::write_run_outputs(first, dir_a);

    std::ifstream snap(dir_a / "config_snapshot");
    const harness::RunRecord second = harness::run_experiment(
        harness::spec_from_map(harness::read_flat_config(snap)));
    harness::write_run_outputs(second, dir_b);

    if (slurp(dir_a / "trace.csv") != slurp(dir_b / "trace.csv")) {
      out.fail("trace bytes differ for config " + std::to_string(idx));
    }
    if (slurp(dir_a / "result.json") != slurp(dir_b / "result.json")) {
      out.fail("result bytes differ for config " + std::to_string(idx));
    }
    ++idx;
  }
  out.note("3 configs re-run from their snapshots, byte-identical outputs");
  return out;
}

}  // namespace

int main() {
  RunHarvest harvest;
  struct Row {
    int id;
    const char* label;
    Outcome outcome;
  };
  std::vector<Row> rows;

  rows.push_back({1, "merit identity at consensus", criterion_merit_identity()});
  rows.push_back({2, "directional-derivative agreement", criterion_lemma_agreement()});
  // 8..10 run first so 3, 5, 6 can audit their sweeps and trajectories.
  const Outcome c8 = criterion_quadratic_methods(harvest);
  const Outcome c9 = criterion_double_well(harvest);
  const Outcome c10 = criterion_strategies(harvest);
  const Outcome c11 = criterion_protocol(harvest);
  rows.push_back({3, "descent conditions imply merit drops",
                  criterion_descent_implications(harvest)});
  rows.push_back({4, "Lyapunov decrease on the convex lower level",
                  criterion_lyapunov()});
  rows.push_back({5, "accepted-step merit gap", criterion_accepted_gap(harvest)});
  rows.push_back({6, "telescoping prefix bound", criterion_telescoping(harvest)});
  rows.push_back({7, "consensus kernel reduction", criterion_reduction()});
  rows.push_back({8, "quadratic suite, all four methods", c8});
  rows.push_back({9, "double-well landing and classification", c9});
  rows.push_back({10, "local-update strategy variants", c10});
  rows.push_back({11, "protocol equivalence and faults", c11});
  rows.push_back({12, "snapshot reproducibility", criterion_reproducibility()});

  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.id < b.id; });
  int failures = 0;
  for (const Row& row : rows) {
    const bool pass = row.outcome.pass;
    failures += pass ? 0 : 1;
    std::printf("criterion %2d %s  %s%s%s\n", row.id, pass ? "PASS" : "FAIL",
                row.label, row.outcome.detail.empty() ? "" : " — ",
                row.outcome.detail.c_str());
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 12 criteria passed\n");
  return 0;
}
