#include "conprox/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace conprox::harness {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream iss(s);
  while (std::getline(iss, item, sep)) out.push_back(item);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SolverError(ErrorCode::ConfigError, what + ": bad number '" + s + "'");
  }
}

long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SolverError(ErrorCode::ConfigError, what + ": bad integer '" + s + "'");
  }
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw SolverError(ErrorCode::ConfigError, what + ": bad boolean '" + s + "'");
}

std::vector<double> parse_double_list(const std::string& s,
                                      const std::string& what) {
  std::vector<double> out;
  for (const std::string& tok : split(s, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    out.push_back(parse_double(t, what));
  }
  if (out.empty()) {
    throw SolverError(ErrorCode::ConfigError, what + ": empty list");
  }
  return out;
}

Vec parse_vec(const std::string& s, const std::string& what) {
  const std::vector<double> vals = parse_double_list(s, what);
  Vec v(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

Method method_from_string(const std::string& s) {
  if (s == "cadmm-prox") return Method::CadmmProx;
  if (s == "caladin-prox") return Method::CaladinProx;
  if (s == "plain-cadmm") return Method::PlainCadmm;
  if (s == "plain-caladin") return Method::PlainCaladin;
  throw SolverError(ErrorCode::ConfigError, "unknown method '" + s + "'");
}

LocalUpdate local_update_from_string(const std::string& s) {
  if (s == "lin-upper") return LocalUpdate::LinearizedUpper;
  if (s == "lin-lower") return LocalUpdate::LinearizedLower;
  if (s == "fixed-point") return LocalUpdate::FixedPoint;
  if (s == "exact") return LocalUpdate::Exact;
  throw SolverError(ErrorCode::ConfigError, "unknown local update '" + s + "'");
}

HessianMode hessian_from_string(const std::string& s) {
  if (s == "scaled-identity") return HessianMode::ScaledIdentity;
  if (s == "user-fixed") return HessianMode::UserFixed;
  if (s == "curvature-refresh") return HessianMode::CurvatureRefresh;
  throw SolverError(ErrorCode::ConfigError, "unknown hessian mode '" + s + "'");
}

std::string format_bool(bool v) { return v ? "1" : "0"; }

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ----------------------------------------------------------------------------
// Flat configuration
// ----------------------------------------------------------------------------

std::map<std::string, std::string> read_flat_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SolverError(ErrorCode::ConfigError,
                        "config line " + std::to_string(line_no) +
                            ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw SolverError(ErrorCode::ConfigError,
                        "config line " + std::to_string(line_no) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

ExperimentSpec spec_from_map(const std::map<std::string, std::string>& kv) {
  ExperimentSpec spec;
  SolverConfig& s = spec.solver;
  for (const auto& [key, value] : kv) {
    if (key == "suite") spec.suite_spec = value;
    else if (key == "method") s.method = method_from_string(value);
    else if (key == "local_update") s.local_update_strategy = local_update_from_string(value);
    else if (key == "hessian_mode") s.hessian_mode = hessian_from_string(value);
    else if (key == "gamma") s.gamma = parse_double(value, key);
    else if (key == "rho") s.rho = parse_double(value, key);
    else if (key == "beta") s.beta = parse_double(value, key);
    else if (key == "sigma_margin") s.sigma_margin = parse_double(value, key);
    else if (key == "eps_z") s.eps_z = parse_double(value, key);
    else if (key == "kkt_tol") s.kkt_tol = parse_double(value, key);
    else if (key == "max_outer") s.max_outer = static_cast<int>(parse_int(value, key));
    else if (key == "max_lower") s.max_lower_sweeps = static_cast<int>(parse_int(value, key));
    else if (key == "fixed_point_iters") s.fixed_point_inner_iters = static_cast<int>(parse_int(value, key));
    else if (key == "stopping_window") s.stopping_window = static_cast<int>(parse_int(value, key));
    else if (key == "probe_directions") s.probe_directions = static_cast<int>(parse_int(value, key));
    else if (key == "tick_budget") s.tick_budget = static_cast<int>(parse_int(value, key));
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(parse_int(value, key));
    else if (key == "gamma_probe") s.use_gamma_probe = parse_bool(value, key);
    else if (key == "parallel_local") s.parallel_local_updates = parse_bool(value, key);
    else if (key == "via_protocol") spec.via_protocol = parse_bool(value, key);
    else if (key == "z0") spec.z0 = parse_vec(value, key);
    else {
      throw SolverError(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
  }
  s.validate();
  return spec;
}

std::map<std::string, std::string> ExperimentSpec::snapshot() const {
  std::map<std::string, std::string> kv;
  kv["suite"] = suite_spec;
  kv["method"] = to_string(solver.method);
  kv["local_update"] = to_string(solver.local_update_strategy);
  kv["hessian_mode"] = to_string(solver.hessian_mode);
  kv["gamma"] = format_double(solver.gamma);
  kv["rho"] = format_double(solver.rho);
  kv["beta"] = format_double(solver.beta);
  kv["sigma_margin"] = format_double(solver.sigma_margin);
  kv["eps_z"] = format_double(solver.eps_z);
  kv["kkt_tol"] = format_double(solver.kkt_tol);
  kv["max_outer"] = std::to_string(solver.max_outer);
  kv["max_lower"] = std::to_string(solver.max_lower_sweeps);
  kv["fixed_point_iters"] = std::to_string(solver.fixed_point_inner_iters);
  kv["stopping_window"] = std::to_string(solver.stopping_window);
  kv["probe_directions"] = std::to_string(solver.probe_directions);
  kv["tick_budget"] = std::to_string(solver.tick_budget);
  kv["seed"] = std::to_string(solver.seed);
  kv["gamma_probe"] = format_bool(solver.use_gamma_probe);
  kv["parallel_local"] = format_bool(solver.parallel_local_updates);
  kv["via_protocol"] = format_bool(via_protocol);
  if (z0) {
    std::string joined;
    for (Eigen::Index i = 0; i < z0->size(); ++i) {
      if (i > 0) joined += ',';
      joined += format_double((*z0)(i));
    }
    kv["z0"] = joined;
  }
  return kv;
}

// ----------------------------------------------------------------------------
// Suites by name
// ----------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_suite_params(const std::string& text) {
  std::map<std::string, std::string> params;
  for (const std::string& part : split(text, ';')) {
    const std::string p = trim(part);
    if (p.empty()) continue;
    const auto eq = p.find('=');
    if (eq == std::string::npos) {
      throw SolverError(ErrorCode::ConfigError,
                        "suite parameter '" + p + "' is not key=value");
    }
    params[trim(p.substr(0, eq))] = trim(p.substr(eq + 1));
  }
  return params;
}

SuiteInstance make_broken_suite() {
  SuiteInstance suite;
  suite.name = "broken";
  suite.convexity = ConvexityTag::StronglyConvex;
  AgentProblem p;
  p.dim = 1;
  p.value = [](const Vec& x) { return x(0) * x(0); };
  p.subgradient = [](const Vec& x) -> Vec { return Vec::Zero(x.size()); };
  suite.agents.push_back(std::move(p));
  suite.lower_bound = 0.0;
  return suite;
}

}  // namespace

SuiteInstance make_suite(const std::string& suite_spec, std::uint64_t seed) {
  const auto colon = suite_spec.find(':');
  const std::string name = trim(suite_spec.substr(0, colon));
  const auto params = parse_suite_params(
      colon == std::string::npos ? "" : suite_spec.substr(colon + 1));
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
  };

  if (name == "quadratic") {
    const std::string* a = get("a");
    const std::string* c = get("c");
    if (!a || !c) {
      throw SolverError(ErrorCode::ConfigError, "quadratic needs a= and c=");
    }
    std::vector<Vec> centers;
    for (const std::string& tok : split(*c, ',')) {
      std::vector<double> comps;
      for (const std::string& n : split(trim(tok), ' ')) {
        if (!trim(n).empty()) comps.push_back(parse_double(trim(n), "c"));
      }
      Vec v(static_cast<Eigen::Index>(comps.size()));
      for (std::size_t i = 0; i < comps.size(); ++i) v(i) = comps[i];
      centers.push_back(std::move(v));
    }
    return quadratic_suite(parse_double_list(*a, "a"), centers);
  }

  if (name == "doublewell" || name == "double-well") {
    const std::string* d = get("d");
    if (!d) throw SolverError(ErrorCode::ConfigError, "doublewell needs d=");
    return double_well_suite(parse_double_list(*d, "d"));
  }

  if (name == "lasso") {
    const double mu = get("mu") ? parse_double(*get("mu"), "mu") : 0.1;
    if (get("A") && get("b")) {  // explicit scalar agents
      const auto as = parse_double_list(*get("A"), "A");
      const auto bs = parse_double_list(*get("b"), "b");
      if (as.size() != bs.size()) {
        throw SolverError(ErrorCode::ConfigError, "lasso: |A| != |b|");
      }
      std::vector<Mat> A;
      std::vector<Vec> b;
      for (std::size_t i = 0; i < as.size(); ++i) {
        A.push_back(Mat::Constant(1, 1, as[i]));
        b.push_back(Vec::Constant(1, bs[i]));
      }
      return lasso_consensus_suite(A, b, mu);
    }
    const int N = get("N") ? static_cast<int>(parse_int(*get("N"), "N")) : 2;
    const int n = get("n") ? static_cast<int>(parse_int(*get("n"), "n")) : 2;
    const int m = get("m") ? static_cast<int>(parse_int(*get("m"), "m")) : 4;
    const std::uint64_t instance_seed =
        get("seed") ? static_cast<std::uint64_t>(parse_int(*get("seed"), "seed"))
                    : seed;
    if (N < 1 || n < 1 || m < 1) {
      throw SolverError(ErrorCode::ConfigError, "lasso: N, n, m must be >= 1");
    }
    std::mt19937_64 rng(instance_seed ^ 0x1a5a5a5a5ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Mat> A;
    std::vector<Vec> b;
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int i = 0; i < N; ++i) {
      Mat Ai(m, n);
      for (int r = 0; r < m; ++r)
        for (int cidx = 0; cidx < n; ++cidx) Ai(r, cidx) = scale * normal(rng);
      Vec bi(m);
      for (int r = 0; r < m; ++r) bi(r) = normal(rng);
      A.push_back(std::move(Ai));
      b.push_back(std::move(bi));
    }
    return lasso_consensus_suite(A, b, mu);
  }

  if (name == "broken") return make_broken_suite();

  throw SolverError(ErrorCode::ConfigError, "unknown suite '" + name + "'");
}

// ----------------------------------------------------------------------------
// Experiment driver
// ----------------------------------------------------------------------------

namespace {

/// Collects TraceRecords from solve callbacks, mirroring the phase structure.
class TraceBuilder {
 public:
  TraceBuilder(const SuiteInstance& suite, const SolverConfig& config,
               const Vec& z0)
      : suite_(suite),
        config_(config),
        gamma_(config.effective_gamma()),
        current_z_(z0),
        current_sigma_(suite.agents.size(), 0.0) {}

  void on_sweep(int outer, const SweepReport& rep) {
    if (outer != ref_outer_) {
      phase_ref_.reset();
      ref_outer_ = outer;
    }
    TraceRecord r;
    r.outer_index = outer;
    r.sweep_index = rep.sweep_index;
    r.merit_total = rep.merit_after.total;
    r.merit_smooth = rep.merit_after.smooth_part;
    r.merit_penalty = rep.merit_after.penalty_part;
    r.local_descent_ok = rep.local_descent_ok;
    r.consensus_descent_ok = rep.all_consensus_descent_ok();
    r.max_kkt_residual = kkt_residual(suite_.agents, rep.state_after.y,
                                      rep.lambda_plus, gamma_, current_z_);
    r.sigma_max = current_sigma_.empty()
                      ? 0.0
                      : *std::max_element(current_sigma_.begin(),
                                          current_sigma_.end());
    r.lyapunov = lyapunov_value(rep);
    pending_.push_back(r);
    last_lambda_ = rep.lambda_plus;
  }

  void on_outer_step(int /*outer*/, const UpperState& upper, double step_sq,
                     bool /*accepted*/) {
    if (!pending_.empty()) pending_.back().z_step_sq = step_sq;
    flush();
    current_z_ = upper.z;
    current_sigma_ = upper.sigma;
  }

  std::vector<TraceRecord> take() {
    flush();
    return std::move(rows_);
  }

  const std::vector<Vec>& last_lambda() const { return last_lambda_; }

 private:
  void flush() {
    rows_.insert(rows_.end(), pending_.begin(), pending_.end());
    pending_.clear();
  }

  double lyapunov_value(const SweepReport& rep) {
    if (suite_.name != "quadratic") return -1.0;
    if (!phase_ref_) {
      // Quadratic gradients are exactly linear: a_i c_i = -df_i(0).
      const auto n = current_z_.size();
      Vec ac = Vec::Zero(n);
      double a_sum = 0.0;
      for (const AgentProblem& p : suite_.agents) {
        ac -= eval_subgradient(p, Vec::Zero(n));
        a_sum += p.curvature_hint.value_or(0.0);
      }
      const double gn = gamma_ * static_cast<double>(suite_.agents.size());
      const Vec y_star = (ac + gn * current_z_) / (a_sum + gn);
      phase_ref_ =
          make_analytic_reference(suite_.agents, y_star, gamma_, current_z_);
    }
    LowerState probe;
    probe.x = rep.state_after.x;
    probe.y = rep.state_after.y;
    probe.lambda = rep.lambda_plus;
    probe.g = rep.state_after.g;
    probe.B = rep.state_after.B;
    return lyapunov(probe, *phase_ref_);
  }

  const SuiteInstance& suite_;
  const SolverConfig& config_;
  double gamma_;
  Vec current_z_;
  std::vector<double> current_sigma_;
  std::vector<TraceRecord> rows_;
  std::vector<TraceRecord> pending_;
  std::vector<Vec> last_lambda_;
  std::optional<ReferenceSolution> phase_ref_;
  int ref_outer_ = -1;
};

MonitorVerdicts make_verdicts(const SuiteInstance& suite,
                              const SolverConfig& config,
                              const OuterResult& result,
                              const std::vector<Vec>& last_lambda) {
  MonitorVerdicts v;
  v.enforced = !config.is_plain();
  const double gamma = config.effective_gamma();
  const double n_agents = static_cast<double>(suite.agents.size());
  for (std::size_t j = 0; j < result.z_step_squares.size(); ++j) {
    if (!result.step_accepted[j]) continue;
    const double drop =
        result.merit_trajectory[j] - result.merit_trajectory[j + 1];
    if (!(drop > 0.0)) v.monotone_merit = false;
    if (!(drop > 0.5 * gamma * n_agents * result.z_step_squares[j] - 1e-12)) {
      v.merit_gap = false;
    }
  }
  v.telescoping =
      telescoping_monitor(result, gamma, suite.agent_count()).ok;
  if (!last_lambda.empty()) {
    v.final_kkt = kkt_residual(suite.agents, result.z_star, last_lambda, gamma,
                               result.z_star);
  }
  return v;
}

}  // namespace

RunRecord run_experiment(const ExperimentSpec& spec) {
  spec.solver.validate();
  const SuiteInstance suite = make_suite(spec.suite_spec, spec.solver.seed);
  const Vec z0 = spec.z0.value_or(Vec::Zero(suite.dim()));
  if (z0.size() != suite.dim()) {
    throw SolverError(ErrorCode::ConfigError, "z0 dimension != suite dimension");
  }

  // Resolve the gamma probe up front so the trace maths sees the final gamma.
  SolverConfig cfg = spec.solver;
  if (cfg.use_gamma_probe && !cfg.is_plain()) {
    cfg.gamma = std::max(cfg.gamma, gamma_probe(suite.agents, z0,
                                                cfg.probe_directions, cfg.seed));
    cfg.use_gamma_probe = false;
  }

  TraceBuilder builder(suite, cfg, z0);
  SolveCallbacks callbacks;
  callbacks.on_sweep = [&](int outer, const SweepReport& rep) {
    builder.on_sweep(outer, rep);
  };
  callbacks.on_outer_step = [&](int outer, const UpperState& upper,
                                double step_sq, bool accepted) {
    builder.on_outer_step(outer, upper, step_sq, accepted);
  };

  OuterResult result;
  if (spec.via_protocol) {
    simnet::ProtocolSweepExecutor executor(suite.agents, cfg);
    result = solve(suite.agents, cfg, z0, &callbacks, nullptr, &executor);
  } else {
    result = solve(suite.agents, cfg, z0, &callbacks);
  }

  RunRecord record;
  record.spec = spec;
  record.trace = builder.take();
  record.verdicts = make_verdicts(suite, cfg, result, builder.last_lambda());
  record.result = std::move(result);

  std::string blob;
  for (const auto& [k, val] : spec.snapshot()) blob += k + "=" + val + "\n";
  std::ostringstream id;
  id << std::hex << fnv1a(blob);
  record.run_id = id.str();
  return record;
}

// ----------------------------------------------------------------------------
// Persistence
// ----------------------------------------------------------------------------

void write_trace_csv(const std::vector<TraceRecord>& trace, std::ostream& out) {
  out << "# conprox trace schema v1\n";
  out << "outer_index,sweep_index,merit_total,merit_smooth,merit_penalty,"
         "z_step_sq,lyapunov,local_descent_ok,consensus_descent_ok,"
         "max_kkt_residual,sigma_max\n";
  for (const TraceRecord& r : trace) {
    out << r.outer_index << ',' << r.sweep_index << ','
        << format_double(r.merit_total) << ',' << format_double(r.merit_smooth)
        << ',' << format_double(r.merit_penalty) << ','
        << format_double(r.z_step_sq) << ',' << format_double(r.lyapunov)
        << ',' << (r.local_descent_ok ? 1 : 0) << ','
        << (r.consensus_descent_ok ? 1 : 0) << ','
        << format_double(r.max_kkt_residual) << ','
        << format_double(r.sigma_max) << '\n';
  }
}

void write_run_outputs(const RunRecord& record,
                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream trace(out_dir / "trace.csv", std::ios::binary);
    write_trace_csv(record.trace, trace);
  }
  {
    std::ofstream snap(out_dir / "config_snapshot", std::ios::binary);
    for (const auto& [k, v] : record.spec.snapshot()) {
      snap << k << " = " << v << "\n";
    }
  }
  {
    nlohmann::json j;
    j["run_id"] = record.run_id;
    j["status"] = to_string(record.result.status);
    j["z_star"] = std::vector<double>(
        record.result.z_star.data(),
        record.result.z_star.data() + record.result.z_star.size());
    j["outer_iterations"] = record.result.outer_iterations;
    j["merit_trajectory"] = record.result.merit_trajectory;
    j["z_step_squares"] = record.result.z_step_squares;
    j["step_accepted"] = record.result.step_accepted;
    j["final_kkt_residual"] = record.result.final_kkt_residual;
    j["verdicts"] = {{"enforced", record.verdicts.enforced},
                     {"monotone_merit", record.verdicts.monotone_merit},
                     {"telescoping", record.verdicts.telescoping},
                     {"merit_gap", record.verdicts.merit_gap},
                     {"final_kkt", record.verdicts.final_kkt}};
    j["exit_code"] = exit_code_for(record);
    std::ofstream result(out_dir / "result.json", std::ios::binary);
    result << j.dump(2) << "\n";
  }
}

int exit_code_for(const RunRecord& record) {
  if (record.verdicts.enforced && !record.verdicts.all_ok()) return 3;
  switch (record.result.status) {
    case SolveStatus::Converged:
    case SolveStatus::LowerStalledAtOptimum:
      return 0;
    case SolveStatus::MaxOuter:
      return 2;
  }
  return 2;
}

// ----------------------------------------------------------------------------
// CLI
// ----------------------------------------------------------------------------

namespace {

std::vector<Vec> sample_points(const SuiteInstance& suite, int count,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> normal(0.0, 1.5);
  std::vector<Vec> points;
  int attempts = 0;
  while (static_cast<int>(points.size()) < count && attempts < 1000 * count) {
    ++attempts;
    Vec x(suite.dim());
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = normal(rng);
    if (suite.safe_sample && !suite.safe_sample(x)) continue;
    points.push_back(std::move(x));
  }
  if (static_cast<int>(points.size()) < count) {
    throw SolverError(ErrorCode::ConfigError,
                      "could not sample smooth validation points");
  }
  return points;
}

struct SolverFlags {
  std::string config_path;
  std::string suite;
  std::string method;
  std::string local_update;
  std::string hessian;
  std::string z0;
  double gamma = 0, rho = 0, beta = 0, sigma_margin = 0, eps_z = 0, kkt_tol = 0;
  long long max_outer = 0, max_lower = 0, fp_iters = 0, window = 0,
            probe_dirs = 0, tick_budget = 0;
  std::uint64_t seed = 0;
  bool via_protocol = false, gamma_probe = false, parallel_local = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value config file");
    cmd->add_option("--suite", suite,
                    "suite spec, e.g. quadratic:a=1,3;c=0,4");
    cmd->add_option("--method", method,
                    "cadmm-prox|caladin-prox|plain-cadmm|plain-caladin");
    cmd->add_option("--local-update", local_update,
                    "lin-upper|lin-lower|fixed-point|exact (default exact)");
    cmd->add_option("--hessian", hessian,
                    "scaled-identity|user-fixed|curvature-refresh");
    cmd->add_option("--gamma", gamma, "proximal weight (default 1)");
    cmd->add_option("--rho", rho, "augmented-Lagrangian weight (default 1)");
    cmd->add_option("--beta", beta, "consensus damping (default 0)");
    cmd->add_option("--sigma-margin", sigma_margin,
                    "strictness margin for the penalty weights (default 1e-8)");
    cmd->add_option("--eps-z", eps_z,
                    "stop when |z+ - z|^2 <= eps-z (default 1e-16)");
    cmd->add_option("--kkt-tol", kkt_tol,
                    "stationarity tolerance for stalled phases (default 1e-6)");
    cmd->add_option("--max-outer", max_outer, "outer budget (default 500)");
    cmd->add_option("--max-lower", max_lower,
                    "sweep budget per phase (default 100)");
    cmd->add_option("--fixed-point-iters", fp_iters,
                    "inner iterations for fixed-point updates (default 10)");
    cmd->add_option("--window", window, "stopping window (default 1)");
    cmd->add_option("--probe-directions", probe_dirs,
                    "directions per agent for the gamma probe (default 8)");
    cmd->add_option("--tick-budget", tick_budget,
                    "protocol upload timeout in ticks (default 256)");
    cmd->add_option("--seed", seed, "seed for all randomness (default 0)");
    cmd->add_option("--z0", z0, "comma-separated start point (default zeros)");
    cmd->add_flag("--via-protocol", via_protocol,
                  "run through the simulated master/agent exchange");
    cmd->add_flag("--gamma-probe", gamma_probe,
                  "raise gamma from a curvature probe at z0");
    cmd->add_flag("--parallel-local", parallel_local,
                  "run local updates on worker threads");
  }

  std::map<std::string, std::string> to_map(CLI::App* cmd) const {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        throw SolverError(ErrorCode::ConfigError,
                          "cannot open config file '" + config_path + "'");
      }
      kv = read_flat_config(in);
    }
    auto set_if = [&](const char* flag, const std::string& key,
                      const std::string& value) {
      if (cmd->count(flag) > 0) kv[key] = value;
    };
    set_if("--suite", "suite", suite);
    set_if("--method", "method", method);
    set_if("--local-update", "local_update", local_update);
    set_if("--hessian", "hessian_mode", hessian);
    set_if("--gamma", "gamma", format_double(gamma));
    set_if("--rho", "rho", format_double(rho));
    set_if("--beta", "beta", format_double(beta));
    set_if("--sigma-margin", "sigma_margin", format_double(sigma_margin));
    set_if("--eps-z", "eps_z", format_double(eps_z));
    set_if("--kkt-tol", "kkt_tol", format_double(kkt_tol));
    set_if("--max-outer", "max_outer", std::to_string(max_outer));
    set_if("--max-lower", "max_lower", std::to_string(max_lower));
    set_if("--fixed-point-iters", "fixed_point_iters", std::to_string(fp_iters));
    set_if("--window", "stopping_window", std::to_string(window));
    set_if("--probe-directions", "probe_directions", std::to_string(probe_dirs));
    set_if("--tick-budget", "tick_budget", std::to_string(tick_budget));
    set_if("--seed", "seed", std::to_string(seed));
    set_if("--z0", "z0", z0);
    set_if("--via-protocol", "via_protocol", "1");
    set_if("--gamma-probe", "gamma_probe", "1");
    set_if("--parallel-local", "parallel_local", "1");
    return kv;
  }
};

int do_run(const ExperimentSpec& spec, const std::string& out_dir) {
  RunRecord record = run_experiment(spec);
  write_run_outputs(record, out_dir);
  std::cout << "run " << record.run_id << ": "
            << to_string(record.result.status) << " in "
            << record.result.outer_iterations << " outer iterations, z* = [";
  for (Eigen::Index i = 0; i < record.result.z_star.size(); ++i) {
    if (i > 0) std::cout << ", ";
    std::cout << format_double(record.result.z_star(i));
  }
  std::cout << "], outputs in " << out_dir << "\n";
  return exit_code_for(record);
}

int do_validate(const std::string& suite_spec, std::uint64_t seed, int count,
                double h) {
  const SuiteInstance suite = make_suite(suite_spec, seed);
  const auto points = sample_points(suite, count, seed);
  bool ok = true;
  for (int i = 0; i < suite.agent_count(); ++i) {
    const auto report = validate_oracles(suite.agents[i], points, h);
    if (report.ok()) {
      std::cout << "agent " << i << ": oracles agree at "
                << report.points_checked << " points\n";
    } else {
      ok = false;
      std::cerr << "agent " << i << ": " << to_string(ErrorCode::OracleFailure)
                << "-grade mismatch at " << report.mismatches.size()
                << " points:\n";
      for (const auto& m : report.mismatches) {
        std::cerr << "  x = [";
        for (Eigen::Index j = 0; j < m.point.size(); ++j) {
          if (j > 0) std::cerr << ", ";
          std::cerr << format_double(m.point(j));
        }
        std::cerr << "], |fd - g|_inf = " << format_double(m.error) << "\n";
      }
    }
  }
  return ok ? 0 : 3;
}

int do_classify(const ExperimentSpec& spec, const Vec& point, int trials,
                const std::vector<double>& scales) {
  const SuiteInstance suite = make_suite(spec.suite_spec, spec.solver.seed);
  const CriticalPointVerdict verdict = classify_critical_point(
      suite.agents, spec.solver, point, trials, scales);
  nlohmann::json j;
  j["label"] = to_string(verdict.label);
  j["trials"] = verdict.trials;
  j["vacuous"] = (verdict.trials == 0);
  if (verdict.escaped_to) {
    j["escaped_to"] = std::vector<double>(
        verdict.escaped_to->data(),
        verdict.escaped_to->data() + verdict.escaped_to->size());
  } else {
    j["escaped_to"] = nullptr;
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int do_compare(const ExperimentSpec& base, const std::vector<std::string>& methods,
               const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream summary(std::filesystem::path(out_dir) / "summary.csv",
                        std::ios::binary);
  summary << "method,status,outer_iterations,final_merit,final_kkt,z_star\n";
  std::cout << "method            status                      outer   final merit\n";
  int exit_code = 0;
  for (const std::string& m : methods) {
    ExperimentSpec spec = base;
    spec.solver.method = method_from_string(m);
    RunRecord record = run_experiment(spec);
    write_run_outputs(record, std::filesystem::path(out_dir) / m);
    const double final_merit = record.result.merit_trajectory.back();
    std::ostringstream zs;
    for (Eigen::Index i = 0; i < record.result.z_star.size(); ++i) {
      if (i > 0) zs << ' ';
      zs << format_double(record.result.z_star(i));
    }
    summary << m << ',' << to_string(record.result.status) << ','
            << record.result.outer_iterations << ','
            << format_double(final_merit) << ','
            << format_double(record.verdicts.final_kkt) << ',' << zs.str()
            << "\n";
    std::cout << m;
    for (std::size_t pad = m.size(); pad < 18; ++pad) std::cout << ' ';
    std::cout << to_string(record.result.status);
    for (std::size_t pad = std::string(to_string(record.result.status)).size();
         pad < 28; ++pad) {
      std::cout << ' ';
    }
    std::cout << record.result.outer_iterations << "       "
              << format_double(final_merit) << "\n";
    exit_code = std::max(exit_code, exit_code_for(record));
  }
  return exit_code;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"conprox: consensus ADMM / ALADIN solvers with proximal "
               "bi-level globalization"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "solve a suite and write outputs");
  SolverFlags run_flags;
  run_flags.attach(run_cmd);
  std::string run_out = "out";
  run_cmd->add_option("--out", run_out, "output directory (default ./out)");

  auto* validate_cmd =
      app.add_subcommand("validate", "finite-difference oracle validation");
  std::string validate_suite;
  std::uint64_t validate_seed = 0;
  int validate_points = 20;
  double validate_h = 1e-6;
  validate_cmd->add_option("--suite", validate_suite, "suite spec")->required();
  validate_cmd->add_option("--seed", validate_seed, "sample seed (default 0)");
  validate_cmd->add_option("--points", validate_points,
                           "sample count (default 20)");
  validate_cmd->add_option("--fd-step", validate_h,
                           "finite-difference step (default 1e-6)");

  auto* classify_cmd = app.add_subcommand(
      "classify", "perturbation test of a critical point");
  SolverFlags classify_flags;
  classify_flags.attach(classify_cmd);
  std::string classify_point, classify_result, classify_scales;
  int classify_trials = 8;
  classify_cmd->add_option("--point", classify_point,
                           "comma-separated critical point");
  classify_cmd->add_option("--result", classify_result,
                           "result.json of a converged run");
  classify_cmd->add_option("--trials", classify_trials,
                           "perturbation directions (default 8)");
  classify_cmd->add_option("--scales", classify_scales,
                           "perturbation scales (default 1e-2,1e-3,1e-4)");

  auto* compare_cmd =
      app.add_subcommand("compare", "side-by-side runs on a shared suite");
  SolverFlags compare_flags;
  compare_flags.attach(compare_cmd);
  std::string compare_methods;
  std::string compare_out = "out";
  compare_cmd->add_option("--methods", compare_methods,
                          "comma-separated method list (>= 2)");
  compare_cmd->add_option("--out", compare_out, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) {
      return do_run(spec_from_map(run_flags.to_map(run_cmd)), run_out);
    }
    if (validate_cmd->parsed()) {
      return do_validate(validate_suite, validate_seed, validate_points,
                         validate_h);
    }
    if (classify_cmd->parsed()) {
      ExperimentSpec spec = spec_from_map(classify_flags.to_map(classify_cmd));
      Vec point;
      if (!classify_point.empty()) {
        point = parse_vec(classify_point, "point");
      } else if (!classify_result.empty()) {
        std::ifstream in(classify_result);
        if (!in) {
          throw SolverError(ErrorCode::ConfigError,
                            "cannot open '" + classify_result + "'");
        }
        nlohmann::json j;
        in >> j;
        const auto zs = j.at("z_star").get<std::vector<double>>();
        point = Vec(static_cast<Eigen::Index>(zs.size()));
        for (std::size_t i = 0; i < zs.size(); ++i) point(i) = zs[i];
      } else {
        throw SolverError(ErrorCode::ConfigError,
                          "classify needs --point or --result");
      }
      std::vector<double> scales{1e-2, 1e-3, 1e-4};
      if (!classify_scales.empty()) {
        scales = parse_double_list(classify_scales, "scales");
      }
      return do_classify(spec, point, classify_trials, scales);
    }
    if (compare_cmd->parsed()) {
      ExperimentSpec base = spec_from_map(compare_flags.to_map(compare_cmd));
      std::vector<std::string> methods;
      for (const std::string& m : split(compare_methods, ',')) {
        if (!trim(m).empty()) methods.push_back(trim(m));
      }
      if (methods.size() < 2) {
        throw SolverError(ErrorCode::ConfigError,
                          "compare needs at least two methods");
      }
      return do_compare(base, methods, compare_out);
    }
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace conprox::harness
