#pragma once

#include "conprox/diagnostics.hpp"
#include "conprox/globalize.hpp"
#include "conprox/problems.hpp"
#include "conprox/simnet.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>

namespace conprox::harness {

/// One diagnostics row per lower-level sweep. The lyapunov column is -1 when
/// no reference solution is available for the suite.
struct TraceRecord {
  int outer_index = 0;
  int sweep_index = 0;
  double merit_total = 0.0;
  double merit_smooth = 0.0;
  double merit_penalty = 0.0;
  double z_step_sq = 0.0;  // filled on the phase's final sweep row
  double lyapunov = -1.0;
  bool local_descent_ok = false;
  bool consensus_descent_ok = false;
  double max_kkt_residual = 0.0;
  double sigma_max = 0.0;
};

struct MonitorVerdicts {
  bool enforced = true;  // plain baselines record but do not assert
  bool monotone_merit = true;
  bool telescoping = true;
  bool merit_gap = true;
  double final_kkt = 0.0;
  bool all_ok() const { return monotone_merit && telescoping && merit_gap; }
};

struct ExperimentSpec {
  SolverConfig solver;
  std::string suite_spec = "quadratic:a=1,3;c=0,4";
  std::optional<Vec> z0;
  bool via_protocol = false;

  /// Full echo of every knob, exact enough to reproduce the run bitwise.
  std::map<std::string, std::string> snapshot() const;
};

struct RunRecord {
  std::string run_id;
  ExperimentSpec spec;
  std::vector<TraceRecord> trace;
  OuterResult result;
  MonitorVerdicts verdicts;
};

/// Flat key = value configuration text ('#' comments allowed).
std::map<std::string, std::string> read_flat_config(std::istream& in);
ExperimentSpec spec_from_map(const std::map<std::string, std::string>& kv);

/// Suites addressable by "name:key=val;key=val" strings, e.g.
/// "quadratic:a=1,3;c=0,4", "doublewell:d=0,0,0",
/// "lasso:N=2;n=3;m=4;mu=0.1;seed=7". The "broken" suite is a negative
/// control with a deliberately wrong subgradient.
SuiteInstance make_suite(const std::string& suite_spec, std::uint64_t seed);

RunRecord run_experiment(const ExperimentSpec& spec);

/// Shortest decimal form that round-trips the exact double.
std::string format_double(double v);

void write_trace_csv(const std::vector<TraceRecord>& trace, std::ostream& out);
void write_run_outputs(const RunRecord& record,
                       const std::filesystem::path& out_dir);

/// 0 success, 2 outer budget exhausted, 3 monitor violation.
int exit_code_for(const RunRecord& record);

/// Subcommands: run, validate, classify, compare. Args exclude the program
/// name. Returns the process exit code.
int cli_main(const std::vector<std::string>& args);

}  // namespace conprox::harness
