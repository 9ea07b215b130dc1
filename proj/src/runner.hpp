#pragma once

// Manifest-driven check runner.
//
// A manifest (JSON) names a quasi-Einstein structure on H^n x R, a sample
// grid, and a list of named checks.  run_manifest evaluates every check,
// writes report.json and residuals.csv into an output directory, and returns
// the structured results.  sweep_ode_csv and plot_data back the remaining
// CLI verbs.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "expr.hpp"
#include "grid.hpp"
#include "hnr.hpp"

namespace qem {

/// Raised for malformed or inconsistent manifests and unreadable inputs.
class ManifestError : public Error {
 public:
  using Error::Error;
};

/// Absolute tolerances used by the runner's checks.
struct Tolerances {
  /// For identities that hold to rounding error (brackets, closed forms).
  double exact = 1e-9;
  /// For residuals limited by finite-difference style cancellation.
  double fd = 1e-5;
};

/// Potential declaration: one of the two named examples or a raw expression.
struct PotentialDecl {
  enum class Kind { Example1, Example2, ExprText };
  Kind kind = Kind::ExprText;
  int sign = +1;        // Example1: sign of f = +/- sqrt((n-1)m) t
  double a = 0.0;       // Example2: phase in f = -m ln cosh(eta t + a)
  std::string text;     // ExprText: parsed against the chart of H^n x R
};

/// Parsed and validated manifest.
struct Manifest {
  int n = 2;
  double m = 1.0;  // infinity() encodes m = inf
  double lambda = -1.0;
  PotentialDecl potential;
  GridSpec grid;
  Tolerances tol;
  std::vector<std::string> checks;  // canonical order, validated names

  bool m_infinite() const;
};

/// Canonical list of check names in report order.
const std::vector<std::string>& all_check_names();

/// Parse manifest JSON text.  Throws ManifestError on any violation.
Manifest parse_manifest(const std::string& json_text);

/// Read a file fully; throws ManifestError if unreadable.
std::string read_text_file(const std::string& path);

/// Outcome of one named check.
struct CheckResult {
  std::string name;
  std::string status;  // "pass" | "fail" | "skipped"
  std::string skip_reason;
  double max_residual = 0.0;
  double mean_residual = 0.0;
  double tolerance = 0.0;
  std::int64_t points = 0;
  std::int64_t failures = 0;
  std::string note;  // branch table, error text, ...
  std::optional<ClassificationVerdict> verdict;  // classify only
};

/// Everything run_manifest produced.
struct RunOutput {
  Manifest manifest;
  std::vector<CheckResult> checks;
  int exit_code = 0;  // 0 all pass, 1 some check failed
  std::string report_json;
  std::string report_path;
  std::string residuals_path;
};

/// Options for run_manifest; seed/tol override the manifest when set.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;  // overrides the classification tolerance
  int jobs = 1;
};

/// Execute every requested check and write report.json + residuals.csv
/// under out_dir (created if missing).  Throws ManifestError for bad
/// manifests or unwritable outputs; check-level evaluation errors are
/// reported as failed checks, not exceptions.
RunOutput run_manifest(const std::string& manifest_path,
                       const std::string& out_dir,
                       const RunOptions& opts = {});

/// As above but from manifest text already in memory (no file read).
RunOutput run_manifest_text(const std::string& manifest_text,
                            const std::string& out_dir,
                            const RunOptions& opts = {});

/// Classify h' = h^2/m + lambda for each (m, lambda, h0) combination and
/// integrate across [t0, t1]; returns CSV with columns
///   m,lambda,h0,branch,param,blowup_time,max_deviation
/// blowup_time is the finite pole nearest t = 0 ("none" if global) and
/// max_deviation compares Runge-Kutta samples against the closed form on
/// the part of [t0, t1] safely inside the branch domain.
std::string sweep_ode_csv(const std::vector<double>& ms,
                          const std::vector<double>& lambdas,
                          const std::vector<double>& h0s,
                          double t0, double t1, int steps);

/// Derive plot-ready CSVs from a previous run.  Reads report.json (and the
/// residuals.csv recorded inside it) and writes into out_dir:
///   profiles.csv    check,x_n,residual        (one row per grid sample)
///   trajectory.csv  t,h_closed,h_rk           (reduction ODE, when defined)
///   evidence.csv    step,residual,tolerance,pass   (classification, if run)
/// Returns the list of files written.  Throws ManifestError if the report
/// is missing or unparseable.
std::vector<std::string> plot_data(const std::string& report_path,
                                   const std::string& out_dir);

}  // namespace qem
