// Command-line front end: manifest-driven verification runs, reduction-ODE
// sweeps, and plot-data emission. Talks to the library exclusively through
// the C interface in qem/qem.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qem/qem.h"

namespace {

int report_error(const std::string& context) {
  std::cerr << "error: " << context << ": " << qem_last_error() << "\n";
  return 2;
}

/// Prints one line per check plus a totals line from the report document.
void print_run_summary(const std::string& report_json) {
  nlohmann::json rep;
  try {
    rep = nlohmann::json::parse(report_json);
  } catch (const nlohmann::json::exception&) {
    return;
  }
  for (const auto& jc : rep.value("checks", nlohmann::json::array())) {
    std::string name = jc.value("name", "?");
    std::string status = jc.value("status", "?");
    std::printf("%-16s %s", name.c_str(), status.c_str());
    if (status == "skipped") {
      std::printf(" (%s)", jc.value("skip_reason", "").c_str());
    } else {
      std::printf(" (max %.3g, tol %.3g, points %lld)", jc.value("max_residual", 0.0),
                  jc.value("tolerance", 0.0),
                  static_cast<long long>(jc.value("points", 0)));
    }
    std::printf("\n");
  }
  const auto& sum = rep["summary"];
  std::printf("%lld passed, %lld failed, %lld skipped\n",
              static_cast<long long>(sum.value("passed", 0)),
              static_cast<long long>(sum.value("failed", 0)),
              static_cast<long long>(sum.value("skipped", 0)));
}

int cmd_run(const std::string& manifest, const std::string& out_dir,
            const std::optional<std::uint64_t>& seed, const std::optional<double>& tol,
            int jobs) {
  int exit_code = 0;
  char* report = nullptr;
  qem_status st =
      qem_run_manifest(manifest.c_str(), out_dir.c_str(), seed.value_or(0), seed.has_value(),
                       tol.value_or(0.0), tol.has_value(), jobs, &exit_code, &report);
  if (st != QEM_OK) return report_error("run failed");
  print_run_summary(report);
  qem_string_free(report);
  std::printf("report: %s/report.json\n", out_dir.c_str());
  return exit_code;
}

int cmd_sweep(const std::vector<double>& ms, const std::vector<double>& lambdas,
              const std::vector<double>& h0s, double t0, double t1, int steps,
              const std::string& out_path) {
  char* csv = nullptr;
  qem_status st = qem_sweep_ode(ms.data(), ms.size(), lambdas.data(), lambdas.size(), h0s.data(),
                                h0s.size(), t0, t1, steps, &csv);
  if (st != QEM_OK) return report_error("sweep-ode failed");
  if (out_path.empty()) {
    std::fputs(csv, stdout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      qem_string_free(csv);
      std::cerr << "error: cannot write " << out_path << "\n";
      return 2;
    }
    out << csv;
    std::printf("wrote %s\n", out_path.c_str());
  }
  qem_string_free(csv);
  return 0;
}

int cmd_plot(const std::string& report, const std::string& out_dir) {
  char* files = nullptr;
  qem_status st = qem_plot_data(report.c_str(), out_dir.c_str(), &files);
  if (st != QEM_OK) return report_error("plot-data failed");
  if (files[0] != '\0') std::printf("%s\n", files);
  qem_string_free(files);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-Einstein metric verification on H^n x R"};
  app.require_subcommand(1);

  std::string manifest;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  int jobs = 1;
  CLI::App* run = app.add_subcommand("run", "execute the checks named by a manifest");
  run->add_option("--manifest", manifest, "manifest JSON path")->required();
  run->add_option("--out", out_dir, "output directory for report.json and residuals.csv");
  run->add_option("--seed", seed, "override the manifest grid seed");
  run->add_option("--tol", tol, "override the classification tolerance");
  run->add_option("--jobs", jobs, "worker threads for per-point checks")
      ->check(CLI::Range(1, 256));

  std::vector<double> ms{1.0};
  std::vector<double> lambdas{-1.0};
  std::vector<double> h0s;
  double t0 = -3.0, t1 = 3.0;
  int steps = 10000;
  std::string sweep_out;
  CLI::App* sweep = app.add_subcommand("sweep-ode", "tabulate reduction-ODE branches");
  sweep->add_option("--m", ms, "m values")->delimiter(',');
  sweep->add_option("--lambda", lambdas, "lambda values")->delimiter(',');
  sweep->add_option("--h0", h0s, "initial values h(0)")->delimiter(',')->required();
  sweep->add_option("--t0", t0, "window start");
  sweep->add_option("--t1", t1, "window end");
  sweep->add_option("--steps", steps, "integration steps");
  sweep->add_option("--out", sweep_out, "CSV output path (default: stdout)");

  std::string report_path;
  std::string plot_dir = "plots";
  CLI::App* plot = app.add_subcommand("plot-data", "derive plotting CSVs from a report");
  plot->add_option("--report", report_path, "report.json path")->required();
  plot->add_option("--out", plot_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (app.got_subcommand(run)) return cmd_run(manifest, out_dir, seed, tol, jobs);
  if (app.got_subcommand(sweep)) return cmd_sweep(ms, lambdas, h0s, t0, t1, steps, sweep_out);
  return cmd_plot(report_path, plot_dir);
}
