#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "qem/qem.h"

namespace fs = std::filesystem;

namespace {

struct ChartHandle {
  qem_chart* p = nullptr;
  ~ChartHandle() { qem_chart_free(p); }
};

struct ExprHandle {
  qem_expr* p = nullptr;
  ~ExprHandle() { qem_expr_free(p); }
};

struct StructureHandle {
  qem_structure* p = nullptr;
  ~StructureHandle() { qem_structure_free(p); }
};

}  // namespace

TEST_CASE("version and error state") {
  CHECK(std::string(qem_version()) == "0.1.0");

  ChartHandle chart;
  REQUIRE(qem_chart_hnr(2, &chart.p) == QEM_OK);
  CHECK(std::string(qem_last_error()).empty());
}

TEST_CASE("chart construction") {
  ChartHandle c2, c5;
  REQUIRE(qem_chart_hnr(2, &c2.p) == QEM_OK);
  CHECK(qem_chart_dim(c2.p) == 3);
  REQUIRE(qem_chart_hnr(5, &c5.p) == QEM_OK);
  CHECK(qem_chart_dim(c5.p) == 6);

  qem_chart* bad = nullptr;
  CHECK(qem_chart_hnr(1, &bad) == QEM_ERR_INVALID_ARGUMENT);
  CHECK(std::string(qem_last_error()).find("at least 2") != std::string::npos);
  CHECK(qem_chart_hnr(2, nullptr) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("expression round trip and evaluation") {
  ChartHandle chart;
  REQUIRE(qem_chart_hnr(2, &chart.p) == QEM_OK);

  ExprHandle e;
  REQUIRE(qem_expr_parse(chart.p, "x_1*x_2^2 + t^3", &e.p) == QEM_OK);

  char* text = nullptr;
  REQUIRE(qem_expr_to_string(e.p, &text) == QEM_OK);
  ExprHandle e2;
  CHECK(qem_expr_parse(chart.p, text, &e2.p) == QEM_OK);
  qem_string_free(text);

  const double p[3] = {2.0, 3.0, -1.0};
  double v = 0.0;
  REQUIRE(qem_expr_eval(e.p, p, 3, &v) == QEM_OK);
  CHECK(v == doctest::Approx(17.0));

  double value = 0.0;
  double grad[3] = {};
  double hess[6] = {};
  REQUIRE(qem_expr_eval_jet2(e.p, p, 3, &value, grad, hess) == QEM_OK);
  CHECK(value == doctest::Approx(17.0));
  CHECK(grad[0] == doctest::Approx(9.0));
  CHECK(grad[1] == doctest::Approx(12.0));
  CHECK(grad[2] == doctest::Approx(3.0));
  // packed upper triangle: (0,0),(0,1),(0,2),(1,1),(1,2),(2,2)
  CHECK(hess[0] == doctest::Approx(0.0));
  CHECK(hess[1] == doctest::Approx(6.0));
  CHECK(hess[3] == doctest::Approx(4.0));
  CHECK(hess[5] == doctest::Approx(-6.0));
}

TEST_CASE("parse errors carry message and position") {
  ChartHandle chart;
  REQUIRE(qem_chart_hnr(2, &chart.p) == QEM_OK);

  qem_expr* e = nullptr;
  CHECK(qem_expr_parse(chart.p, "x_1 + foo", &e) == QEM_ERR_PARSE);
  CHECK(e == nullptr);
  CHECK(std::string(qem_last_error()).find("unknown identifier") != std::string::npos);
  CHECK(qem_last_error_position() == 6);

  CHECK(qem_expr_parse(chart.p, nullptr, &e) == QEM_ERR_INVALID_ARGUMENT);
  CHECK(qem_expr_parse(nullptr, "t", &e) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("evaluation errors and dimension mismatches") {
  ChartHandle chart;
  REQUIRE(qem_chart_hnr(2, &chart.p) == QEM_OK);
  ExprHandle e;
  REQUIRE(qem_expr_parse(chart.p, "ln(t)", &e.p) == QEM_OK);

  const double bad_point[3] = {0.0, 1.0, -1.0};
  double v = 0.0;
  CHECK(qem_expr_eval(e.p, bad_point, 3, &v) == QEM_ERR_EVAL);

  const double small[2] = {0.0, 1.0};
  CHECK(qem_expr_eval(e.p, small, 2, &v) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("structure residuals for the second family") {
  StructureHandle s;
  REQUIRE(qem_structure_example(2, 2, 2.0, +1, 0.25, &s.p) == QEM_OK);

  const double p[3] = {0.3, 1.7, 0.9};
  double frame_max = 1.0;
  REQUIRE(qem_qe_residual_frame_max(s.p, p, &frame_max) == QEM_OK);
  CHECK(frame_max < 1e-9);

  double items[6] = {1, 1, 1, 1, 1, 1};
  REQUIRE(qem_pde_residuals(s.p, p, items) == QEM_OK);
  for (double item : items) CHECK(std::abs(item) < 1e-9);

  double mu = 0.0;
  REQUIRE(qem_mu_fiber(s.p, p, &mu) == QEM_OK);
  CHECK(mu == doctest::Approx(-0.5).epsilon(1e-9));

  qem_structure* bad = nullptr;
  CHECK(qem_structure_example(3, 2, 1.0, +1, 0.0, &bad) == QEM_ERR_INVALID_ARGUMENT);
  CHECK(bad == nullptr);
  CHECK(qem_structure_example(1, 1, 1.0, +1, 0.0, nullptr) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("static residual vanishes for the first family at m = 1") {
  StructureHandle s;
  REQUIRE(qem_structure_example(1, 2, 1.0, -1, 0.0, &s.p) == QEM_OK);
  const double p[3] = {-0.2, 0.8, 1.3};
  double r = 1.0;
  REQUIRE(qem_static_residual(s.p, p, &r) == QEM_OK);
  CHECK(std::abs(r) < 1e-10);
}

TEST_CASE("expression-backed structures and the soliton degeneration") {
  StructureHandle s;
  REQUIRE(qem_structure_expr(2, "-0.5*t^2", 1.0, 1, -1.0, &s.p) == QEM_OK);
  const double p[3] = {0.5, 2.0, -0.7};
  double frame_max = 1.0;
  REQUIRE(qem_qe_residual_frame_max(s.p, p, &frame_max) == QEM_OK);
  CHECK(frame_max < 1e-9);

  // classification refuses the soliton degeneration
  qem_classification cls;
  CHECK(qem_classify(s.p, 42, 0.0, &cls) == QEM_ERR_INVALID_ARGUMENT);

  qem_structure* bad = nullptr;
  CHECK(qem_structure_expr(2, "1 +", 1.0, 0, -1.0, &bad) == QEM_ERR_PARSE);
  CHECK(qem_structure_expr(2, nullptr, 1.0, 0, -1.0, &bad) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("classification of both families through the C interface") {
  StructureHandle s1;
  REQUIRE(qem_structure_example(1, 2, 1.0, +1, 0.0, &s1.p) == QEM_OK);
  qem_classification c1;
  REQUIRE(qem_classify(s1.p, 42, 0.0, &c1) == QEM_OK);
  CHECK(c1.tag == 0);
  CHECK(std::string(c1.failed_step).empty());

  StructureHandle s1m;
  REQUIRE(qem_structure_example(1, 2, 1.0, -1, 0.0, &s1m.p) == QEM_OK);
  qem_classification c1m;
  REQUIRE(qem_classify(s1m.p, 42, 0.0, &c1m) == QEM_OK);
  CHECK(c1m.tag == 1);

  StructureHandle s2;
  REQUIRE(qem_structure_example(2, 2, 2.0, +1, 0.7, &s2.p) == QEM_OK);
  qem_classification c2;
  REQUIRE(qem_classify(s2.p, 42, 0.0, &c2) == QEM_OK);
  CHECK(c2.tag == 2);
  CHECK(c2.a == doctest::Approx(0.7).epsilon(1e-8));
  CHECK(c2.max_pde_residual < 1e-9);

  StructureHandle bad;
  REQUIRE(qem_structure_expr(2, "-2*ln(cosh(0.7071067811865476*t)) + 0.01*x_1", 2.0, 0, -1.0,
                             &bad.p) == QEM_OK);
  qem_classification cb;
  REQUIRE(qem_classify(bad.p, 42, 0.0, &cb) == QEM_OK);
  CHECK(cb.tag == 3);
  CHECK(std::string(cb.failed_step) == "x-independence");
}

TEST_CASE("reduction ODE branches through the C interface") {
  qem_ode_branch b;
  REQUIRE(qem_ode_classify(1.0, -1.0, 0.5, &b) == QEM_OK);
  CHECK(b.tag == 3);  // tanh
  CHECK(b.rejected == 0);

  double h = 0.0;
  REQUIRE(qem_ode_closed_form(&b, 1.0, -1.0, 0.0, &h) == QEM_OK);
  CHECK(h == doctest::Approx(0.5).epsilon(1e-12));

  REQUIRE(qem_ode_classify(1.0, -1.0, 3.0, &b) == QEM_OK);
  CHECK(b.tag == 4);  // coth
  CHECK(b.rejected == 1);
  CHECK(b.t_max == doctest::Approx(std::atanh(1.0 / 3.0)).epsilon(1e-12));
  CHECK(qem_ode_closed_form(&b, 1.0, -1.0, 1.0, &h) == QEM_ERR_EVAL);

  CHECK(qem_ode_classify(0.0, -1.0, 0.5, &b) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("trajectory buffers are filled and truncated correctly") {
  double ts[101];
  double hs[101];
  size_t count = 0;
  int blew_up = 1;
  double blowup_time = -1.0;
  REQUIRE(qem_ode_integrate(1.0, -1.0, 0.5, 0.0, 1.0, 100, ts, hs, 101, &count, &blew_up,
                            &blowup_time) == QEM_OK);
  CHECK(count == 101);
  CHECK(blew_up == 0);
  CHECK(ts[0] == 0.0);
  CHECK(hs[0] == 0.5);
  CHECK(ts[100] == doctest::Approx(1.0));

  // capacity smaller than the sample count truncates without error
  size_t short_count = 0;
  REQUIRE(qem_ode_integrate(1.0, -1.0, 0.5, 0.0, 1.0, 100, ts, hs, 10, &short_count, &blew_up,
                            &blowup_time) == QEM_OK);
  CHECK(short_count == 10);

  // capacity 0 still reports the blow-up data
  REQUIRE(qem_ode_integrate(1.0, -1.0, 3.0, 0.0, 1.0, 20000, nullptr, nullptr, 0, &count,
                            &blew_up, &blowup_time) == QEM_OK);
  CHECK(blew_up == 1);
  CHECK(std::abs(blowup_time - std::atanh(1.0 / 3.0)) < 0.01);

  CHECK(qem_ode_integrate(1.0, -1.0, 0.5, 0.0, 1.0, 0, ts, hs, 101, &count, &blew_up,
                          &blowup_time) == QEM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("manifest run, sweep, and plot data through the C interface") {
  fs::path dir = fs::temp_directory_path() / ("qem_capi_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path mp = dir / "manifest.json";
  {
    std::ofstream out(mp);
    out << R"({"n": 2, "m": 1, "lambda": -1, "potential": {"example": 1},
               "grid": {"axes": [
                   {"name": "x_1", "min": -1, "max": 1, "count": 3},
                   {"name": "x_2", "min": 0.5, "max": 2, "count": 3, "scale": "log"},
                   {"name": "t", "min": -2, "max": 2, "count": 3}],
                 "random_points": 5, "seed": 7},
               "checks": ["brackets", "qe-residual", "classify"]})";
  }

  int exit_code = -1;
  char* report = nullptr;
  REQUIRE(qem_run_manifest(mp.string().c_str(), (dir / "out").string().c_str(), 0, 0, 0.0, 0,
                           1, &exit_code, &report) == QEM_OK);
  CHECK(exit_code == 0);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("\"qe-residual\"") != std::string::npos);
  qem_string_free(report);

  char* files = nullptr;
  REQUIRE(qem_plot_data((dir / "out" / "report.json").string().c_str(),
                        (dir / "plots").string().c_str(), &files) == QEM_OK);
  REQUIRE(files != nullptr);
  CHECK(std::string(files).find("profiles.csv") != std::string::npos);
  qem_string_free(files);

  int bad_exit = -1;
  char* bad_report = nullptr;
  CHECK(qem_run_manifest((dir / "nope.json").string().c_str(), (dir / "o2").string().c_str(),
                         0, 0, 0.0, 0, 1, &bad_exit, &bad_report) == QEM_ERR_MANIFEST);
  CHECK(bad_report == nullptr);
  CHECK(qem_run_manifest(nullptr, (dir / "o2").string().c_str(), 0, 0, 0.0, 0, 1, &bad_exit,
                         &bad_report) == QEM_ERR_INVALID_ARGUMENT);

  const double ms[1] = {1.0};
  const double lambdas[1] = {-1.0};
  const double h0s[2] = {0.0, 3.0};
  char* csv = nullptr;
  REQUIRE(qem_sweep_ode(ms, 1, lambdas, 1, h0s, 2, -3.0, 3.0, 1000, &csv) == QEM_OK);
  REQUIRE(csv != nullptr);
  CHECK(std::string(csv).rfind("m,lambda,h0,branch,param,blowup_time,max_deviation", 0) == 0);
  qem_string_free(csv);

  fs::remove_all(dir);
}
