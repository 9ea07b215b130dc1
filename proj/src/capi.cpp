#include "qem/qem.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "expr.hpp"
#include "geometry.hpp"
#include "grid.hpp"
#include "hnr.hpp"
#include "linalg.hpp"
#include "ode.hpp"
#include "runner.hpp"
#include "warped.hpp"

namespace {

thread_local std::string g_error;
thread_local size_t g_error_position = 0;

void set_error(const std::string& msg, size_t position = 0) {
  g_error = msg;
  g_error_position = position;
}

/// Runs the body and maps exceptions onto status codes.
template <class F>
qem_status wrap(F&& body) noexcept {
  try {
    g_error.clear();
    g_error_position = 0;
    body();
    return QEM_OK;
  } catch (const qem::ParseError& e) {
    set_error(e.what(), e.position());
    return QEM_ERR_PARSE;
  } catch (const qem::ManifestError& e) {
    set_error(e.what());
    return QEM_ERR_MANIFEST;
  } catch (const qem::SingularMetricError& e) {
    set_error(e.what());
    return QEM_ERR_SINGULAR;
  } catch (const qem::EvalError& e) {
    set_error(e.what());
    return QEM_ERR_EVAL;
  } catch (const qem::InvalidArgument& e) {
    set_error(e.what());
    return QEM_ERR_INVALID_ARGUMENT;
  } catch (const qem::Error& e) {
    set_error(e.what());
    return QEM_ERR_INTERNAL;
  } catch (const std::bad_alloc&) {
    set_error("out of memory");
    return QEM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    set_error(e.what());
    return QEM_ERR_INTERNAL;
  }
}

qem_status invalid(const char* msg) {
  set_error(msg);
  return QEM_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::span<const double> point_span(const double* point, int dim) {
  return {point, static_cast<size_t>(dim)};
}

}  // namespace

struct qem_chart {
  qem::Chart chart;
};

struct qem_expr {
  qem::Chart chart;
  qem::Expr expr;
};

struct qem_structure {
  qem::QEStructure s;
};

extern "C" {

const char* qem_version(void) { return "0.1.0"; }

const char* qem_last_error(void) { return g_error.c_str(); }

size_t qem_last_error_position(void) { return g_error_position; }

void qem_string_free(char* s) { std::free(s); }

/* ----------------------------------------------------------------------- */

qem_status qem_chart_hnr(int n, qem_chart** out) {
  if (!out) return invalid("out must not be null");
  *out = nullptr;
  return wrap([&] { *out = new qem_chart{qem::hnr_chart(n)}; });
}

int qem_chart_dim(const qem_chart* chart) { return chart ? chart->chart.dim() : 0; }

void qem_chart_free(qem_chart* chart) { delete chart; }

qem_status qem_expr_parse(const qem_chart* chart, const char* text, qem_expr** out) {
  if (!chart || !text || !out) return invalid("chart, text, and out must not be null");
  *out = nullptr;
  return wrap([&] { *out = new qem_expr{chart->chart, qem::parse(text, chart->chart)}; });
}

qem_status qem_expr_to_string(const qem_expr* e, char** out) {
  if (!e || !out) return invalid("e and out must not be null");
  *out = nullptr;
  return wrap([&] { *out = dup_string(qem::to_string(e->expr)); });
}

qem_status qem_expr_eval(const qem_expr* e, const double* point, int dim, double* out) {
  if (!e || !point || !out) return invalid("e, point, and out must not be null");
  if (dim != e->chart.dim()) return invalid("point dimension does not match the chart");
  return wrap([&] { *out = qem::eval_value(e->expr, point_span(point, dim)); });
}

qem_status qem_expr_eval_jet2(const qem_expr* e, const double* point, int dim, double* value,
                              double* grad, double* hess_packed) {
  if (!e || !point || !value || !grad || !hess_packed)
    return invalid("e, point, and all outputs must not be null");
  if (dim != e->chart.dim()) return invalid("point dimension does not match the chart");
  return wrap([&] {
    qem::Jet2 jet = qem::eval_jet2(e->expr, point_span(point, dim));
    *value = jet.value();
    for (int i = 0; i < dim; ++i) grad[i] = jet.grad(i);
    size_t k = 0;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) hess_packed[k++] = jet.hess(i, j);
  });
}

void qem_expr_free(qem_expr* e) { delete e; }

/* ----------------------------------------------------------------------- */

qem_status qem_structure_example(int example, int n, double m, int sign, double a,
                                 qem_structure** out) {
  if (!out) return invalid("out must not be null");
  *out = nullptr;
  return wrap([&] {
    if (example != 1 && example != 2)
      throw qem::InvalidArgument("example must be 1 or 2");
    qem::ExamplePotential spec{example == 1 ? qem::ExamplePotential::Kind::Example1
                                            : qem::ExamplePotential::Kind::Example2,
                               n, m, sign >= 0 ? +1 : -1, a};
    *out = new qem_structure{qem::example_structure(spec)};
  });
}

qem_status qem_structure_expr(int n, const char* f_text, double m, int m_inf, double lambda,
                              qem_structure** out) {
  if (!f_text || !out) return invalid("f_text and out must not be null");
  *out = nullptr;
  return wrap([&] {
    double mm = m_inf ? std::numeric_limits<double>::infinity() : m;
    qem::Expr f = qem::parse(f_text, qem::hnr_chart(n));
    *out = new qem_structure{qem::QEStructure(qem::hnr_metric(n), f, mm, lambda)};
  });
}

void qem_structure_free(qem_structure* s) { delete s; }

qem_status qem_qe_residual_frame_max(const qem_structure* s, const double* point, double* out) {
  if (!s || !point || !out) return invalid("s, point, and out must not be null");
  return wrap([&] {
    int d = s->s.metric.dim();
    auto frame = qem::hnr_frame(d - 1);
    auto p = point_span(point, d);
    *out = qem::frame_components(qem::qe_residual(s->s, p), frame, p).max_abs();
  });
}

qem_status qem_pde_residuals(const qem_structure* s, const double* point, double out_items[6]) {
  if (!s || !point || !out_items) return invalid("s, point, and out_items must not be null");
  return wrap([&] {
    auto res =
        qem::pde_residuals(s->s.f, s->s.m, s->s.lambda, point_span(point, s->s.metric.dim()));
    for (int i = 0; i < 6; ++i) out_items[i] = res.item[i];
  });
}

qem_status qem_static_residual(const qem_structure* s, const double* point, double* out) {
  if (!s || !point || !out) return invalid("s, point, and out must not be null");
  return wrap([&] {
    *out = qem::static_residual(s->s.metric, s->s.f, s->s.lambda,
                                point_span(point, s->s.metric.dim()));
  });
}

qem_status qem_mu_fiber(const qem_structure* s, const double* point, double* out) {
  if (!s || !point || !out) return invalid("s, point, and out must not be null");
  return wrap([&] { *out = qem::mu_fiber(s->s, point_span(point, s->s.metric.dim())); });
}

/* ----------------------------------------------------------------------- */

qem_status qem_classify(const qem_structure* s, uint64_t seed, double tol,
                        qem_classification* out) {
  if (!s || !out) return invalid("s and out must not be null");
  return wrap([&] {
    qem::GridSpec grid = qem::default_grid(s->s.metric.dim() - 1);
    grid.seed = seed;
    auto pts = qem::sample_grid(grid);
    qem::ClassificationVerdict v =
        qem::classify(s->s.f, s->s.m, s->s.lambda, pts, tol > 0.0 ? tol : 1e-7);
    out->tag = static_cast<int>(v.tag);
    out->a = v.a;
    out->max_pde_residual = v.max_pde_residual;
    std::snprintf(out->failed_step, sizeof out->failed_step, "%s", v.failed_step.c_str());
  });
}

/* ----------------------------------------------------------------------- */

qem_status qem_ode_classify(double m, double lambda, double h0, qem_ode_branch* out) {
  if (!out) return invalid("out must not be null");
  return wrap([&] {
    qem::BranchSolution b = qem::classify_branch({m, lambda}, h0);
    out->tag = static_cast<int>(b.tag);
    out->param = b.param;
    out->t_min = b.t_min;
    out->t_max = b.t_max;
    out->rejected = b.rejected ? 1 : 0;
  });
}

qem_status qem_ode_closed_form(const qem_ode_branch* branch, double m, double lambda, double t,
                               double* out) {
  if (!branch || !out) return invalid("branch and out must not be null");
  if (branch->tag < 0 || branch->tag > 6) return invalid("branch tag out of range");
  return wrap([&] {
    qem::BranchSolution b;
    b.tag = static_cast<qem::BranchSolution::Tag>(branch->tag);
    b.param = branch->param;
    b.t_min = branch->t_min;
    b.t_max = branch->t_max;
    b.rejected = branch->rejected != 0;
    *out = qem::closed_form(b, {m, lambda}, t);
  });
}

qem_status qem_ode_integrate(double m, double lambda, double h0, double t0, double t1, int steps,
                             double* ts, double* hs, size_t capacity, size_t* count,
                             int* blew_up, double* blowup_time) {
  if (!count || !blew_up || !blowup_time)
    return invalid("count, blew_up, and blowup_time must not be null");
  if (capacity > 0 && (!ts || !hs)) return invalid("ts and hs must not be null");
  *count = 0;
  *blew_up = 0;
  *blowup_time = 0.0;
  return wrap([&] {
    qem::Trajectory traj = qem::integrate({m, lambda}, h0, t0, t1, steps);
    size_t n = traj.t.size() < capacity ? traj.t.size() : capacity;
    for (size_t i = 0; i < n; ++i) {
      ts[i] = traj.t[i];
      hs[i] = traj.h[i];
    }
    *count = n;
    *blew_up = traj.blew_up ? 1 : 0;
    *blowup_time = traj.blew_up ? traj.blowup_time : 0.0;
  });
}

/* ----------------------------------------------------------------------- */

qem_status qem_run_manifest(const char* manifest_path, const char* out_dir, uint64_t seed,
                            int has_seed, double tol, int has_tol, int jobs, int* exit_code,
                            char** report_json) {
  if (!manifest_path || !out_dir || !exit_code || !report_json)
    return invalid("manifest_path, out_dir, exit_code, and report_json must not be null");
  *exit_code = 0;
  *report_json = nullptr;
  return wrap([&] {
    qem::RunOptions opts;
    if (has_seed) opts.seed = seed;
    if (has_tol) opts.tol = tol;
    opts.jobs = jobs;
    qem::RunOutput run = qem::run_manifest(manifest_path, out_dir, opts);
    *exit_code = run.exit_code;
    *report_json = dup_string(run.report_json);
  });
}

qem_status qem_sweep_ode(const double* ms, size_t n_ms, const double* lambdas, size_t n_lambdas,
                         const double* h0s, size_t n_h0s, double t0, double t1, int steps,
                         char** csv) {
  if (!csv) return invalid("csv must not be null");
  if ((n_ms && !ms) || (n_lambdas && !lambdas) || (n_h0s && !h0s))
    return invalid("non-empty lists must not be null");
  *csv = nullptr;
  return wrap([&] {
    std::vector<double> vm(ms, ms + n_ms);
    std::vector<double> vl(lambdas, lambdas + n_lambdas);
    std::vector<double> vh(h0s, h0s + n_h0s);
    *csv = dup_string(qem::sweep_ode_csv(vm, vl, vh, t0, t1, steps));
  });
}

qem_status qem_plot_data(const char* report_path, const char* out_dir, char** files_list) {
  if (!report_path || !out_dir || !files_list)
    return invalid("report_path, out_dir, and files_list must not be null");
  *files_list = nullptr;
  return wrap([&] {
    std::vector<std::string> files = qem::plot_data(report_path, out_dir);
    std::string joined;
    for (const std::string& f : files) {
      if (!joined.empty()) joined += '\n';
      joined += f;
    }
    *files_list = dup_string(joined);
  });
}

}  // extern "C"
