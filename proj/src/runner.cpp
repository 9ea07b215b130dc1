#include "runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

#include "geometry.hpp"
#include "ode.hpp"
#include "warped.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace qem {
namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kDefaultTau = 1e-7;         // classification tolerance
constexpr double kOdeBranchTol = 1e-6;       // RK vs closed form, profile-relative
constexpr double kWarpedEinsteinTol = 1e-8;  // higher-dimensional curvature path
constexpr double kMuDeviationTol = 1e-9;     // per-point |mu - mean|
constexpr double kMuVarianceTol = 1e-18;
constexpr int kWarpedSamplePoints = 50;
constexpr std::size_t kMaxGridPoints = 200000;

[[noreturn]] void fail(const std::string& msg) { throw ManifestError(msg); }

std::string iso8601_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Manifest parsing

void require_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& item : j.items())
    if (!known.count(item.key())) fail("unknown key \"" + item.key() + "\" in " + where);
}

double number_at(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number()) fail("\"" + key + "\" in " + where + " must be a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) fail("\"" + key + "\" in " + where + " must be finite");
  return x;
}

int integer_at(const json& j, const std::string& key, const std::string& where) {
  double x = number_at(j, key, where);
  if (x != std::floor(x) || std::abs(x) > 1e9)
    fail("\"" + key + "\" in " + where + " must be an integer");
  return static_cast<int>(x);
}

PotentialDecl parse_potential(const json& j, int n, double m) {
  if (!j.is_object()) fail("\"potential\" must be an object");
  PotentialDecl decl;
  if (j.contains("example")) {
    require_keys(j, {"example", "sign", "a"}, "potential");
    int which = integer_at(j, "example", "potential");
    if (which != 1 && which != 2) fail("\"example\" must be 1 or 2");
    if (std::isinf(m)) fail("example potentials require finite m");
    if (which == 1) {
      decl.kind = PotentialDecl::Kind::Example1;
      if (j.contains("a")) fail("\"a\" applies to example 2 only");
      if (j.contains("sign")) {
        const json& s = j["sign"];
        if (s.is_string()) {
          std::string str = s.get<std::string>();
          if (str == "+") decl.sign = +1;
          else if (str == "-") decl.sign = -1;
          else fail("\"sign\" must be \"+\", \"-\", 1, or -1");
        } else if (s.is_number()) {
          double v = s.get<double>();
          if (v == 1.0) decl.sign = +1;
          else if (v == -1.0) decl.sign = -1;
          else fail("\"sign\" must be \"+\", \"-\", 1, or -1");
        } else {
          fail("\"sign\" must be \"+\", \"-\", 1, or -1");
        }
      }
    } else {
      decl.kind = PotentialDecl::Kind::Example2;
      if (j.contains("sign")) fail("\"sign\" applies to example 1 only");
      if (j.contains("a")) decl.a = number_at(j, "a", "potential");
    }
  } else if (j.contains("expr")) {
    require_keys(j, {"expr"}, "potential");
    if (!j["expr"].is_string()) fail("\"expr\" must be a string");
    decl.kind = PotentialDecl::Kind::ExprText;
    decl.text = j["expr"].get<std::string>();
    if (decl.text.empty()) fail("\"expr\" must not be empty");
    try {
      parse(decl.text, hnr_chart(n));
    } catch (const ParseError& e) {
      fail("potential expression: " + std::string(e.what()) + " (position " +
           std::to_string(e.position()) + ")");
    }
  } else {
    fail("potential must declare \"example\" or \"expr\"");
  }
  return decl;
}

GridSpec parse_grid(const json* jg, int n) {
  GridSpec spec = default_grid(n);
  if (!jg) return spec;
  if (!jg->is_object()) fail("\"grid\" must be an object");
  require_keys(*jg, {"axes", "random_points", "seed"}, "grid");

  const Chart chart = hnr_chart(n);
  if (jg->contains("axes")) {
    const json& ja = (*jg)["axes"];
    if (!ja.is_array()) fail("\"axes\" must be an array");
    std::vector<AxisSpec> axes(chart.dim());
    std::vector<bool> seen(chart.dim(), false);
    for (const json& je : ja) {
      if (!je.is_object()) fail("grid axis entries must be objects");
      require_keys(je, {"name", "min", "max", "count", "scale"}, "grid axis");
      if (!je.contains("name") || !je["name"].is_string()) fail("grid axis needs a \"name\"");
      std::string name = je["name"].get<std::string>();
      auto idx = chart.index_of(name);
      if (!idx) fail("grid axis \"" + name + "\" is not a coordinate of the chart");
      if (seen[*idx]) fail("grid axis \"" + name + "\" appears twice");
      seen[*idx] = true;
      AxisSpec a;
      a.name = name;
      a.lo = number_at(je, "min", "grid axis \"" + name + "\"");
      a.hi = number_at(je, "max", "grid axis \"" + name + "\"");
      a.count = integer_at(je, "count", "grid axis \"" + name + "\"");
      if (je.contains("scale")) {
        if (!je["scale"].is_string()) fail("grid axis \"scale\" must be \"linear\" or \"log\"");
        std::string s = je["scale"].get<std::string>();
        if (s == "log") a.log_spaced = true;
        else if (s != "linear") fail("grid axis \"scale\" must be \"linear\" or \"log\"");
      }
      if (!(a.lo < a.hi)) fail("grid axis \"" + name + "\" needs min < max");
      if (!chart.bounds(*idx).contains(a.lo) || !chart.bounds(*idx).contains(a.hi))
        fail("grid axis \"" + name + "\" leaves the chart (x_n must stay > 0)");
      axes[*idx] = a;
    }
    for (int i = 0; i < chart.dim(); ++i)
      if (!seen[i]) fail("grid axes must cover every coordinate; missing \"" + chart.name(i) + "\"");
    spec.axes = std::move(axes);
  }
  if (jg->contains("random_points")) {
    int r = integer_at(*jg, "random_points", "grid");
    if (r < 0) fail("\"random_points\" must be non-negative");
    spec.random_points = r;
  }
  if (jg->contains("seed")) {
    const json& s = (*jg)["seed"];
    if (!s.is_number_unsigned() && !s.is_number_integer()) fail("\"seed\" must be an unsigned integer");
    long long v = s.get<long long>();
    if (v < 0) fail("\"seed\" must be non-negative");
    spec.seed = static_cast<std::uint64_t>(v);
  }

  double lattice = 1.0;
  for (const AxisSpec& a : spec.axes) lattice *= a.count;
  if (lattice + spec.random_points > static_cast<double>(kMaxGridPoints))
    fail("grid has more than " + std::to_string(kMaxGridPoints) + " points; reduce counts");
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(std::string("grid: ") + e.what());
  }
  return spec;
}

std::vector<std::string> parse_checks(const json* jc) {
  const std::vector<std::string>& all = all_check_names();
  if (!jc) return all;
  if (!jc->is_array()) fail("\"checks\" must be an array of check names");
  std::set<std::string> wanted;
  for (const json& je : *jc) {
    if (!je.is_string()) fail("\"checks\" entries must be strings");
    std::string name = je.get<std::string>();
    if (name == "all") return all;
    if (std::find(all.begin(), all.end(), name) == all.end())
      fail("unknown check name \"" + name + "\"");
    wanted.insert(name);
  }
  if (wanted.empty()) fail("\"checks\" must not be empty");
  std::vector<std::string> out;
  for (const std::string& name : all)
    if (wanted.count(name)) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------
// Check execution

struct Cell {
  double r = 0.0;
  bool ok = true;
  std::string err;
};

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  std::size_t threads = std::min<std::size_t>(std::max(jobs, 1), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) body(i);
    });
  for (std::thread& th : pool) th.join();
}

/// The structure always carries the manifest's lambda, so a declared example
/// with the wrong lambda runs and fails its checks instead of being rejected.
QEStructure build_structure(const Manifest& man) {
  Expr f;
  switch (man.potential.kind) {
    case PotentialDecl::Kind::Example1:
      f = example_potential(
          {ExamplePotential::Kind::Example1, man.n, man.m, man.potential.sign, 0.0});
      break;
    case PotentialDecl::Kind::Example2:
      f = example_potential(
          {ExamplePotential::Kind::Example2, man.n, man.m, +1, man.potential.a});
      break;
    case PotentialDecl::Kind::ExprText:
      f = parse(man.potential.text, hnr_chart(man.n));
      break;
  }
  return QEStructure(hnr_metric(man.n), f, man.m, man.lambda);
}

/// Non-empty exactly when the named check cannot run for this manifest.
std::string skip_reason(const std::string& name, const Manifest& man) {
  const bool minf = man.m_infinite();
  if (name == "classify") {
    if (minf) return "requires finite m";
    if (man.lambda >= 0.0) return "requires lambda < 0";
  }
  if (name == "ode-branches" || name == "mu-fiber") {
    if (minf) return "requires finite m";
  }
  if (name == "static" || name == "lg-star-kernel") {
    if (minf || man.m != 1.0) return "requires m = 1";
  }
  if (name == "warped-einstein") {
    if (minf) return "requires finite m";
    if (man.m < 1.0 || std::abs(man.m - std::llround(man.m)) > 1e-9)
      return "requires integer m >= 1";
  }
  return "";
}

struct PointCheck {
  std::string name;
  double tol;
  std::function<double(std::span<const double>)> residual;
};

std::vector<PointCheck> build_point_checks(const Manifest& man, const QEStructure& s,
                                           const std::vector<VectorField>& frame) {
  const int n = man.n;
  const double exact = man.tol.exact;
  std::vector<PointCheck> out;
  auto requested = [&](const std::string& name) {
    return std::find(man.checks.begin(), man.checks.end(), name) != man.checks.end() &&
           skip_reason(name, man).empty();
  };

  if (requested("brackets"))
    out.push_back({"brackets", exact, [n](std::span<const double> p) { return bracket_check(n, p); }});
  if (requested("connection"))
    out.push_back(
        {"connection", exact, [n](std::span<const double> p) { return connection_check(n, p); }});
  if (requested("ricci-closed"))
    out.push_back({"ricci-closed", exact, [n, &s](std::span<const double> p) {
                     Tensor2At num = ricci(s.metric, p);
                     Tensor2At closed = ricci_closed(n, p);
                     double dev = 0.0;
                     for (std::size_t i = 0; i < num.v.size(); ++i)
                       dev = std::max(dev, std::abs(num.v[i] - closed.v[i]));
                     return dev;
                   }});
  if (requested("pde-system"))
    out.push_back({"pde-system", exact, [&s](std::span<const double> p) {
                     return pde_residuals(s.f, s.m, s.lambda, p).max_abs();
                   }});
  if (requested("qe-residual"))
    out.push_back({"qe-residual", exact, [&s, &frame](std::span<const double> p) {
                     return frame_components(qe_residual(s, p), frame, p).max_abs();
                   }});
  if (requested("static"))
    out.push_back({"static", exact, [&s](std::span<const double> p) {
                     return std::abs(static_residual(s.metric, s.f, s.lambda, p));
                   }});
  if (requested("lg-star-kernel")) {
    Expr w = apply(UnaryFn::Exp, -s.f);
    out.push_back({"lg-star-kernel", exact, [&s, w](std::span<const double> p) {
                     return adjoint_lg_star(s.metric, w, p).max_abs();
                   }});
  }
  if (requested("mu-fiber"))
    // Raw mu values; converted to deviations from the mean after the sweep.
    out.push_back({"mu-fiber", kMuDeviationTol,
                   [&s](std::span<const double> p) { return mu_fiber(s, p); }});
  return out;
}

CheckResult reduce_point_check(const PointCheck& pc, const std::vector<Cell>& cells) {
  CheckResult r;
  r.name = pc.name;
  r.tolerance = pc.tol;
  r.points = static_cast<std::int64_t>(cells.size());
  double sum = 0.0;
  std::int64_t evaluated = 0;
  for (const Cell& c : cells) {
    if (!c.ok) {
      ++r.failures;
      if (r.note.empty()) r.note = "evaluation error: " + c.err;
      continue;
    }
    double a = std::abs(c.r);
    r.max_residual = std::max(r.max_residual, a);
    sum += a;
    ++evaluated;
    if (a > pc.tol) ++r.failures;
  }
  if (evaluated > 0) r.mean_residual = sum / static_cast<double>(evaluated);
  r.status = r.failures == 0 ? "pass" : "fail";
  return r;
}

/// Rewrites mu cells to |mu - mean| and applies the constancy test; for the
/// closed-form examples the mean itself is also pinned.
CheckResult reduce_mu_check(const Manifest& man, const PointCheck& pc, std::vector<Cell>& cells) {
  CheckResult r;
  r.name = pc.name;
  r.tolerance = pc.tol;
  r.points = static_cast<std::int64_t>(cells.size());
  std::vector<double> mus;
  for (const Cell& c : cells) {
    if (!c.ok) {
      ++r.failures;
      if (r.note.empty()) r.note = "evaluation error: " + c.err;
    } else {
      mus.push_back(c.r);
    }
  }
  if (mus.empty()) {
    r.status = "fail";
    return r;
  }
  double mean = 0.0;
  for (double v : mus) mean += v;
  mean /= static_cast<double>(mus.size());
  double var = 0.0;
  double sumdev = 0.0;
  for (Cell& c : cells) {
    if (!c.ok) continue;
    double dev = std::abs(c.r - mean);
    c.r = dev;
    var += dev * dev;
    sumdev += dev;
    r.max_residual = std::max(r.max_residual, dev);
    if (dev > pc.tol) ++r.failures;
  }
  var /= static_cast<double>(mus.size());
  r.mean_residual = sumdev / static_cast<double>(mus.size());
  if (var > kMuVarianceTol) ++r.failures;

  std::string expected_note;
  if ((man.potential.kind == PotentialDecl::Kind::Example1 ||
       man.potential.kind == PotentialDecl::Kind::Example2) &&
      std::abs(man.lambda + (man.n - 1)) <= 1e-12) {
    double expected = man.potential.kind == PotentialDecl::Kind::Example1
                          ? 0.0
                          : -(man.m - 1.0) * (man.n - 1) / man.m;
    expected_note = ", expected=" + format_double(expected);
    if (std::abs(mean - expected) > 1e-9) ++r.failures;
  }
  r.note = "mean=" + format_double(mean) + ", variance=" + format_double(var) + expected_note +
           (r.note.empty() ? "" : "; " + r.note);
  r.status = r.failures == 0 ? "pass" : "fail";
  return r;
}

CheckResult run_classify(const Manifest& man, const QEStructure& s,
                         const std::vector<std::vector<double>>& pts, double tau) {
  CheckResult r;
  r.name = "classify";
  r.tolerance = tau;
  r.points = static_cast<std::int64_t>(pts.size());
  try {
    ClassificationVerdict v = classify(s.f, s.m, s.lambda, pts, tau);
    r.max_residual = v.max_pde_residual;
    bool ok = false;
    switch (man.potential.kind) {
      case PotentialDecl::Kind::Example1:
        ok = (v.tag == ClassificationVerdict::Tag::Example1Plus && man.potential.sign > 0) ||
             (v.tag == ClassificationVerdict::Tag::Example1Minus && man.potential.sign < 0);
        break;
      case PotentialDecl::Kind::Example2:
        ok = v.tag == ClassificationVerdict::Tag::Example2 &&
             std::abs(v.a - man.potential.a) <= 1e-6;
        break;
      case PotentialDecl::Kind::ExprText:
        ok = v.tag != ClassificationVerdict::Tag::NotQuasiEinstein;
        break;
    }
    r.note = std::string("verdict=") + to_string(v.tag);
    if (v.tag == ClassificationVerdict::Tag::Example2) r.note += ", a=" + format_double(v.a);
    if (!ok && !v.failed_step.empty()) r.note += ", failed-step=" + v.failed_step;
    r.failures = ok ? 0 : 1;
    r.status = ok ? "pass" : "fail";
    r.verdict = std::move(v);
  } catch (const Error& e) {
    r.status = "fail";
    r.failures = 1;
    r.note = std::string("evaluation error: ") + e.what();
  }
  return r;
}

/// Deviation of the RK trajectory from the closed form over [w0, w1],
/// relative to the profile scale max(1, max|h|).
double closed_form_deviation(const OdeParams& params, const BranchSolution& branch, double w0,
                             double w1, int steps) {
  Trajectory traj = integrate(params, closed_form(branch, params, w0), w0, w1, steps);
  if (traj.blew_up) return std::numeric_limits<double>::infinity();
  double dev = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    double exact = closed_form(branch, params, traj.t[i]);
    scale = std::max(scale, std::abs(exact));
    dev = std::max(dev, std::abs(traj.h[i] - exact));
  }
  return dev / scale;
}

CheckResult run_ode_branches(const Manifest& man) {
  CheckResult r;
  r.name = "ode-branches";
  r.tolerance = kOdeBranchTol;
  OdeParams params{man.m, man.lambda};

  std::vector<double> starts;
  if (man.lambda < 0.0) {
    double S = params.equilibrium();
    starts = {0.0, 0.5 * S, -0.5 * S, 0.9 * S, -0.9 * S, S, -S, 1.5 * S, -1.5 * S};
  } else if (man.lambda == 0.0) {
    starts = {0.0, 0.7, -0.7};
  } else {
    double s = std::sqrt(man.m * man.lambda);
    starts = {0.0, 0.5 * s, -0.5 * s};
  }
  r.points = static_cast<std::int64_t>(starts.size());

  std::ostringstream detail;
  const double guard = 0.15;
  for (double h0 : starts) {
    std::string what;
    double dev = 0.0;
    try {
      BranchSolution b = classify_branch(params, h0);
      double w0 = std::max(-3.0, b.t_min + guard);
      double w1 = std::min(3.0, b.t_max - guard);
      if (w1 > w0) dev = closed_form_deviation(params, b, w0, w1, 10000);
      if (!(dev <= kOdeBranchTol)) what = "closed-form deviation " + format_double(dev);

      if (b.rejected && what.empty()) {
        // Confirm finite-time blow-up at the predicted pole.
        double pole = std::isfinite(b.t_max) ? b.t_max : b.t_min;
        double target = pole + (pole >= 0.0 ? 1.0 : -1.0);
        int steps = 20000;
        Trajectory traj = integrate(params, h0, 0.0, target, steps);
        double step = std::abs(target) / steps;
        double slack = std::max(20.0 * step, 0.01 * std::max(1.0, std::abs(pole)));
        if (!traj.blew_up)
          what = "expected blow-up at t=" + format_double(pole) + " not detected";
        else if (std::abs(traj.blowup_time - pole) > slack)
          what = "blow-up at t=" + format_double(traj.blowup_time) + ", predicted " +
                 format_double(pole);
      }
      if (what.empty()) {
        detail << (detail.tellp() > 0 ? "; " : "") << "h0=" << format_double(h0) << ":"
               << to_string(b.tag) << " ok";
      }
    } catch (const Error& e) {
      what = e.what();
    }
    r.max_residual = std::max(r.max_residual, dev);
    if (!what.empty()) {
      ++r.failures;
      detail << (detail.tellp() > 0 ? "; " : "") << "h0=" << format_double(h0) << ": " << what;
    }
  }
  r.note = detail.str();
  r.status = r.failures == 0 ? "pass" : "fail";
  return r;
}

CheckResult run_warped_einstein(const Manifest& man, const QEStructure& s, int jobs) {
  CheckResult r;
  r.name = "warped-einstein";
  r.tolerance = kWarpedEinsteinTol;
  const int n = man.n;
  const int k = static_cast<int>(std::llround(man.m));

  // Reference base point for the fiber constant: x = 0, x_n = 1, t = 0.
  std::vector<double> p0(n + 1, 0.0);
  p0[n - 1] = 1.0;
  double mu;
  try {
    mu = mu_fiber(s, p0);
  } catch (const Error& e) {
    r.status = "fail";
    r.failures = 1;
    r.note = std::string("evaluation error: ") + e.what();
    return r;
  }
  if (mu > 1e-8) {
    r.status = "skipped";
    r.skip_reason = "fiber Einstein constant is positive; no fiber family implemented";
    return r;
  }

  FiberSpec fiber = matched_fiber(mu, k);
  r.note = std::string("fiber=") +
           (fiber.kind == FiberSpec::Kind::Flat ? "flat" : "hyperbolic") +
           " k=" + std::to_string(k) +
           (fiber.kind == FiberSpec::Kind::ScaledHyperbolic ? " r2=" + format_double(fiber.r2) : "") +
           ", mu=" + format_double(mu);

  GridSpec pg;
  for (AxisSpec a : man.grid.axes) {
    a.count = 1;
    pg.axes.push_back(a);
  }
  for (int i = 1; i <= k; ++i) {
    bool last_hyper = fiber.kind == FiberSpec::Kind::ScaledHyperbolic && i == k;
    pg.axes.push_back(last_hyper ? AxisSpec{"y_" + std::to_string(i), 0.25, 4.0, 1, true}
                                 : AxisSpec{"y_" + std::to_string(i), -1.0, 1.0, 1, false});
  }
  pg.random_points = kWarpedSamplePoints;
  pg.seed = man.grid.seed;
  std::vector<std::vector<double>> pts = sample_grid(pg);
  r.points = static_cast<std::int64_t>(pts.size());

  std::vector<Cell> cells(pts.size());
  parallel_for(pts.size(), jobs, [&](std::size_t i) {
    try {
      cells[i].r = warped_einstein_residual(s, fiber, pts[i]).max_abs();
    } catch (const Error& e) {
      cells[i].ok = false;
      cells[i].err = e.what();
    }
  });

  double sum = 0.0;
  std::int64_t evaluated = 0;
  for (const Cell& c : cells) {
    if (!c.ok) {
      ++r.failures;
      r.note += "; evaluation error: " + c.err;
      break;
    }
    r.max_residual = std::max(r.max_residual, c.r);
    sum += c.r;
    ++evaluated;
    if (c.r > r.tolerance) ++r.failures;
  }
  if (evaluated > 0) r.mean_residual = sum / static_cast<double>(evaluated);
  r.status = r.failures == 0 ? "pass" : "fail";
  return r;
}

// ---------------------------------------------------------------------------
// Report assembly

json manifest_json(const Manifest& man) {
  json jm;
  jm["n"] = man.n;
  if (man.m_infinite())
    jm["m"] = "inf";
  else
    jm["m"] = man.m;
  jm["lambda"] = man.lambda;
  json jp;
  switch (man.potential.kind) {
    case PotentialDecl::Kind::Example1:
      jp["example"] = 1;
      jp["sign"] = man.potential.sign > 0 ? "+" : "-";
      break;
    case PotentialDecl::Kind::Example2:
      jp["example"] = 2;
      jp["a"] = man.potential.a;
      break;
    case PotentialDecl::Kind::ExprText:
      jp["expr"] = man.potential.text;
      break;
  }
  jm["potential"] = jp;
  json jaxes = json::array();
  for (const AxisSpec& a : man.grid.axes) {
    json ja;
    ja["name"] = a.name;
    ja["min"] = a.lo;
    ja["max"] = a.hi;
    ja["count"] = a.count;
    ja["scale"] = a.log_spaced ? "log" : "linear";
    jaxes.push_back(ja);
  }
  jm["grid"] = {{"axes", jaxes},
                {"random_points", man.grid.random_points},
                {"seed", man.grid.seed}};
  jm["tolerances"] = {{"exact", man.tol.exact}, {"fd", man.tol.fd}};
  jm["checks"] = man.checks;
  return jm;
}

json check_json(const CheckResult& c) {
  json jc;
  jc["name"] = c.name;
  jc["status"] = c.status;
  if (!c.skip_reason.empty()) jc["skip_reason"] = c.skip_reason;
  jc["max_residual"] = c.max_residual;
  jc["mean_residual"] = c.mean_residual;
  jc["tolerance"] = c.tolerance;
  jc["points"] = c.points;
  jc["failures"] = c.failures;
  if (!c.note.empty()) jc["note"] = c.note;
  if (c.verdict) {
    const ClassificationVerdict& v = *c.verdict;
    json jv;
    jv["tag"] = to_string(v.tag);
    jv["a"] = v.a;
    jv["failed_step"] = v.failed_step;
    jv["max_pde_residual"] = v.max_pde_residual;
    json steps = json::array();
    for (const ClassificationStep& s : v.steps)
      steps.push_back({{"name", s.name},
                       {"residual", s.residual},
                       {"tolerance", s.tolerance},
                       {"pass", s.pass}});
    jv["steps"] = steps;
    jc["verdict"] = jv;
  }
  return jc;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path.string());
  out << content;
  if (!out) fail("cannot write " + path.string());
}

}  // namespace

bool Manifest::m_infinite() const { return std::isinf(m); }

const std::vector<std::string>& all_check_names() {
  static const std::vector<std::string> names = {
      "brackets",      "connection", "ricci-closed",   "pde-system",
      "qe-residual",   "classify",   "ode-branches",   "static",
      "lg-star-kernel", "mu-fiber",  "warped-einstein"};
  return names;
}

Manifest parse_manifest(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("manifest root must be a JSON object");
  require_keys(j, {"n", "m", "lambda", "potential", "grid", "tolerances", "checks"}, "manifest");

  Manifest man;
  if (!j.contains("n")) fail("manifest needs \"n\"");
  man.n = integer_at(j, "n", "manifest");
  if (man.n < 2 || man.n > 16) fail("\"n\" must be between 2 and 16");

  if (!j.contains("m")) fail("manifest needs \"m\"");
  const json& jm = j["m"];
  if (jm.is_string()) {
    if (jm.get<std::string>() != "inf") fail("\"m\" must be a positive number or \"inf\"");
    man.m = std::numeric_limits<double>::infinity();
  } else if (jm.is_number()) {
    man.m = jm.get<double>();
    if (!(man.m > 0.0) || !std::isfinite(man.m))
      fail("\"m\" must be a positive number or \"inf\"");
  } else {
    fail("\"m\" must be a positive number or \"inf\"");
  }

  if (!j.contains("lambda")) fail("manifest needs \"lambda\"");
  man.lambda = number_at(j, "lambda", "manifest");

  if (!j.contains("potential")) fail("manifest needs \"potential\"");
  man.potential = parse_potential(j["potential"], man.n, man.m);

  man.grid = parse_grid(j.contains("grid") ? &j["grid"] : nullptr, man.n);

  if (j.contains("tolerances")) {
    const json& jt = j["tolerances"];
    if (!jt.is_object()) fail("\"tolerances\" must be an object");
    require_keys(jt, {"exact", "fd"}, "tolerances");
    if (jt.contains("exact")) {
      man.tol.exact = number_at(jt, "exact", "tolerances");
      if (!(man.tol.exact > 0.0)) fail("\"exact\" tolerance must be positive");
    }
    if (jt.contains("fd")) {
      man.tol.fd = number_at(jt, "fd", "tolerances");
      if (!(man.tol.fd > 0.0)) fail("\"fd\" tolerance must be positive");
    }
  }

  man.checks = parse_checks(j.contains("checks") ? &j["checks"] : nullptr);
  return man;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunOutput run_manifest_text(const std::string& manifest_text, const std::string& out_dir,
                            const RunOptions& opts) {
  Manifest man = parse_manifest(manifest_text);
  if (opts.seed) man.grid.seed = *opts.seed;
  const double tau = opts.tol.value_or(kDefaultTau);

  QEStructure s = build_structure(man);
  std::vector<VectorField> frame = hnr_frame(man.n);
  std::vector<std::vector<double>> pts = sample_grid(man.grid);

  // Per-point identity checks, fanned out over the grid.
  std::vector<PointCheck> point_checks = build_point_checks(man, s, frame);
  std::vector<std::vector<Cell>> cells(point_checks.size(), std::vector<Cell>(pts.size()));
  parallel_for(pts.size(), opts.jobs, [&](std::size_t i) {
    for (std::size_t c = 0; c < point_checks.size(); ++c) {
      try {
        cells[c][i].r = point_checks[c].residual(pts[i]);
      } catch (const Error& e) {
        cells[c][i].ok = false;
        cells[c][i].err = e.what();
      }
    }
  });

  std::vector<CheckResult> results;
  for (const std::string& name : man.checks) {
    std::string why = skip_reason(name, man);
    if (!why.empty()) {
      CheckResult r;
      r.name = name;
      r.status = "skipped";
      r.skip_reason = why;
      results.push_back(std::move(r));
      continue;
    }
    auto it = std::find_if(point_checks.begin(), point_checks.end(),
                           [&](const PointCheck& pc) { return pc.name == name; });
    if (it != point_checks.end()) {
      std::size_t c = static_cast<std::size_t>(it - point_checks.begin());
      results.push_back(name == "mu-fiber" ? reduce_mu_check(man, *it, cells[c])
                                           : reduce_point_check(*it, cells[c]));
    } else if (name == "classify") {
      results.push_back(run_classify(man, s, pts, tau));
    } else if (name == "ode-branches") {
      results.push_back(run_ode_branches(man));
    } else if (name == "warped-einstein") {
      results.push_back(run_warped_einstein(man, s, opts.jobs));
    }
  }

  int passed = 0, failed = 0, skipped = 0;
  for (const CheckResult& r : results) {
    if (r.status == "pass") ++passed;
    else if (r.status == "fail") ++failed;
    else ++skipped;
  }
  const int exit_code = failed > 0 ? 1 : 0;

  std::size_t lattice = 1;
  for (const AxisSpec& a : man.grid.axes) lattice *= static_cast<std::size_t>(a.count);

  json rep;
  rep["version"] = kVersion;
  rep["timestamp"] = iso8601_utc_now();
  rep["manifest"] = manifest_json(man);
  rep["grid"] = {{"points", pts.size()},
                 {"lattice_points", lattice},
                 {"random_points", man.grid.random_points},
                 {"seed", man.grid.seed}};
  rep["files"] = {{"report_json", "report.json"}, {"residuals_csv", "residuals.csv"}};
  json jchecks = json::array();
  for (const CheckResult& r : results) jchecks.push_back(check_json(r));
  rep["checks"] = jchecks;
  rep["summary"] = {{"total", results.size()},
                    {"passed", passed},
                    {"failed", failed},
                    {"skipped", skipped},
                    {"exit_code", exit_code}};

  // Flat residual dump for the per-point checks, grid order.
  std::ostringstream csv;
  for (const AxisSpec& a : man.grid.axes) csv << a.name << ',';
  csv << "check,residual\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t c = 0; c < point_checks.size(); ++c) {
      for (double x : pts[i]) csv << format_double(x) << ',';
      csv << point_checks[c].name << ','
          << (cells[c][i].ok ? format_double(cells[c][i].r) : "nan") << '\n';
    }
  }

  RunOutput out;
  out.manifest = std::move(man);
  out.checks = std::move(results);
  out.exit_code = exit_code;
  out.report_json = rep.dump(2) + "\n";

  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail("cannot create output directory " + out_dir);
  fs::path report_path = dir / "report.json";
  fs::path residuals_path = dir / "residuals.csv";
  write_file(report_path, out.report_json);
  write_file(residuals_path, csv.str());
  out.report_path = report_path.string();
  out.residuals_path = residuals_path.string();
  return out;
}

RunOutput run_manifest(const std::string& manifest_path, const std::string& out_dir,
                       const RunOptions& opts) {
  return run_manifest_text(read_text_file(manifest_path), out_dir, opts);
}

std::string sweep_ode_csv(const std::vector<double>& ms, const std::vector<double>& lambdas,
                          const std::vector<double>& h0s, double t0, double t1, int steps) {
  if (ms.empty() || lambdas.empty() || h0s.empty())
    throw InvalidArgument("sweep lists must be non-empty");
  if (!std::isfinite(t0) || !std::isfinite(t1) || !(t0 < t1))
    throw InvalidArgument("sweep needs finite t0 < t1");
  if (steps < 10 || steps > 10000000) throw InvalidArgument("steps must be in [10, 1e7]");
  for (double m : ms)
    if (!(m > 0.0) || !std::isfinite(m)) throw InvalidArgument("m must be positive and finite");
  for (double l : lambdas)
    if (!std::isfinite(l)) throw InvalidArgument("lambda must be finite");
  for (double h : h0s)
    if (!std::isfinite(h)) throw InvalidArgument("h0 must be finite");

  const double guard = 0.15;
  std::ostringstream out;
  out << "m,lambda,h0,branch,param,blowup_time,max_deviation\n";
  for (double m : ms)
    for (double lambda : lambdas)
      for (double h0 : h0s) {
        OdeParams params{m, lambda};
        BranchSolution b = classify_branch(params, h0);

        // Finite pole nearest t = 0; ties go to the positive side.
        std::string blowup = "none";
        double best = std::numeric_limits<double>::infinity();
        for (double e : {b.t_max, b.t_min})
          if (std::isfinite(e) && std::abs(e) < best) {
            best = std::abs(e);
            blowup = format_double(e);
          }

        std::string dev = "n/a";
        double w0 = std::max(t0, b.t_min + guard);
        double w1 = std::min(t1, b.t_max - guard);
        if (w1 > w0) {
          double d = closed_form_deviation(params, b, w0, w1, steps);
          dev = std::isfinite(d) ? format_double(d) : "blow-up";
        }
        out << format_double(m) << ',' << format_double(lambda) << ',' << format_double(h0)
            << ',' << to_string(b.tag) << ',' << format_double(b.param) << ',' << blowup << ','
            << dev << '\n';
      }
  return out.str();
}

std::vector<std::string> plot_data(const std::string& report_path, const std::string& out_dir) {
  json rep;
  try {
    rep = json::parse(read_text_file(report_path));
  } catch (const json::exception& e) {
    fail(std::string("report is not valid JSON: ") + e.what());
  }
  if (!rep.is_object() || !rep.contains("manifest") || !rep["manifest"].contains("n"))
    fail("report is missing the manifest echo");

  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail("cannot create output directory " + out_dir);
  std::vector<std::string> written;

  // Residual-vs-x_n profiles from the flat residual dump next to the report.
  const int n = rep["manifest"]["n"].get<int>();
  std::string rname = "residuals.csv";
  if (rep.contains("files") && rep["files"].contains("residuals_csv"))
    rname = rep["files"]["residuals_csv"].get<std::string>();
  std::ifstream rin(fs::path(report_path).parent_path() / rname);
  if (rin) {
    std::string line;
    std::getline(rin, line);  // header
    std::vector<std::tuple<std::string, double, double, std::string, std::string>> rows;
    while (std::getline(rin, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::size_t start = 0;
      while (true) {
        std::size_t comma = line.find(',', start);
        cols.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (cols.size() != static_cast<std::size_t>(n + 3)) continue;
      try {
        double xn = std::stod(cols[n - 1]);
        double res = std::stod(cols[n + 2]);
        rows.emplace_back(cols[n + 1], xn, res, cols[n - 1], cols[n + 2]);
      } catch (const std::exception&) {
        continue;  // nan residual rows keep their check out of the profile
      }
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a)) <
             std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b));
    });
    std::ostringstream pr;
    pr << "check,x_n,residual\n";
    for (const auto& row : rows)
      pr << std::get<0>(row) << ',' << std::get<3>(row) << ',' << std::get<4>(row) << '\n';
    fs::path p = dir / "profiles.csv";
    write_file(p, pr.str());
    written.push_back(p.string());
  }

  // Reduction-ODE trajectory for the t-profile named by the run.
  const json& jm = rep["manifest"];
  const bool m_inf = jm["m"].is_string();
  const double lambda = jm["lambda"].get<double>();
  const json* verdict = nullptr;
  if (rep.contains("checks"))
    for (const json& jc : rep["checks"])
      if (jc.value("name", "") == "classify" && jc.contains("verdict")) verdict = &jc["verdict"];

  if (!m_inf && lambda < 0.0) {
    const double m = jm["m"].get<double>();
    const double S = std::sqrt(-m * lambda);
    std::optional<double> h0;
    if (verdict) {
      std::string tag = (*verdict)["tag"].get<std::string>();
      if (tag == "example1+") h0 = S;
      else if (tag == "example1-") h0 = -S;
      else if (tag == "example2") h0 = -S * std::tanh((*verdict)["a"].get<double>());
    } else if (jm["potential"].contains("example")) {
      int which = jm["potential"]["example"].get<int>();
      if (which == 1) h0 = jm["potential"].value("sign", "+") == "+" ? S : -S;
      else h0 = -S * std::tanh(jm["potential"].value("a", 0.0));
    }
    if (h0) {
      OdeParams params{m, lambda};
      BranchSolution b = classify_branch(params, *h0);
      Trajectory traj = integrate(params, closed_form(b, params, -3.0), -3.0, 3.0, 6000);
      std::ostringstream tr;
      tr << "t,h_closed,h_rk\n";
      for (std::size_t i = 0; i < traj.t.size(); ++i)
        tr << format_double(traj.t[i]) << ',' << format_double(closed_form(b, params, traj.t[i]))
           << ',' << format_double(traj.h[i]) << '\n';
      fs::path p = dir / "trajectory.csv";
      write_file(p, tr.str());
      written.push_back(p.string());
    }
  }

  // Classification evidence table.
  if (verdict && verdict->contains("steps")) {
    std::ostringstream ev;
    ev << "step,residual,tolerance,pass\n";
    for (const json& js : (*verdict)["steps"])
      ev << js["name"].get<std::string>() << ',' << format_double(js["residual"].get<double>())
         << ',' << format_double(js["tolerance"].get<double>()) << ','
         << (js["pass"].get<bool>() ? 1 : 0) << '\n';
    fs::path p = dir / "evidence.csv";
    write_file(p, ev.str());
    written.push_back(p.string());
  }
  return written;
}

}  // namespace qem
