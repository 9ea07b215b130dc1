#include "grid.hpp"

#include <cmath>

namespace qem {

void GridSpec::validate() const {
  if (axes.empty()) throw InvalidArgument("grid needs at least one axis");
  for (const AxisSpec& a : axes) {
    if (!(a.lo <= a.hi)) throw InvalidArgument("grid axis '" + a.name + "' has lo > hi");
    if (!std::isfinite(a.lo) || !std::isfinite(a.hi))
      throw InvalidArgument("grid axis '" + a.name + "' has non-finite bounds");
    if (a.count < 1) throw InvalidArgument("grid axis '" + a.name + "' needs count >= 1");
    if (a.log_spaced && !(a.lo > 0.0))
      throw InvalidArgument("log-spaced axis '" + a.name + "' needs lo > 0");
  }
  if (random_points < 0) throw InvalidArgument("random point count must be non-negative");
}

GridSpec default_grid(int n) {
  if (n < 2) throw InvalidArgument("n must be at least 2");
  GridSpec spec;
  for (int i = 1; i < n; ++i)
    spec.axes.push_back({"x_" + std::to_string(i), -1.0, 1.0, 5, false});
  spec.axes.push_back({"x_" + std::to_string(n), 0.25, 4.0, 5, true});
  spec.axes.push_back({"t", -3.0, 3.0, 5, false});
  return spec;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace {

double axis_lattice_point(const AxisSpec& a, int i) {
  if (a.count == 1) return a.log_spaced ? std::sqrt(a.lo * a.hi) : 0.5 * (a.lo + a.hi);
  const double s = static_cast<double>(i) / (a.count - 1);
  if (a.log_spaced) return std::exp(std::log(a.lo) + s * (std::log(a.hi) - std::log(a.lo)));
  return a.lo + s * (a.hi - a.lo);
}

double axis_random_point(const AxisSpec& a, double u) {
  if (a.log_spaced) return std::exp(std::log(a.lo) + u * (std::log(a.hi) - std::log(a.lo)));
  return a.lo + u * (a.hi - a.lo);
}

}  // namespace

std::vector<std::vector<double>> sample_grid(const GridSpec& spec) {
  spec.validate();
  const int d = static_cast<int>(spec.axes.size());

  std::size_t lattice = 1;
  for (const AxisSpec& a : spec.axes) lattice *= static_cast<std::size_t>(a.count);

  std::vector<std::vector<double>> points;
  points.reserve(lattice + spec.random_points);

  std::vector<int> idx(d, 0);
  for (std::size_t k = 0; k < lattice; ++k) {
    std::vector<double> p(d);
    for (int i = 0; i < d; ++i) p[i] = axis_lattice_point(spec.axes[i], idx[i]);
    points.push_back(std::move(p));
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < spec.axes[i].count) break;
      idx[i] = 0;
    }
  }

  std::mt19937_64 rng(spec.seed);
  for (int k = 0; k < spec.random_points; ++k) {
    std::vector<double> p(d);
    for (int i = 0; i < d; ++i) p[i] = axis_random_point(spec.axes[i], uniform01(rng));
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace qem
