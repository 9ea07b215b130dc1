#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "expr.hpp"

namespace qem {

struct AxisSpec {
  std::string name;
  double lo;
  double hi;
  int count;
  bool log_spaced = false;
};

struct GridSpec {
  std::vector<AxisSpec> axes;
  int random_points = 100;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Default sampling box for the (x_1,…,x_n,t) chart: x_i ∈ [−1,1] for i < n,
/// x_n ∈ [0.25,4] log-spaced, t ∈ [−3,3], five lattice points per axis plus
/// 100 random points, seed 42. Stays clear of the x_n → 0 singularity.
GridSpec default_grid(int n);

/// Uniform double in [0,1) from the top 53 bits of the generator output;
/// fixed mapping so sampled grids are reproducible across platforms.
double uniform01(std::mt19937_64& rng);

/// The full lattice (Cartesian product, last axis fastest) followed by the
/// random points (per point, axes in order; log axes sample uniformly in
/// log space). Deterministic given the spec.
std::vector<std::vector<double>> sample_grid(const GridSpec& spec);

}  // namespace qem
