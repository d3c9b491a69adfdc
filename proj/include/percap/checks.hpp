#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "percap/core.hpp"

namespace percap {

/// Central differences of `f` along the listed coordinates of `x`.
VecX central_difference(const std::function<double(const VecX&)>& f, const VecX& x, const std::vector<int>& coords,
                        double step);

/// ||a - b||_inf / ||b||_inf, with 0 when both are (numerically) zero.
double relative_error(const VecX& analytic, const VecX& numeric);

struct GradientCheck {
  std::string name;
  int instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  bool passed() const { return max_error < tolerance; }
};

struct GradientSuiteOptions {
  std::uint64_t seed = 7;
  int instances = 50;
  /// Overrides every per-check tolerance when positive.
  double tolerance = 0.0;
};

/// Every analytical derivative in the library against finite differences:
/// kinematics, closed-form translation, projection, the five losses, the
/// deformation Jacobians and distance-image sampling.
std::vector<GradientCheck> run_gradient_suite(const GradientSuiteOptions& options = {});

std::string format_gradient_table(const std::vector<GradientCheck>& checks);

}  // namespace percap
