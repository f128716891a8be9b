#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "odx/parameters.hpp"

namespace odx {

// Objective evaluated at the current parameter values. When `with_grad` is
// true the callee must leave d(objective)/d(param) in each Parameter::grad
// (the checker zeroes grads beforehand).
using Objective = std::function<double(ParameterSet& params, bool with_grad)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, magnitude_floor * max(1, |f|)).
  double magnitude_floor = 1e-6;
  // 0 checks every entry; otherwise an evenly strided subset per parameter.
  std::size_t max_entries_per_parameter = 0;
};

GradCheckReport finite_diff_check(ParameterSet& params, const Objective& f,
                                  const GradCheckOptions& options = {});

}  // namespace odx
