#include "odx/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "odx/error.hpp"

namespace odx {
namespace {

double evaluate(ParameterSet& params, const Objective& f, bool with_grad) {
  const double v = f(params, with_grad);
  if (!std::isfinite(v)) throw EvaluationError("objective is not finite during gradient check");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(ParameterSet& params, const Objective& f,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw DomainError("finite_diff_check: epsilon must be positive");
  params.zero_grad();
  const double f0 = evaluate(params, f, true);
  const double floor = options.magnitude_floor * std::max(1.0, std::abs(f0));
  std::vector<DenseTensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad);

  GradCheckReport report;
  const double eps = options.epsilon;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].value.values();
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (options.max_entries_per_parameter > 0 && n > options.max_entries_per_parameter) {
      stride = (n + options.max_entries_per_parameter - 1) / options.max_entries_per_parameter;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(params, f, false);
      values[i] = saved - eps;
      const double down = evaluate(params, f, false);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (report.worst_parameter.empty() || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = params[pi].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace odx
