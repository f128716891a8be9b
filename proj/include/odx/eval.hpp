#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "odx/dataset.hpp"
#include "odx/model.hpp"

namespace odx {

inline constexpr double kKlDelta = 0.001;

// sum_k m̂_k ln((m̂_k + δ)/(m_k + δ)), no renormalization after smoothing.
double kl_div(std::span<const double> m, std::span<const double> m_hat, double delta = kKlDelta);
// (KL(m, m̂) + KL(m̂, m)) / 2
double js_div(std::span<const double> m, std::span<const double> m_hat, double delta = kKlDelta);
// Ground distance |i - j| in bucket units: sum_k |CDF_m(k) - CDF_m̂(k)|.
double emd(std::span<const double> m, std::span<const double> m_hat);

enum class Metric { kl, js, emd };
Metric parse_metric(const std::string& name);
std::string metric_name(Metric m);
double metric_value(Metric metric, std::span<const double> m, std::span<const double> m_hat);

// Predicted full tensors for one window, steps 1..h.
struct WindowForecast {
  std::size_t target_start = 0;  // interval index of step 1
  std::vector<DenseTensor> steps;
};

struct MetricReport {
  std::string model;
  Metric metric = Metric::emd;
  std::size_t k = 1;
  std::string group_kind = "all";  // all | hour | distance
  std::string group_key;
  std::optional<double> value;     // empty when no observed cell was aggregated
  std::size_t cells = 0;
};

// Restricts aggregation: (interval index, origin, destination) -> include?
using CellFilter = std::function<bool(std::size_t interval, std::size_t o, std::size_t d)>;

// Mean metric over every Ω = 1 cell of every window at step k (1-based).
MetricReport dissim_aggregate(std::span<const WindowForecast> forecasts, const Dataset& ds, Metric metric,
                              std::size_t k, const CellFilter& filter = {});

enum class Grouping { hour_band, distance_band };
Grouping parse_grouping(const std::string& name);

struct GroupingOptions {
  double hours_per_band = 3.0;
  double km_per_band = 0.5;
  double max_km = 3.0;  // cells at or beyond this distance are not reported
};

// One report per band in band order; empty bands carry no value.
std::vector<MetricReport> grouped_report(std::span<const WindowForecast> forecasts, const Dataset& ds,
                                         Metric metric, std::size_t k, Grouping grouping,
                                         const GroupingOptions& options = {});

std::vector<WindowForecast> forecast_windows(ForecastModel& model, const Dataset& ds, std::span<const Window> windows);
// The same static tensor for every window and step.
std::vector<WindowForecast> constant_forecasts(const DenseTensor& prediction, std::span<const Window> windows);

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);
nlohmann::json reports_to_json(const std::vector<MetricReport>& reports);

}  // namespace odx
