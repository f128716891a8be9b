#include "odx/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "odx/error.hpp"

namespace odx {

using nlohmann::json;

namespace {

void check_pair(std::span<const double> m, std::span<const double> m_hat, const char* what) {
  if (m.size() != m_hat.size() || m.empty()) {
    throw ShapeError(std::string(what) + ": histogram lengths " + std::to_string(m.size()) + " and " +
                     std::to_string(m_hat.size()));
  }
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] < 0.0 || m_hat[i] < 0.0) throw DomainError(std::string(what) + ": negative histogram entry");
}

std::string band_label(double lo, double hi) {
  std::ostringstream os;
  os << '[' << lo << ',' << hi << ')';
  return os.str();
}

}  // namespace

double kl_div(std::span<const double> m, std::span<const double> m_hat, double delta) {
  check_pair(m, m_hat, "kl_div");
  double s = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) s += m_hat[k] * std::log((m_hat[k] + delta) / (m[k] + delta));
  return s;
}

double js_div(std::span<const double> m, std::span<const double> m_hat, double delta) {
  return (kl_div(m, m_hat, delta) + kl_div(m_hat, m, delta)) / 2.0;
}

double emd(std::span<const double> m, std::span<const double> m_hat) {
  check_pair(m, m_hat, "emd");
  double ta = 0.0, tb = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    ta += m[k];
    tb += m_hat[k];
  }
  if (std::abs(ta - tb) > 1e-6) throw DomainError("emd: histogram masses differ by " + std::to_string(ta - tb));
  double ca = 0.0, cb = 0.0, s = 0.0;
  for (std::size_t k = 0; k + 1 < m.size(); ++k) {
    ca += m[k];
    cb += m_hat[k];
    s += std::abs(ca - cb);
  }
  return s;
}

Metric parse_metric(const std::string& name) {
  if (name == "kl") return Metric::kl;
  if (name == "js") return Metric::js;
  if (name == "emd") return Metric::emd;
  throw ConfigError("unknown metric '" + name + "' (expected kl, js or emd)");
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kl: return "kl";
    case Metric::js: return "js";
    case Metric::emd: return "emd";
  }
  return "?";
}

double metric_value(Metric metric, std::span<const double> m, std::span<const double> m_hat) {
  switch (metric) {
    case Metric::kl: return kl_div(m, m_hat);
    case Metric::js: return js_div(m, m_hat);
    case Metric::emd: return emd(m, m_hat);
  }
  return 0.0;
}

MetricReport dissim_aggregate(std::span<const WindowForecast> forecasts, const Dataset& ds, Metric metric,
                              std::size_t k, const CellFilter& filter) {
  MetricReport r;
  r.metric = metric;
  r.k = k;
  const std::size_t N = ds.n_origins(), Np = ds.n_dests(), K = ds.n_buckets();
  double sum = 0.0;
  for (const auto& f : forecasts) {
    if (k == 0 || k > f.steps.size()) {
      throw SizingError("step k=" + std::to_string(k) + " outside forecast horizon " + std::to_string(f.steps.size()));
    }
    const std::size_t interval = f.target_start + k - 1;
    const auto& truth = ds.tensors.at(interval);
    const auto& pred = f.steps[k - 1];
    if (pred.dims() != truth.hist.dims()) throw ShapeError("forecast dims differ from dataset tensors");
    for (std::size_t o = 0; o < N; ++o)
      for (std::size_t d = 0; d < Np; ++d) {
        const std::size_t cell = o * Np + d;
        if (truth.omega[cell] == 0.0) continue;
        if (filter && !filter(interval, o, d)) continue;
        const std::span<const double> m(truth.hist.data() + cell * K, K);
        const std::span<const double> mh(pred.data() + cell * K, K);
        sum += metric_value(metric, m, mh);
        ++r.cells;
      }
  }
  if (r.cells > 0) r.value = sum / static_cast<double>(r.cells);
  return r;
}

Grouping parse_grouping(const std::string& name) {
  if (name == "hour") return Grouping::hour_band;
  if (name == "distance") return Grouping::distance_band;
  throw ConfigError("unknown grouping '" + name + "' (expected hour or distance)");
}

std::vector<MetricReport> grouped_report(std::span<const WindowForecast> forecasts, const Dataset& ds,
                                         Metric metric, std::size_t k, Grouping grouping,
                                         const GroupingOptions& opt) {
  std::vector<MetricReport> out;
  if (grouping == Grouping::hour_band) {
    const auto bands = static_cast<std::size_t>(std::ceil(24.0 / opt.hours_per_band - 1e-9));
    for (std::size_t b = 0; b < bands; ++b) {
      const double lo = static_cast<double>(b) * opt.hours_per_band, hi = lo + opt.hours_per_band;
      auto r = dissim_aggregate(forecasts, ds, metric, k, [&](std::size_t interval, std::size_t, std::size_t) {
        const double hour = ds.intervals.hour_of_day(interval);
        return hour >= lo && hour < hi;
      });
      r.group_kind = "hour";
      r.group_key = band_label(lo, hi);
      out.push_back(r);
    }
    return out;
  }
  const auto& src = ds.source_graph.centroids;
  const auto& dst = ds.dest_graph.centroids;
  const auto bands = static_cast<std::size_t>(std::ceil(opt.max_km / opt.km_per_band - 1e-9));
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = static_cast<double>(b) * opt.km_per_band, hi = std::min(lo + opt.km_per_band, opt.max_km);
    auto r = dissim_aggregate(forecasts, ds, metric, k, [&](std::size_t, std::size_t o, std::size_t d) {
      const double x = distance(src[o], dst[d]);
      return x >= lo && x < hi;
    });
    r.group_kind = "distance";
    r.group_key = band_label(lo, hi);
    out.push_back(r);
  }
  return out;
}

std::vector<WindowForecast> forecast_windows(ForecastModel& model, const Dataset& ds, std::span<const Window> windows) {
  std::vector<WindowForecast> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    std::vector<const SparseODTensor*> inputs;
    for (std::size_t i = 0; i < w.s; ++i) inputs.push_back(&ds.tensors.at(w.start + i));
    Tape tape;
    ForwardOptions opt;
    opt.horizon = w.h;
    auto res = model.forward(tape, inputs, {}, opt);
    WindowForecast f;
    f.target_start = w.target_start();
    for (const auto& p : res.predictions) f.steps.push_back(p.value());
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<WindowForecast> constant_forecasts(const DenseTensor& prediction, std::span<const Window> windows) {
  std::vector<WindowForecast> out;
  for (const auto& w : windows) out.push_back({w.target_start(), std::vector<DenseTensor>(w.h, prediction)});
  return out;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report '" + path.string() + "'");
  os << "model,metric,k,group_kind,group_key,value,cells\n" << std::setprecision(17);
  for (const auto& r : reports) {
    os << r.model << ',' << metric_name(r.metric) << ',' << r.k << ',' << r.group_kind << ',' << '"' << r.group_key
       << '"' << ',';
    if (r.value) os << *r.value;
    os << ',' << r.cells << '\n';
  }
}

json reports_to_json(const std::vector<MetricReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back({{"model", r.model},
                   {"metric", metric_name(r.metric)},
                   {"k", r.k},
                   {"group_kind", r.group_kind},
                   {"group_key", r.group_key},
                   {"value", r.value ? json(*r.value) : json(nullptr)},
                   {"cells", r.cells}});
  }
  return arr;
}

}  // namespace odx
