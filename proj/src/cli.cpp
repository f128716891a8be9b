#include "odx/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "odx/baselines.hpp"
#include "odx/checkpoint.hpp"
#include "odx/error.hpp"
#include "odx/eval.hpp"
#include "odx/geometry.hpp"
#include "odx/ingest.hpp"
#include "odx/model_af.hpp"
#include "odx/synth.hpp"
#include "odx/tensor_io.hpp"
#include "odx/train.hpp"

namespace fs = std::filesystem;

namespace odx {

using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string log_level = "info";
};

struct IngestArgs {
  std::string trips, regions, adjacency;
  std::string format = "region-id";
  std::string distance_unit = "m";
  double interval_minutes = 15.0;
  std::string buckets = "3,6,9,12,15,18";
  double train_fraction = 0.7, validation_fraction = 0.1;
  double utc_offset_hours = 0.0;
  std::int64_t origin_unix = std::numeric_limits<std::int64_t>::min();
  int alpha = 1;
  double sigma = 1.0;
};

struct TrainArgs {
  std::string data;
  std::string model = "af";
  TrainConfig train;
  BFConfig bf;
  FCConfig fc;
  std::string stages = "32:8:4,0:4:2";
  std::size_t rnn_order = 3, af_layers = 2;
  std::string pool = "max";
  bool shared_filters = false;
  int alpha = 0;
  double sigma = 0.0;
};

struct PredictArgs {
  std::string data, checkpoint;
  std::string model;
  std::string split = "test";
  std::size_t s = 6, h = 1;
  std::vector<std::string> metrics{"emd"};
  std::vector<std::string> groups;
  std::size_t k = 0;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " value '" + s + "'");
  }
}

std::vector<AFStage> parse_stages(const std::string& text) {
  std::vector<AFStage> stages;
  for (const auto& item : split_list(text, ',')) {
    const auto f = split_list(item, ':');
    if (f.size() != 3) throw ConfigError("stage '" + item + "' must look like filters:order:pool");
    stages.push_back({static_cast<std::size_t>(to_double(f[0], "stage")), static_cast<std::size_t>(to_double(f[1], "stage")),
                      static_cast<std::size_t>(to_double(f[2], "stage"))});
  }
  if (stages.empty()) throw ConfigError("at least one AF stage is required");
  return stages;
}

std::string model_kind(const std::string& flag) {
  std::string k = flag;
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (k != "BF" && k != "AF" && k != "FC" && k != "NH") throw ConfigError("unknown model '" + flag + "' (expected bf, af, fc or nh)");
  return k;
}

const std::vector<std::size_t>& split_block(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.split.train;
  if (name == "validation") return ds.split.validation;
  if (name == "test") return ds.split.test;
  throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
}

json options_json(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "--version") continue;
    std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& r = opt->results();
      if (r.size() == 1 && opt->get_items_expected_max() <= 1) {
        j[key] = r.front();
      } else {
        j[key] = r;
      }
    } else {
      j[key] = opt->get_default_str();
    }
  }
  return j;
}

class Run {
 public:
  Run(const Globals& g, std::string command, const CLI::App* root, const CLI::App* sub)
      : out_(g.out), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw IoError("cannot create output directory '" + out_.string() + "': " + ec.message());
    record_ = {{"odx_version", kVersion}, {"command", command_}, {"seed", g.seed},
               {"global", options_json(root)}, {"options", options_json(sub)}, {"artifacts", json::object()}};
  }

  fs::path path(const std::string& name) const { return out_ / name; }

  void artifact(const std::string& name, const std::string& format, std::uint32_t version) {
    record_["artifacts"][name] = {{"path", name}, {"format", format}, {"version", version}};
  }
  json& record() { return record_; }

  void finish() {
    std::ofstream os(out_ / "run.json");
    if (!os) throw IoError("cannot write run.json in '" + out_.string() + "'");
    os << record_.dump(2) << '\n';
  }

 private:
  fs::path out_;
  std::string command_;
  json record_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

// ---- ingest

void cmd_ingest(const IngestArgs& a, Run& run) {
  const TripFormat format = parse_trip_format(a.format);
  if (a.regions.empty()) throw ConfigError("ingest needs --regions (GeoJSON with region_id properties)");
  if (!(a.interval_minutes > 0.0)) throw ConfigError("interval-minutes must be positive");
  BucketScheme buckets;
  buckets.edges.clear();
  for (const auto& e : split_list(a.buckets, ',')) buckets.edges.push_back(to_double(e, "bucket edge"));
  buckets.validate();

  const RegionSet regions = load_regions_geojson(a.regions);
  const auto ids = regions.ids();
  const Projection proj = projection_for(regions);
  auto centroids = region_centroids(regions, proj);

  std::vector<Edge> edges;
  std::string adjacency_source;
  if (!a.adjacency.empty()) {
    edges = read_adjacency_csv(a.adjacency, ids);
    adjacency_source = "file";
  } else {
    edges = shared_boundary_edges(regions);
    adjacency_source = "shared-boundary";
    spdlog::info("no adjacency file given; derived {} edges from shared polygon boundaries", edges.size());
  }

  ParsedTrips parsed = parse_trips(fs::path(a.trips), format, parse_distance_unit(a.distance_unit));
  std::vector<TripRecord> trips = std::move(parsed.trips);
  std::size_t dropped_region = 0;
  if (format == TripFormat::coordinate) {
    auto assigned = assign_regions(std::move(trips), regions);
    trips = std::move(assigned.trips);
    dropped_region = assigned.dropped;
  }
  dropped_region += map_region_ids(trips, ids);

  IntervalScheme intervals;
  intervals.length_s = static_cast<std::int64_t>(a.interval_minutes * 60.0 + 0.5);
  intervals.utc_offset_s = static_cast<std::int64_t>(a.utc_offset_hours * 3600.0);
  if (!trips.empty()) {
    std::int64_t lo = trips.front().depart_time, hi = lo;
    for (const auto& t : trips) {
      lo = std::min(lo, t.depart_time);
      hi = std::max(hi, t.depart_time);
    }
    if (a.origin_unix != std::numeric_limits<std::int64_t>::min()) {
      intervals.origin_unix = a.origin_unix;
    } else {
      // local midnight of the first trip's day
      std::int64_t local = lo + intervals.utc_offset_s;
      std::int64_t day = local / 86400;
      if (local < 0 && local % 86400 != 0) --day;
      intervals.origin_unix = day * 86400 - intervals.utc_offset_s;
    }
    if (hi >= intervals.origin_unix) {
      intervals.count = static_cast<std::size_t>((hi - intervals.origin_unix) / intervals.length_s) + 1;
    }
  }

  Dataset ds;
  ds.intervals = intervals;
  ds.buckets = buckets;
  ds.origin_ids = ids;
  ds.dest_ids = ids;
  ds.source_graph = make_region_graph(adjacency_from_edges(ids.size(), edges), centroids, a.alpha, a.sigma);
  ds.dest_graph = ds.source_graph;
  ds.tensors = build_histogram_tensor(trips, intervals, buckets, ids.size(), ids.size());
  ds.split = make_split(ds.tensors.size(), a.train_fraction, a.validation_fraction);
  ds.provenance = {{"generator", "ingest"},
                   {"trips_file", fs::path(a.trips).filename().string()},
                   {"regions_file", fs::path(a.regions).filename().string()},
                   {"adjacency", adjacency_source}};

  std::vector<std::size_t> observed;
  std::size_t total_observed = 0;
  for (const auto& t : ds.tensors) {
    std::size_t c = 0;
    for (double w : t.omega.values()) c += w != 0.0;
    observed.push_back(c);
    total_observed += c;
  }
  const double cells = static_cast<double>(ds.tensors.size() * ids.size() * ids.size());
  json skipped = json::array();
  for (const auto& s : parsed.report.examples) skipped.push_back({{"row", s.row}, {"reason", s.reason}});
  const std::size_t in_range = std::count_if(trips.begin(), trips.end(), [&](const TripRecord& t) {
    return intervals.index_of(t.depart_time).has_value();
  });
  json summary = {{"rows", parsed.report.rows},
                  {"skipped_rows", parsed.report.skipped},
                  {"skipped_examples", skipped},
                  {"dropped_outside_regions", dropped_region},
                  {"trips_used", in_range},
                  {"regions", ids.size()},
                  {"adjacency_edges", edges.size()},
                  {"adjacency_source", adjacency_source},
                  {"intervals", ds.tensors.size()},
                  {"interval_seconds", intervals.length_s},
                  {"origin_unix", intervals.origin_unix},
                  {"buckets", buckets.size()},
                  {"shape", {ids.size(), ids.size(), buckets.size()}},
                  {"coverage_percent", cells > 0 ? 100.0 * static_cast<double>(total_observed) / cells : 0.0},
                  {"observed_cells_per_interval", observed}};
  save_dataset(run.path("dataset.odxd"), ds);
  write_json(run.path("ingest_summary.json"), summary);
  run.artifact("dataset.odxd", "ODXD", kDatasetFormatVersion);
  run.artifact("ingest_summary.json", "json", 1);
  spdlog::info("dataset {}x{}x{} over {} intervals, coverage {:.2f}%", ids.size(), ids.size(), buckets.size(),
               ds.tensors.size(), summary["coverage_percent"].get<double>());
}

// ---- synth

void cmd_synth(SynthConfig cfg, std::uint64_t seed, Run& run) {
  cfg.seed = seed;
  Dataset ds = synth_generate(cfg);
  save_dataset(run.path("dataset.odxd"), ds);
  run.artifact("dataset.odxd", "ODXD", kDatasetFormatVersion);
  run.record()["synth"] = synth_config_to_json(cfg);
  spdlog::info("synthetic dataset {}x{}x{} over {} intervals", cfg.n_origins, cfg.n_dests, cfg.buckets, cfg.intervals);
}

// ---- train

ModelSpec model_spec(const TrainArgs& a, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = model_kind(a.model);
  spec.seed = seed;
  if (spec.kind == "NH") throw ConfigError("the nh baseline has no parameters to train; use forecast/evaluate --model nh");
  if (spec.kind == "BF") spec.hyper = {{"beta", a.bf.beta}, {"hidden", a.bf.hidden}, {"layers", a.bf.layers}};
  if (spec.kind == "FC") spec.hyper = {{"encoding", a.fc.encoding}, {"hidden", a.fc.hidden}, {"layers", a.fc.layers}};
  if (spec.kind == "AF") {
    AFConfig c;
    c.stages = parse_stages(a.stages);
    c.rnn_order = a.rnn_order;
    c.layers = a.af_layers;
    if (a.pool != "max" && a.pool != "average") throw ConfigError("pool must be max or average");
    c.pool_mode = a.pool == "max" ? PoolMode::max : PoolMode::average;
    c.shared_filters = a.shared_filters;
    spec.hyper = {{"config", af_config_to_json(c)}};
    if (a.alpha > 0) spec.hyper["alpha"] = a.alpha;
    if (a.sigma > 0.0) spec.hyper["sigma"] = a.sigma;
  }
  return spec;
}

void cmd_train(TrainArgs a, std::uint64_t seed, Run& run) {
  if (a.data.empty()) throw ConfigError("train needs --data");
  const Dataset ds = load_dataset(a.data);
  a.train.seed = seed;
  auto model = make_model(model_spec(a, seed), ds);
  spdlog::info("{} model with {} parameters", model->kind(), param_count(*model));
  const TrainResult res = train_loop(*model, ds, a.train);
  save_checkpoint(run.path("checkpoint.odxc"), *model, seed,
                  {{"s", a.train.s}, {"h", a.train.h}, {"train", train_config_to_json(a.train)}});
  write_loss_log(run.path("loss_log.csv"), res.log);
  json result = {{"model", model->kind()},
                 {"parameters", param_count(*model)},
                 {"epochs_run", res.log.size()},
                 {"best_epoch", res.best_epoch},
                 {"best_val_loss", res.best_val_loss},
                 {"stopped_early", res.stopped_early},
                 {"diverged", res.diverged}};
  if (res.diverged) result["divergence_message"] = res.divergence_message;
  write_json(run.path("train_result.json"), result);
  run.artifact("checkpoint.odxc", "ODXC", kCheckpointFormatVersion);
  run.artifact("loss_log.csv", "csv", 1);
  run.artifact("train_result.json", "json", 1);
  run.record()["train"] = train_config_to_json(a.train);
  run.record()["model"] = model_spec(a, seed).hyper;
  if (res.diverged) throw DivergenceError(res.divergence_message + " (best parameters saved)");
}

// ---- forecast / evaluate

struct Predictor {
  std::string name;
  std::unique_ptr<ForecastModel> model;
  std::unique_ptr<NHBaseline> nh;
  std::size_t s = 6, h = 1;
};

Predictor make_predictor(const PredictArgs& a, const Dataset& ds, const CLI::App* sub) {
  Predictor p;
  p.s = a.s;
  p.h = a.h;
  const bool nh = !a.model.empty() && model_kind(a.model) == "NH";
  if (nh) {
    if (!a.checkpoint.empty()) throw ConfigError("--model nh does not take a checkpoint");
    p.name = "NH";
    p.nh = std::make_unique<NHBaseline>(ds, ds.split.train);
    return p;
  }
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required unless --model nh");
  auto loaded = load_checkpoint(a.checkpoint, ds);
  p.model = std::move(loaded.model);
  p.name = p.model->kind();
  if (!a.model.empty() && model_kind(a.model) != p.name) {
    throw CompatibilityError("checkpoint holds a " + p.name + " model but --model " + a.model + " was requested");
  }
  const json& extra = loaded.manifest.at("extra");
  if (sub->count("--s") == 0 && extra.contains("s")) p.s = extra.at("s").get<std::size_t>();
  if (sub->count("--h") == 0 && extra.contains("h")) p.h = extra.at("h").get<std::size_t>();
  return p;
}

std::vector<WindowForecast> predict(Predictor& p, const Dataset& ds, const std::vector<Window>& windows) {
  if (p.nh) return constant_forecasts(p.nh->predict(), windows);
  return forecast_windows(*p.model, ds, windows);
}

std::vector<Window> windows_for(const Predictor& p, const Dataset& ds, const std::string& split) {
  if (p.s == 0 || p.h == 0) throw ConfigError("s and h must be >= 1");
  const auto& block = split_block(ds, split);
  if (block.size() < p.s + p.h) {
    throw SizingError(split + " split has " + std::to_string(block.size()) + " intervals, s+h=" +
                      std::to_string(p.s + p.h) + " needed");
  }
  return windows_in_block(block, p.s, p.h);
}

void cmd_forecast(const PredictArgs& a, Run& run, const CLI::App* sub) {
  if (a.data.empty()) throw ConfigError("forecast needs --data");
  const Dataset ds = load_dataset(a.data);
  Predictor p = make_predictor(a, ds, sub);
  const auto windows = windows_for(p, ds, a.split);
  const auto forecasts = predict(p, ds, windows);
  const std::size_t N = ds.n_origins(), Np = ds.n_dests(), K = ds.n_buckets();
  DenseTensor out({forecasts.size(), p.h, N, Np, K});
  const std::size_t block = N * Np * K;
  json starts = json::array();
  for (std::size_t w = 0; w < forecasts.size(); ++w) {
    starts.push_back({{"input_start", windows[w].start}, {"target_start", forecasts[w].target_start}});
    for (std::size_t j = 0; j < p.h; ++j) {
      const auto& step = forecasts[w].steps.at(j);
      std::copy(step.data(), step.data() + block, out.data() + (w * p.h + j) * block);
    }
  }
  save_tensor(run.path("forecast.odxt"), out);
  write_json(run.path("forecast.json"), {{"model", p.name},
                                         {"split", a.split},
                                         {"s", p.s},
                                         {"h", p.h},
                                         {"dims", out.dims()},
                                         {"layout", "windows,h,origins,destinations,buckets"},
                                         {"windows", starts}});
  run.artifact("forecast.odxt", "ODXT", kTensorFormatVersion);
  run.artifact("forecast.json", "json", 1);
  spdlog::info("{} forecasts for {} windows written", p.name, forecasts.size());
}

void cmd_evaluate(const PredictArgs& a, Run& run, const CLI::App* sub) {
  if (a.data.empty()) throw ConfigError("evaluate needs --data");
  const Dataset ds = load_dataset(a.data);
  Predictor p = make_predictor(a, ds, sub);
  std::vector<Metric> metrics;
  for (const auto& m : a.metrics) metrics.push_back(parse_metric(m));
  std::vector<Grouping> groups;
  for (const auto& g : a.groups) groups.push_back(parse_grouping(g));
  if (a.k > p.h) throw SizingError("k=" + std::to_string(a.k) + " exceeds horizon h=" + std::to_string(p.h));
  const auto windows = windows_for(p, ds, a.split);
  const auto forecasts = predict(p, ds, windows);
  std::vector<MetricReport> reports;
  const std::size_t k_lo = a.k == 0 ? 1 : a.k, k_hi = a.k == 0 ? p.h : a.k;
  for (Metric m : metrics)
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      auto r = dissim_aggregate(forecasts, ds, m, k);
      r.model = p.name;
      reports.push_back(r);
      for (Grouping g : groups)
        for (auto gr : grouped_report(forecasts, ds, m, k, g)) {
          gr.model = p.name;
          reports.push_back(gr);
        }
    }
  write_report_csv(run.path("report.csv"), reports);
  write_json(run.path("report.json"), reports_to_json(reports));
  run.artifact("report.csv", "csv", 1);
  run.artifact("report.json", "json", 1);
  for (const auto& r : reports) {
    if (r.group_kind != "all") continue;
    if (r.value) {
      spdlog::info("{} {} k={} {:.6f} over {} cells", r.model, metric_name(r.metric), r.k, *r.value, r.cells);
    } else {
      spdlog::warn("{} {} k={}: no observed cells", r.model, metric_name(r.metric), r.k);
    }
  }
}

// ---- inspect

json inspect_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  if (!is) throw FormatError("'" + path.string() + "' is too short to carry a format header");
  const std::string m(magic, 4);
  is.close();
  if (m == "ODXT") {
    const DenseTensor t = load_tensor(path);
    double lo = 0.0, hi = 0.0;
    if (t.size() > 0) {
      const auto [mn, mx] = std::minmax_element(t.data(), t.data() + t.size());
      lo = *mn;
      hi = *mx;
    }
    return {{"format", "ODXT"}, {"dims", t.dims()}, {"size", t.size()}, {"min", lo}, {"max", hi}};
  }
  if (m == "ODXD") {
    const Dataset ds = load_dataset(path);
    std::size_t observed = 0;
    for (const auto& t : ds.tensors)
      for (double w : t.omega.values()) observed += w != 0.0;
    const double cells = static_cast<double>(ds.tensors.size() * ds.n_origins() * ds.n_dests());
    return {{"format", "ODXD"},
            {"version", kDatasetFormatVersion},
            {"shape", {ds.n_origins(), ds.n_dests(), ds.n_buckets()}},
            {"intervals", ds.tensors.size()},
            {"interval_seconds", ds.intervals.length_s},
            {"bucket_edges", ds.buckets.edges},
            {"split", {{"train", ds.split.train.size()}, {"validation", ds.split.validation.size()},
                       {"test", ds.split.test.size()}}},
            {"coverage_percent", cells > 0 ? 100.0 * static_cast<double>(observed) / cells : 0.0},
            {"alpha", ds.source_graph.alpha},
            {"sigma", ds.source_graph.sigma},
            {"provenance", ds.provenance}};
  }
  if (m == "ODXC") {
    std::ifstream cs(path, std::ios::binary);
    binio::expect_magic(cs, "ODXC", "checkpoint");
    const auto version = binio::read_u32(cs);
    json manifest;
    try {
      manifest = json::parse(binio::read_string(cs, 1ull << 28));
    } catch (const json::exception& e) {
      throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    std::size_t scalars = 0;
    for (const auto& p : manifest.at("parameters")) {
      std::size_t n = 1;
      for (const auto& d : p.at("dims")) n *= d.get<std::size_t>();
      scalars += n;
    }
    return {{"format", "ODXC"}, {"version", version}, {"parameter_count", scalars}, {"manifest", manifest}};
  }
  throw FormatError("'" + path.string() + "' is not an odx artifact (unknown magic)");
}

void add_train_options(CLI::App* sub, TrainArgs& a) {
  sub->add_option("--data", a.data, "dataset file (.odxd)")->required();
  sub->add_option("--model", a.model, "bf | af | fc")->capture_default_str();
  sub->add_option("--s", a.train.s, "input intervals per window")->capture_default_str();
  sub->add_option("--h", a.train.h, "forecast horizon")->capture_default_str();
  sub->add_option("--epochs", a.train.epochs)->capture_default_str();
  sub->add_option("--batch-size", a.train.batch_size)->capture_default_str();
  sub->add_option("--lr", a.train.lr0, "initial learning rate")->capture_default_str();
  sub->add_option("--lr-decay", a.train.decay)->capture_default_str();
  sub->add_option("--lr-decay-every", a.train.decay_every)->capture_default_str();
  sub->add_option("--dropout", a.train.dropout)->capture_default_str();
  sub->add_option("--lambda", a.train.lambda, "factor regularization weight")->capture_default_str();
  sub->add_option("--teacher-forcing", a.train.teacher_forcing)->capture_default_str();
  sub->add_option("--patience", a.train.patience)->capture_default_str();
  sub->add_option("--beta", a.bf.beta, "BF factor rank")->capture_default_str();
  sub->add_option("--hidden", a.bf.hidden, "BF GRU hidden size")->capture_default_str();
  sub->add_option("--bf-layers", a.bf.layers)->capture_default_str();
  sub->add_option("--fc-encoding", a.fc.encoding)->capture_default_str();
  sub->add_option("--fc-hidden", a.fc.hidden)->capture_default_str();
  sub->add_option("--fc-layers", a.fc.layers)->capture_default_str();
  sub->add_option("--stages", a.stages, "AF stages filters:order:pool,... (filters 0 = K)")->capture_default_str();
  sub->add_option("--rnn-order", a.rnn_order)->capture_default_str();
  sub->add_option("--af-layers", a.af_layers)->capture_default_str();
  sub->add_option("--pool", a.pool, "max | average")->capture_default_str();
  sub->add_flag("--shared-filters", a.shared_filters);
  sub->add_option("--alpha", a.alpha, "proximity hop cutoff (0 = dataset value)")->capture_default_str();
  sub->add_option("--sigma", a.sigma, "proximity kernel width (0 = dataset value)")->capture_default_str();
}

void add_predict_options(CLI::App* sub, PredictArgs& a, bool evaluate) {
  sub->add_option("--data", a.data, "dataset file (.odxd)")->required();
  sub->add_option("--checkpoint", a.checkpoint, "trained checkpoint (.odxc)");
  sub->add_option("--model", a.model, "nh for the historical-average baseline");
  sub->add_option("--split", a.split, "train | validation | test")->capture_default_str();
  sub->add_option("--s", a.s, "input intervals (default: from checkpoint)")->capture_default_str();
  sub->add_option("--h", a.h, "horizon (default: from checkpoint)")->capture_default_str();
  if (evaluate) {
    sub->add_option("--metric", a.metrics, "kl | js | emd, repeatable")->capture_default_str();
    sub->add_option("--group", a.groups, "hour | distance, repeatable");
    sub->add_option("--k", a.k, "horizon step to report (0 = all)")->capture_default_str();
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"odx: sparse OD speed-histogram forecasting"};
  app.set_help_flag("--help", "print help");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");
  Globals g;
  app.add_option("--seed", g.seed, "seed for data generation, initialization and shuffling")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace | debug | info | warn | error | off")->capture_default_str();

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "build a dataset from a trip CSV and region polygons");
  ingest->add_option("--trips", ia.trips, "trip CSV")->required();
  ingest->add_option("--regions", ia.regions, "GeoJSON regions with integer region_id")->required();
  ingest->add_option("--adjacency", ia.adjacency, "region_a,region_b CSV (default: shared polygon boundaries)");
  ingest->add_option("--format", ia.format, "region-id | coordinate")->capture_default_str();
  ingest->add_option("--distance-unit", ia.distance_unit, "m | km | mi")->capture_default_str();
  ingest->add_option("--interval-minutes", ia.interval_minutes)->capture_default_str();
  ingest->add_option("--buckets", ia.buckets, "interior speed bucket edges in m/s")->capture_default_str();
  ingest->add_option("--train-fraction", ia.train_fraction)->capture_default_str();
  ingest->add_option("--validation-fraction", ia.validation_fraction)->capture_default_str();
  ingest->add_option("--utc-offset-hours", ia.utc_offset_hours)->capture_default_str();
  ingest->add_option("--origin-unix", ia.origin_unix, "start of interval 0 (default: local midnight of first trip)");
  ingest->add_option("--alpha", ia.alpha)->capture_default_str();
  ingest->add_option("--sigma", ia.sigma)->capture_default_str();

  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  synth->add_option("--origins", sc.n_origins)->capture_default_str();
  synth->add_option("--dests", sc.n_dests)->capture_default_str();
  synth->add_option("--buckets", sc.buckets)->capture_default_str();
  synth->add_option("--intervals", sc.intervals)->capture_default_str();
  synth->add_option("--interval-seconds", sc.interval_seconds)->capture_default_str();
  synth->add_option("--sparsity", sc.sparsity, "probability that a cell is unobserved")->capture_default_str();
  synth->add_option("--correlation", sc.correlation, "planted neighbour correlation in [0,1]")->capture_default_str();
  synth->add_option("--cycle-amplitude", sc.cycle_amplitude)->capture_default_str();
  synth->add_option("--perturbation-scale", sc.perturbation_scale)->capture_default_str();
  synth->add_option("--ar-coefficient", sc.ar_coefficient)->capture_default_str();
  synth->add_option("--width", sc.width)->capture_default_str();
  synth->add_option("--spacing-km", sc.spacing_km)->capture_default_str();
  synth->add_option("--trips-per-cell", sc.trips_per_cell, "0 = exact probabilities")->capture_default_str();
  synth->add_option("--alpha", sc.alpha)->capture_default_str();
  synth->add_option("--sigma", sc.sigma)->capture_default_str();
  synth->add_option("--train-fraction", sc.train_fraction)->capture_default_str();
  synth->add_option("--validation-fraction", sc.validation_fraction)->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a BF, AF or FC model");
  add_train_options(train, ta);

  PredictArgs fa;
  auto* forecast = app.add_subcommand("forecast", "write predicted full tensors for every window of a split");
  add_predict_options(forecast, fa, false);

  PredictArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "DisSim reports, optionally grouped by hour or distance");
  add_predict_options(evaluate, ea, true);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "summarize a dataset, checkpoint or tensor file");
  inspect->add_option("path", inspect_path, "artifact to inspect")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: code=E_CONFIG message=" << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (!spdlog::get("odx")) spdlog::set_default_logger(spdlog::stderr_color_mt("odx"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    const CLI::App* sub = app.get_subcommands().front();
    Run run(g, sub->get_name(), &app, sub);
    if (sub == ingest) cmd_ingest(ia, run);
    if (sub == synth) cmd_synth(sc, g.seed, run);
    if (sub == train) {
      try {
        cmd_train(ta, g.seed, run);
      } catch (const DivergenceError&) {
        run.finish();
        throw;
      }
    }
    if (sub == forecast) cmd_forecast(fa, run, forecast);
    if (sub == evaluate) cmd_evaluate(ea, run, evaluate);
    if (sub == inspect) {
      const json summary = inspect_file(inspect_path);
      out << summary.dump(2) << '\n';
      run.record()["inspected"] = fs::path(inspect_path).filename().string();
    }
    run.finish();
  } catch (const Error& e) {
    err << "error: code=" << e.code() << " message=" << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: code=E_INTERNAL message=" << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace odx
