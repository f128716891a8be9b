#include "odx/dataset.hpp"

#include <fstream>

#include "odx/error.hpp"
#include "odx/tensor_io.hpp"

namespace odx {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMaxMetadataBytes = 1ull << 30;

json split_to_json(const DatasetSplit& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

DatasetSplit split_from_json(const json& j) {
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.validation = j.at("validation").get<std::vector<std::size_t>>();
  s.test = j.at("test").get<std::vector<std::size_t>>();
  return s;
}

}  // namespace

json graph_to_json(const RegionGraph& g) {
  json centroids = json::array();
  for (const auto& c : g.centroids) centroids.push_back({c.x, c.y});
  json edges = json::array();
  for (const auto& [a, b] : edges_from_adjacency(g.adjacency)) edges.push_back({a, b});
  return {{"n", g.n}, {"centroids", centroids}, {"edges", edges}, {"alpha", g.alpha}, {"sigma", g.sigma}};
}

RegionGraph graph_from_json(const json& j) {
  const auto n = j.at("n").get<std::size_t>();
  std::vector<Point2> centroids;
  for (const auto& c : j.at("centroids")) centroids.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  if (centroids.size() != n) throw FormatError("graph centroid count differs from n");
  return make_region_graph(adjacency_from_edges(n, edges), std::move(centroids), j.at("alpha").get<int>(),
                           j.at("sigma").get<double>());
}

void Dataset::validate() const {
  const std::size_t N = n_origins(), Np = n_dests(), K = n_buckets();
  if (source_graph.n != N || dest_graph.n != Np) {
    throw CompatibilityError("graph sizes (" + std::to_string(source_graph.n) + ", " + std::to_string(dest_graph.n) +
                             ") differ from region counts (" + std::to_string(N) + ", " + std::to_string(Np) + ")");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    if (t.hist.dims() != Dims{N, Np, K} || t.omega.dims() != Dims{N, Np}) {
      throw ShapeError("interval " + std::to_string(i) + " tensor dims " + dims_to_string(t.hist.dims()) +
                       " do not match dataset " + dims_to_string({N, Np, K}));
    }
  }
  for (const auto* block : {&split.train, &split.validation, &split.test})
    for (auto i : *block)
      if (i >= tensors.size()) throw FormatError("split index " + std::to_string(i) + " out of range");
}

void Dataset::set_kernel(int alpha, double sigma) {
  auto g = graphs_with_kernel(alpha, sigma);
  source_graph = std::move(g.source);
  dest_graph = std::move(g.dest);
}

Dataset::Graphs Dataset::graphs_with_kernel(int alpha, double sigma) const {
  return {make_region_graph(source_graph.adjacency, source_graph.centroids, alpha, sigma),
          make_region_graph(dest_graph.adjacency, dest_graph.centroids, alpha, sigma)};
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  json meta = {
      {"interval_seconds", ds.intervals.length_s},
      {"origin_unix", ds.intervals.origin_unix},
      {"utc_offset_seconds", ds.intervals.utc_offset_s},
      {"intervals", ds.tensors.size()},
      {"bucket_edges", ds.buckets.edges},
      {"n_origins", ds.n_origins()},
      {"n_dests", ds.n_dests()},
      {"origin_ids", ds.origin_ids},
      {"dest_ids", ds.dest_ids},
      {"source_graph", graph_to_json(ds.source_graph)},
      {"dest_graph", graph_to_json(ds.dest_graph)},
      {"split", split_to_json(ds.split)},
      {"provenance", ds.provenance},
  };
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset '" + path.string() + "'");
  binio::write_magic(os, "ODXD");
  binio::write_u32(os, kDatasetFormatVersion);
  binio::write_string(os, meta.dump());
  for (const auto& t : ds.tensors) {
    write_tensor(os, t.hist);
    write_tensor(os, t.omega);
  }
  if (!os) throw IoError("failed writing dataset '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
  binio::expect_magic(is, "ODXD", "dataset");
  const auto version = binio::read_u32(is);
  if (version != kDatasetFormatVersion) {
    throw FormatError("dataset version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kDatasetFormatVersion) + ")");
  }
  json meta;
  try {
    meta = json::parse(binio::read_string(is, kMaxMetadataBytes));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset metadata is not valid JSON: ") + e.what());
  }
  Dataset ds;
  try {
    ds.intervals.length_s = meta.at("interval_seconds").get<std::int64_t>();
    ds.intervals.origin_unix = meta.at("origin_unix").get<std::int64_t>();
    ds.intervals.utc_offset_s = meta.at("utc_offset_seconds").get<std::int64_t>();
    ds.intervals.count = meta.at("intervals").get<std::size_t>();
    ds.buckets.edges = meta.at("bucket_edges").get<std::vector<double>>();
    ds.origin_ids = meta.at("origin_ids").get<std::vector<long long>>();
    ds.dest_ids = meta.at("dest_ids").get<std::vector<long long>>();
    ds.source_graph = graph_from_json(meta.at("source_graph"));
    ds.dest_graph = graph_from_json(meta.at("dest_graph"));
    ds.split = split_from_json(meta.at("split"));
    ds.provenance = meta.value("provenance", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset metadata incomplete: ") + e.what());
  }
  ds.tensors.resize(ds.intervals.count);
  for (std::size_t i = 0; i < ds.intervals.count; ++i) {
    ds.tensors[i].interval_index = i;
    ds.tensors[i].hist = read_tensor(is);
    ds.tensors[i].omega = read_tensor(is);
  }
  ds.validate();
  return ds;
}

}  // namespace odx
