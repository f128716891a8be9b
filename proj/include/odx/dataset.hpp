#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "odx/graph.hpp"
#include "odx/ingest.hpp"

namespace odx {

// Everything a model needs from one city: per-interval tensors, the interval
// clock, both region graphs and the chronological split.
struct Dataset {
  IntervalScheme intervals;
  BucketScheme buckets;
  std::vector<long long> origin_ids;
  std::vector<long long> dest_ids;
  RegionGraph source_graph;  // over origin regions (W)
  RegionGraph dest_graph;    // over destination regions (W')
  DatasetSplit split;
  std::vector<SparseODTensor> tensors;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t n_origins() const noexcept { return origin_ids.size(); }
  std::size_t n_dests() const noexcept { return dest_ids.size(); }
  std::size_t n_buckets() const noexcept { return buckets.size(); }
  // Throws when tensors, ids, graphs and split disagree.
  void validate() const;
  // Rebuilds both proximity matrices for a new (alpha, sigma).
  void set_kernel(int alpha, double sigma);
  struct Graphs {
    RegionGraph source;
    RegionGraph dest;
  };
  Graphs graphs_with_kernel(int alpha, double sigma) const;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// "ODXD", u32 version, u64 metadata length, metadata JSON, then one ODXT hist
// block and one ODXT omega block per interval.
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::json graph_to_json(const RegionGraph& g);
RegionGraph graph_from_json(const nlohmann::json& j);

}  // namespace odx
