#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odx/graph.hpp"
#include "odx/tensor.hpp"

namespace odx {

enum class TripFormat { region_id, coordinate };
// Unit of the distance column; speeds are always m/s after parsing.
enum class DistanceUnit { meters, kilometers, miles };

TripFormat parse_trip_format(const std::string& name);
DistanceUnit parse_distance_unit(const std::string& name);

struct TripRecord {
  // Region ids (region-id format, or after assign_regions).
  std::optional<long long> origin_region;
  std::optional<long long> dest_region;
  // lon/lat (coordinate format).
  Point2 origin_point;
  Point2 dest_point;
  std::int64_t depart_time = 0;
  double distance_m = 0.0;
  double duration_s = 0.0;

  double speed() const noexcept { return distance_m / duration_s; }
};

struct SkippedRow {
  std::size_t row = 0;  // 1-based line number, header is row 1
  std::string reason;
};

struct SkipReport {
  std::size_t rows = 0;
  std::size_t skipped = 0;
  std::vector<SkippedRow> examples;  // first few skipped rows
};

struct ParsedTrips {
  std::vector<TripRecord> trips;
  SkipReport report;
};

ParsedTrips parse_trips(std::istream& is, TripFormat format, DistanceUnit unit = DistanceUnit::meters);
ParsedTrips parse_trips(const std::filesystem::path& path, TripFormat format,
                        DistanceUnit unit = DistanceUnit::meters);

// K-1 ascending interior edges in m/s; bucket k covers [edge[k-1], edge[k]), the last is open.
struct BucketScheme {
  std::vector<double> edges{3.0, 6.0, 9.0, 12.0, 15.0, 18.0};

  std::size_t size() const noexcept { return edges.size() + 1; }
  std::size_t bucket_of(double speed) const noexcept;
  void validate() const;
};

// Fixed-length intervals counted from `origin_unix`; clock time is shifted by a
// fixed UTC offset.
struct IntervalScheme {
  std::int64_t origin_unix = 0;
  std::int64_t length_s = 900;
  std::int64_t utc_offset_s = 0;
  std::size_t count = 0;

  std::optional<std::size_t> index_of(std::int64_t unix_time) const noexcept;
  // Local hour of day in [0, 24) at the start of interval `i`.
  double hour_of_day(std::size_t i) const noexcept;
};

struct SparseODTensor {
  std::size_t interval_index = 0;
  DenseTensor hist;   // N × N' × K
  DenseTensor omega;  // N × N'
};

// `origin_region`/`dest_region` must already hold 0-based indices below n_origins / n_dests.
std::vector<SparseODTensor> build_histogram_tensor(std::span<const TripRecord> trips,
                                                   const IntervalScheme& intervals, const BucketScheme& scheme,
                                                   std::size_t n_origins, std::size_t n_dests);

// Replaces region ids by their index in `index_to_id`; trips with unknown ids are dropped.
std::size_t map_region_ids(std::vector<TripRecord>& trips, const std::vector<long long>& index_to_id);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Chronological blocks; train and validation sizes are floor(fraction * length).
DatasetSplit make_split(std::size_t length, double train_fraction = 0.7, double validation_fraction = 0.1);

// Forecast window: inputs [start, start+s), targets [start+s, start+s+h).
struct Window {
  std::size_t start = 0;
  std::size_t s = 0;
  std::size_t h = 0;

  std::size_t target_start() const noexcept { return start + s; }
};

std::vector<Window> make_windows(std::size_t length, std::size_t s, std::size_t h);
std::vector<Window> make_windows(std::span<const SparseODTensor> tensors, std::size_t s, std::size_t h);
// Windows within one contiguous split block of interval indices.
std::vector<Window> windows_in_block(std::span<const std::size_t> block, std::size_t s, std::size_t h);

}  // namespace odx
