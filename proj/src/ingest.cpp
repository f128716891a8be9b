#include "odx/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>

#include <spdlog/spdlog.h>

#include "csv_util.hpp"
#include "odx/error.hpp"

namespace odx {

namespace {

constexpr std::size_t kMaxSkipExamples = 20;

const char* header_for(TripFormat format) {
  return format == TripFormat::region_id ? "depart_unix,origin_region,dest_region,distance_m,duration_s"
                                         : "depart_unix,olon,olat,dlon,dlat,distance_m,duration_s";
}

double unit_to_meters(DistanceUnit unit) {
  switch (unit) {
    case DistanceUnit::meters: return 1.0;
    case DistanceUnit::kilometers: return 1000.0;
    case DistanceUnit::miles: return 1609.344;
  }
  return 1.0;
}

std::optional<std::string> parse_row(std::string_view line, TripFormat format, double to_meters, TripRecord& out) {
  const auto f = detail::split_csv(line);
  const std::size_t expected = format == TripFormat::region_id ? 5 : 7;
  if (f.size() != expected) {
    return "expected " + std::to_string(expected) + " fields, found " + std::to_string(f.size());
  }
  auto t = detail::parse_int(f[0]);
  if (!t) return std::string("bad depart_unix");
  out.depart_time = *t;
  std::size_t next = 1;
  if (format == TripFormat::region_id) {
    auto o = detail::parse_int(f[1]);
    auto d = detail::parse_int(f[2]);
    if (!o || !d) return std::string("bad region id");
    out.origin_region = *o;
    out.dest_region = *d;
    next = 3;
  } else {
    double c[4];
    for (int i = 0; i < 4; ++i) {
      auto v = detail::parse_double(f[1 + i]);
      if (!v || !std::isfinite(*v)) return std::string("bad coordinate");
      c[i] = *v;
    }
    out.origin_point = {c[0], c[1]};
    out.dest_point = {c[2], c[3]};
    next = 5;
  }
  auto dist = detail::parse_double(f[next]);
  auto dur = detail::parse_double(f[next + 1]);
  if (!dist || !dur) return std::string("bad distance or duration");
  out.distance_m = *dist * to_meters;
  out.duration_s = *dur;
  if (!(out.duration_s > 0.0)) return std::string("duration must be positive");
  if (!(out.distance_m >= 0.0)) return std::string("distance must be non-negative");
  if (!std::isfinite(out.speed())) return std::string("speed not finite");
  return std::nullopt;
}

}  // namespace

TripFormat parse_trip_format(const std::string& name) {
  if (name == "region-id" || name == "region") return TripFormat::region_id;
  if (name == "coordinate" || name == "coord") return TripFormat::coordinate;
  throw ConfigError("unknown trip format '" + name + "' (expected region-id or coordinate)");
}

DistanceUnit parse_distance_unit(const std::string& name) {
  if (name == "m") return DistanceUnit::meters;
  if (name == "km") return DistanceUnit::kilometers;
  if (name == "mi") return DistanceUnit::miles;
  throw ConfigError("unknown distance unit '" + name + "' (expected m, km or mi)");
}

ParsedTrips parse_trips(std::istream& is, TripFormat format, DistanceUnit unit) {
  ParsedTrips out;
  std::string line;
  if (!std::getline(is, line)) return out;
  if (detail::trim(line) != header_for(format)) {
    throw FormatError("trip CSV header mismatch: expected '" + std::string(header_for(format)) + "'");
  }
  const double to_meters = unit_to_meters(unit);
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    ++out.report.rows;
    TripRecord rec;
    if (auto why = parse_row(line, format, to_meters, rec)) {
      ++out.report.skipped;
      if (out.report.examples.size() < kMaxSkipExamples) out.report.examples.push_back({row, *why});
      continue;
    }
    out.trips.push_back(rec);
  }
  if (out.report.skipped * 2 > out.report.rows) {
    std::string msg = std::to_string(out.report.skipped) + " of " + std::to_string(out.report.rows) +
                      " trip rows are malformed";
    if (!out.report.examples.empty()) {
      msg += " (first: row " + std::to_string(out.report.examples[0].row) + ": " + out.report.examples[0].reason + ")";
    }
    throw FormatError(msg);
  }
  for (const auto& s : out.report.examples) spdlog::debug("skipped trip row {}: {}", s.row, s.reason);
  return out;
}

ParsedTrips parse_trips(const std::filesystem::path& path, TripFormat format, DistanceUnit unit) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open trip file '" + path.string() + "'");
  return parse_trips(is, format, unit);
}

std::size_t BucketScheme::bucket_of(double speed) const noexcept {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), speed) - edges.begin());
}

void BucketScheme::validate() const {
  if (edges.empty()) throw ConfigError("bucket scheme needs at least one edge (K >= 2)");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i])) throw ConfigError("bucket edges must be finite");
    if (i > 0 && !(edges[i] > edges[i - 1])) throw ConfigError("bucket edges must be strictly ascending");
  }
}

std::optional<std::size_t> IntervalScheme::index_of(std::int64_t unix_time) const noexcept {
  if (length_s <= 0 || unix_time < origin_unix) return std::nullopt;
  const auto i = static_cast<std::size_t>((unix_time - origin_unix) / length_s);
  if (i >= count) return std::nullopt;
  return i;
}

double IntervalScheme::hour_of_day(std::size_t i) const noexcept {
  const std::int64_t t = origin_unix + static_cast<std::int64_t>(i) * length_s + utc_offset_s;
  std::int64_t sec = t % 86400;
  if (sec < 0) sec += 86400;
  return static_cast<double>(sec) / 3600.0;
}

std::vector<SparseODTensor> build_histogram_tensor(std::span<const TripRecord> trips,
                                                   const IntervalScheme& intervals, const BucketScheme& scheme,
                                                   std::size_t n_origins, std::size_t n_dests) {
  scheme.validate();
  const std::size_t K = scheme.size();
  std::vector<SparseODTensor> out(intervals.count);
  for (std::size_t i = 0; i < intervals.count; ++i) {
    out[i].interval_index = i;
    out[i].hist = DenseTensor({n_origins, n_dests, K});
    out[i].omega = DenseTensor({n_origins, n_dests});
  }
  for (const auto& t : trips) {
    if (!t.origin_region || !t.dest_region) throw DomainError("trip without region assignment");
    const auto o = *t.origin_region, d = *t.dest_region;
    if (o < 0 || d < 0 || static_cast<std::size_t>(o) >= n_origins || static_cast<std::size_t>(d) >= n_dests) {
      throw DomainError("trip region index out of range: " + std::to_string(o) + "," + std::to_string(d));
    }
    auto i = intervals.index_of(t.depart_time);
    if (!i) continue;
    const std::size_t cell = static_cast<std::size_t>(o) * n_dests + static_cast<std::size_t>(d);
    out[*i].hist[cell * K + scheme.bucket_of(t.speed())] += 1.0;
    out[*i].omega[cell] += 1.0;
  }
  for (auto& m : out) {
    for (std::size_t cell = 0; cell < n_origins * n_dests; ++cell) {
      const double n = m.omega[cell];
      if (n == 0.0) continue;
      for (std::size_t k = 0; k < K; ++k) m.hist[cell * K + k] /= n;
      m.omega[cell] = 1.0;
    }
  }
  return out;
}

std::size_t map_region_ids(std::vector<TripRecord>& trips, const std::vector<long long>& index_to_id) {
  std::map<long long, long long> lookup;
  for (std::size_t i = 0; i < index_to_id.size(); ++i) lookup.emplace(index_to_id[i], static_cast<long long>(i));
  std::size_t dropped = 0;
  std::vector<TripRecord> kept;
  kept.reserve(trips.size());
  for (auto& t : trips) {
    auto o = t.origin_region ? lookup.find(*t.origin_region) : lookup.end();
    auto d = t.dest_region ? lookup.find(*t.dest_region) : lookup.end();
    if (o == lookup.end() || d == lookup.end()) {
      ++dropped;
      continue;
    }
    t.origin_region = o->second;
    t.dest_region = d->second;
    kept.push_back(t);
  }
  trips = std::move(kept);
  return dropped;
}

DatasetSplit make_split(std::size_t length, double train_fraction, double validation_fraction) {
  if (train_fraction < 0.0 || validation_fraction < 0.0 || train_fraction + validation_fraction > 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(length) + 1e-9));
  const auto n_val = std::min(
      length - n_train, static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(length) + 1e-9)));
  DatasetSplit s;
  for (std::size_t i = 0; i < length; ++i) {
    if (i < n_train) s.train.push_back(i);
    else if (i < n_train + n_val) s.validation.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

std::vector<Window> make_windows(std::size_t length, std::size_t s, std::size_t h) {
  if (s == 0 || h == 0) throw SizingError("window lengths s and h must be >= 1");
  if (length < s + h) {
    throw SizingError("need at least s+h = " + std::to_string(s + h) + " intervals, have " + std::to_string(length));
  }
  std::vector<Window> out;
  for (std::size_t i = 0; i + s + h <= length; ++i) out.push_back({i, s, h});
  return out;
}

std::vector<Window> make_windows(std::span<const SparseODTensor> tensors, std::size_t s, std::size_t h) {
  auto w = make_windows(tensors.size(), s, h);
  if (!tensors.empty())
    for (auto& x : w) x.start += tensors.front().interval_index;
  return w;
}

std::vector<Window> windows_in_block(std::span<const std::size_t> block, std::size_t s, std::size_t h) {
  for (std::size_t i = 1; i < block.size(); ++i)
    if (block[i] != block[i - 1] + 1) throw SizingError("split block is not contiguous");
  auto w = make_windows(block.size(), s, h);
  if (!block.empty())
    for (auto& x : w) x.start += block.front();
  return w;
}

}  // namespace odx
