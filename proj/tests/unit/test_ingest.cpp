#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "odx/dataset.hpp"
#include "odx/error.hpp"
#include "odx/ingest.hpp"
#include "odx/synth.hpp"
#include "support.hpp"

using namespace odx;
namespace fs = std::filesystem;

namespace {

const char* kRegionHeader = "depart_unix,origin_region,dest_region,distance_m,duration_s\n";

ParsedTrips parse(const std::string& body, TripFormat f = TripFormat::region_id, DistanceUnit u = DistanceUnit::meters) {
  std::istringstream is(body);
  return parse_trips(is, f, u);
}

TripRecord trip(long long o, long long d, std::int64_t t, double speed) {
  TripRecord r;
  r.origin_region = o;
  r.dest_region = d;
  r.depart_time = t;
  r.distance_m = speed * 100.0;
  r.duration_s = 100.0;
  return r;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "odx_unit_ingest";
  fs::create_directories(dir);
  return dir / name;
}

// Deseasonalized expected bucket index series of one cell.
std::vector<double> anomaly_series(const Dataset& ds, std::size_t o, std::size_t d) {
  const std::size_t K = ds.n_buckets(), Np = ds.n_dests();
  const std::size_t slots = static_cast<std::size_t>(86400 / ds.intervals.length_s);
  std::vector<double> e(ds.tensors.size());
  for (std::size_t t = 0; t < e.size(); ++t) {
    double m = 0.0;
    for (std::size_t k = 0; k < K; ++k) m += static_cast<double>(k) * ds.tensors[t].hist[(o * Np + d) * K + k];
    e[t] = m;
  }
  std::vector<double> sum(slots, 0.0), cnt(slots, 0.0);
  for (std::size_t t = 0; t < e.size(); ++t) {
    sum[t % slots] += e[t];
    cnt[t % slots] += 1.0;
  }
  for (std::size_t t = 0; t < e.size(); ++t) e[t] -= sum[t % slots] / cnt[t % slots];
  return e;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("region-id row parses and derives speed") {
    auto p = parse(std::string(kRegionHeader) + "1393631520,12,45,2300,420\n");
    REQUIRE(p.trips.size() == 1);
    const auto& t = p.trips[0];
    CHECK(*t.origin_region == 12);
    CHECK(*t.dest_region == 45);
    CHECK(t.depart_time == 1393631520);
    CHECK(t.distance_m == 2300.0);
    CHECK(t.duration_s == 420.0);
    CHECK(t.speed() == doctest::Approx(5.476).epsilon(1e-3));
    CHECK(t.speed() == 2300.0 / 420.0);
  }

  TEST_CASE("zero duration row is skipped and counted") {
    auto p = parse(std::string(kRegionHeader) + "1393631520,12,45,2300,420\n1393631520,12,45,2300,0\n1,1,1,1,1\n");
    CHECK(p.trips.size() == 2);
    CHECK(p.report.skipped == 1);
    REQUIRE(p.report.examples.size() == 1);
    CHECK(p.report.examples[0].row == 3);
  }

  TEST_CASE("empty input yields no trips and no skips") {
    auto p = parse("");
    CHECK(p.trips.empty());
    CHECK(p.report.skipped == 0);
  }

  TEST_CASE("majority of malformed rows is a format error") {
    CHECK_THROWS_AS(parse(std::string(kRegionHeader) + "x,1,2,3,4\n1,2,3,-4,5\n1,2,3,4,5\n"), FormatError);
  }

  TEST_CASE("unreadable file is an I/O error") {
    CHECK_THROWS_AS(parse_trips(fs::path("/nonexistent/trips.csv"), TripFormat::region_id), IoError);
  }

  TEST_CASE("wrong header is a format error") {
    CHECK_THROWS_AS(parse("a,b,c\n1,2,3\n"), FormatError);
  }

  TEST_CASE("coordinate rows and distance units") {
    auto p = parse("depart_unix,olon,olat,dlon,dlat,distance_m,duration_s\n100,-73.9,40.7,-73.8,40.75,1.5,300\n",
                   TripFormat::coordinate, DistanceUnit::kilometers);
    REQUIRE(p.trips.size() == 1);
    CHECK(p.trips[0].origin_point.x == -73.9);
    CHECK(p.trips[0].dest_point.y == 40.75);
    CHECK(p.trips[0].distance_m == doctest::Approx(1500.0));
    CHECK(parse_distance_unit("mi") == DistanceUnit::miles);
    CHECK_THROWS_AS(parse_distance_unit("furlong"), ConfigError);
    CHECK_THROWS_AS(parse_trip_format("xml"), ConfigError);
  }

  TEST_CASE("histogram counting in one cell") {
    IntervalScheme iv;
    iv.count = 1;
    BucketScheme scheme;
    std::vector<TripRecord> trips{trip(0, 1, 10, 2.0), trip(0, 1, 20, 4.0), trip(0, 1, 30, 4.5), trip(0, 1, 40, 20.0)};
    auto t = build_histogram_tensor(trips, iv, scheme, 2, 2);
    REQUIRE(t.size() == 1);
    const std::vector<double> expect{0.25, 0.5, 0, 0, 0, 0, 0.25};
    for (std::size_t k = 0; k < 7; ++k) CHECK(t[0].hist.at({0, 1, k}) == expect[k]);
    CHECK(t[0].omega.at({0, 1}) == 1.0);
    SUBCASE("empty cell stays zero with omega 0") {
      CHECK(t[0].omega.at({1, 0}) == 0.0);
      for (std::size_t k = 0; k < 7; ++k) CHECK(t[0].hist.at({1, 0, k}) == 0.0);
    }
  }

  TEST_CASE("single 10 m/s trip is one-hot on [9,12)") {
    IntervalScheme iv;
    iv.count = 1;
    BucketScheme scheme;
    CHECK(scheme.size() == 7);
    std::vector<TripRecord> trips{trip(1, 0, 0, 10.0)};
    auto t = build_histogram_tensor(trips, iv, scheme, 2, 2);
    for (std::size_t k = 0; k < 7; ++k) CHECK(t[0].hist.at({1, 0, k}) == (k == 3 ? 1.0 : 0.0));
  }

  TEST_CASE("bucket edges are half-open and the last bucket is unbounded") {
    BucketScheme s;
    CHECK(s.bucket_of(0.0) == 0);
    CHECK(s.bucket_of(2.999) == 0);
    CHECK(s.bucket_of(3.0) == 1);
    CHECK(s.bucket_of(18.0) == 6);
    CHECK(s.bucket_of(1e6) == 6);
    BucketScheme bad;
    bad.edges = {3.0, 3.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("trips are assigned to intervals by departure time") {
    IntervalScheme iv;
    iv.origin_unix = 1000;
    iv.length_s = 900;
    iv.count = 3;
    BucketScheme scheme;
    std::vector<TripRecord> trips{trip(0, 0, 1000, 5.0), trip(0, 0, 1899, 5.0), trip(0, 0, 1900, 5.0),
                                  trip(0, 0, 999, 5.0), trip(0, 0, 3700, 5.0)};
    auto t = build_histogram_tensor(trips, iv, scheme, 1, 1);
    CHECK(t[0].omega[0] == 1.0);
    CHECK(t[1].omega[0] == 1.0);
    CHECK(t[2].omega[0] == 0.0);
    CHECK(t[1].interval_index == 1);
  }

  TEST_CASE("hour of day follows the UTC offset") {
    IntervalScheme iv;
    iv.origin_unix = 0;
    iv.length_s = 900;
    iv.count = 200;
    CHECK(iv.hour_of_day(0) == 0.0);
    CHECK(iv.hour_of_day(5) == 1.25);
    iv.utc_offset_s = -5 * 3600;
    CHECK(iv.hour_of_day(0) == 19.0);
  }

  TEST_CASE("window counts") {
    CHECK(make_windows(10, 6, 3).size() == 2);
    auto one = make_windows(2, 1, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].start == 0);
    CHECK(one[0].target_start() == 1);
    CHECK_THROWS_AS(make_windows(5, 4, 2), SizingError);
  }

  TEST_CASE("windows never straddle split blocks") {
    auto split = make_split(100, 0.7, 0.1);
    CHECK(split.train.size() == 70);
    CHECK(split.validation.size() == 10);
    CHECK(split.test.size() == 20);
    CHECK(split.validation.front() == 70);
    auto w = windows_in_block(split.validation, 6, 1);
    CHECK(w.size() == 4);
    CHECK(w.front().start == 70);
    CHECK(w.back().target_start() == 79);
  }

  TEST_CASE("region ids map to indices and unknown ids are dropped") {
    std::vector<TripRecord> trips{trip(12, 45, 0, 1), trip(45, 12, 0, 1), trip(12, 99, 0, 1)};
    CHECK(map_region_ids(trips, {12, 45}) == 1);
    REQUIRE(trips.size() == 2);
    CHECK(*trips[0].origin_region == 0);
    CHECK(*trips[0].dest_region == 1);
  }

  TEST_CASE("synth with zero sparsity observes every cell") {
    SynthConfig c;
    c.intervals = 50;
    c.sparsity = 0.0;
    auto ds = synth_generate(c);
    for (const auto& t : ds.tensors)
      for (double w : t.omega.values()) CHECK(w == 1.0);
  }

  TEST_CASE("synth is bit-identical for equal seeds and differs otherwise") {
    SynthConfig c;
    c.intervals = 60;
    auto a = synth_generate(c), b = synth_generate(c);
    bool same = true;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
      same = same && a.tensors[i].hist == b.tensors[i].hist && a.tensors[i].omega == b.tensors[i].omega;
    CHECK(same);
    c.seed = 2;
    auto d = synth_generate(c);
    CHECK_FALSE(d.tensors[5].hist == a.tensors[5].hist);
  }

  TEST_CASE("synth tensors satisfy the sparse histogram invariants") {
    auto ds = testing::toy_dataset(8, 8, 3, 80);
    const std::size_t K = 3;
    for (const auto& t : ds.tensors)
      for (std::size_t cell = 0; cell < 64; ++cell) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          CHECK(t.hist[cell * K + k] >= 0.0);
          s += t.hist[cell * K + k];
        }
        if (t.omega[cell] == 1.0)
          CHECK(std::abs(s - 1.0) < 1e-9);
        else
          CHECK(s == 0.0);
      }
  }

  TEST_CASE("zero planted correlation gives uncorrelated neighbours") {
    SynthConfig c;
    c.sparsity = 0.0;
    c.correlation = 0.0;
    auto ds = synth_generate(c);
    // origins 0 and 1 are grid neighbours; (0,d) and (1,d) share destination d
    for (std::size_t d : {0u, 3u, 6u}) {
      const double r = correlation(anomaly_series(ds, 0, d), anomaly_series(ds, 1, d));
      CHECK(std::abs(r) < 0.1);
    }
    c.correlation = 0.97;
    auto planted = synth_generate(c);
    const double r = correlation(anomaly_series(planted, 0, 2), anomaly_series(planted, 1, 2));
    CHECK(r > 0.3);
  }

  TEST_CASE("dataset round trip preserves tensors and metadata") {
    auto ds = testing::toy_dataset(3, 4, 3, 20);
    ds.provenance["note"] = "x";
    const auto path = temp_path("round.odxd");
    save_dataset(path, ds);
    auto back = load_dataset(path);
    CHECK(back.n_origins() == 3);
    CHECK(back.n_dests() == 4);
    CHECK(back.buckets.edges == ds.buckets.edges);
    CHECK(back.split.test == ds.split.test);
    CHECK(back.provenance["note"] == "x");
    CHECK(back.source_graph.proximity == ds.source_graph.proximity);
    CHECK(back.dest_graph.adjacency == ds.dest_graph.adjacency);
    REQUIRE(back.tensors.size() == ds.tensors.size());
    for (std::size_t i = 0; i < ds.tensors.size(); ++i) {
      CHECK(back.tensors[i].hist == ds.tensors[i].hist);
      CHECK(back.tensors[i].omega == ds.tensors[i].omega);
    }
  }

  TEST_CASE("corrupted magic is a format error") {
    auto ds = testing::toy_dataset(2, 2, 2, 12);
    const auto path = temp_path("corrupt.odxd");
    save_dataset(path, ds);
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(0);
      f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_dataset(path), FormatError);
  }

  TEST_CASE("empty tensor list is a valid dataset file") {
    auto ds = testing::toy_dataset(2, 2, 2, 12);
    ds.tensors.clear();
    ds.intervals.count = 0;
    ds.split = make_split(0);
    const auto path = temp_path("empty.odxd");
    save_dataset(path, ds);
    auto back = load_dataset(path);
    CHECK(back.tensors.empty());
    CHECK(back.n_origins() == 2);
  }
}
