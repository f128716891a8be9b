#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "odx/baselines.hpp"
#include "odx/error.hpp"
#include "odx/eval.hpp"
#include "support.hpp"

using namespace odx;

namespace {

// North-west corner transport on the line; optimal for |i - j| cost.
double greedy_transport(std::vector<double> a, std::vector<double> b) {
  std::size_t i = 0, j = 0;
  double cost = 0.0;
  while (i < a.size() && j < b.size()) {
    const double f = std::min(a[i], b[j]);
    cost += f * std::abs(static_cast<double>(i) - static_cast<double>(j));
    a[i] -= f;
    b[j] -= f;
    if (a[i] <= 1e-15) ++i;
    else ++j;
  }
  return cost;
}

SparseODTensor make_tensor(std::size_t n, std::size_t np, std::size_t k, std::vector<double> hist,
                           std::vector<double> omega) {
  SparseODTensor t;
  t.hist = DenseTensor({n, np, k}, std::move(hist));
  t.omega = DenseTensor({n, np}, std::move(omega));
  return t;
}

std::vector<WindowForecast> random_forecasts(const Dataset& ds, std::size_t windows, std::size_t h,
                                             std::mt19937_64& rng) {
  const std::size_t N = ds.n_origins(), Np = ds.n_dests(), K = ds.n_buckets();
  std::vector<WindowForecast> out;
  for (std::size_t w = 0; w < windows; ++w) {
    WindowForecast f;
    f.target_start = w * 2;
    for (std::size_t j = 0; j < h; ++j) {
      DenseTensor t({N, Np, K});
      for (std::size_t c = 0; c < N * Np; ++c) {
        auto hist = testing::random_histogram(K, rng);
        std::copy(hist.begin(), hist.end(), t.values().begin() + static_cast<std::ptrdiff_t>(c * K));
      }
      f.steps.push_back(t);
    }
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("kl examples") {
    const std::vector<double> a{0.5, 0.5}, b{1.0, 0.0}, c{0.2, 0.3, 0.5};
    CHECK(kl_div(a, a) == 0.0);
    CHECK(kl_div(c, c) == 0.0);
    CHECK(kl_div(a, b) == doctest::Approx(std::log(1.001 / 0.501)).epsilon(1e-14));
    CHECK(kl_div(a, b) == doctest::Approx(0.69215).epsilon(1e-4));
    const std::vector<double> neg{-0.1, 1.1};
    CHECK_THROWS_AS(kl_div(a, neg), DomainError);
    CHECK_THROWS_AS(kl_div(a, c), ShapeError);
  }

  TEST_CASE("js is the mean of both directions and symmetric") {
    const std::vector<double> a{0.5, 0.5}, b{1.0, 0.0};
    const double forward = std::log(1.001 / 0.501);
    const double backward = 0.5 * std::log(0.501 / 1.001) + 0.5 * std::log(0.501 / 0.001);
    CHECK(js_div(a, b) == doctest::Approx((forward + backward) / 2).epsilon(1e-14));
    CHECK(js_div(a, a) == 0.0);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
      auto m = testing::random_histogram(5, rng), mh = testing::random_histogram(5, rng);
      CHECK(js_div(m, mh) == js_div(mh, m));
      CHECK(std::isfinite(kl_div(m, mh)));
    }
  }

  TEST_CASE("emd examples and transport oracle") {
    const std::vector<double> a{1, 0, 0}, b{0, 0, 1};
    CHECK(emd(a, b) == 2.0);
    CHECK(emd(a, a) == 0.0);
    const std::vector<double> light{0.5, 0.0, 0.0};
    CHECK_THROWS_AS(emd(a, light), DomainError);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 1000; ++i) {
      const std::size_t k = 2 + static_cast<std::size_t>(i % 8);
      auto m = testing::random_histogram(k, rng), mh = testing::random_histogram(k, rng);
      CHECK(std::abs(emd(m, mh) - greedy_transport(m, mh)) < 1e-9);
    }
  }

  TEST_CASE("metric names") {
    CHECK(parse_metric("kl") == Metric::kl);
    CHECK(metric_name(parse_metric("emd")) == "emd");
    CHECK_THROWS_AS(parse_metric("rmse"), ConfigError);
    CHECK_THROWS_AS(parse_grouping("weekday"), ConfigError);
  }

  TEST_CASE("dissim of a single observed cell") {
    auto ds = testing::toy_dataset(1, 2, 2, 4);
    ds.tensors[1] = make_tensor(1, 2, 2, {0.25, 0.75, 0.5, 0.5}, {1, 0});
    std::vector<WindowForecast> f{{1, {DenseTensor({1, 2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0})}}};
    auto r = dissim_aggregate(f, ds, Metric::emd, 1);
    CHECK(r.cells == 1);
    REQUIRE(r.value);
    CHECK(*r.value == doctest::Approx(0.75));
  }

  TEST_CASE("no observed cell yields an empty report") {
    auto ds = testing::toy_dataset(2, 2, 2, 4);
    for (auto& t : ds.tensors) t.omega.fill(0.0);
    std::vector<WindowForecast> f{{1, {DenseTensor({2, 2, 2}, 0.5)}}};
    auto r = dissim_aggregate(f, ds, Metric::kl, 1);
    CHECK(r.cells == 0);
    CHECK_FALSE(r.value.has_value());
    auto j = reports_to_json({r});
    CHECK(j[0]["value"].is_null());
  }

  TEST_CASE("step outside the horizon") {
    auto ds = testing::toy_dataset(2, 2, 2, 8);
    std::vector<WindowForecast> f{{1, {DenseTensor({2, 2, 2}, 0.5)}}};
    CHECK_THROWS_AS(dissim_aggregate(f, ds, Metric::kl, 2), SizingError);
    CHECK_THROWS_AS(dissim_aggregate(f, ds, Metric::kl, 0), SizingError);
  }

  TEST_CASE("dissim equals the naive double loop") {
    std::mt19937_64 rng(31);
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t n = 1 + inst % 4, np = 1 + (inst / 4) % 3, k = 2 + inst % 3;
      auto ds = testing::toy_dataset(n, np, k, 20, static_cast<std::uint64_t>(inst), 0.5);
      auto f = random_forecasts(ds, 4, 2, rng);
      for (Metric m : {Metric::kl, Metric::js, Metric::emd})
        for (std::size_t step = 1; step <= 2; ++step) {
          double sum = 0.0;
          std::size_t cells = 0;
          for (const auto& w : f) {
            const auto& truth = ds.tensors[w.target_start + step - 1];
            for (std::size_t o = 0; o < n; ++o)
              for (std::size_t d = 0; d < np; ++d) {
                if (truth.omega[o * np + d] != 1.0) continue;
                std::vector<double> a(k), b(k);
                for (std::size_t q = 0; q < k; ++q) {
                  a[q] = truth.hist[(o * np + d) * k + q];
                  b[q] = w.steps[step - 1][(o * np + d) * k + q];
                }
                sum += metric_value(m, a, b);
                ++cells;
              }
          }
          auto r = dissim_aggregate(f, ds, m, step);
          CHECK(r.cells == cells);
          if (cells == 0) {
            CHECK_FALSE(r.value);
          } else {
            REQUIRE(r.value);
            CHECK(std::abs(*r.value - sum / static_cast<double>(cells)) < 1e-12);
          }
        }
    }
  }

  TEST_CASE("nh baseline") {
    SUBCASE("singleton and average") {
      std::vector<SparseODTensor> train{make_tensor(1, 2, 2, {0.2, 0.8, 0.5, 0.5}, {1, 1}),
                                        make_tensor(1, 2, 2, {0.6, 0.4, 0.0, 0.0}, {1, 0})};
      NHBaseline nh(train, 1, 2, 2);
      const auto& p = nh.predict();
      CHECK(p[0] == doctest::Approx(0.4));
      CHECK(p[1] == doctest::Approx(0.6));
      CHECK(p[2] == doctest::Approx(0.5));
      CHECK(p[3] == doctest::Approx(0.5));
      CHECK(nh.unobserved_cells() == 0);
    }
    SUBCASE("never observed cell falls back to the global mean") {
      std::vector<SparseODTensor> train{make_tensor(1, 2, 2, {0.2, 0.8, 0.0, 0.0}, {1, 0}),
                                        make_tensor(1, 2, 2, {1.0, 0.0, 0.0, 0.0}, {1, 0})};
      NHBaseline nh(train, 1, 2, 2);
      CHECK(nh.unobserved_cells() == 1);
      CHECK(nh.predict()[2] == doctest::Approx(0.6));
      CHECK(nh.predict()[3] == doctest::Approx(0.4));
    }
    SUBCASE("invariant to training order") {
      auto ds = testing::toy_dataset(3, 3, 3, 30);
      std::vector<SparseODTensor> a(ds.tensors.begin(), ds.tensors.begin() + 20);
      auto b = a;
      std::mt19937_64 rng(4);
      std::shuffle(b.begin(), b.end(), rng);
      auto pa = NHBaseline(a, 3, 3, 3).predict(), pb = NHBaseline(b, 3, 3, 3).predict();
      for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-14));
    }
    SUBCASE("empty training set") {
      std::vector<SparseODTensor> none;
      CHECK_THROWS_AS(NHBaseline(none, 1, 1, 2), SizingError);
    }
  }

  TEST_CASE("fc baseline") {
    auto ds = testing::toy_dataset(2, 3, 2, 20, 3);
    FCModel m({2, 3, 2}, {3, 3, 1}, 2);
    auto w = testing::window_ptrs(ds, 0, 3, 2);
    Tape t;
    ForwardOptions o;
    o.horizon = 2;
    auto res = m.forward(t, w.inputs, w.targets, o);
    REQUIRE(res.predictions.size() == 2);
    for (const auto& p : res.predictions) {
      CHECK(p.dims() == Dims{2, 3, 2});
      for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(p.value()[2 * c] + p.value()[2 * c + 1] - 1.0) < 1e-12);
    }
    FCModel g({2, 3, 2}, {2, 2, 1}, 5);
    auto r = testing::model_gradcheck(g, ds, 2, 1, 0.0);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter, " ", r.max_relative_error);
  }

  TEST_CASE("grouped reports") {
    SUBCASE("a single band equals the ungrouped value") {
      auto ds = testing::toy_dataset(2, 2, 2, 12);
      std::mt19937_64 rng(2);
      auto f = random_forecasts(ds, 4, 1, rng);
      GroupingOptions o;
      o.hours_per_band = 24.0;
      auto g = grouped_report(f, ds, Metric::emd, 1, Grouping::hour_band, o);
      REQUIRE(g.size() == 1);
      auto all = dissim_aggregate(f, ds, Metric::emd, 1);
      CHECK(g[0].cells == all.cells);
      CHECK(*g[0].value == doctest::Approx(*all.value));
      auto hours = grouped_report(f, ds, Metric::emd, 1, Grouping::hour_band);
      CHECK(hours.size() == 8);
      CHECK(hours[0].group_key == "[0,3)");
    }
    SUBCASE("two cells in different distance bands") {
      auto ds = testing::toy_dataset(1, 2, 2, 4);
      ds.source_graph.centroids = {{0.0, 0.0}};
      ds.dest_graph.centroids = {{0.5, 0.0}, {0.0, 1.2}};  // 0.5 sits on a band edge
      ds.tensors[1] = make_tensor(1, 2, 2, {1.0, 0.0, 0.0, 1.0}, {1, 1});
      std::vector<WindowForecast> f{{1, {DenseTensor({1, 2, 2}, std::vector<double>{0.5, 0.5, 0.0, 1.0})}}};
      auto g = grouped_report(f, ds, Metric::emd, 1, Grouping::distance_band);
      REQUIRE(g.size() == 6);
      CHECK_FALSE(g[0].value);
      CHECK(g[1].group_key == "[0.5,1)");
      CHECK(g[1].cells == 1);
      CHECK(*g[1].value == doctest::Approx(0.5));
      CHECK(g[2].cells == 1);
      CHECK(*g[2].value == 0.0);
      for (std::size_t b = 3; b < 6; ++b) CHECK(g[b].cells == 0);
    }
  }

  TEST_CASE("constant forecasts and report csv") {
    std::vector<Window> w{{0, 2, 2}, {3, 2, 2}};
    auto f = constant_forecasts(DenseTensor({1, 1, 2}, 0.5), w);
    REQUIRE(f.size() == 2);
    CHECK(f[1].target_start == 5);
    CHECK(f[1].steps.size() == 2);
    auto path = std::filesystem::temp_directory_path() / "odx_eval_report.csv";
    MetricReport r;
    r.model = "NH";
    r.value = 0.25;
    r.cells = 3;
    MetricReport empty = r;
    empty.value.reset();
    empty.cells = 0;
    write_report_csv(path, {r, empty});
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "model,metric,k,group_kind,group_key,value,cells");
    std::getline(is, line);
    CHECK(line == "NH,emd,1,all,\"\",0.25,3");
    std::getline(is, line);
    CHECK(line == "NH,emd,1,all,\"\",,0");
  }
}
