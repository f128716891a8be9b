// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any failure.
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "odx/baselines.hpp"
#include "odx/checkpoint.hpp"
#include "odx/eval.hpp"
#include "odx/graph.hpp"
#include "odx/model_af.hpp"
#include "odx/model_bf.hpp"
#include "odx/synth.hpp"
#include "odx/train.hpp"
#include "support.hpp"

using namespace odx;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

AFConfig toy_af() { return AFConfig{{{2, 2, 2}, {0, 2, 2}}, 2, 1, PoolMode::max, false}; }
AFConfig synthetic_af() { return AFConfig{{{8, 3, 2}, {0, 3, 2}}, 3, 2, PoolMode::max, false}; }

void criterion_gradients() {
  const auto t0 = Clock::now();
  auto ds = testing::toy_dataset(4, 4, 2, 24, 13, 0.3);
  auto bf = make_model({"BF", {{"beta", 2}, {"hidden", 2}}, 3}, ds);
  auto af = make_model({"AF", {{"config", af_config_to_json(toy_af())}}, 3}, ds);
  auto rb = testing::model_gradcheck(*bf, ds, 2, 1, 1e-3);
  auto ra = testing::model_gradcheck(*af, ds, 2, 1, 1e-3);
  const double secs = seconds_since(t0);
  const bool ok = rb.max_relative_error <= 1e-4 && ra.max_relative_error <= 1e-4 && secs < 120;
  report(1, "gradient correctness", ok,
         fmt::format("BF max rel err {:.3g}, AF max rel err {:.3g}, {:.1f} s", rb.max_relative_error, ra.max_relative_error, secs));
}

void criterion_histograms() {
  auto ds = testing::toy_dataset(4, 4, 3, 24, 17, 0.3);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> scale(0.1, 5.0);
  std::size_t draws = 0, cells = 0;
  double worst = 0.0, min_entry = 1.0;
  for (int i = 0; i < 1000; ++i) {
    auto m = i % 2 == 0 ? make_model({"BF", {{"beta", 2}}, static_cast<std::uint64_t>(i)}, ds)
                        : make_model({"AF", {{"config", af_config_to_json(toy_af())}}, static_cast<std::uint64_t>(i)}, ds);
    const double s = scale(rng);
    std::uniform_real_distribution<double> u(-s, s);
    for (auto& p : m->parameters())
      for (auto& v : p.value.values()) v = u(rng);
    auto w = testing::window_ptrs(ds, static_cast<std::size_t>(i) % 18, 3, 2);
    Tape t;
    ForwardOptions o;
    o.horizon = 2;
    auto res = m->forward(t, w.inputs, {}, o);
    for (const auto& p : res.predictions) {
      const auto& v = p.value();
      for (std::size_t c = 0; c < v.size() / 3; ++c) {
        double sum = 0;
        for (std::size_t k = 0; k < 3; ++k) {
          sum += v[c * 3 + k];
          min_entry = std::min(min_entry, v[c * 3 + k]);
        }
        worst = std::max(worst, std::abs(sum - 1.0));
        ++cells;
      }
    }
    ++draws;
  }
  report(2, "histogram validity", worst <= 1e-9 && min_entry >= 0.0,
         fmt::format("{} draws, {} cells, max |sum-1| {:.3g}, min entry {:.3g}", draws, cells, worst, min_entry));
}

void criterion_chebyshev() {
  std::mt19937_64 rng(29);
  double worst = 0.0;
  for (int g = 0; g < 100; ++g) {
    const std::size_t n = 2 + static_cast<std::size_t>(g) % 9, S = 1 + static_cast<std::size_t>(g) % 5;
    const std::size_t C = 1 + static_cast<std::size_t>(g) % 3, Q = 1 + static_cast<std::size_t>(g / 3) % 3;
    const auto lhat = scaled_laplacian(testing::random_proximity(n, rng));
    auto x = testing::random_tensor({C, n}, rng);
    auto filt = testing::random_tensor({Q, C, S}, rng);
    auto bias = testing::random_tensor({n, Q}, rng, -0.3, 0.3);
    Tape t;
    auto out = gcnn_filter(t.constant(x), lhat, t.constant(filt), t.constant(bias)).value();
    Eigen::MatrixXd L(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) L(i, j) = lhat[i * n + j];
    std::vector<Eigen::MatrixXd> T{Eigen::MatrixXd::Identity(n, n), L};
    while (T.size() < S) T.push_back(2.0 * L * T.back() - T[T.size() - 2]);
    for (std::size_t q = 0; q < Q; ++q) {
      Eigen::VectorXd ref = Eigen::VectorXd::Zero(n);
      for (std::size_t c = 0; c < C; ++c) {
        Eigen::VectorXd xc(n), y = Eigen::VectorXd::Zero(n);
        for (std::size_t v = 0; v < n; ++v) xc(v) = x[c * n + v];
        for (std::size_t s = 0; s < S; ++s) y += filt[(q * C + c) * S + s] * (T[s] * xc);
        for (std::size_t v = 0; v < n; ++v) ref(v) += std::max(0.0, y(v) + bias[v * Q + q]);
      }
      for (std::size_t v = 0; v < n; ++v) worst = std::max(worst, std::abs(out[q * n + v] - ref(v)));
    }
  }
  report(3, "Chebyshev oracle", worst <= 1e-10, fmt::format("100 graphs, max abs diff {:.3g}", worst));
}

double line_transport(std::vector<double> a, std::vector<double> b) {
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

void criterion_emd() {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 2 + static_cast<std::size_t>(i) % 9;
    auto m = testing::random_histogram(k, rng), mh = testing::random_histogram(k, rng);
    worst = std::max(worst, std::abs(emd(m, mh) - line_transport(m, mh)));
  }
  const std::vector<double> a{1, 0, 0}, b{0, 0, 1};
  const double corner = emd(a, b);
  report(4, "EMD oracle", worst <= 1e-9 && corner == 2.0,
         fmt::format("1000 pairs, max diff {:.3g}; EMD((1,0,0),(0,0,1)) = {}", worst, corner));
}

void criterion_metrics() {
  std::mt19937_64 rng(37);
  bool identities = true;
  for (int i = 0; i < 1000; ++i) {
    auto m = testing::random_histogram(2 + static_cast<std::size_t>(i) % 6, rng);
    auto mh = testing::random_histogram(m.size(), rng);
    identities = identities && kl_div(m, m) == 0.0 && js_div(m, mh) == js_div(mh, m);
  }
  double worst = 0.0;
  std::size_t total_cells = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(inst) % 5, np = 1 + static_cast<std::size_t>(inst / 5) % 4;
    const std::size_t k = 2 + static_cast<std::size_t>(inst) % 4;
    auto ds = testing::toy_dataset(n, np, k, 16, static_cast<std::uint64_t>(inst) + 100, 0.2 + 0.6 * (inst % 3) / 2.0);
    std::vector<WindowForecast> fc;
    for (std::size_t w = 0; w < 5; ++w) {
      WindowForecast f;
      f.target_start = 2 + w * 2;
      DenseTensor t({n, np, k});
      for (std::size_t c = 0; c < n * np; ++c) {
        auto h = testing::random_histogram(k, rng);
        for (std::size_t q = 0; q < k; ++q) t[c * k + q] = h[q];
      }
      f.steps.push_back(t);
      fc.push_back(f);
    }
    for (Metric metric : {Metric::kl, Metric::js, Metric::emd}) {
      double sum = 0.0;
      std::size_t cells = 0;
      for (const auto& f : fc)
        for (std::size_t o = 0; o < n; ++o)
          for (std::size_t d = 0; d < np; ++d) {
            const auto& truth = ds.tensors[f.target_start];
            if (truth.omega[o * np + d] == 0.0) continue;
            std::vector<double> a(truth.hist.data() + (o * np + d) * k, truth.hist.data() + (o * np + d + 1) * k);
            std::vector<double> b(f.steps[0].data() + (o * np + d) * k, f.steps[0].data() + (o * np + d + 1) * k);
            sum += metric == Metric::kl ? kl_div(a, b) : metric == Metric::js ? js_div(a, b) : emd(a, b);
            ++cells;
          }
      auto r = dissim_aggregate(fc, ds, metric, 1);
      total_cells += cells;
      if (r.cells != cells) worst = INFINITY;
      if (cells > 0) worst = std::max(worst, std::abs(*r.value - sum / static_cast<double>(cells)));
      else if (r.value) worst = INFINITY;
    }
  }
  report(5, "metric identities", identities && worst <= 1e-12,
         fmt::format("KL(m,m)=0 and JS symmetric on 1000 pairs: {}; DisSim vs naive max diff {:.3g} over {} cells",
                     identities ? "yes" : "no", worst, total_cells));
}

void criterion_masking() {
  std::mt19937_64 rng(41);
  auto ds = testing::toy_dataset(4, 4, 2, 10, 43, 0.5);
  const auto L = laplacian(ds.source_graph.proximity), Lp = laplacian(ds.dest_graph.proximity);
  double worst = 0.0;
  std::size_t perturbed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto& truth = ds.tensors[static_cast<std::size_t>(trial) % ds.tensors.size()];
    auto base = testing::random_tensor({4, 4, 2}, rng, 0, 1);
    auto moved = base;
    for (std::size_t c = 0; c < 16; ++c)
      if (truth.omega[c] == 0.0) {
        moved[c * 2] += 3.0 * (rng() % 2 ? 1 : -1);
        moved[c * 2 + 1] -= 0.7;
        ++perturbed;
      }
    Tape t;
    FactorPair f{t.constant(testing::random_tensor({4, 2, 2}, rng)), t.constant(testing::random_tensor({2, 4, 2}, rng))};
    const SparseODTensor* tp[] = {&truth};
    FactorPair fs[] = {f};
    Var a[] = {t.constant(base)}, b[] = {t.constant(moved)};
    worst = std::max(worst, std::abs(bf_loss(a, tp, fs, 0.0).value()[0] - bf_loss(b, tp, fs, 0.0).value()[0]));
    worst = std::max(worst, std::abs(af_loss(a, tp, fs, 0.0, L, Lp).value()[0] - af_loss(b, tp, fs, 0.0, L, Lp).value()[0]));
  }
  report(6, "masking", worst == 0.0 && perturbed > 0,
         fmt::format("{} unobserved cells perturbed, max loss change {}", perturbed, worst));
}

struct Run {
  double test_emd = 0.0;
  double seconds = 0.0;
  TrainResult result;
};

Run train_and_score(const Dataset& ds, const ModelSpec& spec, const TrainConfig& tc) {
  const auto t0 = Clock::now();
  auto m = make_model(spec, ds);
  Run r;
  r.result = train_loop(*m, ds, tc);
  const auto test = split_windows(ds, ds.split.test, tc.s, tc.h);
  auto f = forecast_windows(*m, ds, test);
  r.test_emd = dissim_aggregate(f, ds, Metric::emd, 1).value.value_or(NAN);
  r.seconds = seconds_since(t0);
  return r;
}

ModelSpec af_spec(int alpha, double sigma) {
  return {"AF", {{"config", af_config_to_json(synthetic_af())}, {"alpha", alpha}, {"sigma", sigma}}, 7};
}

double last5_ratio(const TrainResult& r) {
  if (r.log.size() < 5) return INFINITY;
  double s = 0.0;
  for (std::size_t i = r.log.size() - 5; i < r.log.size(); ++i) s += r.log[i].train_loss;
  return s / 5.0 / r.log.front().train_loss;
}

bool same_losses(const TrainResult& a, const TrainResult& b) {
  if (a.log.size() != b.log.size()) return false;
  for (std::size_t i = 0; i < a.log.size(); ++i)
    if (a.log[i].train_loss != b.log[i].train_loss || a.log[i].val_loss != b.log[i].val_loss || a.log[i].lr != b.log[i].lr)
      return false;
  return true;
}

void criterion_schedule() {
  TrainConfig c;
  const double a = lr_schedule(0, c), b = lr_schedule(5, c), d = lr_schedule(12, c);
  report(9, "schedule check", a == 0.001 && b == 0.001 * 0.8 && d == 0.001 * 0.8 * 0.8 &&
                                  std::abs(b - 0.0008) < 1e-18 && std::abs(d - 0.00064) < 1e-18,
         fmt::format("epochs 0/5/12 -> {} / {} / {}", a, b, d));
}

void criterion_proximity() {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool ok = true;
  for (int g = 0; g < 100; ++g) {
    const std::size_t n = 2 + static_cast<std::size_t>(g) % 11;
    const int alpha = 1 + g % 3;
    const double sigma = std::array<double, 3>{0.5, 1.0, 2.0}[static_cast<std::size_t>(g / 3) % 3];
    DenseTensor a({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (u(rng) < 0.3) a[i * n + j] = a[j * n + i] = 1.0;
    std::vector<Point2> c;
    for (std::size_t i = 0; i < n; ++i) c.push_back({3.0 * u(rng), 3.0 * u(rng)});
    auto w = build_proximity(a, c, alpha, sigma);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<int> hops(n, -1);
      std::deque<std::size_t> q{s};
      hops[s] = 0;
      while (!q.empty()) {
        auto v = q.front();
        q.pop_front();
        for (std::size_t x = 0; x < n; ++x)
          if (a[v * n + x] == 1.0 && hops[x] < 0) {
            hops[x] = hops[v] + 1;
            q.push_back(x);
          }
      }
      for (std::size_t t = 0; t < n; ++t) {
        const double v = w[s * n + t];
        ok = ok && v == w[t * n + s] && v >= 0.0 && v <= 1.0;
        if (s == t) ok = ok && v == 1.0;
        if (hops[t] < 0 || hops[t] > alpha) ok = ok && v == 0.0;
      }
    }
  }
  report(10, "proximity matrix", ok, "100 random graphs: symmetric, in [0,1], unit diagonal, zero beyond alpha hops");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const auto start = Clock::now();
  criterion_gradients();
  criterion_histograms();
  criterion_chebyshev();
  criterion_emd();
  criterion_metrics();
  criterion_masking();

  const Dataset ds = synth_generate(SynthConfig{});
  const TrainConfig tc;
  const auto t7 = Clock::now();
  const auto test = split_windows(ds, ds.split.test, tc.s, tc.h);
  NHBaseline nh(ds, ds.split.train);
  const double nh_emd = dissim_aggregate(constant_forecasts(nh.predict(), test), ds, Metric::emd, 1).value.value_or(NAN);
  const Run bf = train_and_score(ds, {"BF", {}, 7}, tc);
  const Run af = train_and_score(ds, af_spec(1, 1.0), tc);
  const double secs7 = seconds_since(t7);
  report(7, "synthetic ordering", af.test_emd <= 0.9 * bf.test_emd && bf.test_emd <= 0.9 * nh_emd && secs7 < 900,
         fmt::format("test EMD AF {:.4f}, BF {:.4f}, NH {:.4f}; {:.0f} s", af.test_emd, bf.test_emd, nh_emd, secs7));

  const Run bf2 = train_and_score(ds, {"BF", {}, 7}, tc);
  const Run af2 = train_and_score(ds, af_spec(1, 1.0), tc);
  const double ra = last5_ratio(af.result), rb = last5_ratio(bf.result);
  const bool repeat = same_losses(af.result, af2.result) && same_losses(bf.result, bf2.result);
  report(8, "training sanity", ra < 0.5 && rb < 0.5 && repeat,
         fmt::format("last-5/epoch-1 train loss AF {:.3f}, BF {:.3f}; identical logs on rerun: {}", ra, rb, repeat ? "yes" : "no"));

  criterion_schedule();
  criterion_proximity();

  double worst_change = 0.0;
  std::string grid;
  for (int alpha : {1, 2, 3})
    for (double sigma : {0.5, 1.0, 2.0}) {
      const double e = alpha == 1 && sigma == 1.0 ? af.test_emd : train_and_score(ds, af_spec(alpha, sigma), tc).test_emd;
      worst_change = std::max(worst_change, std::abs(e - af.test_emd) / af.test_emd);
      grid += fmt::format(" ({},{})={:.4f}", alpha, sigma, e);
    }
  report(11, "robustness to (alpha, sigma)", worst_change < 0.15,
         fmt::format("max relative change {:.2f}%;", 100.0 * worst_change) + grid);

  std::printf("%s: %d failed, %.0f s total\n", failures == 0 ? "ALL PASS" : "FAILURES", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
