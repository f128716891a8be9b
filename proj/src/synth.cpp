#include "odx/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "odx/error.hpp"

namespace odx {

using nlohmann::json;

namespace {

// Spatially smoothed AR(1) field over a graph, unit marginal variance per node.
class SmoothField {
 public:
  SmoothField(const DenseTensor& adjacency, double phi) : n_(adjacency.dim(0)), phi_(phi), smooth_({n_, n_}) {
    for (std::size_t i = 0; i < n_; ++i) {
      double row = 1.0;
      for (std::size_t j = 0; j < n_; ++j) row += adjacency[i * n_ + j];
      double norm = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double s = ((i == j) ? 1.0 : adjacency[i * n_ + j]) / row;
        smooth_[i * n_ + j] = s;
        norm += s * s;
      }
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < n_; ++j) smooth_[i * n_ + j] /= norm;
    }
    state_.assign(n_, 0.0);
  }

  const std::vector<double>& step(std::mt19937_64& rng, bool first) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> white(n_);
    for (auto& w : white) w = normal(rng);
    const double innov = first ? 1.0 : std::sqrt(1.0 - phi_ * phi_);
    for (std::size_t i = 0; i < n_; ++i) {
      double e = 0.0;
      for (std::size_t j = 0; j < n_; ++j) e += smooth_[i * n_ + j] * white[j];
      state_[i] = (first ? 0.0 : phi_ * state_[i]) + innov * e;
    }
    return state_;
  }

 private:
  std::size_t n_;
  double phi_;
  DenseTensor smooth_;
  std::vector<double> state_;
};

}  // namespace

void SynthConfig::validate() const {
  if (n_origins == 0 || n_dests == 0) throw ConfigError("synth: region counts must be positive");
  if (buckets < 2) throw ConfigError("synth: need at least 2 buckets");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw ConfigError("synth: sparsity must lie in [0,1]");
  if (!(correlation >= 0.0 && correlation <= 1.0)) throw ConfigError("synth: correlation must lie in [0,1]");
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) throw ConfigError("synth: ar_coefficient must lie in [0,1)");
  if (!(width > 0.0)) throw ConfigError("synth: width must be positive");
  if (interval_seconds <= 0) throw ConfigError("synth: interval_seconds must be positive");
}

json synth_config_to_json(const SynthConfig& c) {
  return {{"seed", c.seed},
          {"n_origins", c.n_origins},
          {"n_dests", c.n_dests},
          {"buckets", c.buckets},
          {"intervals", c.intervals},
          {"interval_seconds", c.interval_seconds},
          {"sparsity", c.sparsity},
          {"correlation", c.correlation},
          {"cycle_amplitude", c.cycle_amplitude},
          {"perturbation_scale", c.perturbation_scale},
          {"ar_coefficient", c.ar_coefficient},
          {"width", c.width},
          {"spacing_km", c.spacing_km},
          {"trips_per_cell", c.trips_per_cell},
          {"alpha", c.alpha},
          {"sigma", c.sigma}};
}

RegionGraph grid_graph(std::size_t n, double spacing_km, int alpha, double sigma) {
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= n; ++r)
    if (n % r == 0) rows = r;
  const std::size_t cols = n / rows;
  std::vector<Point2> centroids(n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = i / cols, c = i % cols;
    centroids[i] = {static_cast<double>(c) * spacing_km, static_cast<double>(r) * spacing_km};
    if (c + 1 < cols) edges.emplace_back(i, i + 1);
    if (r + 1 < rows) edges.emplace_back(i, i + cols);
  }
  return make_region_graph(adjacency_from_edges(n, edges), std::move(centroids), alpha, sigma);
}

Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t N = cfg.n_origins, Np = cfg.n_dests, K = cfg.buckets, L = cfg.intervals;
  Dataset ds;
  ds.intervals.length_s = cfg.interval_seconds;
  ds.intervals.count = L;
  ds.buckets.edges.clear();
  for (std::size_t k = 1; k < K; ++k) ds.buckets.edges.push_back(3.0 * static_cast<double>(k));
  for (std::size_t i = 0; i < N; ++i) ds.origin_ids.push_back(static_cast<long long>(i));
  for (std::size_t i = 0; i < Np; ++i) ds.dest_ids.push_back(static_cast<long long>(i));
  ds.source_graph = grid_graph(N, cfg.spacing_km, cfg.alpha, cfg.sigma);
  ds.dest_graph = grid_graph(Np, cfg.spacing_km, cfg.alpha, cfg.sigma);
  ds.split = make_split(L, cfg.train_fraction, cfg.validation_fraction);
  ds.provenance = {{"generator", "synth"}, {"config", synth_config_to_json(cfg)}};

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double span = static_cast<double>(K - 1);
  std::vector<double> base(N * Np), amp(N * Np), phase(N);
  for (auto& b : base) b = span * (0.25 + 0.5 * unit(rng));
  for (auto& a : amp) a = 0.75 + 0.25 * unit(rng);
  for (auto& p : phase) p = 2.0 * std::numbers::pi * unit(rng);

  SmoothField zo(ds.source_graph.adjacency, cfg.ar_coefficient);
  SmoothField zd(ds.dest_graph.adjacency, cfg.ar_coefficient);
  const double shared = std::sqrt(cfg.correlation / 2.0), own = std::sqrt(1.0 - cfg.correlation);
  const double two_w2 = 2.0 * cfg.width * cfg.width;

  ds.tensors.resize(L);
  std::vector<double> p(K);
  for (std::size_t t = 0; t < L; ++t) {
    auto& m = ds.tensors[t];
    m.interval_index = t;
    m.hist = DenseTensor({N, Np, K});
    m.omega = DenseTensor({N, Np});
    const auto& fo = zo.step(rng, t == 0);
    const auto& fd = zd.step(rng, t == 0);
    const double angle = 2.0 * std::numbers::pi * ds.intervals.hour_of_day(t) / 24.0;
    for (std::size_t o = 0; o < N; ++o)
      for (std::size_t d = 0; d < Np; ++d) {
        const std::size_t cell = o * Np + d;
        const double xi = normal(rng);
        const double observe = unit(rng);
        const double centre = base[cell] + cfg.cycle_amplitude * amp[cell] * std::sin(angle + phase[o]) +
                              cfg.perturbation_scale * (shared * (fo[o] + fd[d]) + own * xi);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double x = static_cast<double>(k) - centre;
          p[k] = std::exp(-x * x / two_w2);
          total += p[k];
        }
        for (auto& v : p) v /= total;
        if (cfg.trips_per_cell > 0) {
          std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
          std::vector<double> counts(K, 0.0);
          for (std::size_t n = 0; n < cfg.trips_per_cell; ++n) counts[pick(rng)] += 1.0;
          for (std::size_t k = 0; k < K; ++k) p[k] = counts[k] / static_cast<double>(cfg.trips_per_cell);
        }
        if (observe < cfg.sparsity) continue;
        m.omega[cell] = 1.0;
        for (std::size_t k = 0; k < K; ++k) m.hist[cell * K + k] = p[k];
      }
  }
  return ds;
}

}  // namespace odx
