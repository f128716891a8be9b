#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

#include "odx/dataset.hpp"

namespace odx {

// Regions sit on a grid (spacing in km, 4-neighbour adjacency). Each OD cell has a
// latent bucket position
//   m(o,d,t) = base(o,d) + A·a(o,d)·sin(2π·hour/24 + φ(o))
//            + B·[ √ρ·(z(o,t) + z'(d,t))/√2 + √(1-ρ)·ξ(o,d,t) ]
// where z, z' are spatially smoothed AR(1) fields with unit variance, ξ is white
// noise and ρ is the planted correlation. Bucket probabilities follow a
// discretized Gaussian around m; Ω is Bernoulli(1 - sparsity).
struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_origins = 8;
  std::size_t n_dests = 8;
  std::size_t buckets = 3;
  std::size_t intervals = 2000;
  std::int64_t interval_seconds = 900;
  double sparsity = 0.4;
  double correlation = 0.97;
  double cycle_amplitude = 0.6;
  double perturbation_scale = 1.5;
  double ar_coefficient = 0.98;
  double width = 0.4;
  double spacing_km = 1.0;
  // 0 stores exact probabilities; otherwise each observed cell holds the
  // empirical histogram of this many sampled trips.
  std::size_t trips_per_cell = 0;
  int alpha = 1;
  double sigma = 1.0;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& c);

Dataset synth_generate(const SynthConfig& config);

// rows × cols grid with rows the largest divisor of n not above sqrt(n).
RegionGraph grid_graph(std::size_t n, double spacing_km, int alpha, double sigma);

}  // namespace odx
