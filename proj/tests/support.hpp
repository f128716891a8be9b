#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "odx/autodiff.hpp"
#include "odx/dataset.hpp"
#include "odx/gradcheck.hpp"
#include "odx/model.hpp"
#include "odx/synth.hpp"

namespace odx::testing {

inline Dataset toy_dataset(std::size_t n, std::size_t np, std::size_t k, std::size_t intervals,
                           std::uint64_t seed = 5, double sparsity = 0.3) {
  SynthConfig c;
  c.seed = seed;
  c.n_origins = n;
  c.n_dests = np;
  c.buckets = k;
  c.intervals = intervals;
  c.sparsity = sparsity;
  return synth_generate(c);
}

struct WindowPtrs {
  std::vector<const SparseODTensor*> inputs, targets;
};

inline WindowPtrs window_ptrs(const Dataset& ds, std::size_t start, std::size_t s, std::size_t h) {
  WindowPtrs w;
  for (std::size_t i = 0; i < s; ++i) w.inputs.push_back(&ds.tensors.at(start + i));
  for (std::size_t j = 0; j < h; ++j) w.targets.push_back(&ds.tensors.at(start + s + j));
  return w;
}

inline GradCheckReport model_gradcheck(ForecastModel& model, const Dataset& ds, std::size_t s, std::size_t h,
                                       double lambda, std::size_t start = 0) {
  const WindowPtrs w = window_ptrs(ds, start, s, h);
  Objective f = [&](ParameterSet&, bool with_grad) {
    Tape tape;
    ForwardOptions opt;
    opt.horizon = h;
    opt.lambda = lambda;
    auto res = model.forward(tape, w.inputs, w.targets, opt);
    if (with_grad) {
      tape.backward(res.loss);
      tape.accumulate_into(model.parameters());
    }
    return res.loss.value()[0];
  };
  return finite_diff_check(model.parameters(), f);
}

inline DenseTensor random_tensor(Dims dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  DenseTensor t(std::move(dims));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::vector<double> random_histogram(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> h(k);
  double s = 0.0;
  for (auto& v : h) s += (v = u(rng));
  for (auto& v : h) v /= s;
  return h;
}

// Random symmetric weighted graph on n nodes with a spanning path so it is connected.
inline DenseTensor random_proximity(std::size_t n, std::mt19937_64& rng, double edge_p = 0.4) {
  DenseTensor w({n, n});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    w[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || u(rng) < edge_p) {
        const double v = 0.1 + 0.9 * u(rng);
        w[i * n + j] = w[j * n + i] = v;
      }
    }
  }
  return w;
}

}  // namespace odx::testing
