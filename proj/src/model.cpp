#include "odx/model.hpp"

#include "odx/error.hpp"

namespace odx {

namespace ad {

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  DenseTensor mask(x.dims());
  const double s = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : 0.0;
  return hadamard(x, x.tape->constant(std::move(mask)));
}

}  // namespace ad

void check_window(const ODShape& shape, std::span<const SparseODTensor* const> inputs,
                  std::span<const SparseODTensor* const> targets, std::size_t horizon) {
  if (inputs.empty()) throw SizingError("forecast window has no input intervals");
  if (horizon == 0) throw SizingError("forecast horizon must be >= 1");
  if (!targets.empty() && targets.size() != horizon) {
    throw SizingError("window has " + std::to_string(targets.size()) + " targets for horizon " +
                      std::to_string(horizon));
  }
  const Dims want{shape.n_origins, shape.n_dests, shape.buckets};
  auto check = [&](const SparseODTensor* m) {
    if (m->hist.dims() != want) {
      throw ShapeError("tensor " + dims_to_string(m->hist.dims()) + " does not match model " + dims_to_string(want));
    }
  };
  for (auto* m : inputs) check(m);
  for (auto* m : targets) check(m);
}

Var recover(Var r, Var c) { return ad::softmax_lastdim(ad::bucket_product(r, c)); }

}  // namespace odx
