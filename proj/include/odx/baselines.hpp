#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "odx/dataset.hpp"
#include "odx/model.hpp"
#include "odx/model_bf.hpp"

namespace odx {

// Time-invariant per-cell mean of the observed training histograms.
class NHBaseline {
 public:
  NHBaseline(const Dataset& ds, std::span<const std::size_t> train_intervals);
  NHBaseline(std::span<const SparseODTensor> train, std::size_t n_origins, std::size_t n_dests, std::size_t buckets);

  const DenseTensor& predict() const noexcept { return mean_; }
  std::size_t unobserved_cells() const noexcept { return unobserved_; }

 private:
  void fit(std::span<const SparseODTensor* const> train, std::size_t n, std::size_t np, std::size_t k);
  DenseTensor mean_;
  std::size_t unobserved_ = 0;
};

struct FCConfig {
  std::size_t encoding = 3;
  std::size_t hidden = 3;
  std::size_t layers = 1;
};

// Dense encoding of the whole tensor -> GRU seq2seq -> dense projection to
// N·N'·K logits -> per-cell softmax. Trained on the masked error alone.
class FCModel : public ForecastModel {
 public:
  FCModel(ODShape shape, FCConfig config, std::uint64_t seed);

  std::string kind() const override { return "FC"; }
  ODShape shape() const override { return shape_; }
  nlohmann::json manifest() const override;

  ForwardResult forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                        std::span<const SparseODTensor* const> targets, const ForwardOptions& options) override;

 private:
  Var encode(Tape& tape, Var flat);

  ODShape shape_;
  FCConfig config_;
  std::size_t enc_w_ = 0, enc_b_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<std::size_t> enc_gru_, dec_gru_;
};

}  // namespace odx
