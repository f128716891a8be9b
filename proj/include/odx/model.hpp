#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "odx/autodiff.hpp"
#include "odx/ingest.hpp"
#include "odx/parameters.hpp"

namespace odx {

struct ODShape {
  std::size_t n_origins = 0;
  std::size_t n_dests = 0;
  std::size_t buckets = 0;

  bool operator==(const ODShape&) const = default;
};

// R: N × β × K origin factors, C: β × N' × K destination factors.
struct FactorPair {
  Var r;
  Var c;
};

struct ForwardOptions {
  std::size_t horizon = 1;
  double lambda = 1e-4;
  bool training = false;
  double dropout = 0.0;
  double teacher_forcing = 0.0;
  std::mt19937_64* rng = nullptr;  // required when training with dropout or teacher forcing
};

struct ForwardResult {
  Var loss;                      // only set when targets were supplied
  bool has_loss = false;
  std::vector<Var> predictions;  // h tensors N × N' × K
};

// A forecaster maps s observed tensors to h full histogram tensors.
class ForecastModel {
 public:
  virtual ~ForecastModel() = default;

  virtual std::string kind() const = 0;
  virtual ODShape shape() const = 0;
  // Hyperparameters and anything needed to rebuild the same architecture.
  virtual nlohmann::json manifest() const = 0;

  // `targets` may be empty (pure forecasting) or hold exactly options.horizon tensors.
  virtual ForwardResult forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                                std::span<const SparseODTensor* const> targets, const ForwardOptions& options) = 0;

  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

 protected:
  ParameterSet params_;
};

// Shared helpers for the model implementations.
namespace ad {
// Inverted dropout; identity when rate is 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);
}  // namespace ad

void check_window(const ODShape& shape, std::span<const SparseODTensor* const> inputs,
                  std::span<const SparseODTensor* const> targets, std::size_t horizon);

// out(o,d,:) = softmax_k( sum_b R(o,b,k) C(b,d,k) ).
Var recover(Var r, Var c);

}  // namespace odx
