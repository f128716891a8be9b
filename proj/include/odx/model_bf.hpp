#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "odx/model.hpp"

namespace odx {

struct GruVars {
  Var wz, bz, wr, br, wh, bh;  // W* are hidden × (input + hidden)
};

// z = σ(Wz[x:h]+bz), r = σ(Wr[x:h]+br), h~ = tanh(Wh[x:r∘h]+bh), h' = z∘h + (1-z)∘h~
Var gru_cell(Var x, Var h_prev, const GruVars& w);

// Registers gate weights `<prefix>.W{z,r,h}` / `<prefix>.b{z,r,h}`; returns the first index.
std::size_t add_gru_parameters(ParameterSet& set, const std::string& prefix, std::size_t input, std::size_t hidden);
GruVars gru_vars(Tape& tape, ParameterSet& set, std::size_t first_index);

struct Seq2SeqVars {
  std::vector<GruVars> encoder;
  std::vector<GruVars> decoder;
  Var proj_w;  // input_dim × hidden
  Var proj_b;
  std::size_t hidden = 0;
};

// Per layer: encoder then decoder GRU, followed by the output projection.
std::size_t add_seq2seq_parameters(ParameterSet& set, const std::string& prefix, std::size_t input_dim,
                                   std::size_t hidden, std::size_t layers);
Seq2SeqVars seq2seq_vars(Tape& tape, ParameterSet& set, std::size_t first_index, std::size_t layers);

struct Seq2SeqHooks {
  // Replacement for the next decoder input after step j (teacher forcing).
  std::function<std::optional<Var>(std::size_t j)> teacher;
  // Applied to every decoder input (dropout).
  std::function<Var(Var)> decoder_input;
};

// Encoder consumes the flattened inputs in order; the decoder starts from the
// last input and feeds its projected output back for h steps.
std::vector<Var> seq2seq_forecast(Tape& tape, const std::vector<Var>& inputs, const Seq2SeqVars& w, std::size_t h,
                                  const Seq2SeqHooks& hooks = {});

Var bf_loss(std::span<const Var> predictions, std::span<const SparseODTensor* const> truth,
            std::span<const FactorPair> factors, double lambda);

struct BFConfig {
  std::size_t beta = 5;
  std::size_t hidden = 2;
  std::size_t layers = 1;
};

class BFModel : public ForecastModel {
 public:
  BFModel(ODShape shape, BFConfig config, std::uint64_t seed);

  std::string kind() const override { return "BF"; }
  ODShape shape() const override { return shape_; }
  nlohmann::json manifest() const override;
  const BFConfig& config() const noexcept { return config_; }

  // r = relu(F_r·vec(M) + b_r) as N×β×K, c = relu(F_c·vec(M) + b_c) as β×N'×K.
  FactorPair factorize(Tape& tape, const DenseTensor& hist);

  ForwardResult forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                        std::span<const SparseODTensor* const> targets, const ForwardOptions& options) override;

 private:
  ODShape shape_;
  BFConfig config_;
  std::size_t fr_ = 0, br_ = 0, fc_ = 0, bc_ = 0;
  std::size_t r_stream_ = 0, c_stream_ = 0;
};

}  // namespace odx
