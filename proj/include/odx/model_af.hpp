#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "odx/graph.hpp"
#include "odx/graph_ops.hpp"
#include "odx/model.hpp"
#include "odx/model_bf.hpp"

namespace odx {

// Features-by-nodes wrappers around the node-major graph ops.
// slice: C × n, filters (Q, C|1, S), bias (n, Q) -> Q × n.
Var gcnn_filter(Var slice, const DenseTensor& lhat, Var filters, Var bias);
// x: Q × padded_n -> Q × padded_n/p.
Var gcnn_pool(Var x, std::size_t pool, const std::vector<bool>& dummy, PoolMode mode);

struct CnrnnVars {
  Var gs, bs, gu, bu, gh, bh;  // G* are (F, 2F, S), b* are (n, F)
};

// x, h_prev: n × F over the stream's graph.
//   S = σ(G_S ⊗ [h:x] + b_S), U = σ(G_U ⊗ [h:x] + b_U),
//   H = tanh(G_H ⊗ [x : S∘h] + b_H), h_next = U∘x + (1-U)∘H
Var cnrnn_cell(Var x, Var h_prev, const CnrnnVars& w, const DenseTensor& lhat);

struct CnrnnStack {
  std::vector<CnrnnVars> encoder;
  std::vector<CnrnnVars> decoder;
};

// Per layer: encoder then decoder cells, gates S, U, H each with `<p>.G` and `<p>.b`.
std::size_t add_cnrnn_parameters(ParameterSet& set, const std::string& prefix, std::size_t nodes,
                                 std::size_t features, std::size_t order, std::size_t layers, std::mt19937_64& rng);
CnrnnStack cnrnn_vars(Tape& tape, ParameterSet& set, std::size_t first, std::size_t layers);

// Encoder over the s node-major factors; the decoder starts from the last
// input and feeds back its own top-layer output.
std::vector<Var> af_seq2seq(const std::vector<Var>& inputs, const CnrnnStack& w, const DenseTensor& lhat,
                            std::size_t h, const Seq2SeqHooks& hooks = {});

struct AFStage {
  std::size_t filters = 32;  // Q; 0 on the last stage means K
  std::size_t order = 8;     // S
  std::size_t pool = 4;      // p
};

struct AFConfig {
  std::vector<AFStage> stages{{32, 8, 4}, {0, 4, 2}};
  std::size_t rnn_order = 3;
  std::size_t layers = 2;
  PoolMode pool_mode = PoolMode::max;
  // One filter bank shared by all input channels of a stage instead of one per channel.
  bool shared_filters = false;
};

nlohmann::json af_config_to_json(const AFConfig& c);
AFConfig af_config_from_json(const nlohmann::json& j);

// Graph context of one stream. The factorization filters over `filter_graph`,
// the recurrent cells and the Dirichlet term use `own_graph`.
struct AFStreamGraph {
  CoarseningPlan plan;                 // over filter_graph
  std::vector<DenseTensor> stage_lhat;  // per stage, in plan slot order
  DenseTensor rnn_lhat;                 // scaled Laplacian of own_graph
  DenseTensor laplacian;                // D - W of own_graph
};

Var af_loss(std::span<const Var> predictions, std::span<const SparseODTensor* const> truth,
            std::span<const FactorPair> factors, double lambda, const DenseTensor& source_laplacian,
            const DenseTensor& dest_laplacian);

class AFModel : public ForecastModel {
 public:
  AFModel(ODShape shape, AFConfig config, std::uint64_t seed, const RegionGraph& source, const RegionGraph& dest);

  std::string kind() const override { return "AF"; }
  ODShape shape() const override { return shape_; }
  nlohmann::json manifest() const override;
  const AFConfig& config() const noexcept { return config_; }
  std::size_t beta() const noexcept { return beta_; }
  const AFStreamGraph& r_graph() const noexcept { return r_; }
  const AFStreamGraph& c_graph() const noexcept { return c_; }

  // R: N × β' × K, C: β' × N' × K.
  FactorPair spatial_factorize(Tape& tape, const DenseTensor& hist);

  ForwardResult forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                        std::span<const SparseODTensor* const> targets, const ForwardOptions& options) override;

 private:
  struct StageParams {
    std::size_t filters, bias;
  };
  // Graph batch (batch, nodes, channels) through all stages -> (batch, β', K).
  Var factor_stream(Tape& tape, Var x, const AFStreamGraph& g, const std::vector<StageParams>& stages);
  // Node-major factors: R (N, β', K), C (N', β', K).
  std::pair<Var, Var> factorize_node_major(Tape& tape, const DenseTensor& hist);

  ODShape shape_;
  AFConfig config_;
  AFStreamGraph r_, c_;
  std::size_t beta_ = 0;
  int alpha_ = 1;
  double sigma_ = 1.0;
  std::vector<StageParams> r_stages_, c_stages_;
  std::size_t r_rnn_ = 0, c_rnn_ = 0;
};

}  // namespace odx
