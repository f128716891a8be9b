#include "odx/model_bf.hpp"

#include <random>

#include "odx/error.hpp"

namespace odx {

using nlohmann::json;

Var gru_cell(Var x, Var h_prev, const GruVars& w) {
  if (x.value().rank() != 1 || h_prev.value().rank() != 1) throw ShapeError("gru_cell expects vectors");
  Var xh = ad::concat_last(x, h_prev);
  Var z = ad::sigmoid(ad::linear(w.wz, xh, w.bz));
  Var r = ad::sigmoid(ad::linear(w.wr, xh, w.br));
  Var cand = ad::tanh(ad::linear(w.wh, ad::concat_last(x, ad::hadamard(r, h_prev)), w.bh));
  return ad::add(ad::hadamard(z, h_prev), ad::hadamard(ad::one_minus(z), cand));
}

std::size_t add_gru_parameters(ParameterSet& set, const std::string& prefix, std::size_t input, std::size_t hidden) {
  const std::size_t first = set.size();
  for (const char* g : {"z", "r", "h"}) {
    set.add(prefix + ".W" + g, Dims{hidden, input + hidden});
    set.add(prefix + ".b" + g, Dims{hidden});
  }
  return first;
}

GruVars gru_vars(Tape& tape, ParameterSet& set, std::size_t i) {
  return {tape.parameter(set, i),     tape.parameter(set, i + 1), tape.parameter(set, i + 2),
          tape.parameter(set, i + 3), tape.parameter(set, i + 4), tape.parameter(set, i + 5)};
}

std::size_t add_seq2seq_parameters(ParameterSet& set, const std::string& prefix, std::size_t input_dim,
                                   std::size_t hidden, std::size_t layers) {
  if (layers == 0 || hidden == 0) throw ConfigError("recurrent stack needs >= 1 layer and hidden size");
  const std::size_t first = set.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden;
    add_gru_parameters(set, prefix + ".enc" + std::to_string(l), in, hidden);
    add_gru_parameters(set, prefix + ".dec" + std::to_string(l), in, hidden);
  }
  set.add(prefix + ".proj.W", Dims{input_dim, hidden});
  set.add(prefix + ".proj.b", Dims{input_dim});
  return first;
}

Seq2SeqVars seq2seq_vars(Tape& tape, ParameterSet& set, std::size_t first, std::size_t layers) {
  Seq2SeqVars v;
  std::size_t i = first;
  for (std::size_t l = 0; l < layers; ++l) {
    v.encoder.push_back(gru_vars(tape, set, i));
    v.decoder.push_back(gru_vars(tape, set, i + 6));
    i += 12;
  }
  v.proj_w = tape.parameter(set, i);
  v.proj_b = tape.parameter(set, i + 1);
  v.hidden = v.proj_w.dims()[1];
  return v;
}

std::vector<Var> seq2seq_forecast(Tape& tape, const std::vector<Var>& inputs, const Seq2SeqVars& w, std::size_t h,
                                  const Seq2SeqHooks& hooks) {
  if (inputs.empty()) throw SizingError("seq2seq_forecast needs at least one input step");
  const std::size_t layers = w.encoder.size();
  std::vector<Var> state(layers, tape.constant(DenseTensor({w.hidden})));
  for (const Var& x : inputs) {
    Var in = x;
    for (std::size_t l = 0; l < layers; ++l) {
      state[l] = gru_cell(in, state[l], w.encoder[l]);
      in = state[l];
    }
  }
  std::vector<Var> out;
  Var next = inputs.back();
  for (std::size_t j = 0; j < h; ++j) {
    Var in = hooks.decoder_input ? hooks.decoder_input(next) : next;
    for (std::size_t l = 0; l < layers; ++l) {
      state[l] = gru_cell(in, state[l], w.decoder[l]);
      in = state[l];
    }
    Var y = ad::linear(w.proj_w, in, w.proj_b);
    out.push_back(y);
    next = y;
    if (hooks.teacher && j + 1 < h)
      if (auto forced = hooks.teacher(j)) next = *forced;
  }
  return out;
}

Var bf_loss(std::span<const Var> predictions, std::span<const SparseODTensor* const> truth,
            std::span<const FactorPair> factors, double lambda) {
  if (predictions.size() != truth.size() || predictions.size() != factors.size() || predictions.empty()) {
    throw SizingError("bf_loss: horizons misaligned (" + std::to_string(predictions.size()) + " predictions, " +
                      std::to_string(truth.size()) + " targets, " + std::to_string(factors.size()) + " factor pairs)");
  }
  std::vector<Var> terms;
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    terms.push_back(ad::scale(ad::sum_squares(factors[j].r), lambda));
    terms.push_back(ad::scale(ad::sum_squares(factors[j].c), lambda));
    terms.push_back(ad::masked_squared_error(predictions[j], truth[j]->hist, truth[j]->omega));
  }
  return ad::add_scalars(terms);
}

BFModel::BFModel(ODShape shape, BFConfig config, std::uint64_t seed) : shape_(shape), config_(config) {
  if (shape.n_origins == 0 || shape.n_dests == 0 || shape.buckets < 2) throw ConfigError("BF: invalid tensor shape");
  if (config.beta == 0) throw ConfigError("BF: beta must be >= 1");
  const std::size_t l = shape.n_origins * shape.n_dests * shape.buckets;
  const std::size_t rdim = shape.n_origins * config.beta * shape.buckets;
  const std::size_t cdim = shape.n_dests * config.beta * shape.buckets;
  fr_ = params_.add("fact.F_r", Dims{rdim, l});
  br_ = params_.add("fact.b_r", Dims{rdim});
  fc_ = params_.add("fact.F_c", Dims{cdim, l});
  bc_ = params_.add("fact.b_c", Dims{cdim});
  r_stream_ = add_seq2seq_parameters(params_, "r", rdim, config.hidden, config.layers);
  c_stream_ = add_seq2seq_parameters(params_, "c", cdim, config.hidden, config.layers);

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    std::size_t fan_in = p.value.dims().size() == 2 ? p.value.dim(1) : 0;
    if (fan_in == 0) fan_in = params_[i - 1].value.dim(1);  // bias follows its weight
    params_.init_uniform(i, fan_in, rng);
  }
}

json BFModel::manifest() const {
  return {{"beta", config_.beta}, {"hidden", config_.hidden}, {"layers", config_.layers}};
}

FactorPair BFModel::factorize(Tape& tape, const DenseTensor& hist) {
  const std::size_t N = shape_.n_origins, Np = shape_.n_dests, K = shape_.buckets, B = config_.beta;
  if (hist.dims() != Dims{N, Np, K}) throw ShapeError("factorize_fc: tensor " + dims_to_string(hist.dims()));
  Var m = tape.constant_ref(hist);
  Var flat = ad::reshape(m, {N * Np * K});
  Var r = ad::relu(ad::linear(tape.parameter(params_, fr_), flat, tape.parameter(params_, br_)));
  Var c = ad::relu(ad::linear(tape.parameter(params_, fc_), flat, tape.parameter(params_, bc_)));
  return {ad::reshape(r, {N, B, K}), ad::reshape(c, {B, Np, K})};
}

ForwardResult BFModel::forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                               std::span<const SparseODTensor* const> targets, const ForwardOptions& opt) {
  check_window(shape_, inputs, targets, opt.horizon);
  const std::size_t N = shape_.n_origins, Np = shape_.n_dests, K = shape_.buckets, B = config_.beta;
  const bool stochastic = opt.training && (opt.dropout > 0.0 || opt.teacher_forcing > 0.0);
  if (stochastic && opt.rng == nullptr) throw ConfigError("training forward needs an RNG");
  const double rate = opt.training ? opt.dropout : 0.0;

  std::vector<Var> rs, cs;
  for (auto* m : inputs) {
    FactorPair f = factorize(tape, m->hist);
    Var r = ad::reshape(f.r, {N * B * K});
    Var c = ad::reshape(f.c, {B * Np * K});
    if (rate > 0.0) {
      r = ad::dropout(r, rate, *opt.rng);
      c = ad::dropout(c, rate, *opt.rng);
    }
    rs.push_back(r);
    cs.push_back(c);
  }

  std::vector<bool> force(opt.horizon, false);
  if (opt.training && opt.teacher_forcing > 0.0 && !targets.empty()) {
    std::bernoulli_distribution coin(opt.teacher_forcing);
    for (std::size_t j = 0; j + 1 < opt.horizon; ++j) force[j] = coin(*opt.rng);
  }
  std::vector<std::optional<FactorPair>> forced(opt.horizon);
  auto forced_pair = [&](std::size_t j) -> FactorPair& {
    if (!forced[j]) forced[j] = factorize(tape, targets[j]->hist);
    return *forced[j];
  };
  auto drop = [&](Var v) { return rate > 0.0 ? ad::dropout(v, rate, *opt.rng) : v; };

  Seq2SeqHooks rh, ch;
  rh.decoder_input = drop;
  ch.decoder_input = drop;
  rh.teacher = [&](std::size_t j) -> std::optional<Var> {
    if (!force[j]) return std::nullopt;
    return ad::reshape(forced_pair(j).r, {N * B * K});
  };
  ch.teacher = [&](std::size_t j) -> std::optional<Var> {
    if (!force[j]) return std::nullopt;
    return ad::reshape(forced_pair(j).c, {B * Np * K});
  };
  auto r_out = seq2seq_forecast(tape, rs, seq2seq_vars(tape, params_, r_stream_, config_.layers), opt.horizon, rh);
  auto c_out = seq2seq_forecast(tape, cs, seq2seq_vars(tape, params_, c_stream_, config_.layers), opt.horizon, ch);

  ForwardResult res;
  std::vector<FactorPair> factors;
  for (std::size_t j = 0; j < opt.horizon; ++j) {
    FactorPair f{ad::reshape(r_out[j], {N, B, K}), ad::reshape(c_out[j], {B, Np, K})};
    res.predictions.push_back(recover(f.r, f.c));
    factors.push_back(f);
  }
  if (!targets.empty()) {
    res.loss = bf_loss(res.predictions, targets, factors, opt.lambda);
    res.has_loss = true;
  }
  return res;
}

}  // namespace odx
