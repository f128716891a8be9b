#include "odx/baselines.hpp"

#include <random>

#include "odx/error.hpp"

namespace odx {

using nlohmann::json;

NHBaseline::NHBaseline(const Dataset& ds, std::span<const std::size_t> train_intervals) {
  std::vector<const SparseODTensor*> train;
  for (auto i : train_intervals) train.push_back(&ds.tensors.at(i));
  fit(train, ds.n_origins(), ds.n_dests(), ds.n_buckets());
}

NHBaseline::NHBaseline(std::span<const SparseODTensor> train, std::size_t n_origins, std::size_t n_dests,
                       std::size_t buckets) {
  std::vector<const SparseODTensor*> ptrs;
  for (const auto& m : train) ptrs.push_back(&m);
  fit(ptrs, n_origins, n_dests, buckets);
}

void NHBaseline::fit(std::span<const SparseODTensor* const> train, std::size_t n, std::size_t np, std::size_t k) {
  if (train.empty()) throw SizingError("NH baseline needs at least one training interval");
  const std::size_t cells = n * np;
  DenseTensor sum({n, np, k});
  std::vector<double> count(cells, 0.0);
  std::vector<double> global(k, 0.0);
  for (const auto* m : train) {
    if (m->hist.dims() != Dims{n, np, k}) throw ShapeError("NH baseline: tensor " + dims_to_string(m->hist.dims()));
    for (std::size_t c = 0; c < cells; ++c) {
      if (m->omega[c] == 0.0) continue;
      count[c] += 1.0;
      for (std::size_t b = 0; b < k; ++b) {
        sum[c * k + b] += m->hist[c * k + b];
        global[b] += m->hist[c * k + b];
      }
    }
  }
  double gtotal = 0.0;
  for (double g : global) gtotal += g;
  for (auto& g : global) g = gtotal > 0.0 ? g / gtotal : 1.0 / static_cast<double>(k);
  mean_ = DenseTensor({n, np, k});
  unobserved_ = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    double total = 0.0;
    for (std::size_t b = 0; b < k; ++b) total += sum[c * k + b];
    if (count[c] == 0.0 || total <= 0.0) {
      ++unobserved_;
      for (std::size_t b = 0; b < k; ++b) mean_[c * k + b] = global[b];
      continue;
    }
    for (std::size_t b = 0; b < k; ++b) mean_[c * k + b] = sum[c * k + b] / total;
  }
}

FCModel::FCModel(ODShape shape, FCConfig config, std::uint64_t seed) : shape_(shape), config_(config) {
  if (shape.n_origins == 0 || shape.n_dests == 0 || shape.buckets < 2) throw ConfigError("FC: invalid tensor shape");
  if (config.encoding == 0 || config.hidden == 0 || config.layers == 0) throw ConfigError("FC: sizes must be >= 1");
  const std::size_t l = shape.n_origins * shape.n_dests * shape.buckets;
  const std::size_t E = config.encoding, H = config.hidden;
  enc_w_ = params_.add("enc.W", Dims{E, l});
  enc_b_ = params_.add("enc.b", Dims{E});
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::size_t in = i == 0 ? E : H;
    enc_gru_.push_back(add_gru_parameters(params_, "gru.enc" + std::to_string(i), in, H));
    dec_gru_.push_back(add_gru_parameters(params_, "gru.dec" + std::to_string(i), in, H));
  }
  out_w_ = params_.add("out.W", Dims{l, H});
  out_b_ = params_.add("out.b", Dims{l});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    const std::size_t fan_in = p.value.rank() == 2 ? p.value.dim(1) : params_[i - 1].value.dim(1);
    params_.init_uniform(i, fan_in, rng);
  }
}

json FCModel::manifest() const {
  return {{"encoding", config_.encoding}, {"hidden", config_.hidden}, {"layers", config_.layers}};
}

Var FCModel::encode(Tape& tape, Var flat) {
  return ad::relu(ad::linear(tape.parameter(params_, enc_w_), flat, tape.parameter(params_, enc_b_)));
}

ForwardResult FCModel::forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                               std::span<const SparseODTensor* const> targets, const ForwardOptions& opt) {
  check_window(shape_, inputs, targets, opt.horizon);
  const std::size_t N = shape_.n_origins, Np = shape_.n_dests, K = shape_.buckets, l = N * Np * K;
  const bool stochastic = opt.training && (opt.dropout > 0.0 || opt.teacher_forcing > 0.0);
  if (stochastic && opt.rng == nullptr) throw ConfigError("training forward needs an RNG");
  const double rate = opt.training ? opt.dropout : 0.0;
  auto drop = [&](Var v) { return rate > 0.0 ? ad::dropout(v, rate, *opt.rng) : v; };
  auto flat_of = [&](const SparseODTensor* m) { return ad::reshape(tape.constant_ref(m->hist), {l}); };

  std::vector<GruVars> enc, dec;
  for (auto i : enc_gru_) enc.push_back(gru_vars(tape, params_, i));
  for (auto i : dec_gru_) dec.push_back(gru_vars(tape, params_, i));
  std::vector<Var> state(config_.layers, tape.constant(DenseTensor({config_.hidden})));
  Var last;
  for (auto* m : inputs) {
    Var in = last = drop(encode(tape, flat_of(m)));
    for (std::size_t i = 0; i < config_.layers; ++i) in = state[i] = gru_cell(in, state[i], enc[i]);
  }
  std::bernoulli_distribution coin(opt.teacher_forcing);
  ForwardResult res;
  Var next = last;
  for (std::size_t j = 0; j < opt.horizon; ++j) {
    Var in = drop(next);
    for (std::size_t i = 0; i < config_.layers; ++i) in = state[i] = gru_cell(in, state[i], dec[i]);
    Var logits = ad::linear(tape.parameter(params_, out_w_), in, tape.parameter(params_, out_b_));
    Var pred = ad::softmax_lastdim(ad::reshape(logits, {N, Np, K}));
    res.predictions.push_back(pred);
    if (j + 1 < opt.horizon) {
      const bool force = opt.training && !targets.empty() && opt.teacher_forcing > 0.0 && coin(*opt.rng);
      next = encode(tape, force ? flat_of(targets[j]) : ad::reshape(pred, {l}));
    }
  }
  if (!targets.empty()) {
    std::vector<Var> terms;
    for (std::size_t j = 0; j < opt.horizon; ++j)
      terms.push_back(ad::masked_squared_error(res.predictions[j], targets[j]->hist, targets[j]->omega));
    res.loss = ad::add_scalars(terms);
    res.has_loss = true;
  }
  return res;
}

}  // namespace odx
