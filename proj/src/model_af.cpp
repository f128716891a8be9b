#include "odx/model_af.hpp"

#include <random>

#include "odx/error.hpp"

namespace odx {

using nlohmann::json;

Var gcnn_filter(Var slice, const DenseTensor& lhat, Var filters, Var bias) {
  if (slice.value().rank() != 2) throw ShapeError("gcnn_filter expects a channels × nodes slice");
  Var nodes = ad::permute(slice, {1, 0});
  return ad::permute(ad::chebyshev_filter_sum(nodes, lhat, filters, bias), {1, 0});
}

Var gcnn_pool(Var x, std::size_t pool, const std::vector<bool>& dummy, PoolMode mode) {
  if (x.value().rank() != 2) throw ShapeError("gcnn_pool expects a features × nodes matrix");
  return ad::permute(ad::graph_pool(ad::permute(x, {1, 0}), pool, dummy, mode), {1, 0});
}

Var cnrnn_cell(Var x, Var h_prev, const CnrnnVars& w, const DenseTensor& lhat) {
  if (x.dims() != h_prev.dims() || x.value().rank() != 2) {
    throw ShapeError("cnrnn_cell: input " + dims_to_string(x.dims()) + " vs state " + dims_to_string(h_prev.dims()));
  }
  Var hx = ad::concat_last(h_prev, x);
  Var s = ad::sigmoid(ad::chebyshev_conv(hx, lhat, w.gs, w.bs));
  Var u = ad::sigmoid(ad::chebyshev_conv(hx, lhat, w.gu, w.bu));
  Var cand = ad::tanh(ad::chebyshev_conv(ad::concat_last(x, ad::hadamard(s, h_prev)), lhat, w.gh, w.bh));
  return ad::add(ad::hadamard(u, x), ad::hadamard(ad::one_minus(u), cand));
}

json af_config_to_json(const AFConfig& c) {
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back({{"filters", s.filters}, {"order", s.order}, {"pool", s.pool}});
  return {{"stages", stages},
          {"rnn_order", c.rnn_order},
          {"layers", c.layers},
          {"pool_mode", c.pool_mode == PoolMode::max ? "max" : "average"},
          {"shared_filters", c.shared_filters}};
}

AFConfig af_config_from_json(const json& j) {
  AFConfig c;
  c.stages.clear();
  for (const auto& s : j.at("stages"))
    c.stages.push_back({s.at("filters").get<std::size_t>(), s.at("order").get<std::size_t>(),
                        s.at("pool").get<std::size_t>()});
  c.rnn_order = j.at("rnn_order").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  const auto mode = j.at("pool_mode").get<std::string>();
  if (mode != "max" && mode != "average") throw ConfigError("pool_mode must be max or average");
  c.pool_mode = mode == "max" ? PoolMode::max : PoolMode::average;
  c.shared_filters = j.value("shared_filters", false);
  return c;
}

Var af_loss(std::span<const Var> predictions, std::span<const SparseODTensor* const> truth,
            std::span<const FactorPair> factors, double lambda, const DenseTensor& source_laplacian,
            const DenseTensor& dest_laplacian) {
  if (predictions.size() != truth.size() || predictions.size() != factors.size() || predictions.empty()) {
    throw SizingError("af_loss: horizons misaligned (" + std::to_string(predictions.size()) + " predictions, " +
                      std::to_string(truth.size()) + " targets, " + std::to_string(factors.size()) + " factor pairs)");
  }
  std::vector<Var> terms;
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    const auto& rd = factors[j].r.dims();
    const auto& cd = factors[j].c.dims();
    if (rd.size() != 3 || cd.size() != 3) throw ShapeError("af_loss: factors must be rank 3");
    Var r = ad::reshape(factors[j].r, {rd[0], rd[1] * rd[2]});
    Var c = ad::reshape(ad::permute(factors[j].c, {1, 0, 2}), {cd[1], cd[0] * cd[2]});
    terms.push_back(ad::scale(ad::dirichlet(r, source_laplacian), lambda));
    terms.push_back(ad::scale(ad::dirichlet(c, dest_laplacian), lambda));
    terms.push_back(ad::masked_squared_error(predictions[j], truth[j]->hist, truth[j]->omega));
  }
  return ad::add_scalars(terms);
}

std::size_t add_cnrnn_parameters(ParameterSet& set, const std::string& prefix, std::size_t nodes,
                                 std::size_t features, std::size_t order, std::size_t layers, std::mt19937_64& rng) {
  if (layers == 0 || order == 0 || features == 0) throw ConfigError("CNRNN stack needs layers, order and features >= 1");
  const std::size_t first = set.size(), F = features;
  for (std::size_t l = 0; l < layers; ++l)
    for (const char* part : {"enc", "dec"})
      for (const char* gate : {"S", "U", "H"}) {
        const std::string p = prefix + "." + part + std::to_string(l) + "." + gate;
        const auto gi = set.add(p + ".G", Dims{F, 2 * F, order});
        const auto bi = set.add(p + ".b", Dims{nodes, F});
        set.init_uniform(gi, 2 * F * order, rng);
        set.init_uniform(bi, 2 * F * order, rng);
      }
  return first;
}

CnrnnStack cnrnn_vars(Tape& tape, ParameterSet& set, std::size_t first, std::size_t layers) {
  CnrnnStack st;
  for (std::size_t l = 0; l < layers; ++l)
    for (bool decoder : {false, true}) {
      const std::size_t i = first + (l * 2 + (decoder ? 1 : 0)) * 6;
      CnrnnVars v{tape.parameter(set, i),     tape.parameter(set, i + 1), tape.parameter(set, i + 2),
                  tape.parameter(set, i + 3), tape.parameter(set, i + 4), tape.parameter(set, i + 5)};
      (decoder ? st.decoder : st.encoder).push_back(v);
    }
  return st;
}

std::vector<Var> af_seq2seq(const std::vector<Var>& inputs, const CnrnnStack& w, const DenseTensor& lhat,
                            std::size_t h, const Seq2SeqHooks& hooks) {
  if (inputs.empty()) throw SizingError("af_seq2seq needs at least one input step");
  Tape& tape = *inputs.front().tape;
  const std::size_t L = w.encoder.size();
  std::vector<Var> state(L, tape.constant(DenseTensor(inputs.front().dims())));
  for (const Var& x : inputs) {
    Var in = x;
    for (std::size_t l = 0; l < L; ++l) in = state[l] = cnrnn_cell(in, state[l], w.encoder[l], lhat);
  }
  std::vector<Var> out;
  Var next = inputs.back();
  for (std::size_t j = 0; j < h; ++j) {
    Var in = hooks.decoder_input ? hooks.decoder_input(next) : next;
    for (std::size_t l = 0; l < L; ++l) in = state[l] = cnrnn_cell(in, state[l], w.decoder[l], lhat);
    out.push_back(in);
    next = in;
    if (hooks.teacher && j + 1 < h)
      if (auto forced = hooks.teacher(j)) next = *forced;
  }
  return out;
}

namespace {

AFStreamGraph make_stream_graph(const RegionGraph& filter_graph, const RegionGraph& own_graph,
                                const std::vector<std::size_t>& pools) {
  AFStreamGraph g;
  g.plan = coarsen_reorder(filter_graph, pools);
  for (const auto& level : g.plan.levels) g.stage_lhat.push_back(scaled_laplacian(level.weights));
  g.rnn_lhat = scaled_laplacian(own_graph.proximity);
  g.laplacian = laplacian(own_graph.proximity);
  return g;
}

json plan_to_json(const CoarseningPlan& p) {
  std::vector<std::size_t> pools;
  for (const auto& l : p.levels) pools.push_back(l.pool_size);
  return {{"permutation", p.permutation}, {"pools", pools}, {"padded_n", p.padded_n}};
}

}  // namespace

AFModel::AFModel(ODShape shape, AFConfig config, std::uint64_t seed, const RegionGraph& source,
                 const RegionGraph& dest)
    : shape_(shape), config_(std::move(config)) {
  if (shape.n_origins == 0 || shape.n_dests == 0 || shape.buckets < 2) throw ConfigError("AF: invalid tensor shape");
  if (source.n != shape.n_origins || dest.n != shape.n_dests) {
    throw CompatibilityError("AF: graphs have " + std::to_string(source.n) + "/" + std::to_string(dest.n) +
                             " nodes, tensors " + std::to_string(shape.n_origins) + "/" +
                             std::to_string(shape.n_dests));
  }
  if (config_.stages.empty()) throw ConfigError("AF: need at least one filtering stage");
  if (config_.layers == 0 || config_.rnn_order == 0) throw ConfigError("AF: recurrent layers and order must be >= 1");
  std::vector<std::size_t> pools;
  for (auto& s : config_.stages) {
    if (s.order == 0) throw ConfigError("AF: Chebyshev order must be >= 1");
    if (s.pool < 2) throw ConfigError("AF: pool sizes must be >= 2");
    pools.push_back(s.pool);
  }
  auto& last = config_.stages.back();
  if (last.filters == 0) last.filters = shape.buckets;
  if (last.filters != shape.buckets) throw ConfigError("AF: final stage must have Q = K filters");
  for (const auto& s : config_.stages)
    if (s.filters == 0) throw ConfigError("AF: only the final stage may leave Q unset");

  alpha_ = source.alpha;
  sigma_ = source.sigma;
  r_ = make_stream_graph(dest, source, pools);
  c_ = make_stream_graph(source, dest, pools);
  beta_ = r_.plan.coarse_n();
  if (c_.plan.coarse_n() != beta_) {
    throw ConfigError("AF: origin and destination graphs pool to different ranks (" + std::to_string(beta_) + " vs " +
                      std::to_string(c_.plan.coarse_n()) + ")");
  }

  std::mt19937_64 rng(seed);
  auto add_stages = [&](const std::string& prefix, const AFStreamGraph& g, std::vector<StageParams>& out) {
    std::size_t channels = shape.buckets;
    for (std::size_t l = 0; l < config_.stages.size(); ++l) {
      const auto& s = config_.stages[l];
      const std::size_t cg = config_.shared_filters ? 1 : channels;
      const std::string p = prefix + ".stage" + std::to_string(l);
      StageParams sp;
      sp.filters = params_.add(p + ".G", Dims{s.filters, cg, s.order});
      sp.bias = params_.add(p + ".b", Dims{g.plan.slots_at(l), s.filters});
      params_.init_uniform(sp.filters, cg * s.order, rng);
      params_.init_uniform(sp.bias, cg * s.order, rng);
      out.push_back(sp);
      channels = s.filters;
    }
  };
  add_stages("r", r_, r_stages_);
  add_stages("c", c_, c_stages_);

  const std::size_t F = beta_ * shape.buckets;
  r_rnn_ = add_cnrnn_parameters(params_, "r", shape.n_origins, F, config_.rnn_order, config_.layers, rng);
  c_rnn_ = add_cnrnn_parameters(params_, "c", shape.n_dests, F, config_.rnn_order, config_.layers, rng);
}

json AFModel::manifest() const {
  return {{"config", af_config_to_json(config_)},
          {"beta", beta_},
          {"alpha", alpha_},
          {"sigma", sigma_},
          {"r_plan", plan_to_json(r_.plan)},
          {"c_plan", plan_to_json(c_.plan)}};
}

Var AFModel::factor_stream(Tape& tape, Var x, const AFStreamGraph& g, const std::vector<StageParams>& stages) {
  Var v = ad::gather_slots(x, g.plan.permutation);
  for (std::size_t l = 0; l < stages.size(); ++l) {
    v = ad::chebyshev_filter_sum(v, g.stage_lhat[l], tape.parameter(params_, stages[l].filters),
                                 tape.parameter(params_, stages[l].bias));
    v = ad::graph_pool(v, g.plan.levels[l].pool_size, g.plan.levels[l].dummy, config_.pool_mode);
  }
  return v;
}

std::pair<Var, Var> AFModel::factorize_node_major(Tape& tape, const DenseTensor& hist) {
  if (hist.dims() != Dims{shape_.n_origins, shape_.n_dests, shape_.buckets}) {
    throw ShapeError("spatial_factorize: tensor " + dims_to_string(hist.dims()));
  }
  Var m = tape.constant_ref(hist);
  Var r = factor_stream(tape, m, r_, r_stages_);
  Var c = factor_stream(tape, ad::permute(m, {1, 0, 2}), c_, c_stages_);
  return {r, c};
}

FactorPair AFModel::spatial_factorize(Tape& tape, const DenseTensor& hist) {
  auto [r, c] = factorize_node_major(tape, hist);
  return {r, ad::permute(c, {1, 0, 2})};
}

ForwardResult AFModel::forward(Tape& tape, std::span<const SparseODTensor* const> inputs,
                               std::span<const SparseODTensor* const> targets, const ForwardOptions& opt) {
  check_window(shape_, inputs, targets, opt.horizon);
  const std::size_t N = shape_.n_origins, Np = shape_.n_dests, K = shape_.buckets, B = beta_;
  const bool stochastic = opt.training && (opt.dropout > 0.0 || opt.teacher_forcing > 0.0);
  if (stochastic && opt.rng == nullptr) throw ConfigError("training forward needs an RNG");
  const double rate = opt.training ? opt.dropout : 0.0;
  auto drop = [&](Var v) { return rate > 0.0 ? ad::dropout(v, rate, *opt.rng) : v; };

  std::vector<Var> rs, cs;
  for (auto* m : inputs) {
    auto [r, c] = factorize_node_major(tape, m->hist);
    rs.push_back(drop(ad::reshape(r, {N, B * K})));
    cs.push_back(drop(ad::reshape(c, {Np, B * K})));
  }

  std::vector<bool> force(opt.horizon, false);
  if (opt.training && opt.teacher_forcing > 0.0 && !targets.empty()) {
    std::bernoulli_distribution coin(opt.teacher_forcing);
    for (std::size_t j = 0; j + 1 < opt.horizon; ++j) force[j] = coin(*opt.rng);
  }
  std::vector<std::optional<std::pair<Var, Var>>> forced(opt.horizon);
  auto forced_pair = [&](std::size_t j) -> std::pair<Var, Var>& {
    if (!forced[j]) forced[j] = factorize_node_major(tape, targets[j]->hist);
    return *forced[j];
  };
  auto r_teacher = [&](std::size_t j) -> std::optional<Var> {
    if (!force[j]) return std::nullopt;
    return ad::reshape(forced_pair(j).first, {N, B * K});
  };
  auto c_teacher = [&](std::size_t j) -> std::optional<Var> {
    if (!force[j]) return std::nullopt;
    return ad::reshape(forced_pair(j).second, {Np, B * K});
  };
  Seq2SeqHooks rh{r_teacher, drop}, ch{c_teacher, drop};
  auto r_out = af_seq2seq(rs, cnrnn_vars(tape, params_, r_rnn_, config_.layers), r_.rnn_lhat, opt.horizon, rh);
  auto c_out = af_seq2seq(cs, cnrnn_vars(tape, params_, c_rnn_, config_.layers), c_.rnn_lhat, opt.horizon, ch);

  ForwardResult res;
  std::vector<FactorPair> factors;
  for (std::size_t j = 0; j < opt.horizon; ++j) {
    FactorPair f{ad::reshape(r_out[j], {N, B, K}), ad::permute(ad::reshape(c_out[j], {Np, B, K}), {1, 0, 2})};
    res.predictions.push_back(recover(f.r, f.c));
    factors.push_back(f);
  }
  if (!targets.empty()) {
    res.loss = af_loss(res.predictions, targets, factors, opt.lambda, r_.laplacian, c_.laplacian);
    res.has_loss = true;
  }
  return res;
}

}  // namespace odx
