#include "odx/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "odx/error.hpp"

namespace odx {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must lie in (0,1]");
  if (decay_every == 0) throw ConfigError("decay_every must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) throw ConfigError("teacher_forcing must lie in [0,1]");
  if (s == 0 || h == 0) throw ConfigError("s and h must be >= 1");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},         {"decay", c.decay},
          {"decay_every", c.decay_every}, {"dropout", c.dropout},
          {"lambda", c.lambda},   {"epochs", c.epochs},
          {"batch_size", c.batch_size},   {"seed", c.seed},
          {"teacher_forcing", c.teacher_forcing}, {"patience", c.patience},
          {"s", c.s},             {"h", c.h}};
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  double lr = config.lr0;
  for (std::size_t i = 0; i < epoch / config.decay_every; ++i) lr *= config.decay;
  return lr;
}

AdamState::AdamState(const ParameterSet& params) {
  for (const auto& p : params) {
    m.emplace_back(p.value.dims());
    v.emplace_back(p.value.dims());
  }
}

void adam_step(ParameterSet& params, AdamState& state, double lr, const AdamOptions& o) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].dims() != params[i].value.dims()) {
      throw ShapeError("adam_step: state dims differ for '" + params[i].name + "'");
    }
    if (!params[i].grad.all_finite()) {
      throw DivergenceError("non-finite gradient in parameter '" + params[i].name + "'");
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.values();
    auto g = params[i].grad.values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + o.eps);
    }
  }
  params.zero_grad();
}

std::vector<Window> split_windows(const Dataset& ds, const std::vector<std::size_t>& block, std::size_t s,
                                  std::size_t h) {
  (void)ds;
  if (block.size() < s + h) return {};
  return windows_in_block(block, s, h);
}

namespace {

struct WindowView {
  std::vector<const SparseODTensor*> inputs;
  std::vector<const SparseODTensor*> targets;
};

WindowView view_of(const Dataset& ds, const Window& w) {
  WindowView v;
  for (std::size_t i = 0; i < w.s; ++i) v.inputs.push_back(&ds.tensors.at(w.start + i));
  for (std::size_t j = 0; j < w.h; ++j) v.targets.push_back(&ds.tensors.at(w.target_start() + j));
  return v;
}

}  // namespace

double evaluate_loss(ForecastModel& model, const Dataset& ds, const std::vector<Window>& windows, double lambda) {
  if (windows.empty()) throw SizingError("no windows to evaluate");
  double total = 0.0;
  for (const auto& w : windows) {
    auto v = view_of(ds, w);
    Tape tape;
    ForwardOptions opt;
    opt.horizon = w.h;
    opt.lambda = lambda;
    auto res = model.forward(tape, v.inputs, v.targets, opt);
    total += res.loss.value()[0];
  }
  return total / static_cast<double>(windows.size());
}

TrainResult train_loop(ForecastModel& model, const Dataset& ds, const TrainConfig& config,
                       const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  const auto train = split_windows(ds, ds.split.train, config.s, config.h);
  const auto val = split_windows(ds, ds.split.validation, config.s, config.h);
  if (train.empty() || val.empty()) {
    throw SizingError("training needs windows in both train and validation splits (s=" + std::to_string(config.s) +
                      ", h=" + std::to_string(config.h) + ")");
  }
  ParameterSet& params = model.parameters();
  params.zero_grad();
  AdamState adam(params);
  ParameterSet best = params;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const std::size_t allowed = std::max<std::size_t>(1, config.patience);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, config);
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    try {
      for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
        const std::size_t end = std::min(order.size(), b + config.batch_size);
        const double scale = 1.0 / static_cast<double>(end - b);
        for (std::size_t i = b; i < end; ++i) {
          auto v = view_of(ds, train[order[i]]);
          Tape tape;
          ForwardOptions opt;
          opt.horizon = config.h;
          opt.lambda = config.lambda;
          opt.training = true;
          opt.dropout = config.dropout;
          opt.teacher_forcing = config.teacher_forcing;
          opt.rng = &rng;
          auto res = model.forward(tape, v.inputs, v.targets, opt);
          const double loss = res.loss.value()[0];
          if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch));
          total += loss;
          tape.backward(res.loss);
          tape.accumulate_into(params, scale);
        }
        adam_step(params, adam, lr);
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_message = e.what();
      spdlog::error("{}", e.what());
      break;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = total / static_cast<double>(train.size());
    entry.val_loss = evaluate_loss(model, ds, val, config.lambda);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    spdlog::info("epoch {} lr {:.6g} train {:.6g} val {:.6g} ({:.1f}s)", epoch, lr, entry.train_loss, entry.val_loss,
                 entry.seconds);
    if (on_epoch) on_epoch(entry);
    if (!std::isfinite(entry.val_loss)) {
      result.diverged = true;
      result.divergence_message = "validation loss became non-finite in epoch " + std::to_string(epoch);
      break;
    }
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      best.copy_values_from(params);
      stale = 0;
    } else if (++stale >= allowed) {
      result.stopped_early = true;
      break;
    }
  }
  params.copy_values_from(best);
  params.zero_grad();
  return result;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write loss log '" + path.string() + "'");
  os << "epoch,lr,train_loss,val_loss,seconds\n" << std::setprecision(17);
  for (const auto& e : log)
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_loss << ',' << e.seconds << '\n';
}

std::size_t param_count(const ForecastModel& model) { return model.parameters().scalar_count(); }

}  // namespace odx
