#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odx/dataset.hpp"
#include "odx/model.hpp"

namespace odx {

struct TrainConfig {
  double lr0 = 0.001;
  double decay = 0.8;
  std::size_t decay_every = 5;
  double dropout = 0.2;
  double lambda = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double teacher_forcing = 0.5;
  std::size_t patience = 10;
  std::size_t s = 6;
  std::size_t h = 1;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);

// lr0 · decay^floor(epoch / decay_every), by repeated multiplication.
double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<DenseTensor> m;
  std::vector<DenseTensor> v;
  std::size_t step = 0;

  explicit AdamState(const ParameterSet& params);
};

// Bias-corrected Adam update followed by zeroing the gradients. Non-finite
// gradients raise DivergenceError before anything is modified.
void adam_step(ParameterSet& params, AdamState& state, double lr, const AdamOptions& options = {});

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  bool diverged = false;
  std::string divergence_message;
};

// Mean window loss with dropout and teacher forcing off.
double evaluate_loss(ForecastModel& model, const Dataset& ds, const std::vector<Window>& windows, double lambda);

std::vector<Window> split_windows(const Dataset& ds, const std::vector<std::size_t>& block, std::size_t s,
                                  std::size_t h);

// Trains on the dataset's train split and leaves the best-validation parameters
// in `model`. Divergence stops training, restores the best parameters and is
// reported in the result.
TrainResult train_loop(ForecastModel& model, const Dataset& ds, const TrainConfig& config,
                       const std::function<void(const EpochLog&)>& on_epoch = {});

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

std::size_t param_count(const ForecastModel& model);

}  // namespace odx
