#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "odx/dataset.hpp"
#include "odx/model.hpp"

namespace odx {

// Architecture choice for make_model; `hyper` holds the kind-specific settings
// in the same layout as ForecastModel::manifest().
struct ModelSpec {
  std::string kind = "AF";  // BF | AF | FC
  nlohmann::json hyper = nlohmann::json::object();
  std::uint64_t seed = 1;
};

// Missing hyperparameters fall back to the defaults of each config struct.
std::unique_ptr<ForecastModel> make_model(const ModelSpec& spec, const Dataset& ds);

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// "ODXC", u32 version, u64 manifest length, manifest JSON, then one ODXT block
// per parameter in manifest order.
void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<ForecastModel> model;
  nlohmann::json manifest;
};
// Rebuilds the architecture against `ds` and restores parameter values.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Dataset& ds);

}  // namespace odx
