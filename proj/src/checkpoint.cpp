#include "odx/checkpoint.hpp"

#include <fstream>

#include "odx/baselines.hpp"
#include "odx/error.hpp"
#include "odx/model_af.hpp"
#include "odx/model_bf.hpp"
#include "odx/tensor_io.hpp"

namespace odx {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMaxManifestBytes = 1ull << 28;

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

json shape_to_json(const ODShape& s) {
  return {{"n_origins", s.n_origins}, {"n_dests", s.n_dests}, {"buckets", s.buckets}};
}

}  // namespace

std::unique_ptr<ForecastModel> make_model(const ModelSpec& spec, const Dataset& ds) {
  const ODShape shape{ds.n_origins(), ds.n_dests(), ds.n_buckets()};
  const json& h = spec.hyper;
  try {
    if (spec.kind == "BF") {
      BFConfig c;
      c.beta = get_or(h, "beta", c.beta);
      c.hidden = get_or(h, "hidden", c.hidden);
      c.layers = get_or(h, "layers", c.layers);
      return std::make_unique<BFModel>(shape, c, spec.seed);
    }
    if (spec.kind == "FC") {
      FCConfig c;
      c.encoding = get_or(h, "encoding", c.encoding);
      c.hidden = get_or(h, "hidden", c.hidden);
      c.layers = get_or(h, "layers", c.layers);
      return std::make_unique<FCModel>(shape, c, spec.seed);
    }
    if (spec.kind == "AF") {
      AFConfig c = h.contains("config") ? af_config_from_json(h.at("config")) : AFConfig{};
      const int alpha = get_or(h, "alpha", ds.source_graph.alpha);
      const double sigma = get_or(h, "sigma", ds.source_graph.sigma);
      if (alpha == ds.source_graph.alpha && sigma == ds.source_graph.sigma) {
        return std::make_unique<AFModel>(shape, c, spec.seed, ds.source_graph, ds.dest_graph);
      }
      Dataset::Graphs g = ds.graphs_with_kernel(alpha, sigma);
      return std::make_unique<AFModel>(shape, c, spec.seed, g.source, g.dest);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad ") + spec.kind + " hyperparameters: " + e.what());
  }
  throw ConfigError("unknown model kind '" + spec.kind + "' (expected BF, AF or FC)");
}

void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model, std::uint64_t seed,
                     const json& extra) {
  json names = json::array();
  for (const auto& p : model.parameters()) names.push_back({{"name", p.name}, {"dims", p.value.dims()}});
  json manifest = {{"kind", model.kind()},
                   {"shape", shape_to_json(model.shape())},
                   {"hyperparameters", model.manifest()},
                   {"seed", seed},
                   {"parameters", names},
                   {"extra", extra}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path.string() + "'");
  binio::write_magic(os, "ODXC");
  binio::write_u32(os, kCheckpointFormatVersion);
  binio::write_string(os, manifest.dump());
  for (const auto& p : model.parameters()) write_tensor(os, p.value);
  if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Dataset& ds) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  binio::expect_magic(is, "ODXC", "checkpoint");
  const auto version = binio::read_u32(is);
  if (version != kCheckpointFormatVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  LoadedCheckpoint out;
  try {
    out.manifest = json::parse(binio::read_string(is, kMaxManifestBytes));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  const json& m = out.manifest;
  ODShape shape;
  ModelSpec spec;
  try {
    shape = {m.at("shape").at("n_origins").get<std::size_t>(), m.at("shape").at("n_dests").get<std::size_t>(),
             m.at("shape").at("buckets").get<std::size_t>()};
    spec.kind = m.at("kind").get<std::string>();
    spec.hyper = m.at("hyperparameters");
    spec.seed = m.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest incomplete: ") + e.what());
  }
  const ODShape data_shape{ds.n_origins(), ds.n_dests(), ds.n_buckets()};
  if (!(shape == data_shape)) {
    throw CompatibilityError("checkpoint expects " + dims_to_string({shape.n_origins, shape.n_dests, shape.buckets}) +
                             " tensors but dataset has " +
                             dims_to_string({data_shape.n_origins, data_shape.n_dests, data_shape.buckets}));
  }
  out.model = make_model(spec, ds);
  if (spec.kind == "AF") {
    const json rebuilt = out.model->manifest();
    if (rebuilt.at("r_plan") != spec.hyper.at("r_plan") || rebuilt.at("c_plan") != spec.hyper.at("c_plan")) {
      throw CompatibilityError("dataset region graphs produce a different coarsening plan than the checkpoint");
    }
  }
  auto& params = out.model->parameters();
  const auto& names = m.at("parameters");
  if (names.size() != params.size()) {
    throw CompatibilityError("checkpoint has " + std::to_string(names.size()) + " parameters, model expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    DenseTensor t = read_tensor(is);
    if (names[i].at("name").get<std::string>() != params[i].name || t.dims() != params[i].value.dims()) {
      throw CompatibilityError("checkpoint parameter '" + names[i].at("name").get<std::string>() + "' " +
                               dims_to_string(t.dims()) + " does not match model parameter '" + params[i].name +
                               "' " + dims_to_string(params[i].value.dims()));
    }
    params[i].value = std::move(t);
  }
  return out;
}

}  // namespace odx
