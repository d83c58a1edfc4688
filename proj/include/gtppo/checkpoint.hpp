#pragma once

// Checkpoint files: a JSON document holding a format version, the ablation
// config the weights were trained with, the model dimensions, and a flat map
// from parameter name to a shape-tagged row-major array.

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "gtppo/generator.hpp"

namespace gtppo {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  AblationConfig ablation;
  ModelParams params;
};

inline nlohmann::json ablation_to_json(const AblationConfig& a) {
  return {{"use_ta", a.use_ta}, {"use_ga", a.use_ga}, {"social", to_string(a.social)}, {"use_pop", a.use_pop}};
}

inline nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"hidden", d.hidden},          {"embed", d.embed},         {"pop_embed", d.pop_embed},
          {"pop_hidden", d.pop_hidden}, {"channel_latent", d.channel_latent}, {"noise", d.noise}};
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json params = nlohmann::json::object();
  ModelParams p = ck.params;  // shares tensors; visit needs a mutable object
  p.visit([&](const std::string& name, Var& v, ParamGroup) {
    nlohmann::json data = nlohmann::json::array();
    for (Index r = 0; r < v.rows(); ++r)
      for (Index c = 0; c < v.cols(); ++c) data.push_back(v.value()(r, c));
    params[name] = {{"shape", {v.rows(), v.cols()}}, {"data", std::move(data)}};
  });
  return {{"format", "gtppo-checkpoint"},
          {"version", kCheckpointVersion},
          {"ablation", ablation_to_json(ck.ablation)},
          {"dims", dims_to_json(ck.params.dims)},
          {"params", std::move(params)}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gtppo-checkpoint") throw ConfigError("not a gtppo checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    const auto& a = j.at("ablation");
    ck.ablation.use_ta = a.at("use_ta").get<bool>();
    ck.ablation.use_ga = a.at("use_ga").get<bool>();
    ck.ablation.social = social_mode_from_string(a.at("social").get<std::string>());
    ck.ablation.use_pop = a.at("use_pop").get<bool>();
    ck.ablation.validate();

    const auto& d = j.at("dims");
    ModelDims dims;
    dims.hidden = d.at("hidden").get<Index>();
    dims.embed = d.at("embed").get<Index>();
    dims.pop_embed = d.at("pop_embed").get<Index>();
    dims.pop_hidden = d.at("pop_hidden").get<Index>();
    dims.channel_latent = d.at("channel_latent").get<Index>();
    dims.noise = d.at("noise").get<Index>();

    ck.params = ModelParams::create(dims, 0);
    const auto& params = j.at("params");
    std::size_t used = 0;
    ck.params.visit([&](const std::string& name, Var& v, ParamGroup) {
      if (!params.contains(name)) throw ConfigError("checkpoint is missing parameter '" + name + "'");
      const auto& entry = params.at(name);
      const auto shape = entry.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2 || shape[0] != v.rows() || shape[1] != v.cols()) {
        throw ConfigError("checkpoint parameter '" + name + "' has the wrong shape");
      }
      const auto data = entry.at("data").get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(v.rows() * v.cols())) {
        throw ConfigError("checkpoint parameter '" + name + "' has the wrong number of values");
      }
      std::size_t k = 0;
      for (Index r = 0; r < v.rows(); ++r)
        for (Index c = 0; c < v.cols(); ++c) v.mutable_value()(r, c) = data[k++];
      ++used;
    });
    if (used != params.size()) throw ConfigError("checkpoint contains unknown parameters");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(ck).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Rejects evaluating weights under an architecture they were not trained for.
inline void require_matching_ablation(const Checkpoint& ck, const AblationConfig& requested) {
  if (!(ck.ablation == requested)) {
    throw ConfigError("checkpoint was trained as " + ck.ablation.label() + " but " + requested.label() +
                      " was requested");
  }
}

}  // namespace gtppo
