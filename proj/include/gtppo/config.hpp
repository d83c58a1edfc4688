#pragma once

// Run configuration: a JSON document with a strict schema. Every key is
// optional and falls back to the published training constants; unknown keys
// are rejected by name.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtppo/train_eval.hpp"

namespace gtppo {

struct SyntheticDataset {
  std::vector<SyntheticKind> train_kinds{SyntheticKind::turn};
  std::vector<SyntheticKind> test_kinds{SyntheticKind::turn};
  int n_ped = 3;
  int train_windows = 32;  // per kind
  int test_windows = 16;   // per kind
};

enum class DatasetKind { ethucy, sdd, synthetic };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::ethucy: return "ethucy";
    case DatasetKind::sdd: return "sdd";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "?";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "ethucy") return DatasetKind::ethucy;
  if (s == "sdd") return DatasetKind::sdd;
  if (s == "synthetic") return DatasetKind::synthetic;
  throw ConfigError("unknown dataset format '" + s + "'");
}

struct DatasetSpec {
  DatasetKind format = DatasetKind::ethucy;
  double dt = 0.4;        // seconds per step after down-sampling
  int downsample = 1;     // keep every k-th frame
  int stride = 1;
  int t_obs = 8;
  int t_pred = 12;
  std::map<std::string, std::vector<std::string>> scenes;  // scene name -> files
  std::string held_out = "ETH";
  SyntheticDataset synthetic;
};

struct EvalSettings {
  int k = 20;
  std::vector<int> sweep{1, 5, 10, 20};
  int density_samples = 300;
  int density_windows = 1;
  double grid_cell = 0.25;
  double grid_margin = 2.0;
  int threads = 0;  // 0: hardware concurrency
  bool per_step_cosine = false;
};

struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  ModelDims model;
  AblationConfig ablation;
  EvalSettings eval;
  std::string output_dir = "gtppo_out";
  std::uint64_t seed = 0;
};

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: key '" + qualified(key) + "' has the wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + qualified(it.key()) + "'");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<SyntheticKind> kinds_from(const std::vector<std::string>& names) {
  std::vector<SyntheticKind> out;
  for (const auto& n : names) out.push_back(synthetic_kind_from_string(n));
  return out;
}

}  // namespace detail

/// Builds a RunConfig from parsed JSON. Relative dataset paths resolve
/// against `base_dir`; every referenced file must exist.
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig cfg;
  detail::ObjectReader root(j, "");
  root.read("seed", cfg.seed);
  root.read("output_dir", cfg.output_dir);

  if (const auto* d = root.child("dataset")) {
    detail::ObjectReader r(*d, "dataset");
    std::string format = to_string(cfg.dataset.format);
    r.read("format", format);
    cfg.dataset.format = dataset_kind_from_string(format);
    r.read("dt", cfg.dataset.dt);
    r.read("downsample", cfg.dataset.downsample);
    r.read("stride", cfg.dataset.stride);
    r.read("t_obs", cfg.dataset.t_obs);
    r.read("t_pred", cfg.dataset.t_pred);
    r.read("held_out", cfg.dataset.held_out);
    r.read("scenes", cfg.dataset.scenes);
    if (const auto* s = r.child("synthetic")) {
      detail::ObjectReader sr(*s, "dataset.synthetic");
      std::vector<std::string> train_kinds, test_kinds;
      for (auto k : cfg.dataset.synthetic.train_kinds) train_kinds.push_back(to_string(k));
      for (auto k : cfg.dataset.synthetic.test_kinds) test_kinds.push_back(to_string(k));
      sr.read("train_kinds", train_kinds);
      sr.read("test_kinds", test_kinds);
      cfg.dataset.synthetic.train_kinds = detail::kinds_from(train_kinds);
      cfg.dataset.synthetic.test_kinds = detail::kinds_from(test_kinds);
      sr.read("n_ped", cfg.dataset.synthetic.n_ped);
      sr.read("train_windows", cfg.dataset.synthetic.train_windows);
      sr.read("test_windows", cfg.dataset.synthetic.test_windows);
      sr.reject_unknown();
    }
    r.reject_unknown();
  }

  if (const auto* t = root.child("train")) {
    detail::ObjectReader r(*t, "train");
    r.read("batch_size", cfg.train.batch_size);
    r.read("epochs", cfg.train.epochs);
    r.read("lr_main", cfg.train.lr_main);
    r.read("lr_pop", cfg.train.lr_pop);
    r.read("v", cfg.train.v);
    r.read("alpha", cfg.train.alpha);
    r.read("grad_clip", cfg.train.grad_clip);
    r.reject_unknown();
  }

  if (const auto* m = root.child("model")) {
    detail::ObjectReader r(*m, "model");
    r.read("hidden", cfg.model.hidden);
    r.read("embed", cfg.model.embed);
    r.read("pop_embed", cfg.model.pop_embed);
    r.read("pop_hidden", cfg.model.pop_hidden);
    r.read("channel_latent", cfg.model.channel_latent);
    r.read("noise", cfg.model.noise);
    Index latent = cfg.model.latent();
    r.read("latent", latent);
    if (latent != cfg.model.latent()) {
      throw ConfigError("config: model.latent must equal 3 * model.channel_latent + model.noise");
    }
    r.reject_unknown();
  }

  if (const auto* a = root.child("ablation")) {
    detail::ObjectReader r(*a, "ablation");
    r.read("use_ta", cfg.ablation.use_ta);
    r.read("use_ga", cfg.ablation.use_ga);
    std::string social = to_string(cfg.ablation.social);
    r.read("social", social);
    cfg.ablation.social = social_mode_from_string(social);
    r.read("use_pop", cfg.ablation.use_pop);
    r.reject_unknown();
  }

  if (const auto* e = root.child("eval")) {
    detail::ObjectReader r(*e, "eval");
    r.read("k", cfg.eval.k);
    r.read("sweep", cfg.eval.sweep);
    r.read("density_samples", cfg.eval.density_samples);
    r.read("density_windows", cfg.eval.density_windows);
    r.read("grid_cell", cfg.eval.grid_cell);
    r.read("grid_margin", cfg.eval.grid_margin);
    r.read("threads", cfg.eval.threads);
    r.read("per_step_cosine", cfg.eval.per_step_cosine);
    r.reject_unknown();
  }
  root.reject_unknown();

  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  cfg.ablation.validate();
  if (cfg.model.hidden < 1 || cfg.model.embed < 1 || cfg.model.pop_embed < 1 || cfg.model.pop_hidden < 1 ||
      cfg.model.channel_latent < 1 || cfg.model.noise < 0) {
    throw ConfigError("config: model dimensions must be positive");
  }
  if (cfg.dataset.t_obs < 2 || cfg.dataset.t_pred < 1) throw ConfigError("config: need t_obs >= 2 and t_pred >= 1");
  if (!(cfg.dataset.dt > 0.0)) throw ConfigError("config: dataset.dt must be positive");
  if (cfg.dataset.downsample < 1 || cfg.dataset.stride < 1) throw ConfigError("config: downsample and stride must be >= 1");
  if (cfg.eval.k < 1 || cfg.eval.density_samples < 1 || !(cfg.eval.grid_cell > 0.0)) {
    throw ConfigError("config: eval settings out of range");
  }
  if (cfg.dataset.synthetic.n_ped < 1) throw ConfigError("config: dataset.synthetic.n_ped must be >= 1");

  for (auto& [scene, files] : cfg.dataset.scenes) {
    for (auto& f : files) {
      std::filesystem::path p(f);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      if (!std::filesystem::exists(p)) {
        throw ConfigError("config: dataset file '" + p.string() + "' for scene '" + scene + "' does not exist");
      }
      f = p.string();
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path + "' not found");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace gtppo
