#pragma once

// Command layer: turns a RunConfig and a verb into files under the output
// directory. Shared by the gtppo executable and the tests.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gtppo/checkpoint.hpp"
#include "gtppo/config.hpp"

namespace gtppo {

struct CommandOptions {
  std::string checkpoint;  // defaults to <output_dir>/checkpoint.json
  bool single_thread = false;
  bool quiet = false;
};

struct SceneWindows {
  std::string scene;
  std::vector<SceneWindow> windows;
};

struct Dataset {
  std::vector<SceneWindows> train;
  std::vector<SceneWindows> test;

  static std::vector<SceneWindow> flatten(const std::vector<SceneWindows>& parts) {
    std::vector<SceneWindow> out;
    for (const auto& p : parts) out.insert(out.end(), p.windows.begin(), p.windows.end());
    return out;
  }
  std::vector<SceneWindow> train_windows() const { return flatten(train); }
  std::vector<SceneWindow> test_windows() const { return flatten(test); }
};

namespace detail {

inline std::vector<SceneWindow> scene_windows_from_files(const std::string& scene, const std::vector<std::string>& files,
                                                         const DatasetSpec& ds, DatasetFormat format) {
  std::vector<SceneWindow> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw ConfigError("cannot open dataset file '" + f + "'");
    auto records = downsample(parse_records(in, format), ds.downsample);
    auto ws = build_windows(records, ds.t_obs, ds.t_pred, ds.stride, ds.dt, scene);
    out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return out;
}

inline std::vector<SceneWindows> synthetic_part(const RunConfig& cfg, const std::vector<SyntheticKind>& kinds,
                                                int windows, std::uint64_t tag) {
  std::vector<SceneWindows> out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const std::uint64_t s = derive_seed(cfg.seed, {0xda7a, tag, static_cast<std::uint64_t>(i)});
    auto ws = generate_synthetic(kinds[i], cfg.dataset.synthetic.n_ped, s, windows, cfg.dataset.dt, cfg.dataset.t_obs,
                                 cfg.dataset.t_pred);
    out.push_back({"synthetic_" + to_string(kinds[i]), std::move(ws)});
  }
  return out;
}

}  // namespace detail

/// Loads or generates the train/test windows the config describes.
inline Dataset load_dataset(const RunConfig& cfg) {
  const DatasetSpec& ds = cfg.dataset;
  Dataset data;
  if (ds.format == DatasetKind::synthetic) {
    data.train = detail::synthetic_part(cfg, ds.synthetic.train_kinds, ds.synthetic.train_windows, 0);
    data.test = detail::synthetic_part(cfg, ds.synthetic.test_kinds, ds.synthetic.test_windows, 1);
    return data;
  }
  if (ds.scenes.empty()) throw ConfigError("dataset missing: no scene files configured");

  std::vector<std::string> names;
  for (const auto& [name, files] : ds.scenes) names.push_back(name);
  SceneSplit split;
  DatasetFormat format = DatasetFormat::ethucy;
  if (ds.format == DatasetKind::ethucy) {
    split = leave_one_out_split(names, ds.held_out);
  } else {
    format = DatasetFormat::sdd;
    const SceneSplit& fixed = sdd_split();
    for (const auto& n : names) {
      if (std::find(fixed.train.begin(), fixed.train.end(), n) != fixed.train.end()) {
        split.train.push_back(n);
      } else if (std::find(fixed.test.begin(), fixed.test.end(), n) != fixed.test.end()) {
        split.test.push_back(n);
      } else {
        throw ConfigError("scene '" + n + "' is not part of the Stanford Drone video split");
      }
    }
  }
  for (const auto& n : split.train) data.train.push_back({n, detail::scene_windows_from_files(n, ds.scenes.at(n), ds, format)});
  for (const auto& n : split.test) data.test.push_back({n, detail::scene_windows_from_files(n, ds.scenes.at(n), ds, format)});
  return data;
}

namespace detail {

inline std::filesystem::path output_path(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.output_dir) / name;
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << contents;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

inline EvalOptions eval_options(const RunConfig& cfg, const CommandOptions& opts) {
  EvalOptions eo;
  eo.per_step_cosine = cfg.eval.per_step_cosine;
  if (opts.single_thread) {
    eo.threads = 1;
  } else if (cfg.eval.threads > 0) {
    eo.threads = cfg.eval.threads;
  } else {
    eo.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  return eo;
}

inline std::uint64_t eval_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {0xe7a1}); }

inline Checkpoint load_matching_checkpoint(const RunConfig& cfg, const CommandOptions& opts) {
  const std::string path =
      opts.checkpoint.empty() ? output_path(cfg, "checkpoint.json").string() : opts.checkpoint;
  Checkpoint ck = load_checkpoint(path);
  require_matching_ablation(ck, cfg.ablation);
  if (!(ck.params.dims == cfg.model)) throw ConfigError("checkpoint model dimensions differ from the config");
  return ck;
}

inline std::vector<SceneWindow> require_windows(std::vector<SceneWindow> ws, const char* what) {
  if (ws.empty()) throw ConfigError(std::string("dataset missing: no ") + what + " windows");
  return ws;
}

inline std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

inline std::string count_table(const std::vector<SceneWindows>& parts, const char* split) {
  std::string s;
  for (const auto& p : parts) {
    std::size_t peds = 0;
    for (const auto& w : p.windows) peds += w.size();
    s += std::string(split) + ',' + p.scene + ',' + std::to_string(p.windows.size()) + ',' + std::to_string(peds) + '\n';
  }
  return s;
}

}  // namespace detail

inline void command_ingest(const RunConfig& cfg, const CommandOptions&, std::ostream& out) {
  const Dataset data = load_dataset(cfg);
  const std::string table = "split,scene,windows,pedestrians\n" + detail::count_table(data.train, "train") +
                            detail::count_table(data.test, "test");
  detail::write_file(detail::output_path(cfg, "ingest.csv"), table);
  if (cfg.dataset.format == DatasetKind::synthetic) {
    for (const auto* part : {&data.train, &data.test}) {
      const char* split = part == &data.train ? "train" : "test";
      for (const auto& p : *part) {
        std::ostringstream o;
        write_records(o, windows_to_records(p.windows));
        detail::write_file(detail::output_path(cfg, std::string(split) + "_" + p.scene + ".txt"), o.str());
      }
    }
  }
  out << table;
}

inline void command_train(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  const auto train = detail::require_windows(load_dataset(cfg).train_windows(), "training");
  auto progress = [&](const LossRecord& r) {
    if (!opts.quiet && (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == cfg.train.epochs)) {
      out << "epoch " << r.epoch << " variety " << r.variety;
      if (r.kl) out << " kl " << *r.kl;
      out << " total " << r.total << '\n';
    }
  };
  TrainResult res = train_model(train, cfg.train, cfg.ablation, cfg.model, std::nullopt, progress);
  std::ostringstream curve;
  write_loss_csv(curve, res.curve);
  detail::write_file(detail::output_path(cfg, "loss.csv"), curve.str());
  save_checkpoint(detail::output_path(cfg, "checkpoint.json").string(), {cfg.ablation, res.params});
  out << "trained " << cfg.ablation.label() << " on " << train.size() << " windows\n";
}

inline void command_eval(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  const Checkpoint ck = detail::load_matching_checkpoint(cfg, opts);
  const auto test = detail::require_windows(load_dataset(cfg).test_windows(), "test");
  const EvalReport rep =
      evaluate_best_of_k(test, ck.params, cfg.ablation, cfg.eval.k, detail::eval_seed(cfg), detail::eval_options(cfg, opts));
  detail::write_file(detail::output_path(cfg, "report.txt"), rep.to_text());
  detail::write_file(detail::output_path(cfg, "report.csv"), rep.to_csv());
  out << rep.to_text();
}

inline void command_ablate(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  const Dataset data = load_dataset(cfg);
  const auto train = detail::require_windows(data.train_windows(), "training");
  const auto test = detail::require_windows(data.test_windows(), "test");
  std::string table = "config,ta,ga,social,pop,ade,fde\n";
  for (const auto& ab : ablation_table()) {
    const TrainResult res = train_model(train, cfg.train, ab, cfg.model);
    const EvalReport rep =
        evaluate_best_of_k(test, res.params, ab, cfg.eval.k, detail::eval_seed(cfg), detail::eval_options(cfg, opts));
    const std::string row = ab.label() + ',' + (ab.use_ta ? "1" : "0") + ',' + (ab.use_ga ? "1" : "0") + ',' +
                            to_string(ab.social) + ',' + (ab.use_pop ? "1" : "0") + ',' + detail::fmt(rep.ade) + ',' +
                            detail::fmt(rep.fde) + '\n';
    table += row;
    if (!opts.quiet) out << row << std::flush;
  }
  detail::write_file(detail::output_path(cfg, "ablation.csv"), table);
}

inline void command_sweep(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  const Checkpoint ck = detail::load_matching_checkpoint(cfg, opts);
  const auto test = detail::require_windows(load_dataset(cfg).test_windows(), "test");
  const auto rows = sweep_sampling_numbers(test, ck.params, cfg.ablation, cfg.eval.sweep, detail::eval_seed(cfg),
                                           detail::eval_options(cfg, opts));
  std::string table = "k,ade,fde\n";
  for (const auto& r : rows) table += std::to_string(r.k) + ',' + detail::fmt(r.ade) + ',' + detail::fmt(r.fde) + '\n';
  detail::write_file(detail::output_path(cfg, "sweep.csv"), table);
  out << table;
}

inline void command_density(const RunConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  const Checkpoint ck = detail::load_matching_checkpoint(cfg, opts);
  const auto test = detail::require_windows(load_dataset(cfg).test_windows(), "test");
  const std::size_t n = std::min(test.size(), static_cast<std::size_t>(std::max(0, cfg.eval.density_windows)));
  const EvalOptions eo = detail::eval_options(cfg, opts);
  for (std::size_t w = 0; w < n; ++w) {
    const GridSpec grid = GridSpec::covering(test[w], cfg.eval.grid_margin, cfg.eval.grid_cell);
    const auto grids =
        density_grid(test[w], ck.params, cfg.ablation, cfg.eval.density_samples, grid, window_seed(detail::eval_seed(cfg), w), eo);
    for (const auto& g : grids) {
      const std::string stem = "density_w" + std::to_string(w) + "_p" + std::to_string(g.ped_id);
      std::ostringstream csv, pgm;
      write_density_csv(csv, g);
      write_density_pgm(pgm, g);
      detail::write_file(detail::output_path(cfg, stem + ".csv"), csv.str());
      detail::write_file(detail::output_path(cfg, stem + ".pgm"), pgm.str());
      out << stem << ' ' << grid.nx << 'x' << grid.ny << '\n';
    }
  }
}

inline const std::vector<std::string>& command_verbs() {
  static const std::vector<std::string> verbs{"ingest", "train", "eval", "ablate", "sweep", "density"};
  return verbs;
}

/// Runs one verb. Returns 0 on success; on failure prints a diagnostic to
/// `err` and returns nonzero without leaving a partial report behind.
inline int run_command(const std::string& verb, const RunConfig& cfg, const CommandOptions& opts = {},
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    std::filesystem::create_directories(cfg.output_dir);
    if (verb == "ingest") {
      command_ingest(cfg, opts, out);
    } else if (verb == "train") {
      command_train(cfg, opts, out);
    } else if (verb == "eval") {
      command_eval(cfg, opts, out);
    } else if (verb == "ablate") {
      command_ablate(cfg, opts, out);
    } else if (verb == "sweep") {
      command_sweep(cfg, opts, out);
    } else if (verb == "density") {
      command_density(cfg, opts, out);
    } else {
      err << "error: unknown command '" << verb << "'\n";
      return 64;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gtppo
