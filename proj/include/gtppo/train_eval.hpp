#pragma once

// Losses, optimisation, metrics, best-of-k evaluation, the constant velocity
// baseline and density maps.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gtppo/generator.hpp"

namespace gtppo {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 400;
  double lr_main = 1e-3;
  double lr_pop = 1e-4;
  int v = 20;
  double alpha = 10.0;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (v < 1) throw ConfigError("train.v must be >= 1");
    if (alpha < 0.0) throw ConfigError("train.alpha must be >= 0");
    if (!(lr_main > 0.0) || !(lr_pop > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
  }
};

// ---------------------------------------------------------------------------
// Metrics and losses.

struct Metrics {
  double ade = 0.0;
  double fde = 0.0;
};

/// ADE: mean per-step Euclidean distance; FDE: distance at the last step.
inline Metrics compute_metrics(const Track& pred, const Track& gt) {
  if (pred.rows() != gt.rows() || pred.rows() == 0) throw ShapeError("compute_metrics: length mismatch");
  const Eigen::VectorXd dist = (pred - gt).rowwise().norm();
  return {dist.mean(), dist(dist.size() - 1)};
}

/// Best-of-v mean per-step distance to the ground truth.
inline double variety_loss(const Track& gt, std::span<const Track> samples) {
  if (samples.empty()) throw ShapeError("variety_loss: need at least one sample");
  double best = std::numeric_limits<double>::infinity();
  for (const Track& s : samples) best = std::min(best, compute_metrics(s, gt).ade);
  return best;
}

/// Differentiable variety loss for every pedestrian of a forward pass, n x 1.
/// The winning sample of each pedestrian carries the gradient.
inline Var variety_loss(const ForwardResult& r, const SceneWindow& window) {
  const Index n = r.peds;
  Var dist_sum;
  for (std::size_t t = 0; t < r.positions.size(); ++t) {
    Var gt = ad::constant(window.fut_at(static_cast<Index>(t)).replicate(r.samples, 1));
    Var d = ad::row_norms(ad::sub(r.positions[t], gt));
    dist_sum = dist_sum.defined() ? dist_sum + d : d;
  }
  Var mean_dist = ad::scale(dist_sum, 1.0 / static_cast<double>(r.positions.size()));
  std::vector<Index> best(static_cast<std::size_t>(n));
  const Matrix& v = mean_dist.value();
  for (Index i = 0; i < n; ++i) {
    Index arg = i;
    for (Index s = 1; s < r.samples; ++s) {
      if (v(s * n + i, 0) < v(arg, 0)) arg = s * n + i;
    }
    best[static_cast<std::size_t>(i)] = arg;
  }
  return ad::gather_rows(mean_dist, std::move(best));
}

/// mean_i (variety_i + alpha * kl_i)
inline double total_loss(std::span<const double> variety, std::span<const double> kl, double alpha) {
  if (variety.size() != kl.size() || variety.empty()) throw ShapeError("total_loss: pedestrian counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < variety.size(); ++i) s += variety[i] + alpha * kl[i];
  return s / static_cast<double>(variety.size());
}

/// Constant velocity baseline: repeat the last observed displacement.
inline std::vector<Track> cvm_predict(const SceneWindow& window) {
  if (window.t_obs() < 2) throw ShapeError("cvm_predict: need at least two observed steps");
  std::vector<Track> out;
  for (const Track& o : window.obs) {
    const Eigen::RowVector2d last = o.row(o.rows() - 1);
    const Eigen::RowVector2d step = last - o.row(o.rows() - 2);
    Track p(window.t_pred(), 2);
    Eigen::RowVector2d cur = last;
    for (Index t = 0; t < p.rows(); ++t) {
      cur += step;
      p.row(t) = cur;
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimisation.

/// Adam with one learning rate per parameter group.
class Adam {
 public:
  Adam(double lr_main, double lr_latent, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_main_(lr_main), lr_latent_(lr_latent), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelParams& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.visit([&](const std::string& name, Var& p, ParamGroup group) {
      if (p.node()->grad.size() == 0) return;
      auto& st = state_[name];
      if (st.m.size() == 0) {
        st.m = Matrix::Zero(p.rows(), p.cols());
        st.v = Matrix::Zero(p.rows(), p.cols());
      }
      const Matrix& g = p.node()->grad;
      st.m = beta1_ * st.m + (1.0 - beta1_) * g;
      st.v = beta2_ * st.v + (1.0 - beta2_) * g.cwiseProduct(g);
      const double lr = group == ParamGroup::latent ? lr_latent_ : lr_main_;
      p.mutable_value().array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps_);
    });
  }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  double lr_main_, lr_latent_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(ModelParams& params, double max_norm) {
  double sq = 0.0;
  params.visit([&](const std::string&, Var& p, ParamGroup) {
    if (p.node()->grad.size() != 0) sq += p.node()->grad.squaredNorm();
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    params.visit([&](const std::string&, Var& p, ParamGroup) {
      if (p.node()->grad.size() != 0) p.node()->grad *= k;
    });
  }
  return norm;
}

struct LossRecord {
  int epoch = 0;
  double variety = 0.0;
  std::optional<double> kl;  // absent when the KL term is not part of the objective
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> curve;
};

/// Initial parameters used by train_model for a given seed.
inline ModelParams initial_params(const ModelDims& dims, std::uint64_t seed) {
  return ModelParams::create(dims, derive_seed(seed, {0x1417}));
}

/// Per-window contribution to the objective; backpropagates `weight` times the
/// window sum and returns (sum of variety, sum of kl).
inline std::pair<double, double> accumulate_window_loss(const SceneWindow& w, ModelParams& params,
                                                        const AblationConfig& ablation, const TrainConfig& cfg,
                                                        std::uint64_t seed, double weight) {
  const bool with_kl = ablation.use_pop && cfg.alpha > 0.0;
  ForwardOptions fo;
  fo.samples = cfg.v;
  fo.need_kl = with_kl;
  ForwardResult r = model_forward(w, params, ablation, Stage::train, seed, fo);
  Var var = ad::sum(variety_loss(r, w));
  Var objective = var;
  double kl_sum = 0.0;
  if (with_kl) {
    Var kl = ad::sum(kl_loss(r.latent));
    kl_sum = kl.scalar();
    objective = var + ad::scale(kl, cfg.alpha);
  }
  if (!std::isfinite(objective.scalar())) {
    throw DivergenceError("non-finite training loss in window starting at frame " + std::to_string(w.start_frame));
  }
  Matrix seed_grad = Matrix::Constant(1, 1, weight);
  ad::backward(objective, &seed_grad);
  return {var.scalar(), kl_sum};
}

/// Mini-batch training with variety + alpha * KL and Adam.
inline TrainResult train_model(const std::vector<SceneWindow>& train, const TrainConfig& cfg,
                               const AblationConfig& ablation, const ModelDims& dims = {},
                               std::optional<ModelParams> init = std::nullopt,
                               const std::function<void(const LossRecord&)>& on_epoch = {}) {
  cfg.validate();
  ablation.validate();
  if (train.empty()) throw ConfigError("train_model: empty training set");
  TrainResult result{init ? init->clone() : initial_params(dims, cfg.seed), {}};
  ModelParams& params = result.params;
  Adam adam(cfg.lr_main, cfg.lr_pop);
  const bool with_kl = ablation.use_pop && cfg.alpha > 0.0;

  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {0x5eed, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double var_total = 0.0, kl_total = 0.0;
    std::size_t peds_total = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t batch_peds = 0;
      for (std::size_t b = start; b < end; ++b) batch_peds += train[order[b]].size();
      params.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const std::uint64_t s = derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), batch, b});
        auto [v, k] = accumulate_window_loss(train[order[b]], params, ablation, cfg, s,
                                             1.0 / static_cast<double>(batch_peds));
        var_total += v;
        kl_total += k;
      }
      peds_total += batch_peds;
      clip_grad_norm(params, cfg.grad_clip);
      adam.step(params);
    }
    LossRecord rec;
    rec.epoch = epoch + 1;
    rec.variety = var_total / static_cast<double>(peds_total);
    if (with_kl) rec.kl = kl_total / static_cast<double>(peds_total);
    rec.total = rec.variety + (with_kl ? cfg.alpha * *rec.kl : 0.0);
    if (!std::isfinite(rec.total)) throw DivergenceError("non-finite loss at epoch " + std::to_string(rec.epoch));
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  params.zero_grad();
  return result;
}

inline void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& curve) {
  out << "epoch,variety,kl,total\n";
  out << std::setprecision(17);
  for (const auto& r : curve) {
    out << r.epoch << ',' << r.variety << ',';
    if (r.kl) out << *r.kl;
    out << ',' << r.total << '\n';
  }
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalOptions {
  /// Worker threads across windows; 1 runs everything on the calling thread.
  int threads = 1;
  bool zero_variance = false;
  bool per_step_cosine = false;
};

struct SceneMetrics {
  std::string scene;
  double ade = 0.0;
  double fde = 0.0;
  std::size_t windows = 0;
  std::size_t pedestrians = 0;
};

struct EvalReport {
  double ade = 0.0;
  double fde = 0.0;
  std::vector<SceneMetrics> per_scene;
  int sampling_number = 0;
  std::size_t windows = 0;
  std::size_t pedestrians = 0;
  double runtime_seconds = 0.0;  // not part of the serialised report

  std::string to_text() const {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "ade: " << ade << "\nfde: " << fde << "\nsampling_number: " << sampling_number << "\nwindows: " << windows
      << "\npedestrians: " << pedestrians << '\n';
    for (const auto& s : per_scene) {
      o << "scene." << s.scene << ".ade: " << s.ade << "\nscene." << s.scene << ".fde: " << s.fde << '\n';
    }
    return o.str();
  }

  std::string to_csv() const {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "scene,ade,fde,windows,pedestrians,sampling_number\n";
    for (const auto& s : per_scene) {
      o << s.scene << ',' << s.ade << ',' << s.fde << ',' << s.windows << ',' << s.pedestrians << ','
        << sampling_number << '\n';
    }
    o << "all," << ade << ',' << fde << ',' << windows << ',' << pedestrians << ',' << sampling_number << '\n';
    return o.str();
  }
};

/// Per-sample, per-pedestrian metrics of one window: [sample][ped].
using SampleMetrics = std::vector<std::vector<Metrics>>;

inline SampleMetrics sample_window_metrics(const SceneWindow& w, const ModelParams& params, const AblationConfig& cfg,
                                           int k, std::uint64_t seed, const EvalOptions& options) {
  ad::NoGradGuard no_grad;
  ForwardOptions fo;
  fo.samples = k;
  fo.zero_variance = options.zero_variance;
  fo.per_step_cosine = options.per_step_cosine;
  fo.batch_samples = false;
  fo.need_kl = false;
  const auto tracks = model_forward(w, params, cfg, Stage::test, seed, fo).trajectories();
  SampleMetrics m(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s) {
    for (std::size_t i = 0; i < w.size(); ++i) m[static_cast<std::size_t>(s)].push_back(compute_metrics(tracks[static_cast<std::size_t>(s)][i], w.fut[i]));
  }
  return m;
}

/// Seed for window `index` of an evaluation run.
inline std::uint64_t window_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, {0xe7a1, static_cast<std::uint64_t>(index)});
}

namespace detail {

template <typename F>
void parallel_for(std::size_t count, int threads, F&& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < count; i = next++) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Best-of-k (by ADE) over the first k samples; averaged over pedestrians.
inline Metrics best_of_prefix(const SampleMetrics& m, int k) {
  const std::size_t n = m.front().size();
  Metrics acc;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < static_cast<std::size_t>(k); ++s) {
      if (m[s][i].ade < m[best][i].ade) best = s;
    }
    acc.ade += m[best][i].ade;
    acc.fde += m[best][i].fde;
  }
  acc.ade /= static_cast<double>(n);
  acc.fde /= static_cast<double>(n);
  return acc;
}

inline EvalReport aggregate(const std::vector<SceneWindow>& windows, const std::vector<Metrics>& per_window, int k) {
  EvalReport rep;
  rep.sampling_number = k;
  rep.windows = windows.size();
  std::map<std::string, SceneMetrics> scenes;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    rep.ade += per_window[w].ade;
    rep.fde += per_window[w].fde;
    rep.pedestrians += windows[w].size();
    auto& s = scenes[windows[w].scene];
    s.scene = windows[w].scene;
    s.ade += per_window[w].ade;
    s.fde += per_window[w].fde;
    s.windows += 1;
    s.pedestrians += windows[w].size();
  }
  if (!windows.empty()) {
    rep.ade /= static_cast<double>(windows.size());
    rep.fde /= static_cast<double>(windows.size());
  }
  for (auto& [name, s] : scenes) {
    s.ade /= static_cast<double>(s.windows);
    s.fde /= static_cast<double>(s.windows);
    rep.per_scene.push_back(s);
  }
  return rep;
}

}  // namespace detail

/// Draws k test-stage samples per pedestrian, keeps the lowest-ADE one, and
/// averages over pedestrians then windows. Sample j of a window always uses
/// the same seed, so sample sets are nested across k.
inline EvalReport evaluate_best_of_k(const std::vector<SceneWindow>& windows, const ModelParams& params,
                                     const AblationConfig& cfg, int k, std::uint64_t seed,
                                     const EvalOptions& options = {}) {
  if (k < 1) throw ConfigError("evaluate_best_of_k: k must be >= 1");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Metrics> per_window(windows.size());
  detail::parallel_for(windows.size(), options.threads, [&](std::size_t w) {
    per_window[w] = detail::best_of_prefix(
        sample_window_metrics(windows[w], params, cfg, k, window_seed(seed, w), options), k);
  });
  EvalReport rep = detail::aggregate(windows, per_window, k);
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct SweepRow {
  int k = 0;
  double ade = 0.0;
  double fde = 0.0;
};

/// Best-of-k metrics for several sampling numbers from one nested sample set.
inline std::vector<SweepRow> sweep_sampling_numbers(const std::vector<SceneWindow>& windows, const ModelParams& params,
                                                    const AblationConfig& cfg, std::vector<int> ks, std::uint64_t seed,
                                                    const EvalOptions& options = {}) {
  if (ks.empty()) throw ConfigError("sweep: no sampling numbers");
  std::sort(ks.begin(), ks.end());
  if (ks.front() < 1) throw ConfigError("sweep: sampling numbers must be >= 1");
  const int kmax = ks.back();
  std::vector<SampleMetrics> all(windows.size());
  detail::parallel_for(windows.size(), options.threads, [&](std::size_t w) {
    all[w] = sample_window_metrics(windows[w], params, cfg, kmax, window_seed(seed, w), options);
  });
  std::vector<SweepRow> rows;
  for (int k : ks) {
    std::vector<Metrics> per_window(windows.size());
    for (std::size_t w = 0; w < windows.size(); ++w) per_window[w] = detail::best_of_prefix(all[w], k);
    const EvalReport r = detail::aggregate(windows, per_window, k);
    rows.push_back({k, r.ade, r.fde});
  }
  return rows;
}

/// Mean per-pedestrian KL(observed || ground truth) over windows.
inline double mean_kl(const std::vector<SceneWindow>& windows, const ModelParams& params) {
  ad::NoGradGuard no_grad;
  double total = 0.0;
  std::size_t peds = 0;
  for (const auto& w : windows) {
    const WindowFeatures f = window_features(w);
    total += kl_loss(latent_spec(f, params, true, true)).value().sum();
    peds += w.size();
  }
  return peds ? total / static_cast<double>(peds) : 0.0;
}

/// Constant velocity baseline metrics, aggregated like evaluate_best_of_k.
inline EvalReport evaluate_cvm(const std::vector<SceneWindow>& windows) {
  std::vector<Metrics> per_window;
  for (const auto& w : windows) {
    const auto pred = cvm_predict(w);
    Metrics acc;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Metrics m = compute_metrics(pred[i], w.fut[i]);
      acc.ade += m.ade;
      acc.fde += m.fde;
    }
    acc.ade /= static_cast<double>(w.size());
    acc.fde /= static_cast<double>(w.size());
    per_window.push_back(acc);
  }
  return detail::aggregate(windows, per_window, 1);
}

// ---------------------------------------------------------------------------
// Density maps.

struct GridSpec {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  int nx = 1, ny = 1;

  void validate() const {
    if (nx < 1 || ny < 1 || !(x_max > x_min) || !(y_max > y_min) || !std::isfinite(x_min) || !std::isfinite(x_max) ||
        !std::isfinite(y_min) || !std::isfinite(y_max)) {
      throw ConfigError("degenerate density grid");
    }
  }

  double cell_width() const { return (x_max - x_min) / nx; }
  double cell_height() const { return (y_max - y_min) / ny; }

  /// (row, col) of the cell containing (x, y), if inside the grid.
  std::optional<std::pair<int, int>> cell_of(double x, double y) const {
    if (x < x_min || x > x_max || y < y_min || y > y_max) return std::nullopt;
    const int c = std::min(nx - 1, static_cast<int>((x - x_min) / cell_width()));
    const int r = std::min(ny - 1, static_cast<int>((y - y_min) / cell_height()));
    return std::make_pair(r, c);
  }

  /// Square cells of size `cell` over the window's observed and true future
  /// positions, padded by `margin` on every side.
  static GridSpec covering(const SceneWindow& w, double margin, double cell) {
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    auto extend = [&](const Track& t) {
      x0 = std::min(x0, t.col(0).minCoeff());
      x1 = std::max(x1, t.col(0).maxCoeff());
      y0 = std::min(y0, t.col(1).minCoeff());
      y1 = std::max(y1, t.col(1).maxCoeff());
    };
    for (std::size_t i = 0; i < w.size(); ++i) {
      extend(w.obs[i]);
      extend(w.fut[i]);
    }
    GridSpec g;
    g.x_min = x0 - margin;
    g.y_min = y0 - margin;
    g.nx = std::max(1, static_cast<int>(std::ceil((x1 + margin - g.x_min) / cell)));
    g.ny = std::max(1, static_cast<int>(std::ceil((y1 + margin - g.y_min) / cell)));
    g.x_max = g.x_min + g.nx * cell;
    g.y_max = g.y_min + g.ny * cell;
    return g;
  }
};

struct DensityGrid {
  long ped_id = 0;
  Matrix mass;  // ny x nx, sums to one
};

/// Rasterises `samples` predicted trajectories per pedestrian; every predicted
/// point inside the grid carries equal mass.
inline std::vector<DensityGrid> density_grid(const SceneWindow& window, const ModelParams& params,
                                             const AblationConfig& cfg, int samples, const GridSpec& grid,
                                             std::uint64_t seed, const EvalOptions& options = {}) {
  grid.validate();
  if (samples < 1) throw ConfigError("density_grid: samples must be >= 1");
  ad::NoGradGuard no_grad;
  ForwardOptions fo;
  fo.samples = samples;
  fo.zero_variance = options.zero_variance;
  fo.per_step_cosine = options.per_step_cosine;
  fo.need_kl = false;
  const auto tracks = model_forward(window, params, cfg, Stage::test, seed, fo).trajectories();
  std::vector<DensityGrid> out;
  for (std::size_t i = 0; i < window.size(); ++i) {
    DensityGrid g{window.ped_ids[i], Matrix::Zero(grid.ny, grid.nx)};
    for (int s = 0; s < samples; ++s) {
      const Track& tr = tracks[static_cast<std::size_t>(s)][i];
      for (Index t = 0; t < tr.rows(); ++t) {
        if (auto cell = grid.cell_of(tr(t, 0), tr(t, 1))) g.mass(cell->first, cell->second) += 1.0;
      }
    }
    const double total = g.mass.sum();
    if (total <= 0.0) {
      throw NumericError("density_grid: no predicted point of pedestrian " + std::to_string(window.ped_ids[i]) +
                         " falls inside the grid");
    }
    g.mass /= total;
    out.push_back(std::move(g));
  }
  return out;
}

inline void write_density_csv(std::ostream& out, const DensityGrid& g) {
  out << std::setprecision(17);
  for (Index r = 0; r < g.mass.rows(); ++r) {
    for (Index c = 0; c < g.mass.cols(); ++c) out << (c ? "," : "") << g.mass(r, c);
    out << '\n';
  }
}

/// Binary greyscale PGM; the densest cell is white, rows flipped so y grows upward.
inline void write_density_pgm(std::ostream& out, const DensityGrid& g) {
  const double peak = g.mass.maxCoeff();
  out << "P5\n" << g.mass.cols() << ' ' << g.mass.rows() << "\n255\n";
  for (Index r = g.mass.rows() - 1; r >= 0; --r) {
    for (Index c = 0; c < g.mass.cols(); ++c) {
      const double v = peak > 0.0 ? std::sqrt(g.mass(r, c) / peak) : 0.0;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
}

}  // namespace gtppo
