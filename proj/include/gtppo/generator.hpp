#pragma once

// Full predictor: encoder, social context, latent variable and decoder rollout.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gtppo/layers.hpp"
#include "gtppo/pseudo_oracle.hpp"
#include "gtppo/scene_data.hpp"
#include "gtppo/social_graph.hpp"
#include "gtppo/ta_encoder.hpp"

namespace gtppo {

/// Which components are active. Mirrors the rows of the ablation table.
struct AblationConfig {
  bool use_ta = true;
  bool use_ga = true;
  SocialMode social = SocialMode::soft;
  bool use_pop = true;

  void validate() const {
    if (social != SocialMode::none && !use_ga) {
      throw ConfigError("social attention gates graph aggregation and requires the graph attention module");
    }
  }

  /// e.g. "TA+GA+SSA+POP"; "baseline" when everything is off.
  std::string label() const {
    std::string s;
    auto add = [&](const char* part) { s += s.empty() ? part : std::string("+") + part; };
    if (use_ta) add("TA");
    if (use_ga) add("GA");
    if (social == SocialMode::hard) add("HSA");
    if (social == SocialMode::soft) add("SSA");
    if (use_pop) add("POP");
    return s.empty() ? "baseline" : s;
  }

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

/// The sixteen toggle rows of the ablation study, in table order.
inline std::vector<AblationConfig> ablation_table() {
  using M = SocialMode;
  return {
      {false, false, M::none, false}, {true, false, M::none, false},  {false, true, M::none, false},
      {false, true, M::hard, false},  {false, true, M::soft, false},  {false, false, M::none, true},
      {true, true, M::none, false},   {true, true, M::hard, false},   {true, true, M::soft, false},
      {true, false, M::none, true},   {false, true, M::none, true},   {false, true, M::hard, true},
      {false, true, M::soft, true},   {true, true, M::none, true},    {true, true, M::hard, true},
      {true, true, M::soft, true},
  };
}

struct ModelDims {
  Index hidden = 32;        // encoder, GLSTM and decoder hidden size
  Index embed = 16;         // displacement embedding
  Index pop_embed = 16;     // Gaussian-LSTM input embedding
  Index pop_hidden = 32;    // Gaussian-LSTM hidden size
  Index channel_latent = 4; // per kinematic channel
  Index noise = 4;          // free Gaussian noise block

  Index latent() const { return kKinematicChannels * channel_latent + noise; }
  Index decoder_init_in() const { return 2 * hidden + latent(); }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct DecoderParams {
  Linear init_proj;  // hidden + hidden + latent -> hidden
  Linear in_embed;   // 2 -> embed
  LstmCell lstm;     // embed -> hidden
  Linear out_proj;   // hidden -> 2

  static DecoderParams create(const ModelDims& d, std::mt19937_64& rng) {
    return {Linear::create(d.decoder_init_in(), d.hidden, rng), Linear::create(2, d.embed, rng),
            LstmCell::create(d.embed, d.hidden, rng), Linear::create(d.hidden, 2, rng)};
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    init_proj.visit(prefix + ".init_proj", ParamGroup::main, f);
    in_embed.visit(prefix + ".in_embed", ParamGroup::main, f);
    lstm.visit(prefix + ".lstm", ParamGroup::main, f);
    out_proj.visit(prefix + ".out_proj", ParamGroup::main, f);
  }
};

/// Every learnable tensor of the predictor.
struct ModelParams {
  ModelDims dims;
  EncoderParams encoder;
  SocialGraphParams social;
  PopParams pop;
  DecoderParams decoder;

  static ModelParams create(const ModelDims& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.dims = d;
    p.encoder = EncoderParams::create(d.embed, d.hidden, rng);
    p.social = SocialGraphParams::create(d.hidden, rng);
    p.pop = PopParams::create(d.pop_embed, d.pop_hidden, d.channel_latent, rng);
    p.decoder = DecoderParams::create(d, rng);
    return p;
  }

  void visit(const ParamVisitor& f) {
    encoder.visit("encoder", f);
    social.visit("social", f);
    pop.visit("pop", f);
    decoder.visit("decoder", f);
  }

  /// Independent copy with fresh parameter leaves.
  ModelParams clone() const {
    ModelParams c = *this;
    c.visit([](const std::string&, Var& v, ParamGroup) { v = clone_param(v); });
    return c;
  }

  void zero_grad() {
    visit([](const std::string&, Var& v, ParamGroup) { v.zero_grad(); });
  }
};

/// state = init_proj([summary | social | z]); used for both h and c.
inline Var init_decoder_state(const Var& summary, const Var& social, const Var& z, const DecoderParams& params) {
  if (summary.rows() != social.rows() || social.rows() != z.rows()) {
    throw ShapeError("init_decoder_state: inputs must have the same number of rows");
  }
  if (summary.cols() + social.cols() + z.cols() != params.init_proj.in_dim()) {
    throw ShapeError("init_decoder_state: concatenated width " +
                     std::to_string(summary.cols() + social.cols() + z.cols()) + " does not match projection input " +
                     std::to_string(params.init_proj.in_dim()));
  }
  return params.init_proj(ad::concat_cols({summary, social, z}));
}

/// Autoregressive decoding of `t_pred` displacements. The first input is the
/// last observed displacement; each later input is the previous prediction.
inline std::vector<Var> rollout(const Var& state, const Var& last_displacement, int t_pred,
                                const DecoderParams& params) {
  if (t_pred < 1) throw ShapeError("rollout: t_pred must be positive");
  LstmState s{state, state};
  Var x = last_displacement;
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(t_pred));
  for (int t = 0; t < t_pred; ++t) {
    s = params.lstm.step(params.in_embed(x), s);
    x = params.out_proj(s.h);
    out.push_back(x);
  }
  return out;
}

/// Positions anchored at `anchor` (rows x 2) from per-step displacements.
inline std::vector<Var> integrate(const Var& anchor, std::span<const Var> displacements) {
  std::vector<Var> pos;
  pos.reserve(displacements.size());
  Var cur = anchor;
  for (const Var& d : displacements) {
    cur = cur + d;
    pos.push_back(cur);
  }
  return pos;
}

/// Model inputs derived from a window.
struct WindowFeatures {
  std::vector<Matrix> obs_displacements;  // per observed step, n x 2 (zero at the first step)
  SocialGeometry geometry;
  std::array<std::vector<Matrix>, kKinematicChannels> obs_channels;
  std::array<std::vector<Matrix>, kKinematicChannels> gt_channels;
  Matrix anchor;  // last observed positions, n x 2
};

namespace detail {

inline std::vector<Matrix> per_step(const std::vector<Track>& tracks, const Matrix* subtract = nullptr) {
  const Index T = tracks.front().rows();
  const Index n = static_cast<Index>(tracks.size());
  std::vector<Matrix> out(static_cast<std::size_t>(T), Matrix(n, 2));
  for (Index t = 0; t < T; ++t) {
    for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(t)].row(i) = tracks[static_cast<std::size_t>(i)].row(t);
    if (subtract) out[static_cast<std::size_t>(t)] -= *subtract;
  }
  return out;
}

}  // namespace detail

/// Position channels are expressed relative to each pedestrian's last
/// observed position so every model input is translation invariant.
inline WindowFeatures window_features(const SceneWindow& w) {
  w.validate();
  WindowFeatures f;
  f.anchor = w.last_obs();
  const Index T = w.t_obs();
  for (Index t = 0; t < T; ++t) {
    f.obs_displacements.push_back(t == 0 ? Matrix(Matrix::Zero(static_cast<Index>(w.size()), 2))
                                         : Matrix(w.obs_at(t) - w.obs_at(t - 1)));
  }
  const KinematicChannels ko = kinematics(w, Span::obs);
  const KinematicChannels kf = kinematics(w, Span::fut);
  f.geometry.positions = detail::per_step(ko.positions);
  f.geometry.velocities = detail::per_step(ko.velocities);
  f.obs_channels = {detail::per_step(ko.positions, &f.anchor), detail::per_step(ko.velocities),
                    detail::per_step(ko.accelerations)};
  f.gt_channels = {detail::per_step(kf.positions, &f.anchor), detail::per_step(kf.velocities),
                   detail::per_step(kf.accelerations)};
  return f;
}

/// Gaussian heads of the requested branches.
inline LatentSpec latent_spec(const WindowFeatures& f, const ModelParams& params, bool with_obs, bool with_gt) {
  LatentSpec spec;
  spec.noise_dim = params.dims.noise;
  for (int k = 0; k < kKinematicChannels; ++k) {
    if (with_obs) spec.obs[k] = gaussian_lstm(f.obs_channels[k], params.pop.obs[k]);
    if (with_gt) spec.gt[k] = gaussian_lstm(f.gt_channels[k], params.pop.gt[k]);
  }
  return spec;
}

struct ForwardOptions {
  int samples = 1;
  /// Latent means with a zero noise block (deterministic decoding).
  bool zero_variance = false;
  bool per_step_cosine = false;
  /// Decode all samples as one batch. When false each sample is decoded on
  /// its own, which makes sample j bitwise independent of the sample count.
  bool batch_samples = true;
  /// Also compute the observed branch in the training stage (for the KL term).
  bool need_kl = true;
};

struct ForwardResult {
  Index peds = 0;
  int samples = 0;
  std::vector<Var> positions;  // per predicted step, (samples * peds) x 2, sample-major rows
  LatentSpec latent;
  Var attention;  // n x t_obs temporal attention weights (undefined without TA)

  /// Absolute predicted tracks, indexed [sample][pedestrian].
  std::vector<std::vector<Track>> trajectories() const {
    std::vector<std::vector<Track>> out(static_cast<std::size_t>(samples), std::vector<Track>(static_cast<std::size_t>(peds)));
    const Index T = static_cast<Index>(positions.size());
    for (int s = 0; s < samples; ++s) {
      for (Index i = 0; i < peds; ++i) {
        Track tr(T, 2);
        for (Index t = 0; t < T; ++t) tr.row(t) = positions[static_cast<std::size_t>(t)].value().row(s * peds + i);
        out[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] = std::move(tr);
      }
    }
    return out;
  }
};

/// Seed of the latent draw for sample `j` of a forward pass seeded with `seed`.
inline std::uint64_t sample_seed(std::uint64_t seed, int j) { return derive_seed(seed, {static_cast<std::uint64_t>(j)}); }

inline ForwardResult model_forward(const SceneWindow& window, const ModelParams& params, const AblationConfig& cfg,
                                   Stage stage, std::uint64_t seed, const ForwardOptions& options = {}) {
  cfg.validate();
  if (options.samples < 1) throw ConfigError("model_forward: samples must be >= 1");
  const WindowFeatures f = window_features(window);
  const Index n = static_cast<Index>(window.size());
  const ModelDims& d = params.dims;

  ForwardResult r;
  r.peds = n;
  r.samples = options.samples;

  std::vector<Var> hidden = encode_hidden_states(f.obs_displacements, params.encoder);
  Var summary;
  if (cfg.use_ta) {
    TemporalAttention ta = temporal_attention(hidden, params.encoder);
    summary = ta.summary;
    r.attention = ta.weights;
  } else {
    summary = hidden.back();
  }

  Var social;
  if (cfg.use_ga) {
    social = social_graph_forward(hidden, f.geometry, params.social, {cfg.social, options.per_step_cosine}).g_final;
  } else {
    social = ad::constant(Matrix::Zero(n, d.hidden));
  }

  if (cfg.use_pop) {
    const bool with_gt = stage == Stage::train;
    const bool with_obs = stage == Stage::test || options.need_kl;
    r.latent = latent_spec(f, params, with_obs, with_gt);
  }

  auto latent_for = [&](int j) {
    const std::uint64_t s = sample_seed(seed, j);
    if (cfg.use_pop) return assemble_latent(r.latent, stage, s, {options.zero_variance});
    return noise_latent(n, d.latent(), s, options.zero_variance);
  };

  const Var anchor = ad::constant(f.anchor);
  const Var last_disp = ad::constant(f.obs_displacements.back());
  if (options.batch_samples) {
    std::vector<Var> zs;
    for (int j = 0; j < options.samples; ++j) zs.push_back(latent_for(j));
    Var z = ad::concat_rows(std::span<const Var>(zs));
    Var state = init_decoder_state(ad::repeat_rows(summary, options.samples), ad::repeat_rows(social, options.samples), z,
                                   params.decoder);
    auto disp = rollout(state, ad::repeat_rows(last_disp, options.samples), static_cast<int>(window.t_pred()),
                        params.decoder);
    r.positions = integrate(ad::repeat_rows(anchor, options.samples), disp);
  } else {
    std::vector<std::vector<Var>> per_sample;
    for (int j = 0; j < options.samples; ++j) {
      Var state = init_decoder_state(summary, social, latent_for(j), params.decoder);
      auto disp = rollout(state, last_disp, static_cast<int>(window.t_pred()), params.decoder);
      per_sample.push_back(integrate(anchor, disp));
    }
    if (options.samples == 1) {
      r.positions = std::move(per_sample.front());
    } else {
      for (std::size_t t = 0; t < per_sample.front().size(); ++t) {
        std::vector<Var> rows;
        for (auto& s : per_sample) rows.push_back(s[t]);
        r.positions.push_back(ad::concat_rows(std::span<const Var>(rows)));
      }
    }
  }
  return r;
}

}  // namespace gtppo
