#pragma once

// Per-step graph attention between pedestrians, gated by velocity-orientation
// social attention, summarised over time by the GLSTM.

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gtppo/layers.hpp"

namespace gtppo {

enum class SocialMode { none, hard, soft };

inline std::string to_string(SocialMode m) {
  switch (m) {
    case SocialMode::none: return "none";
    case SocialMode::hard: return "hard";
    case SocialMode::soft: return "soft";
  }
  return "?";
}

inline SocialMode social_mode_from_string(const std::string& s) {
  if (s == "none") return SocialMode::none;
  if (s == "hard") return SocialMode::hard;
  if (s == "soft") return SocialMode::soft;
  throw ConfigError("unknown social attention mode '" + s + "'");
}

using NeighborMask = ad::BoolMatrix;

/// One graph attention layer: shared transform W and scoring vector a.
struct GraphAttnLayer {
  Var weight;  // h' x h
  Var attn;    // 2h' x 1

  static GraphAttnLayer create(Index in, Index out, std::mt19937_64& rng) {
    return {ad::parameter(uniform_init(out, in, in, rng)), ad::parameter(uniform_init(2 * out, 1, 2 * out, rng))};
  }
  Index out_dim() const { return weight.rows(); }
};

struct GraphAttnParams {
  static constexpr int kLayers = 2;
  static constexpr double kLeakySlope = 0.2;
  std::array<GraphAttnLayer, kLayers> layers;
};

/// 1x1 convolution on the single-channel cosine map (soft mode only).
struct SocialAttnParams {
  Var conv_w;  // 1 x 1
  Var conv_b;  // 1 x 1
};

struct SocialGraphParams {
  GraphAttnParams gat;
  SocialAttnParams social;
  LstmCell glstm;

  static SocialGraphParams create(Index hidden, std::mt19937_64& rng) {
    SocialGraphParams p;
    for (auto& l : p.gat.layers) l = GraphAttnLayer::create(hidden, hidden, rng);
    p.social.conv_w = ad::parameter(uniform_init(1, 1, 1, rng));
    p.social.conv_b = ad::parameter(uniform_init(1, 1, 1, rng));
    p.glstm = LstmCell::create(hidden, hidden, rng);
    return p;
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    for (std::size_t l = 0; l < gat.layers.size(); ++l) {
      f(prefix + ".gat" + std::to_string(l) + ".weight", gat.layers[l].weight, ParamGroup::main);
      f(prefix + ".gat" + std::to_string(l) + ".attn", gat.layers[l].attn, ParamGroup::main);
    }
    f(prefix + ".social.conv_w", social.conv_w, ParamGroup::main);
    f(prefix + ".social.conv_b", social.conv_b, ParamGroup::main);
    glstm.visit(prefix + ".glstm", ParamGroup::main, f);
  }
};

/// GLSTM output for a batch of n pedestrians.
struct SocialContext {
  std::vector<Var> g_seq;  // per step, n x h
  Var g_final;             // n x h, equal to g_seq.back()
};

/// Complete graph with self-loops: every pedestrian in the window is a neighbor.
inline NeighborMask full_neighbor_mask(Index n) { return NeighborMask::Constant(n, n, true); }

namespace detail {

inline void check_mask(const NeighborMask& mask, Index n) {
  if (mask.rows() != n || mask.cols() != n) throw ShapeError("neighbor mask must be n x n");
  for (Index i = 0; i < n; ++i) {
    if (!mask.row(i).any()) throw ShapeError("neighbor mask row " + std::to_string(i) + " has no neighbor");
  }
}

}  // namespace detail

/// alpha(i, j) = softmax_j over neighbors of LeakyReLU(a . [W m_i || W m_j]).
/// `transformed` is W m (n x h'); masked-out entries are exactly zero.
inline Var attention_from_transformed(const Var& transformed, const GraphAttnLayer& layer, const NeighborMask& mask) {
  const Index hp = layer.out_dim();
  detail::check_mask(mask, transformed.rows());
  Var src = ad::matmul(transformed, ad::slice_rows(layer.attn, 0, hp));
  Var dst = ad::matmul(transformed, ad::slice_rows(layer.attn, hp, hp));
  Var scores = ad::leaky_relu(ad::pairwise_sum(src, dst), GraphAttnParams::kLeakySlope);
  return ad::softmax_rows(scores, &mask);
}

/// W m with no bias.
inline Var graph_transform(const Var& hidden, const GraphAttnLayer& layer) {
  return ad::linear(hidden, layer.weight, ad::constant(Matrix::Zero(1, layer.out_dim())));
}

inline Var graph_attention_coefficients(const Var& hidden, const GraphAttnLayer& layer, const NeighborMask& mask) {
  return attention_from_transformed(graph_transform(hidden, layer), layer, mask);
}

/// cos of the angle between pedestrian i's velocity and the vector from i to j.
///
/// The diagonal is 1. Rows of pedestrians slower than 1e-6 are all 1; a zero
/// offset between distinct pedestrians also counts as 1.
inline Matrix cosine_matrix(const Matrix& positions, const Matrix& velocities) {
  if (positions.cols() != 2 || velocities.cols() != 2 || positions.rows() != velocities.rows()) {
    throw ShapeError("cosine_matrix: positions and velocities must both be n x 2");
  }
  const Index n = positions.rows();
  Matrix cos = Matrix::Ones(n, n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::RowVector2d v = velocities.row(i);
    const double vn = v.norm();
    if (vn < 1e-6) continue;
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::RowVector2d d = positions.row(j) - positions.row(i);
      const double dn = d.norm();
      if (dn == 0.0) continue;
      cos(i, j) = std::clamp(v.dot(d) / (vn * dn), -1.0, 1.0);
    }
  }
  return cos;
}

/// hard: indicator(cos > 0) with a unit diagonal; soft: sigmoid(w cos + b).
/// The soft diagonal is also pinned to 1.
inline Var social_attention_weights(const Matrix& cos, SocialMode mode, const SocialAttnParams& params) {
  const Index n = cos.rows();
  switch (mode) {
    case SocialMode::none:
      throw ConfigError("social_attention_weights: mode must be hard or soft");
    case SocialMode::hard: {
      Matrix a = (cos.array() > 0.0).cast<double>().matrix();
      a.diagonal().setOnes();
      return ad::constant(std::move(a));
    }
    case SocialMode::soft: {
      Var s = ad::sigmoid(ad::scalar_affine(ad::constant(cos), params.conv_w, params.conv_b));
      Matrix off_diag = Matrix::Ones(n, n);
      off_diag.diagonal().setZero();
      Matrix eye = Matrix::Identity(n, n);
      return ad::add(ad::mul(s, ad::constant(off_diag)), ad::constant(eye));
    }
  }
  throw ConfigError("unknown social mode");
}

/// One layer: sigmoid(sum_j A_ij alpha_ij W m_j). `gate` may be undefined (A = 1).
inline Var graph_attention_layer(const Var& hidden, const GraphAttnLayer& layer, const NeighborMask& mask,
                                 const Var& gate) {
  Var wh = graph_transform(hidden, layer);
  Var alpha = attention_from_transformed(wh, layer, mask);
  Var coeff = gate.defined() ? ad::mul(gate, alpha) : alpha;
  return ad::sigmoid(ad::matmul(coeff, wh));
}

/// Per-step geometry used by the social gate.
struct SocialGeometry {
  std::vector<Matrix> positions;   // per observed step, n x 2
  std::vector<Matrix> velocities;  // per observed step, n x 2
};

struct SocialOptions {
  SocialMode mode = SocialMode::soft;
  /// Recompute the cosine map at every observed step instead of once from
  /// the last observed step.
  bool per_step_cosine = false;
};

inline SocialContext social_graph_forward(std::span<const Var> hidden_seq, const SocialGeometry& geometry,
                                          const SocialGraphParams& params, const SocialOptions& options) {
  if (hidden_seq.empty()) throw ShapeError("social_graph_forward: empty hidden sequence");
  const std::size_t steps = hidden_seq.size();
  if (options.mode != SocialMode::none &&
      (geometry.positions.size() != steps || geometry.velocities.size() != steps)) {
    throw ShapeError("social_graph_forward: geometry must cover every observed step");
  }
  const Index n = hidden_seq.front().rows();
  const NeighborMask mask = full_neighbor_mask(n);

  Var window_gate;
  if (options.mode != SocialMode::none && !options.per_step_cosine) {
    window_gate = social_attention_weights(cosine_matrix(geometry.positions.back(), geometry.velocities.back()),
                                           options.mode, params.social);
  }

  LstmState state = params.glstm.zero_state(n);
  SocialContext ctx;
  ctx.g_seq.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var gate = window_gate;
    if (options.mode != SocialMode::none && options.per_step_cosine) {
      gate = social_attention_weights(cosine_matrix(geometry.positions[t], geometry.velocities[t]), options.mode,
                                      params.social);
    }
    Var h = hidden_seq[t];
    for (const auto& layer : params.gat.layers) h = graph_attention_layer(h, layer, mask, gate);
    state = params.glstm.step(h, state);
    ctx.g_seq.push_back(state.h);
  }
  ctx.g_final = ctx.g_seq.back();
  return ctx;
}

}  // namespace gtppo
