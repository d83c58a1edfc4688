#pragma once

// LSTM encoder over observed relative displacements with temporal attention.

#include <random>
#include <span>
#include <string>
#include <vector>

#include "gtppo/layers.hpp"

namespace gtppo {

struct EncoderParams {
  Linear embed;            // 2 -> d_e
  LstmCell lstm;           // d_e -> h
  Linear attn_transform;   // h -> h, weight and bias of the tanh transform
  Var attn_score;          // h x 1 scoring vector

  static EncoderParams create(Index embed_dim, Index hidden, std::mt19937_64& rng) {
    EncoderParams p;
    p.embed = Linear::create(2, embed_dim, rng);
    p.lstm = LstmCell::create(embed_dim, hidden, rng);
    p.attn_transform = Linear::create(hidden, hidden, rng);
    p.attn_score = ad::parameter(uniform_init(hidden, 1, hidden, rng));
    return p;
  }

  Index hidden() const { return lstm.hidden_dim(); }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    embed.visit(prefix + ".embed", ParamGroup::main, f);
    lstm.visit(prefix + ".lstm", ParamGroup::main, f);
    attn_transform.visit(prefix + ".attn_transform", ParamGroup::main, f);
    f(prefix + ".attn_score", attn_score, ParamGroup::main);
  }
};

/// Result of temporal attention over a batch of n pedestrians.
struct TemporalAttention {
  Var weights;  // n x T, rows sum to one
  Var summary;  // n x h
};

/// Runs the encoder LSTM from a zero state.
///
/// `displacements[t]` holds the (dx, dy) of every pedestrian at step t (n x 2).
/// Returns the hidden state at every step, each n x h.
inline std::vector<Var> encode_hidden_states(std::span<const Matrix> displacements, const EncoderParams& params) {
  if (displacements.empty()) throw ShapeError("encode_hidden_states: need at least one step");
  const Index n = displacements.front().rows();
  LstmState state = params.lstm.zero_state(n);
  std::vector<Var> hidden;
  hidden.reserve(displacements.size());
  for (const Matrix& d : displacements) {
    if (d.rows() != n || d.cols() != 2) throw ShapeError("encode_hidden_states: displacements must be n x 2");
    Var e = params.embed(ad::constant(d));
    state = params.lstm.step(e, state);
    hidden.push_back(state.h);
  }
  return hidden;
}

/// u_t = tanh(W_w m_t + b_w), weights = softmax_t(u_t . W_p), summary = sum_t weights_t m_t.
inline TemporalAttention temporal_attention(std::span<const Var> hidden_seq, const EncoderParams& params) {
  if (hidden_seq.empty()) throw ShapeError("temporal_attention: empty hidden sequence");
  std::vector<Var> scores;
  scores.reserve(hidden_seq.size());
  for (const Var& m : hidden_seq) {
    Var u = ad::tanh(params.attn_transform(m));
    scores.push_back(ad::matmul(u, params.attn_score));
  }
  Var weights = ad::softmax_rows(ad::concat_cols(std::span<const Var>(scores)));
  Var summary;
  for (std::size_t t = 0; t < hidden_seq.size(); ++t) {
    Var term = ad::mul_col(hidden_seq[t], ad::slice_cols(weights, static_cast<Index>(t), 1));
    summary = summary.defined() ? summary + term : term;
  }
  return {weights, summary};
}

}  // namespace gtppo
