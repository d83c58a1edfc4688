#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gtppo/autodiff.hpp"

namespace gtppo {

using ad::Index;
using ad::Matrix;
using ad::Var;

/// Parameters are split into two optimizer groups with separate learning rates.
enum class ParamGroup { main, latent };

/// Visitor over every learnable tensor of a module: (name, tensor, group).
using ParamVisitor = std::function<void(const std::string&, Var&, ParamGroup)>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for linear and
/// recurrent layers.
inline Matrix uniform_init(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

struct Linear {
  Var weight;  // out x in
  Var bias;    // 1 x out

  static Linear create(Index in, Index out, std::mt19937_64& rng) {
    Linear l;
    l.weight = ad::parameter(uniform_init(out, in, in, rng));
    l.bias = ad::parameter(uniform_init(1, out, in, rng));
    return l;
  }
  static Linear zeros(Index in, Index out) {
    return {ad::parameter(Matrix::Zero(out, in)), ad::parameter(Matrix::Zero(1, out))};
  }

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
  Var operator()(const Var& x) const { return ad::linear(x, weight, bias); }

  void visit(const std::string& prefix, ParamGroup group, const ParamVisitor& f) {
    f(prefix + ".weight", weight, group);
    f(prefix + ".bias", bias, group);
  }
};

/// Hidden and cell state of a recurrent unit, one row per sequence.
struct LstmState {
  Var h;
  Var c;
};

/// Single-layer LSTM cell with gate order (input, forget, cell, output).
struct LstmCell {
  Var w_ih;  // 4H x in
  Var w_hh;  // 4H x H
  Var bias;  // 1 x 4H

  static LstmCell create(Index in, Index hidden, std::mt19937_64& rng) {
    LstmCell c;
    c.w_ih = ad::parameter(uniform_init(4 * hidden, in, hidden, rng));
    c.w_hh = ad::parameter(uniform_init(4 * hidden, hidden, hidden, rng));
    c.bias = ad::parameter(uniform_init(1, 4 * hidden, hidden, rng));
    return c;
  }
  static LstmCell zeros(Index in, Index hidden) {
    return {ad::parameter(Matrix::Zero(4 * hidden, in)), ad::parameter(Matrix::Zero(4 * hidden, hidden)),
            ad::parameter(Matrix::Zero(1, 4 * hidden))};
  }

  Index in_dim() const { return w_ih.cols(); }
  Index hidden_dim() const { return w_hh.cols(); }

  LstmState zero_state(Index rows) const {
    return {ad::constant(Matrix::Zero(rows, hidden_dim())), ad::constant(Matrix::Zero(rows, hidden_dim()))};
  }

  LstmState step(const Var& x, const LstmState& s) const {
    Var hc = ad::lstm_cell(x, s.h, s.c, w_ih, w_hh, bias);
    const Index H = hidden_dim();
    return {ad::slice_cols(hc, 0, H), ad::slice_cols(hc, H, H)};
  }

  void visit(const std::string& prefix, ParamGroup group, const ParamVisitor& f) {
    f(prefix + ".w_ih", w_ih, group);
    f(prefix + ".w_hh", w_hh, group);
    f(prefix + ".bias", bias, group);
  }
};

/// Deep copy of a parameter tensor (fresh leaf, no shared gradient).
inline Var clone_param(const Var& v) { return ad::parameter(v.value()); }

/// 64-bit mixing function used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(base);
  for (std::uint64_t p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
  return s;
}

}  // namespace gtppo
