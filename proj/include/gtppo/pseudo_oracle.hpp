#pragma once

// Pseudo oracle predictor: paired Gaussian-LSTMs over observed and
// ground-truth kinematics, their KL gap, and assembly of the latent z.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gtppo/layers.hpp"

namespace gtppo {

inline constexpr int kKinematicChannels = 3;  // positions, velocities, accelerations

struct GaussianLstmParams {
  Linear fc_in;      // 2 -> embed
  LstmCell lstm;     // embed -> hidden
  Linear fc_mu;      // hidden -> latent
  Linear fc_logvar;  // hidden -> latent

  static GaussianLstmParams create(Index embed, Index hidden, Index latent, std::mt19937_64& rng) {
    return {Linear::create(2, embed, rng), LstmCell::create(embed, hidden, rng), Linear::create(hidden, latent, rng),
            Linear::create(hidden, latent, rng)};
  }
  static GaussianLstmParams zeros(Index embed, Index hidden, Index latent) {
    return {Linear::zeros(2, embed), LstmCell::zeros(embed, hidden), Linear::zeros(hidden, latent),
            Linear::zeros(hidden, latent)};
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    fc_in.visit(prefix + ".fc_in", ParamGroup::latent, f);
    lstm.visit(prefix + ".lstm", ParamGroup::latent, f);
    fc_mu.visit(prefix + ".fc_mu", ParamGroup::latent, f);
    fc_logvar.visit(prefix + ".fc_logvar", ParamGroup::latent, f);
  }
};

/// Diagonal Gaussian per row: sigma = exp(logvar / 2).
struct GaussianHead {
  Var mu;      // n x d
  Var logvar;  // n x d

  Var sigma() const { return ad::exp(ad::scale(logvar, 0.5)); }
};

/// Encodes a channel sequence (`steps[t]` is n x 2) into a diagonal Gaussian.
inline GaussianHead gaussian_lstm(std::span<const Matrix> steps, const GaussianLstmParams& params) {
  if (steps.empty()) throw ShapeError("gaussian_lstm: need at least one step");
  const Index n = steps.front().rows();
  LstmState state = params.lstm.zero_state(n);
  for (const Matrix& x : steps) {
    if (x.rows() != n || x.cols() != 2) throw ShapeError("gaussian_lstm: channel input must be n x 2");
    state = params.lstm.step(params.fc_in(ad::constant(x)), state);
  }
  return {params.fc_mu(state.h), params.fc_logvar(state.h)};
}

struct PopParams {
  std::array<GaussianLstmParams, kKinematicChannels> obs;  // observed-history branch
  std::array<GaussianLstmParams, kKinematicChannels> gt;   // ground-truth branch

  static PopParams create(Index embed, Index hidden, Index latent, std::mt19937_64& rng) {
    PopParams p;
    for (auto& g : p.obs) g = GaussianLstmParams::create(embed, hidden, latent, rng);
    for (auto& g : p.gt) g = GaussianLstmParams::create(embed, hidden, latent, rng);
    return p;
  }

  void visit(const std::string& prefix, const ParamVisitor& f) {
    static const char* names[] = {"positions", "velocities", "accelerations"};
    for (int k = 0; k < kKinematicChannels; ++k) {
      obs[k].visit(prefix + ".obs." + names[k], f);
      gt[k].visit(prefix + ".gt." + names[k], f);
    }
  }
};

/// Per-channel Gaussians of both branches plus the width of the noise block.
struct LatentSpec {
  std::array<std::optional<GaussianHead>, kKinematicChannels> obs;
  std::array<std::optional<GaussianHead>, kKinematicChannels> gt;
  Index noise_dim = 4;

  bool has_obs() const {
    for (const auto& h : obs)
      if (!h) return false;
    return true;
  }
  bool has_gt() const {
    for (const auto& h : gt)
      if (!h) return false;
    return true;
  }
};

enum class Stage { train, test };

namespace detail {

inline void check_positive_sigma(const GaussianHead& h) {
  const Matrix& lv = h.logvar.value();
  for (Index i = 0; i < lv.size(); ++i) {
    const double s = std::exp(0.5 * lv(i));
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("kl_loss: standard deviation must be positive and finite");
  }
}

}  // namespace detail

/// KL(p || q) for diagonal Gaussians, summed over dimensions; n x 1.
inline Var kl_divergence(const GaussianHead& p, const GaussianHead& q) {
  detail::check_positive_sigma(p);
  detail::check_positive_sigma(q);
  if (p.mu.rows() != q.mu.rows() || p.mu.cols() != q.mu.cols()) throw ShapeError("kl_divergence: dimension mismatch");
  // 0.5 * (lv_q - lv_p + exp(lv_p - lv_q) + (mu_p - mu_q)^2 exp(-lv_q) - 1)
  Var diff = ad::sub(p.mu, q.mu);
  Var lv_gap = ad::sub(p.logvar, q.logvar);
  Var ratio = ad::add(ad::exp(lv_gap), ad::mul(ad::square(diff), ad::exp(ad::scale(q.logvar, -1.0))));
  Var terms = ad::sub(ratio, lv_gap);
  Matrix ones = Matrix::Ones(p.mu.cols(), 1);
  Var per_row = ad::matmul(terms, ad::constant(ones));
  Matrix offset = Matrix::Constant(p.mu.rows(), 1, -static_cast<double>(p.mu.cols()));
  return ad::scale(ad::add(per_row, ad::constant(offset)), 0.5);
}

/// Sum over channels of KL(observed || ground truth), one value per pedestrian.
inline Var kl_loss(std::span<const GaussianHead> obs, std::span<const GaussianHead> gt) {
  if (obs.size() != gt.size() || obs.empty()) throw ShapeError("kl_loss: branches must list the same channels");
  Var total;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    Var term = kl_divergence(obs[k], gt[k]);
    total = total.defined() ? total + term : term;
  }
  return total;
}

inline Var kl_loss(const LatentSpec& spec) {
  if (!spec.has_obs() || !spec.has_gt()) throw ShapeError("kl_loss: both branches are required");
  std::vector<GaussianHead> o, g;
  for (int k = 0; k < kKinematicChannels; ++k) {
    o.push_back(*spec.obs[k]);
    g.push_back(*spec.gt[k]);
  }
  return kl_loss(o, g);
}

struct LatentOptions {
  /// Use the means and a zero noise block instead of sampling.
  bool zero_variance = false;
};

/// z = [mu_1 + sigma_1 eps_1 | ... | mu_K + sigma_K eps_K | noise], n x (K*d + noise).
///
/// The training stage samples the ground-truth branch, the test stage the
/// observed branch. All draws come from a generator seeded with `seed`.
inline Var assemble_latent(const LatentSpec& spec, Stage stage, std::uint64_t seed, const LatentOptions& options = {}) {
  const auto& branch = stage == Stage::train ? spec.gt : spec.obs;
  for (const auto& h : branch) {
    if (!h) throw ShapeError(std::string("assemble_latent: missing ") + (stage == Stage::train ? "ground-truth" : "observed") +
                             " branch");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = options.zero_variance ? 0.0 : normal(rng);
    return m;
  };
  std::vector<Var> parts;
  for (const auto& h : branch) {
    Var eps = ad::constant(draw(h->mu.rows(), h->mu.cols()));
    parts.push_back(ad::add(h->mu, ad::mul(h->sigma(), eps)));
  }
  parts.push_back(ad::constant(draw(branch.front()->mu.rows(), spec.noise_dim)));
  return ad::concat_cols(std::span<const Var>(parts));
}

/// Pure standard-normal latent, used when the predictor is ablated.
inline Var noise_latent(Index rows, Index dim, std::uint64_t seed, bool zero_variance = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, dim);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < dim; ++j) m(i, j) = zero_variance ? 0.0 : normal(rng);
  return ad::constant(std::move(m));
}

}  // namespace gtppo
