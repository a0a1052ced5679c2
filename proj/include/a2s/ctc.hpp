#pragma once

// Connectionist temporal classification: loss by the forward-backward
// recursion in log space, its gradient with respect to the pre-softmax
// activations, greedy decoding and the collapse map.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "a2s/codec.hpp"
#include "a2s/error.hpp"
#include "a2s/tensor.hpp"

namespace a2s::ctc {

inline constexpr Token kBlank = 0;

/// Number of adjacent equal labels; each needs a separating blank frame.
inline std::size_t repeats(std::span<const Token> target) {
  std::size_t r = 0;
  for (std::size_t i = 1; i < target.size(); ++i) r += target[i] == target[i - 1];
  return r;
}

/// Minimum number of frames able to emit `target`.
inline std::size_t min_frames(std::span<const Token> target) { return target.size() + repeats(target); }

/// Forward (alpha) and backward (beta) log probabilities over the
/// blank-augmented target (blank, l1, blank, l2, ..., blank), frames x states.
/// alpha(t, s) includes the emission at frame t, beta(t, s) covers frames
/// after t only, so logsumexp_s(alpha + beta) equals the log likelihood at
/// every frame.
template <class T>
struct AlignmentLattice {
  Matrix<T> log_alpha;
  Matrix<T> log_beta;
  std::vector<Token> extended;
  T log_likelihood = neg_inf<T>();
};

template <class T>
struct LossResult {
  T loss = T(0);  // -log P(target | grid)
  AlignmentLattice<T> lattice;
};

namespace detail {

inline std::vector<Token> extend(std::span<const Token> target) {
  std::vector<Token> ext(2 * target.size() + 1, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  return ext;
}

// Whether state s may be entered directly from s - 2.
inline bool can_skip(const std::vector<Token>& ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
}

}  // namespace detail

template <class T>
LossResult<T> ctc_loss(const PosteriorGrid<T>& grid, std::span<const Token> target) {
  const auto L = static_cast<std::size_t>(grid.frames());
  const auto V = static_cast<std::size_t>(grid.symbols());
  for (const auto t : target) {
    if (t == kBlank || t >= V) throw Error(Errc::ShapeMismatch, "target label outside 1..|vocabulary|-1");
  }
  if (L < min_frames(target)) {
    throw Error(Errc::InfeasibleLength, std::to_string(L) + " frames cannot emit " + std::to_string(target.size()) +
                                            " labels with " + std::to_string(repeats(target)) + " repeats");
  }
  const auto& lp = grid.log_probabilities();
  LossResult<T> out;
  auto& lat = out.lattice;
  lat.extended = detail::extend(target);
  const auto& ext = lat.extended;
  const std::size_t S = ext.size();
  const auto Li = static_cast<Eigen::Index>(L);
  const auto Si = static_cast<Eigen::Index>(S);

  lat.log_alpha = Matrix<T>::Constant(Li, Si, neg_inf<T>());
  auto& a = lat.log_alpha;
  a(0, 0) = lp(0, ext[0]);
  if (S > 1) a(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < Li; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      T acc = a(t - 1, si);
      if (s >= 1) acc = log_add(acc, a(t - 1, si - 1));
      if (detail::can_skip(ext, s)) acc = log_add(acc, a(t - 1, si - 2));
      if (acc != neg_inf<T>()) a(t, si) = acc + lp(t, ext[s]);
    }
  }

  lat.log_beta = Matrix<T>::Constant(Li, Si, neg_inf<T>());
  auto& b = lat.log_beta;
  b(Li - 1, Si - 1) = T(0);
  if (S > 1) b(Li - 1, Si - 2) = T(0);
  for (Eigen::Index t = Li - 2; t >= 0; --t) {
    for (std::size_t s = 0; s < S; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      T acc = b(t + 1, si) + lp(t + 1, ext[s]);
      if (s + 1 < S) acc = log_add(acc, b(t + 1, si + 1) + lp(t + 1, ext[s + 1]));
      if (s + 2 < S && detail::can_skip(ext, s + 2)) acc = log_add(acc, b(t + 1, si + 2) + lp(t + 1, ext[s + 2]));
      b(t, si) = acc;
    }
  }

  lat.log_likelihood = a(Li - 1, Si - 1);
  if (S > 1) lat.log_likelihood = log_add(lat.log_likelihood, a(Li - 1, Si - 2));
  out.loss = -lat.log_likelihood;
  return out;
}

template <class T>
LossResult<T> ctc_loss(const PosteriorGrid<T>& grid, const TokenSequence& target) {
  return ctc_loss(grid, std::span<const Token>(target.tokens));
}

/// Gradient of the loss with respect to the pre-softmax activations:
/// softmax output minus the per-frame label occupancy.
template <class T>
Matrix<T> ctc_grad(const AlignmentLattice<T>& lattice, const PosteriorGrid<T>& grid) {
  const Eigen::Index L = grid.frames();
  const Eigen::Index V = grid.symbols();
  Matrix<T> grad = grid.probabilities();
  std::vector<T> occupancy(static_cast<std::size_t>(V));
  for (Eigen::Index t = 0; t < L; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), neg_inf<T>());
    for (std::size_t s = 0; s < lattice.extended.size(); ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      auto& o = occupancy[lattice.extended[s]];
      o = log_add(o, lattice.log_alpha(t, si) + lattice.log_beta(t, si));
    }
    for (Eigen::Index k = 0; k < V; ++k) {
      const T o = occupancy[static_cast<std::size_t>(k)];
      if (o != neg_inf<T>()) grad(t, k) -= std::exp(o - lattice.log_likelihood);
    }
  }
  return grad;
}

/// Per-frame arg-max; ties go to the lowest index.
template <class T>
std::vector<Token> greedy_decode(const PosteriorGrid<T>& grid) {
  const auto& p = grid.probabilities();
  std::vector<Token> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < p.cols(); ++k) {
      if (p(t, k) > p(t, best)) best = k;
    }
    out[static_cast<std::size_t>(t)] = static_cast<Token>(best);
  }
  return out;
}

/// Merges runs of equal labels, then removes blanks.
inline std::vector<Token> collapse(std::span<const Token> frames) {
  std::vector<Token> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0 && frames[i] == frames[i - 1]) continue;
    if (frames[i] != kBlank) out.push_back(frames[i]);
  }
  return out;
}

}  // namespace a2s::ctc
