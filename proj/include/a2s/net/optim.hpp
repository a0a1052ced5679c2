#pragma once

// Nesterov-momentum SGD and the cyclic annealing schedule.

#include <cmath>

#include "a2s/error.hpp"
#include "a2s/net/params.hpp"

namespace a2s::net {

struct Schedule {
  double base_lr = 3e-4;
  double decay = 1.1;
  int cycle = 50;
};

/// base / decay^(epoch mod cycle); epochs count from 0.
inline double lr_at_epoch(int epoch, const Schedule& s = {}) {
  if (epoch < 0) throw Error(Errc::InvalidConfig, "negative epoch");
  return s.base_lr / std::pow(s.decay, epoch % s.cycle);
}

template <class T>
double global_norm(const ModelParams<T>& grads) {
  double sq = 0.0;
  for (const auto& t : tensors(grads)) {
    if (t.trainable) sq += t.tensor->template cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

/// Rescales trainable gradients so their global norm is at most max_norm.
template <class T>
void clip_global_norm(ModelParams<T>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm <= 0.0 || norm <= max_norm) return;
  const T scale = static_cast<T>(max_norm / norm);
  for (auto& t : tensors(grads)) {
    if (t.trainable) *t.tensor *= scale;
  }
}

/// v <- mu v + g; p <- p - lr (g + mu v). Running statistics are left alone.
template <class T>
void sgd_nesterov_step(ModelParams<T>& params, const ModelParams<T>& grads, ModelParams<T>& velocity, double lr,
                       double momentum = 0.9) {
  auto p = tensors(params);
  const auto g = tensors(grads);
  auto v = tensors(velocity);
  if (p.size() != g.size() || p.size() != v.size()) throw Error(Errc::ShapeMismatch, "optimizer tensor count mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].tensor->rows() != g[i].tensor->rows() || p[i].tensor->cols() != g[i].tensor->cols() ||
        p[i].tensor->rows() != v[i].tensor->rows() || p[i].tensor->cols() != v[i].tensor->cols()) {
      throw Error(Errc::ShapeMismatch, "optimizer shape mismatch at " + p[i].name);
    }
    if (p[i].trainable && !g[i].tensor->allFinite()) {
      throw Error(Errc::NonFiniteGradient, "non-finite gradient in " + p[i].name);
    }
  }
  const T mu = static_cast<T>(momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p[i].trainable) continue;
    *v[i].tensor = mu * *v[i].tensor + *g[i].tensor;
    *p[i].tensor -= rate * (*g[i].tensor + mu * *v[i].tensor);
  }
  ++params.version;
}

}  // namespace a2s::net
