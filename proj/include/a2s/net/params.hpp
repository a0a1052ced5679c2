#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "a2s/net/config.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"

namespace a2s::net {

template <class T>
struct NormParams {
  Matrix<T> scale;  // gamma, channels x 1
  Matrix<T> shift;  // beta
  Matrix<T> running_mean;
  Matrix<T> running_var;
};

/// One direction of one recurrent layer. Gate order along the 4H rows is
/// input, forget, cell, output.
template <class T>
struct LstmParams {
  Matrix<T> input_weight;      // 4H x In
  Matrix<T> recurrent_weight;  // 4H x H
  Matrix<T> bias;              // 4H x 1
};

template <class T>
struct ModelParams {
  std::vector<Matrix<T>> conv_weight;  // Co x (k * k * Ci), column (dt * k + df) * Ci + ci
  std::vector<Matrix<T>> conv_bias;    // Co x 1
  std::vector<NormParams<T>> conv_norm;
  std::vector<NormParams<T>> recurrent_norm;  // before recurrent layers 1..N-1
  std::vector<LstmParams<T>> lstm;            // 2 per layer: forward, backward
  NormParams<T> output_norm;
  Matrix<T> output_weight;  // V x 2H
  Matrix<T> output_bias;    // V x 1

  /// Bumped by every in-place update; forward caches record it.
  std::uint64_t version = 0;
};

template <class T>
struct NamedTensor {
  std::string name;
  T* tensor;
  bool trainable;
};

/// Every tensor in declared order. Running statistics are not trainable.
template <class P>
auto tensors(P& p) {
  using M = std::remove_reference_t<decltype((p.output_weight))>;
  std::vector<NamedTensor<M>> out;
  const auto add = [&](std::string name, M& m, bool trainable) { out.push_back({std::move(name), &m, trainable}); };
  const auto add_norm = [&](const std::string& prefix, auto& n) {
    add(prefix + ".scale", n.scale, true);
    add(prefix + ".shift", n.shift, true);
    add(prefix + ".running_mean", n.running_mean, false);
    add(prefix + ".running_var", n.running_var, false);
  };
  for (std::size_t i = 0; i < p.conv_weight.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i);
    add(prefix + ".weight", p.conv_weight[i], true);
    add(prefix + ".bias", p.conv_bias[i], true);
    add_norm(prefix + ".norm", p.conv_norm[i]);
  }
  for (std::size_t j = 0; j < p.lstm.size(); ++j) {
    const std::size_t layer = j / 2;
    const std::string prefix = "lstm" + std::to_string(layer) + (j % 2 == 0 ? ".fwd" : ".bwd");
    if (j % 2 == 0 && layer >= 1) add_norm("lstm" + std::to_string(layer) + ".norm", p.recurrent_norm[layer - 1]);
    add(prefix + ".input_weight", p.lstm[j].input_weight, true);
    add(prefix + ".recurrent_weight", p.lstm[j].recurrent_weight, true);
    add(prefix + ".bias", p.lstm[j].bias, true);
  }
  add_norm("output.norm", p.output_norm);
  add("output.weight", p.output_weight, true);
  add("output.bias", p.output_bias, true);
  return out;
}

template <class T>
std::size_t parameter_count(const ModelParams<T>& p, bool trainable_only = true) {
  std::size_t n = 0;
  for (const auto& t : tensors(p)) {
    if (t.trainable || !trainable_only) n += static_cast<std::size_t>(t.tensor->size());
  }
  return n;
}

namespace detail {

template <class T>
NormParams<T> norm_params(Eigen::Index channels) {
  return {Matrix<T>::Ones(channels, 1), Matrix<T>::Zero(channels, 1), Matrix<T>::Zero(channels, 1),
          Matrix<T>::Ones(channels, 1)};
}

template <class T>
Matrix<T> uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix<T> m(rows, cols);
  // column-major fill order is part of the seeded layout
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(rng.uniform(-bound, bound));
  }
  return m;
}

}  // namespace detail

/// Same-shaped tensors, all zero.
template <class T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  ModelParams<T> z = p;
  for (auto& t : tensors(z)) t.tensor->setZero();
  z.version = 0;
  return z;
}

/// Uniform(-b, b) weights and biases with b = 1/sqrt(fan_in) for convolution
/// and output layers and b = 1/sqrt(H) for recurrent layers. Norm scales
/// start at one, forget-gate biases at one.
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, {0x1a17u}));
  ModelParams<T> p;
  const int k = cfg.conv_kernel;
  int in_channels = 1;
  for (int i = 0; i < cfg.conv_layers; ++i) {
    const int fan_in = k * k * in_channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    p.conv_weight.push_back(detail::uniform<T>(rng, cfg.conv_filters, fan_in, bound));
    p.conv_bias.push_back(detail::uniform<T>(rng, cfg.conv_filters, 1, bound));
    p.conv_norm.push_back(detail::norm_params<T>(cfg.conv_filters));
    in_channels = cfg.conv_filters;
  }
  const int H = cfg.hidden_units;
  int input = cfg.recurrent_input_dim();
  for (int layer = 0; layer < cfg.recurrent_layers; ++layer) {
    if (layer >= 1) p.recurrent_norm.push_back(detail::norm_params<T>(input));
    for (int dir = 0; dir < 2; ++dir) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(H));
      LstmParams<T> l;
      l.input_weight = detail::uniform<T>(rng, 4 * H, input, bound);
      l.recurrent_weight = detail::uniform<T>(rng, 4 * H, H, bound);
      l.bias = detail::uniform<T>(rng, 4 * H, 1, bound);
      l.bias.block(H, 0, H, 1).setOnes();
      p.lstm.push_back(std::move(l));
    }
    input = 2 * H;
  }
  p.output_norm = detail::norm_params<T>(2 * H);
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * H));
  p.output_weight = detail::uniform<T>(rng, cfg.vocab_size, 2 * H, bound);
  p.output_bias = detail::uniform<T>(rng, cfg.vocab_size, 1, bound);
  return p;
}

/// Element type conversion, used to run float-trained weights in double.
template <class To, class From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  auto src = tensors(p);
  const auto resize_like = [](auto& dst_vec, const auto& src_vec) { dst_vec.resize(src_vec.size()); };
  resize_like(out.conv_weight, p.conv_weight);
  resize_like(out.conv_bias, p.conv_bias);
  resize_like(out.conv_norm, p.conv_norm);
  resize_like(out.recurrent_norm, p.recurrent_norm);
  resize_like(out.lstm, p.lstm);
  auto dst = tensors(out);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<To>();
  out.version = p.version;
  return out;
}

}  // namespace a2s::net
