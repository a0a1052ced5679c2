#pragma once

// Convolutional-recurrent acoustic model: strided convolutions over
// frequency, bidirectional LSTMs over time, per-frame softmax.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "a2s/error.hpp"
#include "a2s/net/config.hpp"
#include "a2s/net/layers.hpp"
#include "a2s/net/params.hpp"
#include "a2s/rng.hpp"
#include "a2s/spectrogram.hpp"
#include "a2s/tensor.hpp"

namespace a2s::net {

enum class Mode { Train, Eval };

template <class T>
struct ConvCache {
  Act<T> patches;
  NormCache<T> norm;
  Act<T> pre_activation;
  Act<T> dropout;  // empty when no dropout was applied
};

template <class T>
struct ForwardCache {
  std::uint64_t params_version = 0;
  Eigen::Index input_frames = 0;
  std::vector<ConvCache<T>> conv;
  std::vector<NormCache<T>> recurrent_norm;
  std::vector<LstmCache<T>> lstm;
  Act<T> output_dropout;
  NormCache<T> output_norm;
  Act<T> output_input;  // normalized features fed to the output layer
};

template <class T>
struct ForwardResult {
  Matrix<T> logits;
  PosteriorGrid<T> posteriors;
  std::optional<ForwardCache<T>> cache;  // training mode only
  std::vector<ChannelMoments> norm_moments;  // training mode only, in norm-layer order
};

/// Converts a spectrogram to a network input.
template <class T>
Act<T> to_input(const Spectrogram& s) {
  Act<T> x(s.frames, s.bins);
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t b = 0; b < s.bins; ++b) x(t, b) = static_cast<T>(s.at(t, b));
  }
  return x;
}

/// Gradient with respect to logits given a gradient on the softmax outputs.
template <class T>
Matrix<T> softmax_backward(const Matrix<T>& probs, const Matrix<T>& dprobs) {
  Matrix<T> d(probs.rows(), probs.cols());
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    const T dot = probs.row(t).dot(dprobs.row(t));
    d.row(t) = probs.row(t).array() * (dprobs.row(t).array() - dot);
  }
  return d;
}

/// Norm layers in the order their moments are reported.
template <class P>
auto norm_layers(P& p) {
  std::vector<decltype(&(p.output_norm))> out;
  for (auto& n : p.conv_norm) out.push_back(&n);
  for (auto& n : p.recurrent_norm) out.push_back(&n);
  out.push_back(&p.output_norm);
  return out;
}

template <class T>
void update_running_stats(ModelParams<T>& p, const std::vector<ChannelMoments>& moments, double momentum = 0.1) {
  auto layers = norm_layers(p);
  if (moments.size() != layers.size()) throw Error(Errc::ShapeMismatch, "norm moment count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) update_running_stats(*layers[i], moments[i], momentum);
  ++p.version;
}

template <class T>
class Crnn {
 public:
  Crnn(ModelConfig config, ModelParams<T> params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    check_shapes();
  }

  static Crnn initialize(const ModelConfig& config, std::uint64_t seed) {
    return Crnn(config, init_params<T>(config, seed));
  }

  const ModelConfig& config() const { return config_; }
  const ModelParams<T>& params() const { return params_; }
  /// In-place edits must bump params().version so stale caches are caught.
  ModelParams<T>& params() { return params_; }

  /// Frames x bins input to frames (doubled when configured) x vocabulary
  /// posteriors. Dropout masks are drawn from `seed` in training mode.
  ForwardResult<T> forward(const Act<T>& input, Mode mode, std::uint64_t seed = 0) const {
    if (input.cols() != config_.input_bins) {
      throw Error(Errc::ShapeMismatch, "input has " + std::to_string(input.cols()) + " bins, model expects " +
                                           std::to_string(config_.input_bins));
    }
    if (input.rows() < 1) throw Error(Errc::ShapeMismatch, "input has no frames");
    const bool train = mode == Mode::Train;
    const bool drop = train && config_.dropout > 0.0;
    Rng rng(derive_seed(seed, {0xd509u}));
    ForwardResult<T> result;
    ForwardCache<T> cache;
    cache.params_version = params_.version;
    const Eigen::Index W = input.rows();
    cache.input_frames = W;
    auto* moments = train ? &result.norm_moments : nullptr;
    const auto gather = [&]() -> ChannelMoments* {
      if (!moments) return nullptr;
      moments->emplace_back();
      return &moments->back();
    };

    Act<T> a = input;
    for (int i = 0; i < config_.conv_layers; ++i) {
      const ConvShape s = conv_shape(i);
      ConvCache<T> cc;
      cc.patches = im2col(a, s);
      const Act<T> z = conv_forward(cc.patches, params_.conv_weight[i], params_.conv_bias[i], W, s);
      cc.pre_activation = norm_forward(z, params_.conv_norm[i], train ? &cc.norm : nullptr, gather());
      a = clipped_relu(cc.pre_activation);
      if (drop) {
        cc.dropout = dropout_mask<T>(a.rows(), a.cols(), config_.dropout, rng);
        a = a.cwiseProduct(cc.dropout);
      }
      if (train) cache.conv.push_back(std::move(cc));
    }

    if (config_.frame_doubling) a = frame_double(a);

    for (int layer = 0; layer < config_.recurrent_layers; ++layer) {
      if (layer >= 1) {
        NormCache<T> nc;
        a = norm_forward(a, params_.recurrent_norm[layer - 1], train ? &nc : nullptr, gather());
        if (train) cache.recurrent_norm.push_back(std::move(nc));
      }
      LstmCache<T> fwd, bwd;
      const Act<T> hf = lstm_forward(a, params_.lstm[2 * layer], false, train ? &fwd : nullptr);
      const Act<T> hb = lstm_forward(a, params_.lstm[2 * layer + 1], true, train ? &bwd : nullptr);
      a.resize(hf.rows(), hf.cols() + hb.cols());
      a << hf, hb;
      if (train) {
        cache.lstm.push_back(std::move(fwd));
        cache.lstm.push_back(std::move(bwd));
      }
    }

    if (drop) {
      cache.output_dropout = dropout_mask<T>(a.rows(), a.cols(), config_.dropout, rng);
      a = a.cwiseProduct(cache.output_dropout);
    }
    a = norm_forward(a, params_.output_norm, train ? &cache.output_norm : nullptr, gather());
    Matrix<T> logits = a * params_.output_weight.transpose();
    logits.rowwise() += params_.output_bias.col(0).transpose();
    result.posteriors = PosteriorGrid<T>::from_logits(logits);
    result.logits = std::move(logits);
    if (train) {
      cache.output_input = std::move(a);
      result.cache = std::move(cache);
    }
    return result;
  }

  /// Parameter gradients (running statistics get zero) for a gradient with
  /// respect to the logits of the cached forward pass.
  ModelParams<T> backward(const ForwardCache<T>& cache, const Matrix<T>& dlogits) const {
    if (cache.params_version != params_.version) {
      throw Error(Errc::StaleCache, "parameters changed since the forward pass");
    }
    if (dlogits.rows() != cache.output_input.rows() || dlogits.cols() != config_.vocab_size) {
      throw Error(Errc::ShapeMismatch, "logit gradient shape does not match the forward pass");
    }
    ModelParams<T> g = zeros_like(params_);
    g.output_weight.noalias() += dlogits.transpose() * cache.output_input;
    g.output_bias += dlogits.colwise().sum().transpose();
    Act<T> d = dlogits * params_.output_weight;
    d = norm_backward(cache.output_norm, params_.output_norm, d, g.output_norm);
    if (cache.output_dropout.size() > 0) d = d.cwiseProduct(cache.output_dropout);

    const Eigen::Index H = config_.hidden_units;
    for (int layer = config_.recurrent_layers - 1; layer >= 0; --layer) {
      const Act<T> df = d.leftCols(H);
      const Act<T> db = d.rightCols(H);
      d = lstm_backward(cache.lstm[2 * layer], params_.lstm[2 * layer], df, g.lstm[2 * layer]);
      d += lstm_backward(cache.lstm[2 * layer + 1], params_.lstm[2 * layer + 1], db, g.lstm[2 * layer + 1]);
      if (layer >= 1) {
        d = norm_backward(cache.recurrent_norm[layer - 1], params_.recurrent_norm[layer - 1], d,
                          g.recurrent_norm[layer - 1]);
      }
    }

    const Eigen::Index W = cache.input_frames;
    if (config_.frame_doubling) d = frame_halve(d);

    for (int i = config_.conv_layers - 1; i >= 0; --i) {
      const ConvShape s = conv_shape(i);
      const ConvCache<T>& cc = cache.conv[i];
      if (cc.dropout.size() > 0) d = d.cwiseProduct(cc.dropout);
      d = clipped_relu_backward(cc.pre_activation, d);
      d = norm_backward(cc.norm, params_.conv_norm[i], d, g.conv_norm[i]);
      const Act<T> dpatches = conv_backward(cc.patches, params_.conv_weight[i], d, s, g.conv_weight[i], g.conv_bias[i]);
      if (i > 0) d = col2im(dpatches, W, s);
    }
    return g;
  }

 private:
  ConvShape conv_shape(int i) const {
    ConvShape s;
    s.kernel = config_.conv_kernel;
    s.stride = config_.conv_freq_stride;
    s.in_bins = config_.input_bins;
    for (int k = 0; k < i; ++k) s.in_bins = (s.in_bins + s.stride - 1) / s.stride;
    s.out_bins = (s.in_bins + s.stride - 1) / s.stride;
    s.in_channels = i == 0 ? 1 : config_.conv_filters;
    s.out_channels = config_.conv_filters;
    return s;
  }

  void check_shapes() const {
    const ModelParams<T> expected = init_params<T>(config_, 0);
    const auto& p = params_;
    if (p.conv_weight.size() != expected.conv_weight.size() || p.conv_bias.size() != p.conv_weight.size() ||
        p.conv_norm.size() != p.conv_weight.size() || p.lstm.size() != expected.lstm.size() ||
        p.recurrent_norm.size() != expected.recurrent_norm.size()) {
      throw Error(Errc::ShapeMismatch, "parameter set does not match the config");
    }
    const auto want = tensors(expected);
    const auto have = tensors(params_);
    if (want.size() != have.size()) throw Error(Errc::ShapeMismatch, "parameter set does not match the config");
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (want[i].tensor->rows() != have[i].tensor->rows() || want[i].tensor->cols() != have[i].tensor->cols()) {
        throw Error(Errc::ShapeMismatch, "tensor " + want[i].name + " has the wrong shape");
      }
    }
  }

  ModelConfig config_;
  ModelParams<T> params_;
};

}  // namespace a2s::net
