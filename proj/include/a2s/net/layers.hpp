#pragma once

// Layer kernels with explicit caches. Activations are row-major with one row
// per frame; a convolutional feature map of F bins and C channels is stored
// frequency-major, column f * C + c.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "a2s/error.hpp"
#include "a2s/net/params.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"

namespace a2s::net {

template <class T>
using Act = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kActivationCeiling = 20.0;

// ---------------------------------------------------------------- convolution

struct ConvShape {
  int in_bins = 0;
  int in_channels = 0;
  int out_bins = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;  // along frequency only

  int patch() const { return kernel * kernel * in_channels; }
};

/// Patch matrix: row t * out_bins + fo, column (dt * k + df) * Ci + ci, zero
/// outside the input (same padding).
template <class T>
Act<T> im2col(const Act<T>& x, const ConvShape& s) {
  const Eigen::Index W = x.rows();
  const int pad = s.kernel / 2;
  Act<T> p = Act<T>::Zero(W * s.out_bins, s.patch());
  for (Eigen::Index t = 0; t < W; ++t) {
    for (int fo = 0; fo < s.out_bins; ++fo) {
      auto row = p.row(t * s.out_bins + fo);
      for (int dt = 0; dt < s.kernel; ++dt) {
        const Eigen::Index ti = t + dt - pad;
        if (ti < 0 || ti >= W) continue;
        for (int df = 0; df < s.kernel; ++df) {
          const int fi = s.stride * fo + df - pad;
          if (fi < 0 || fi >= s.in_bins) continue;
          row.segment((dt * s.kernel + df) * s.in_channels, s.in_channels) =
              x.row(ti).segment(fi * s.in_channels, s.in_channels);
        }
      }
    }
  }
  return p;
}

/// Adjoint of im2col: scatters patch gradients back onto the input map.
template <class T>
Act<T> col2im(const Act<T>& dp, Eigen::Index frames, const ConvShape& s) {
  const int pad = s.kernel / 2;
  Act<T> dx = Act<T>::Zero(frames, static_cast<Eigen::Index>(s.in_bins) * s.in_channels);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int fo = 0; fo < s.out_bins; ++fo) {
      const auto row = dp.row(t * s.out_bins + fo);
      for (int dt = 0; dt < s.kernel; ++dt) {
        const Eigen::Index ti = t + dt - pad;
        if (ti < 0 || ti >= frames) continue;
        for (int df = 0; df < s.kernel; ++df) {
          const int fi = s.stride * fo + df - pad;
          if (fi < 0 || fi >= s.in_bins) continue;
          dx.row(ti).segment(fi * s.in_channels, s.in_channels) +=
              row.segment((dt * s.kernel + df) * s.in_channels, s.in_channels);
        }
      }
    }
  }
  return dx;
}

/// Frames x (out_bins * out_channels) output of one convolution.
template <class T>
Act<T> conv_forward(const Act<T>& patches, const Matrix<T>& weight, const Matrix<T>& bias, Eigen::Index frames,
                    const ConvShape& s) {
  Act<T> out = patches * weight.transpose();
  out.rowwise() += bias.col(0).transpose();
  return Eigen::Map<const Act<T>>(out.data(), frames, static_cast<Eigen::Index>(s.out_bins) * s.out_channels);
}

/// Accumulates weight and bias gradients; returns the patch gradient.
template <class T>
Act<T> conv_backward(const Act<T>& patches, const Matrix<T>& weight, const Act<T>& dy, const ConvShape& s,
                     Matrix<T>& dweight, Matrix<T>& dbias) {
  const Eigen::Map<const Act<T>> dz(dy.data(), patches.rows(), s.out_channels);
  dweight.noalias() += dz.transpose() * patches;
  dbias += dz.colwise().sum().transpose();
  return dz * weight;
}

// ---------------------------------------------------------------- batch norm

/// Per-channel sums gathered in training mode; the trainer folds them into the
/// running statistics after each step.
struct ChannelMoments {
  Eigen::VectorXd sum;
  Eigen::VectorXd sum_squares;
  double count = 0.0;

  void add(const ChannelMoments& o) {
    if (sum.size() == 0) {
      *this = o;
      return;
    }
    sum += o.sum;
    sum_squares += o.sum_squares;
    count += o.count;
  }
};

template <class T>
struct NormCache {
  Act<T> normalized;  // (x - mean) / sqrt(var + eps)
  Matrix<T> inv_std;
};

/// Normalizes with the running statistics; channel of column j is j % C.
template <class T>
Act<T> norm_forward(const Act<T>& x, const NormParams<T>& p, NormCache<T>* cache, ChannelMoments* moments) {
  const Eigen::Index C = p.scale.rows();
  Matrix<T> inv_std(C, 1);
  for (Eigen::Index c = 0; c < C; ++c) {
    inv_std(c, 0) = T(1) / std::sqrt(p.running_var(c, 0) + static_cast<T>(kNormEpsilon));
  }
  Act<T> xhat(x.rows(), x.cols());
  Act<T> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Eigen::Index c = j % C;
      xhat(i, j) = (x(i, j) - p.running_mean(c, 0)) * inv_std(c, 0);
      y(i, j) = xhat(i, j) * p.scale(c, 0) + p.shift(c, 0);
    }
  }
  if (moments) {
    moments->sum = Eigen::VectorXd::Zero(C);
    moments->sum_squares = Eigen::VectorXd::Zero(C);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double v = static_cast<double>(x(i, j));
        moments->sum(j % C) += v;
        moments->sum_squares(j % C) += v * v;
      }
    }
    moments->count = static_cast<double>(x.size() / C);
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Act<T> norm_backward(const NormCache<T>& cache, const NormParams<T>& p, const Act<T>& dy, NormParams<T>& grad) {
  const Eigen::Index C = p.scale.rows();
  Act<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    for (Eigen::Index j = 0; j < dy.cols(); ++j) {
      const Eigen::Index c = j % C;
      grad.scale(c, 0) += dy(i, j) * cache.normalized(i, j);
      grad.shift(c, 0) += dy(i, j);
      dx(i, j) = dy(i, j) * p.scale(c, 0) * cache.inv_std(c, 0);
    }
  }
  return dx;
}

/// Exponential moving average of the running statistics; the variance
/// estimate is unbiased.
template <class T>
void update_running_stats(NormParams<T>& p, const ChannelMoments& m, double momentum) {
  if (m.count <= 0.0) return;
  for (Eigen::Index c = 0; c < p.running_mean.rows(); ++c) {
    const double mean = m.sum(c) / m.count;
    double var = std::max(0.0, m.sum_squares(c) / m.count - mean * mean);
    if (m.count > 1.0) var *= m.count / (m.count - 1.0);
    p.running_mean(c, 0) = static_cast<T>((1.0 - momentum) * p.running_mean(c, 0) + momentum * mean);
    p.running_var(c, 0) = static_cast<T>((1.0 - momentum) * p.running_var(c, 0) + momentum * var);
  }
}

// ---------------------------------------------------------------- pointwise

/// min(max(x, 0), 20).
template <class T>
Act<T> clipped_relu(const Act<T>& x) {
  return x.array().max(T(0)).min(static_cast<T>(kActivationCeiling)).matrix();
}

template <class T>
Act<T> clipped_relu_backward(const Act<T>& x, const Act<T>& dy) {
  const T ceiling = static_cast<T>(kActivationCeiling);
  return (x.array() > T(0) && x.array() < ceiling).select(dy, Act<T>::Zero(dy.rows(), dy.cols()));
}

/// Inverted dropout mask: 0 with probability p, 1 / (1 - p) otherwise.
template <class T>
Act<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Act<T> mask(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = rng.uniform() < p ? T(0) : keep;
  }
  return mask;
}

/// Splits every frame's features in half along time: W x D becomes 2W x D/2,
/// frame i yielding frames 2i and 2i + 1. A free reshape in row-major order.
template <class T>
Act<T> frame_double(const Act<T>& x) {
  if (x.cols() % 2 != 0) throw Error(Errc::OddFeatureDim, "frame doubling needs an even feature dimension");
  return Eigen::Map<const Act<T>>(x.data(), 2 * x.rows(), x.cols() / 2);
}

/// Inverse of frame_double, used for its gradient.
template <class T>
Act<T> frame_halve(const Act<T>& x) {
  if (x.rows() % 2 != 0) throw Error(Errc::ShapeMismatch, "frame halving needs an even frame count");
  return Eigen::Map<const Act<T>>(x.data(), x.rows() / 2, x.cols() * 2);
}

// ---------------------------------------------------------------- recurrence

template <class T>
struct LstmCache {
  Act<T> input;
  Act<T> gates;  // post-activation i, f, g, o
  Act<T> cell;
  Act<T> cell_tanh;
  Act<T> hidden;
  bool reverse = false;
};

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// One direction over the whole sequence. Returns frames x H hidden states,
/// indexed by frame regardless of direction.
template <class T>
Act<T> lstm_forward(const Act<T>& x, const LstmParams<T>& p, bool reverse, LstmCache<T>* cache) {
  const Eigen::Index L = x.rows();
  const Eigen::Index H = p.recurrent_weight.cols();
  Act<T> z = x * p.input_weight.transpose();
  z.rowwise() += p.bias.col(0).transpose();
  Act<T> gates(L, 4 * H), cell(L, H), cell_tanh(L, H), hidden(L, H);
  RowVector<T> h = RowVector<T>::Zero(H);
  RowVector<T> c = RowVector<T>::Zero(H);
  RowVector<T> zt(4 * H);
  for (Eigen::Index k = 0; k < L; ++k) {
    const Eigen::Index t = reverse ? L - 1 - k : k;
    zt.noalias() = z.row(t) + h * p.recurrent_weight.transpose();
    for (Eigen::Index j = 0; j < H; ++j) {
      const T i = sigmoid(zt(j));
      const T f = sigmoid(zt(H + j));
      const T g = std::tanh(zt(2 * H + j));
      const T o = sigmoid(zt(3 * H + j));
      c(j) = f * c(j) + i * g;
      const T tc = std::tanh(c(j));
      h(j) = o * tc;
      gates(t, j) = i;
      gates(t, H + j) = f;
      gates(t, 2 * H + j) = g;
      gates(t, 3 * H + j) = o;
      cell_tanh(t, j) = tc;
    }
    cell.row(t) = c;
    hidden.row(t) = h;
  }
  if (cache) {
    cache->input = x;
    cache->gates = std::move(gates);
    cache->cell = std::move(cell);
    cache->cell_tanh = std::move(cell_tanh);
    cache->hidden = hidden;
    cache->reverse = reverse;
  }
  return hidden;
}

/// Backpropagation through time. Accumulates parameter gradients and returns
/// the input gradient.
template <class T>
Act<T> lstm_backward(const LstmCache<T>& cache, const LstmParams<T>& p, const Act<T>& dh_out, LstmParams<T>& grad) {
  const Eigen::Index L = cache.input.rows();
  const Eigen::Index H = p.recurrent_weight.cols();
  Act<T> dz(L, 4 * H);
  Act<T> h_prev = Act<T>::Zero(L, H);
  RowVector<T> dh_next = RowVector<T>::Zero(H);
  RowVector<T> dc_next = RowVector<T>::Zero(H);
  const auto frame = [&](Eigen::Index k) { return cache.reverse ? L - 1 - k : k; };
  for (Eigen::Index k = L - 1; k >= 0; --k) {
    const Eigen::Index t = frame(k);
    const bool first = k == 0;
    const Eigen::Index prev = first ? 0 : frame(k - 1);
    if (!first) h_prev.row(t) = cache.hidden.row(prev);
    for (Eigen::Index j = 0; j < H; ++j) {
      const T i = cache.gates(t, j);
      const T f = cache.gates(t, H + j);
      const T g = cache.gates(t, 2 * H + j);
      const T o = cache.gates(t, 3 * H + j);
      const T tc = cache.cell_tanh(t, j);
      const T c_prev = first ? T(0) : cache.cell(prev, j);
      const T dh = dh_out(t, j) + dh_next(j);
      const T dc = dh * o * (T(1) - tc * tc) + dc_next(j);
      dz(t, j) = dc * g * i * (T(1) - i);
      dz(t, H + j) = dc * c_prev * f * (T(1) - f);
      dz(t, 2 * H + j) = dc * i * (T(1) - g * g);
      dz(t, 3 * H + j) = dh * tc * o * (T(1) - o);
      dc_next(j) = dc * f;
    }
    dh_next.noalias() = dz.row(t) * p.recurrent_weight;
  }
  grad.input_weight.noalias() += dz.transpose() * cache.input;
  grad.recurrent_weight.noalias() += dz.transpose() * h_prev;
  grad.bias += dz.colwise().sum().transpose();
  return dz * p.input_weight;
}

}  // namespace a2s::net
