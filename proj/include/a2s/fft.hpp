#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace a2s {

/// In-place iterative radix-2 decimation-in-time FFT of a fixed size.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), reversed_(n), twiddles_(n / 2) {
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("FFT size must be a power of two");
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      reversed_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  std::size_t size() const { return n_; }

  /// X[k] = sum_n x[n] exp(-2 pi i k n / N)
  void forward(std::span<std::complex<double>> x) const {
    if (x.size() != n_) throw std::invalid_argument("FFT input size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < reversed_[i]) std::swap(x[i], x[reversed_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const auto t = twiddles_[j * stride] * x[start + j + half];
          x[start + j + half] = x[start + j] - t;
          x[start + j] += t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> reversed_;
  std::vector<std::complex<double>> twiddles_;
};

}  // namespace a2s
