#pragma once

// Log-frequency, log-magnitude STFT frontend.
//
// Frames of 2048 samples (Hamming window) every 512 samples at 22050 Hz are
// mapped onto 240 bins spaced 1/48 octave apart from C2 (A4 = 440 Hz). A bin
// is the average of the linear FFT magnitudes under a triangular kernel whose
// feet sit on the neighbouring bin centres. Below ~746 Hz those kernels are
// narrower than the FFT bin spacing (10.77 Hz) and would see at most one FFT
// bin, so there the magnitude of the windowed frame's spectrum is evaluated
// directly at the bin centre instead. Magnitudes are compressed as log(1 + m).

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "a2s/error.hpp"
#include "a2s/fft.hpp"
#include "a2s/wav.hpp"

namespace a2s {

inline constexpr std::size_t kWindowSize = 2048;
inline constexpr std::size_t kHopSize = 512;
inline constexpr std::size_t kBinsPerOctave = 48;
inline constexpr std::size_t kOctaves = 5;
inline constexpr std::size_t kLogBins = kBinsPerOctave * kOctaves;  // 240

/// C2 in equal temperament with A4 = 440 Hz.
inline double c2_frequency() { return 440.0 * std::pow(2.0, -33.0 / 12.0); }

inline double bin_frequency(double k) { return c2_frequency() * std::pow(2.0, k / kBinsPerOctave); }

/// Nearest log bin of a frequency: round(48 * log2(f / f_C2)).
inline long nearest_bin(double hz) { return std::lround(kBinsPerOctave * std::log2(hz / c2_frequency())); }

/// floor((N - 2048) / 512) + 1 for N >= 2048, else 0.
constexpr std::size_t frame_count(std::size_t samples) {
  return samples < kWindowSize ? 0 : (samples - kWindowSize) / kHopSize + 1;
}

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = kLogBins;
  std::vector<double> values;  // row-major frames x bins
  double hop_seconds = static_cast<double>(kHopSize) / kSampleRate;
  std::vector<double> bin_frequencies;

  double& at(std::size_t t, std::size_t b) { return values[t * bins + b]; }
  double at(std::size_t t, std::size_t b) const { return values[t * bins + b]; }
};

class LogFrequencyAnalyzer {
 public:
  LogFrequencyAnalyzer() : fft_(kWindowSize), window_(kWindowSize) {
    const double denom = static_cast<double>(kWindowSize - 1);
    for (std::size_t n = 0; n < kWindowSize; ++n) {
      window_[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
    }
    const double spacing = static_cast<double>(kSampleRate) / kWindowSize;
    centres_.resize(kLogBins);
    kernels_.resize(kLogBins);
    for (std::size_t k = 0; k < kLogBins; ++k) {
      const double lo = bin_frequency(static_cast<double>(k) - 1.0);
      const double mid = bin_frequency(static_cast<double>(k));
      const double hi = bin_frequency(static_cast<double>(k) + 1.0);
      centres_[k] = mid;
      if ((hi - lo) / 2.0 < spacing) {
        Direct d;
        d.bin = k;
        d.cos.resize(kWindowSize);
        d.sin.resize(kWindowSize);
        const double omega = 2.0 * std::numbers::pi * mid / kSampleRate;
        for (std::size_t n = 0; n < kWindowSize; ++n) {
          d.cos[n] = window_[n] * std::cos(omega * static_cast<double>(n));
          d.sin[n] = window_[n] * std::sin(omega * static_cast<double>(n));
        }
        direct_.push_back(std::move(d));
        continue;
      }
      double total = 0.0;
      const auto first = static_cast<std::size_t>(std::ceil(lo / spacing));
      for (std::size_t j = first; j * spacing < hi && j <= kWindowSize / 2; ++j) {
        const double f = static_cast<double>(j) * spacing;
        const double w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        if (w <= 0.0) continue;
        kernels_[k].push_back({j, w});
        total += w;
      }
      for (auto& tap : kernels_[k]) tap.weight /= total;
    }
  }

  Spectrogram operator()(const AudioClip& clip) const {
    if (clip.sample_rate != kSampleRate) throw Error(Errc::WrongSampleRate, "expected 22050 Hz audio");
    if (clip.samples.size() < kWindowSize) {
      throw Error(Errc::TooShort, std::to_string(clip.samples.size()) + " samples, need at least 2048");
    }
    Spectrogram spec;
    spec.frames = frame_count(clip.samples.size());
    spec.values.assign(spec.frames * kLogBins, 0.0);
    spec.bin_frequencies = centres_;

    std::vector<std::complex<double>> buf(kWindowSize);
    std::vector<double> magnitude(kWindowSize / 2 + 1);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const double* x = clip.samples.data() + t * kHopSize;
      for (std::size_t n = 0; n < kWindowSize; ++n) buf[n] = {x[n] * window_[n], 0.0};
      fft_.forward(buf);
      for (std::size_t j = 0; j < magnitude.size(); ++j) magnitude[j] = std::abs(buf[j]);

      for (std::size_t k = 0; k < kLogBins; ++k) {
        if (kernels_[k].empty()) continue;
        double m = 0.0;
        for (const auto& tap : kernels_[k]) m += tap.weight * magnitude[tap.index];
        spec.at(t, k) = std::log1p(m);
      }
      for (const auto& d : direct_) {
        double re = 0.0, im = 0.0;
        for (std::size_t n = 0; n < kWindowSize; ++n) {
          re += x[n] * d.cos[n];
          im -= x[n] * d.sin[n];
        }
        spec.at(t, d.bin) = std::log1p(std::hypot(re, im));
      }
    }
    return spec;
  }

  const std::vector<double>& window() const { return window_; }

 private:
  struct Tap {
    std::size_t index;
    double weight;
  };
  struct Direct {
    std::size_t bin = 0;
    std::vector<double> cos, sin;
  };

  Fft fft_;
  std::vector<double> window_;
  std::vector<double> centres_;
  std::vector<std::vector<Tap>> kernels_;
  std::vector<Direct> direct_;
};

/// Convenience wrapper; reuse a LogFrequencyAnalyzer when converting many clips.
inline Spectrogram stft_logfreq(const AudioClip& clip) {
  static const LogFrequencyAnalyzer analyzer;
  return analyzer(clip);
}

// Dump format: 8-byte magic, uint32 frames, uint32 bins (little-endian), then
// frames x bins float32 values, row-major.
inline constexpr char kSpectrogramMagic[8] = {'A', '2', 'S', 'S', 'P', 'E', 'C', '1'};

inline void write_spectrogram(const std::filesystem::path& path, const Spectrogram& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(kSpectrogramMagic, 8);
  const auto put = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put(static_cast<std::uint32_t>(spec.frames));
  put(static_cast<std::uint32_t>(spec.bins));
  for (const double v : spec.values) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put(bits);
  }
}

inline Spectrogram read_spectrogram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kSpectrogramMagic, 8) != 0) throw Error(Errc::UnsupportedFormat, "not a spectrogram dump");
  const auto get = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw Error(Errc::UnsupportedFormat, "truncated spectrogram dump");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  };
  Spectrogram spec;
  spec.frames = get();
  spec.bins = get();
  spec.values.resize(spec.frames * spec.bins);
  for (auto& v : spec.values) {
    const std::uint32_t bits = get();
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  for (std::size_t k = 0; k < spec.bins; ++k) spec.bin_frequencies.push_back(bin_frequency(static_cast<double>(k)));
  return spec;
}

}  // namespace a2s
