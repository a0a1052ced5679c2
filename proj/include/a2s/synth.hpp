#pragma once

// Deterministic additive synthesis of a preprocessed score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "a2s/error.hpp"
#include "a2s/kern.hpp"
#include "a2s/tempo.hpp"
#include "a2s/wav.hpp"

namespace a2s {

/// Timbre of one spine: relative harmonic amplitudes (fundamental first) and
/// an exponential decay time constant in seconds.
struct SynthVoiceSpec {
  std::vector<double> harmonic_amplitudes{1.0, 0.5, 0.33, 0.25};
  double decay_seconds = 1.0;

  void validate() const {
    if (harmonic_amplitudes.empty()) throw Error(Errc::InvalidConfig, "voice needs at least one harmonic");
    const double fundamental = harmonic_amplitudes.front();
    for (const double a : harmonic_amplitudes) {
      if (!(a >= 0.0) || a > fundamental) {
        throw Error(Errc::InvalidConfig, "harmonic amplitudes must lie in [0, fundamental]");
      }
    }
    if (!(decay_seconds > 0.0)) throw Error(Errc::InvalidConfig, "decay must be positive");
  }
};

inline constexpr double kPeakLevel = 0.9;

/// A small set of distinct timbres, cycled over spines.
inline std::vector<SynthVoiceSpec> default_voices(std::size_t spines) {
  static const std::vector<SynthVoiceSpec> kPalette{
      {{1.0, 0.5, 0.33, 0.25}, 1.2},
      {{1.0, 0.7, 0.2, 0.35, 0.1}, 0.9},
      {{1.0, 0.3, 0.45, 0.1}, 1.5},
      {{1.0, 0.6, 0.4, 0.3, 0.2, 0.1}, 0.8},
  };
  std::vector<SynthVoiceSpec> out;
  for (std::size_t i = 0; i < spines; ++i) out.push_back(kPalette[i % kPalette.size()]);
  return out;
}

/// Renders each spine as a sequence of decaying harmonic tones and sums them,
/// normalizing the peak to 0.9. Tied notes continue the running tone without
/// a new attack. Note boundaries are rounded to the nearest sample from their
/// exact onset times, so the clip length never drifts from the score length.
inline AudioClip render(const kern::KernDocument& doc, const kern::TempoMark& tempo,
                        std::span<const SynthVoiceSpec> voices) {
  if (voices.size() != doc.spines.size()) {
    throw Error(Errc::VoiceCountMismatch,
                std::to_string(voices.size()) + " voices for " + std::to_string(doc.spines.size()) + " spines");
  }
  if (!(tempo.quarter_bpm > 0.0)) throw Error(Errc::InvalidConfig, "tempo must be positive");
  for (const auto& v : voices) v.validate();

  const double samples_per_quarter = 60.0 / tempo.quarter_bpm * kSampleRate;
  const auto to_sample = [&](double quarters) {
    return static_cast<std::size_t>(std::llround(quarters * samples_per_quarter));
  };

  const auto lengths = kern::spine_quarters(doc);
  const double longest = lengths.empty() ? 0.0 : *std::max_element(lengths.begin(), lengths.end());
  AudioClip clip;
  clip.samples.assign(to_sample(longest), 0.0);

  for (std::size_t s = 0; s < doc.spines.size(); ++s) {
    const auto& voice = voices[s];
    double position = 0.0;
    std::size_t attack = 0;
    for (const auto& row : doc.rows) {
      if (row.kind != kern::RowKind::Data) continue;
      const auto& ev = row.cells.at(s).events.front();
      if (!ev.duration || ev.grace) continue;
      const std::size_t begin = to_sample(position);
      position += ev.duration->quarters();
      const std::size_t end = std::min(to_sample(position), clip.samples.size());
      if (ev.kind != kern::EventKind::Note) continue;
      if (!ev.closes_tie()) attack = begin;
      const double f = ev.pitch->frequency();
      for (std::size_t n = begin; n < end; ++n) {
        const double t = static_cast<double>(n - attack) / kSampleRate;
        double v = 0.0;
        for (std::size_t k = 0; k < voice.harmonic_amplitudes.size(); ++k) {
          const double fk = f * static_cast<double>(k + 1);
          if (fk >= kSampleRate / 2.0) break;
          v += voice.harmonic_amplitudes[k] * std::sin(2.0 * std::numbers::pi * fk * t);
        }
        clip.samples[n] += v * std::exp(-t / voice.decay_seconds);
      }
    }
  }

  double peak = 0.0;
  for (const double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double gain = kPeakLevel / peak;
    for (double& v : clip.samples) v *= gain;
  }
  return clip;
}

inline AudioClip render(const kern::KernDocument& doc, const kern::TempoMark& tempo) {
  const auto voices = default_voices(doc.spines.size());
  return render(doc, tempo, voices);
}

}  // namespace a2s
