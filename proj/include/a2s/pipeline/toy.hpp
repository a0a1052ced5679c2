#pragma once

// Small synthetic corpus of short two-part pieces in 2/4: a bass line of
// half and quarter notes under a stepwise melody of quarters and eighths.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "a2s/error.hpp"
#include "a2s/pipeline/build.hpp"
#include "a2s/rng.hpp"

namespace a2s::pipeline {

struct ToyCorpusOptions {
  int scores = 25;
  int measures = 10;
  double single_voice_fraction = 0.2;  // scores with the melody only
  std::string tempo = "Allegro";
};

namespace detail {

struct ToyNote {
  int onset;     // in eighths from the start of the measure
  int duration;  // kern reciprocal: 2, 4 or 8
};

inline int eighths(int reciprocal) { return 8 / reciprocal; }

/// One measure of a toy score as kern lines (without the barline).
inline std::vector<std::string> toy_measure(Rng& rng, bool bass, int& melody_step) {
  static const std::vector<std::vector<int>> kMelodyRhythms{{4, 4}, {8, 8, 4}, {4, 8, 8}, {2}, {4, 4}};
  static const std::vector<std::vector<int>> kBassRhythms{{2}, {4, 4}};
  static const char* kMelody[] = {"c", "d", "e", "f", "g", "a", "b", "cc"};
  static const char* kBass[] = {"C", "F", "G", "A"};

  std::vector<ToyNote> melody, low;
  int at = 0;
  for (const int d : kMelodyRhythms[rng.below(kMelodyRhythms.size())]) {
    melody.push_back({at, d});
    at += eighths(d);
  }
  at = 0;
  for (const int d : kBassRhythms[rng.below(kBassRhythms.size())]) {
    low.push_back({at, d});
    at += eighths(d);
  }

  std::vector<std::string> lines;
  std::size_t mi = 0, bi = 0;
  for (int t = 0; t < 4; ++t) {
    const bool m_on = mi < melody.size() && melody[mi].onset == t;
    const bool b_on = bass && bi < low.size() && low[bi].onset == t;
    if (!m_on && !b_on) continue;
    std::string melody_cell = ".";
    if (m_on) {
      const int move = static_cast<int>(rng.below(5)) - 2;  // steps in [-2, 2]
      melody_step = std::clamp(melody_step + move, 0, 7);
      melody_cell = std::to_string(melody[mi++].duration) + kMelody[melody_step];
    }
    if (bass) {
      std::string bass_cell = ".";
      if (b_on) bass_cell = std::to_string(low[bi++].duration) + kBass[rng.below(4)];
      lines.push_back(bass_cell + "\t" + melody_cell);
    } else {
      lines.push_back(melody_cell);
    }
  }
  return lines;
}

}  // namespace detail

/// Kern text of one toy score.
inline std::string toy_score(std::uint64_t seed, bool two_voices, const ToyCorpusOptions& opts = {}) {
  Rng rng(seed);
  std::string text = "!!!OMD: " + opts.tempo + "\n";
  text += two_voices ? "**kern\t**kern\n*M2/4\t*M2/4\n" : "**kern\n*M2/4\n";
  int step = static_cast<int>(rng.below(8));
  for (int m = 0; m < opts.measures; ++m) {
    for (const auto& line : detail::toy_measure(rng, two_voices, step)) text += line + "\n";
    text += two_voices ? "=\t=\n" : "=\n";
  }
  text += two_voices ? "*-\t*-\n" : "*-\n";
  return text;
}

/// Writes opts.scores toy scores into `dir` (created if needed).
inline void write_toy_corpus(const std::filesystem::path& dir, std::uint64_t seed, const ToyCorpusOptions& opts = {}) {
  if (opts.scores < 1 || opts.measures < 1) throw Error(Errc::InvalidConfig, "toy corpus needs scores and measures");
  std::filesystem::create_directories(dir);
  Rng pick(derive_seed(seed, {0x70e}));
  for (int i = 0; i < opts.scores; ++i) {
    const bool two = pick.uniform() >= opts.single_voice_fraction;
    char name[32];
    std::snprintf(name, sizeof name, "toy%03d.krn", i);
    detail::write_text(dir / name, toy_score(derive_seed(seed, {0x70f, static_cast<std::uint64_t>(i)}), two, opts));
  }
}

}  // namespace a2s::pipeline
