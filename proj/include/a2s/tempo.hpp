#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "a2s/error.hpp"
#include "a2s/rng.hpp"

namespace a2s::kern {

struct TempoMark {
  std::string label;
  double quarter_bpm = 0.0;  // quarter notes per minute
};

struct TempoEntry {
  std::string_view label;
  int quarter_bpm;
};

/// Metronome markings for textual tempo designations, quarter notes per minute.
inline constexpr std::array<TempoEntry, 22> kTempoTable{{
    {"Largo Assai", 40},      {"Largo", 50},
    {"Poco Largo", 60},       {"Adagio", 71},
    {"Poco Adagio", 76},      {"Andante", 92},
    {"Andantino", 100},       {"Menuetto", 112},
    {"Moderato", 114},        {"Poco Allegretto", 116},
    {"Allegretto", 118},      {"Allegro Moderato", 120},
    {"Poco Allegro", 124},    {"Allegro", 130},
    {"Molto Allegro", 134},   {"Allegro Assai", 138},
    {"Vivace", 150},          {"Allegro Vivace", 160},
    {"Allegro Vivace Assai", 170}, {"Poco Presto", 180},
    {"Presto", 186},          {"Presto Assai", 200},
}};

inline constexpr double kTempoJitter = 0.06;

/// Lower-cases and collapses runs of whitespace to one space.
inline std::string normalize_tempo_label(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (const char c : label) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline std::optional<int> lookup_tempo(std::string_view label) {
  const auto key = normalize_tempo_label(label);
  for (const auto& e : kTempoTable) {
    if (normalize_tempo_label(e.label) == key) return e.quarter_bpm;
  }
  return std::nullopt;
}

/// Resolves a tempo label. With a jitter seed the table value is scaled by a
/// factor drawn uniformly from [0.94, 1.06]; without one it is returned as is.
inline TempoMark assign_tempo(std::string_view label, std::optional<std::uint64_t> jitter_seed) {
  const auto base = lookup_tempo(label);
  if (!base) throw Error(Errc::UnknownTempoLabel, "no metronome marking for '" + std::string(label) + "'");
  double bpm = *base;
  if (jitter_seed) {
    Rng rng(*jitter_seed);
    bpm *= rng.uniform(1.0 - kTempoJitter, 1.0 + kTempoJitter);
  }
  return TempoMark{std::string(label), bpm};
}

}  // namespace a2s::kern
