#pragma once

// **kern subset: parsing, serialization, preprocessing and fragmentation.
//
// Supported: any number of **kern spines (other exclusive interpretations are
// tracked for spine bookkeeping and then ignored), spine split/merge/terminate
// (*^ *v *-), chords, ties, fermatas, grace notes. Durations are restricted to
// the canonical set {1,2,4,8,16,32,64} with at most two dots; anything else is
// reported as UnknownToken.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "a2s/error.hpp"
#include "a2s/rng.hpp"

namespace a2s::kern {

enum class EventKind : std::uint8_t { Note, Rest, Barline, Continuation };
enum class Tie : std::uint8_t { None, Open, Close, Middle };
enum class Step : std::uint8_t { C, D, E, F, G, A, B };

inline constexpr std::array<int, 7> kCanonicalDurations{1, 2, 4, 8, 16, 32, 64};

inline bool is_canonical_duration(int denominator) {
  return std::find(kCanonicalDurations.begin(), kCanonicalDurations.end(), denominator) !=
         kCanonicalDurations.end();
}

struct Duration {
  int denominator = 4;
  int dots = 0;

  /// Length in quarter notes.
  double quarters() const {
    double base = 4.0 / denominator;
    double total = base;
    for (int i = 0; i < dots; ++i) {
      base /= 2.0;
      total += base;
    }
    return total;
  }

  friend bool operator==(const Duration&, const Duration&) = default;
  friend auto operator<=>(const Duration&, const Duration&) = default;
};

struct Pitch {
  Step step = Step::C;
  int alter = 0;  // -1 flat, +1 sharp (±2 only before preprocessing)
  int octave = 4;

  /// MIDI key number, C4 = 60.
  int midi() const {
    static constexpr std::array<int, 7> kSemitone{0, 2, 4, 5, 7, 9, 11};
    return 12 * (octave + 1) + kSemitone[static_cast<int>(step)] + alter;
  }

  /// Equal temperament, A4 = 440 Hz.
  double frequency() const { return 440.0 * std::pow(2.0, (midi() - 69) / 12.0); }

  friend bool operator==(const Pitch&, const Pitch&) = default;
};

struct ScoreEvent {
  EventKind kind = EventKind::Continuation;
  std::optional<Duration> duration;  // notes and rests (grace notes may omit it)
  std::optional<Pitch> pitch;        // notes only
  Tie tie = Tie::None;
  bool fermata = false;
  bool grace = false;

  static ScoreEvent note(Duration d, Pitch p, Tie t = Tie::None, bool fermata = false) {
    return ScoreEvent{EventKind::Note, d, p, t, fermata, false};
  }
  static ScoreEvent rest(Duration d, bool fermata = false) {
    return ScoreEvent{EventKind::Rest, d, std::nullopt, Tie::None, fermata, false};
  }
  static ScoreEvent barline() { return ScoreEvent{EventKind::Barline, {}, {}, Tie::None, false, false}; }
  static ScoreEvent continuation() { return ScoreEvent{}; }

  bool opens_tie() const { return tie == Tie::Open || tie == Tie::Middle; }
  bool closes_tie() const { return tie == Tie::Close || tie == Tie::Middle; }

  friend bool operator==(const ScoreEvent&, const ScoreEvent&) = default;
};

enum class RowKind : std::uint8_t { Interpretation, Data, Barline };

/// One tab-separated field. Data and barline cells carry parsed events (more
/// than one for a chord); interpretation cells carry only their text.
struct Cell {
  std::vector<ScoreEvent> events;
  std::string text;
};

struct Row {
  RowKind kind = RowKind::Data;
  std::vector<Cell> cells;
  std::vector<std::size_t> spine_of;  // base spine index of each cell
  std::size_t line = 0;               // source line, 0 when synthesized
};

struct Spine {
  std::string label;  // instrument, may be empty
};

struct MeasureRange {
  std::size_t first = 0;
  std::size_t count = 0;
  friend bool operator==(const MeasureRange&, const MeasureRange&) = default;
};

struct Metadata {
  std::optional<std::string> tempo_label;
  std::optional<double> metronome_bpm;
  std::string source_path;
  std::optional<MeasureRange> fragment;
};

struct KernDocument {
  std::vector<Spine> spines;
  std::vector<Row> rows;
  Metadata metadata;

  std::size_t data_row_count() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const Row& r) { return r.kind == RowKind::Data; }));
  }

  /// True while any row has more (or fewer) cells than base spines.
  bool has_split_spines() const {
    return std::any_of(rows.begin(), rows.end(),
                       [&](const Row& r) { return r.cells.size() != spines.size(); });
  }
};

inline bool operator==(const Cell& a, const Cell& b) {
  return a.events == b.events && (!a.events.empty() || a.text == b.text);
}

inline bool operator==(const Row& a, const Row& b) {
  return a.kind == b.kind && a.cells == b.cells && a.spine_of == b.spine_of;
}

/// Equality of musical content and annotations; ignores source lines, path
/// and fragment bookkeeping.
inline bool operator==(const KernDocument& a, const KernDocument& b) {
  if (a.spines.size() != b.spines.size()) return false;
  for (std::size_t i = 0; i < a.spines.size(); ++i) {
    if (a.spines[i].label != b.spines[i].label) return false;
  }
  return a.rows == b.rows && a.metadata.tempo_label == b.metadata.tempo_label &&
         a.metadata.metronome_bpm == b.metadata.metronome_bpm;
}

/// Same spine count and the same sequence of row kinds and events. This is
/// the equality the codec can guarantee.
inline bool structurally_equal(const KernDocument& a, const KernDocument& b) {
  if (a.spines.size() != b.spines.size() || a.rows.size() != b.rows.size()) return false;
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    const Row& x = a.rows[r];
    const Row& y = b.rows[r];
    if (x.kind != y.kind || x.cells.size() != y.cells.size()) return false;
    if (x.kind == RowKind::Interpretation) continue;
    for (std::size_t c = 0; c < x.cells.size(); ++c) {
      if (x.cells[c].events != y.cells[c].events) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Token level

namespace detail {

inline bool is_ignored_signifier(char c) {
  // beams, stems, articulations, slurs/phrases, editorial marks, bowing,
  // ornaments and appoggiatura markers: none of them reach the output.
  static constexpr std::string_view kIgnored = "LJKk/\\'\"`~^zvuo(){}&xXyY?<>:|IPptTmMwWS$OR";
  return kIgnored.find(c) != std::string_view::npos;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

}  // namespace detail

/// Parses one kern subtoken (a single note, rest or null token).
inline ScoreEvent parse_token(std::string_view tok, SourceLocation where = {}) {
  if (tok == ".") return ScoreEvent::continuation();
  if (tok.empty()) throw Error(Errc::UnknownToken, "empty token", where);

  int denominator = -1;
  int dots = 0;
  char letter = 0;
  int letters = 0;
  int alter = 0;
  bool natural = false;
  bool rest = false;
  bool fermata = false;
  bool grace = false;
  int opens = 0, closes = 0, middles = 0;
  const std::string token(tok);

  for (std::size_t i = 0; i < tok.size(); ++i) {
    const char c = tok[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      if (denominator >= 0) throw Error(Errc::UnknownToken, "duration given twice in '" + token + "'", where);
      int value = 0;
      while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) {
        value = value * 10 + (tok[i] - '0');
        if (value > 1000) throw Error(Errc::UnknownToken, "duration out of range in '" + token + "'", where);
        ++i;
      }
      --i;
      denominator = value;
    } else if (c == '.') {
      ++dots;
    } else if ((c >= 'a' && c <= 'g') || (c >= 'A' && c <= 'G')) {
      if (letter != 0 && letter != c) throw Error(Errc::UnknownToken, "mixed pitch letters in '" + token + "'", where);
      letter = c;
      ++letters;
    } else if (c == '#') {
      ++alter;
    } else if (c == '-') {
      --alter;
    } else if (c == 'n') {
      natural = true;
    } else if (c == 'r') {
      rest = true;
    } else if (c == '[') {
      ++opens;
    } else if (c == ']') {
      ++closes;
    } else if (c == '_') {
      ++middles;
    } else if (c == ';') {
      fermata = true;
    } else if (c == 'q' || c == 'Q') {
      grace = true;
    } else if (!detail::is_ignored_signifier(c)) {
      throw Error(Errc::UnknownToken, std::string("unexpected character '") + c + "' in '" + token + "'", where);
    }
  }

  if (rest && letter) throw Error(Errc::UnknownToken, "rest with pitch in '" + token + "'", where);
  if (!rest && !letter) throw Error(Errc::UnknownToken, "no pitch or rest in '" + token + "'", where);
  if (natural && alter != 0) throw Error(Errc::UnknownToken, "natural with accidental in '" + token + "'", where);
  if (std::abs(alter) > 2) throw Error(Errc::UnknownToken, "accidental beyond double in '" + token + "'", where);
  if (dots > 2) throw Error(Errc::UnknownToken, "more than two dots in '" + token + "'", where);
  if (opens + closes + middles > 1) throw Error(Errc::InvalidTie, "conflicting tie marks in '" + token + "'", where);
  if (rest && opens + closes + middles > 0) throw Error(Errc::InvalidTie, "tie on a rest in '" + token + "'", where);

  ScoreEvent ev;
  ev.fermata = fermata;
  ev.grace = grace;
  if (denominator < 0) {
    if (!grace) throw Error(Errc::UnknownToken, "missing duration in '" + token + "'", where);
  } else {
    if (!is_canonical_duration(denominator)) {
      throw Error(Errc::UnknownToken, "non-canonical duration " + std::to_string(denominator) + " in '" + token + "'",
                  where);
    }
    ev.duration = Duration{denominator, dots};
  }

  if (rest) {
    ev.kind = EventKind::Rest;
    return ev;
  }

  const bool lower = letter >= 'a';
  const int octave = lower ? 3 + letters : 4 - letters;
  if (octave < 2 || octave > 7) throw Error(Errc::UnknownToken, "octave outside C2-B7 in '" + token + "'", where);
  static constexpr std::string_view kSteps = "cdefgab";
  const auto step = static_cast<Step>(kSteps.find(static_cast<char>(std::tolower(letter))));
  ev.kind = EventKind::Note;
  ev.pitch = Pitch{step, alter, octave};
  ev.tie = opens ? Tie::Open : closes ? Tie::Close : middles ? Tie::Middle : Tie::None;
  return ev;
}

inline std::string pitch_letters(const Pitch& p) {
  static constexpr std::string_view kSteps = "cdefgab";
  const char lower = kSteps[static_cast<int>(p.step)];
  std::string out;
  if (p.octave >= 4) {
    out.assign(static_cast<std::size_t>(p.octave - 3), lower);
  } else {
    out.assign(static_cast<std::size_t>(4 - p.octave), static_cast<char>(std::toupper(lower)));
  }
  if (p.alter > 0) out.append(static_cast<std::size_t>(p.alter), '#');
  if (p.alter < 0) out.append(static_cast<std::size_t>(-p.alter), '-');
  return out;
}

inline std::string duration_text(const Duration& d) {
  return std::to_string(d.denominator) + std::string(static_cast<std::size_t>(d.dots), '.');
}

/// Kern spelling of one event; inverse of parse_token.
inline std::string to_kern(const ScoreEvent& ev) {
  switch (ev.kind) {
    case EventKind::Continuation: return ".";
    case EventKind::Barline: return "=";
    case EventKind::Rest: return duration_text(*ev.duration) + "r" + (ev.fermata ? ";" : "");
    case EventKind::Note: break;
  }
  std::string out;
  if (ev.tie == Tie::Open) out += '[';
  if (ev.duration) out += duration_text(*ev.duration);
  out += pitch_letters(*ev.pitch);
  if (ev.grace) out += 'q';
  if (ev.fermata) out += ';';
  if (ev.tie == Tie::Close) out += ']';
  if (ev.tie == Tie::Middle) out += '_';
  return out;
}

// ---------------------------------------------------------------------------
// Document level

namespace detail {

struct Slot {
  std::size_t base = 0;  // index into kern spines, or npos for other spines
  bool kern = true;
  int open_ties = 0;
};

inline constexpr std::size_t kNotKern = std::numeric_limits<std::size_t>::max();

inline std::optional<double> parse_metronome(std::string_view tok) {
  if (!starts_with(tok, "*MM")) return std::nullopt;
  const std::string digits(tok.substr(3));
  if (digits.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(digits.c_str(), &end);
  if (end == digits.c_str() || *end != '\0' || !(v > 0)) return std::nullopt;
  return v;
}

// Applies spine manipulators of an interpretation row to the slot list.
inline std::vector<Slot> apply_manipulators(const std::vector<Slot>& slots, const std::vector<std::string_view>& toks,
                                            std::size_t line, const std::vector<std::size_t>& columns) {
  std::vector<Slot> next;
  std::size_t i = 0;
  while (i < toks.size()) {
    const SourceLocation where{line, columns[i]};
    const auto tok = toks[i];
    if (tok == "*^") {
      next.push_back(slots[i]);
      next.push_back(slots[i]);
      ++i;
    } else if (tok == "*v") {
      std::size_t j = i;
      Slot merged = slots[i];
      while (j < toks.size() && toks[j] == "*v" && slots[j].base == slots[i].base && slots[j].kern == slots[i].kern) {
        merged.open_ties = std::max(merged.open_ties, slots[j].open_ties);
        ++j;
      }
      if (j - i < 2) throw Error(Errc::MalformedSpine, "*v without an adjacent *v of the same spine", where);
      next.push_back(merged);
      i = j;
    } else if (tok == "*-") {
      ++i;
    } else if (tok == "*+" || tok == "*x") {
      throw Error(Errc::MalformedSpine, "unsupported spine manipulator " + std::string(tok), where);
    } else if (starts_with(tok, "**")) {
      throw Error(Errc::MalformedSpine, "exclusive interpretation inside the body", where);
    } else {
      next.push_back(slots[i]);
      ++i;
    }
  }
  return next;
}

inline std::size_t active_after(std::size_t count, const Row& row) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < row.cells.size();) {
    const auto& t = row.cells[i].text;
    if (t == "*^") {
      out += 2;
      ++i;
    } else if (t == "*v") {
      std::size_t j = i;
      while (j < row.cells.size() && row.cells[j].text == "*v" && row.spine_of[j] == row.spine_of[i]) ++j;
      out += 1;
      i = std::max(j, i + 1);
    } else if (t == "*-") {
      ++i;
    } else {
      ++out;
      ++i;
    }
  }
  (void)count;
  return out;
}

}  // namespace detail

/// Parses a UTF-8 **kern document. CRLF line endings are accepted.
/// Throws Error with MalformedSpine, UnknownToken or InvalidTie.
inline KernDocument parse_kern(std::string_view text, std::string source_path = {}) {
  using detail::Slot;
  KernDocument doc;
  doc.metadata.source_path = std::move(source_path);

  std::string normalized(text);
  normalized.erase(std::remove(normalized.begin(), normalized.end(), '\r'), normalized.end());
  const auto lines = detail::split(normalized, '\n');

  std::vector<Slot> slots;
  bool header_seen = false;
  bool finished = false;

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    const std::string_view line = lines[li];
    if (line.empty()) continue;

    if (detail::starts_with(line, "!!")) {
      if (detail::starts_with(line, "!!!OMD:") && !doc.metadata.tempo_label) {
        doc.metadata.tempo_label = std::string(detail::trim(line.substr(7)));
      }
      continue;
    }

    const auto toks = detail::split(line, '\t');
    std::vector<std::size_t> columns(toks.size());
    {
      std::size_t col = 1;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        columns[i] = col;
        col += toks[i].size() + 1;
      }
    }

    if (!header_seen) {
      if (!detail::starts_with(line, "**")) {
        throw Error(Errc::MalformedSpine, "content before the exclusive interpretation line", SourceLocation{line_no, 1});
      }
      for (std::size_t i = 0; i < toks.size(); ++i) {
        if (!detail::starts_with(toks[i], "**")) {
          throw Error(Errc::MalformedSpine, "malformed exclusive interpretation", SourceLocation{line_no, columns[i]});
        }
        if (toks[i] == "**kern") {
          slots.push_back(Slot{doc.spines.size(), true, 0});
          doc.spines.push_back(Spine{});
        } else {
          slots.push_back(Slot{detail::kNotKern, false, 0});
        }
      }
      if (doc.spines.empty()) throw Error(Errc::MalformedSpine, "no **kern spine", SourceLocation{line_no, 1});
      header_seen = true;
      continue;
    }

    if (finished) throw Error(Errc::MalformedSpine, "content after all spines terminated", SourceLocation{line_no, 1});

    if (toks.size() != slots.size()) {
      throw Error(Errc::MalformedSpine,
                  std::to_string(toks.size()) + " cells under " + std::to_string(slots.size()) + " active spines",
                  SourceLocation{line_no, 1});
    }

    const char lead = line.front();
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const char c = toks[i].empty() ? '\0' : toks[i].front();
      const bool same_class = (lead == '!' || lead == '*' || lead == '=') ? c == lead : (c != '!' && c != '*' && c != '=');
      if (!same_class || toks[i].empty()) {
        throw Error(Errc::MalformedSpine, "cell '" + std::string(toks[i]) + "' does not match its row type",
                    SourceLocation{line_no, columns[i]});
      }
    }

    if (lead == '!') continue;  // local comments

    Row row;
    row.line = line_no;

    if (lead == '*') {
      row.kind = RowKind::Interpretation;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        if (!slots[i].kern) continue;
        const auto tok = toks[i];
        if (auto mm = detail::parse_metronome(tok); mm && !doc.metadata.metronome_bpm) doc.metadata.metronome_bpm = mm;
        auto& label = doc.spines[slots[i].base].label;
        if (label.empty() && detail::starts_with(tok, "*I\"")) label = std::string(tok.substr(3));
        row.cells.push_back(Cell{{}, std::string(tok)});
        row.spine_of.push_back(slots[i].base);
      }
      auto next = detail::apply_manipulators(slots, toks, line_no, columns);
      const bool all_terminated = next.empty();
      if (!all_terminated) doc.rows.push_back(std::move(row));
      slots = std::move(next);
      finished = all_terminated;
      continue;
    }

    if (lead == '=') {
      row.kind = RowKind::Barline;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        if (!slots[i].kern) continue;
        row.cells.push_back(Cell{{ScoreEvent::barline()}, std::string(toks[i])});
        row.spine_of.push_back(slots[i].base);
      }
      doc.rows.push_back(std::move(row));
      continue;
    }

    row.kind = RowKind::Data;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (!slots[i].kern) continue;
      Cell cell;
      cell.text = std::string(toks[i]);
      const auto subtoks = detail::split(toks[i], ' ');
      std::size_t offset = 0;
      for (const auto sub : subtoks) {
        const SourceLocation where{line_no, columns[i] + offset};
        offset += sub.size() + 1;
        auto ev = parse_token(sub, where);
        if (ev.kind == EventKind::Continuation && subtoks.size() > 1) {
          throw Error(Errc::UnknownToken, "null token inside a chord", where);
        }
        if (ev.kind == EventKind::Note) {
          int& open = slots[i].open_ties;
          if (ev.tie == Tie::Close || ev.tie == Tie::Middle) {
            if (open == 0) throw Error(Errc::InvalidTie, "tie end without a tie start", where);
            if (ev.tie == Tie::Close) --open;
          } else if (ev.tie == Tie::Open) {
            ++open;
          }
        }
        cell.events.push_back(ev);
      }
      row.cells.push_back(std::move(cell));
      row.spine_of.push_back(slots[i].base);
    }
    doc.rows.push_back(std::move(row));
  }

  if (!header_seen) throw Error(Errc::MalformedSpine, "missing **kern header", SourceLocation{1, 1});
  return doc;
}

/// Writes a document back to **kern text (LF line endings).
inline std::string serialize(const KernDocument& doc) {
  std::ostringstream out;
  if (doc.metadata.tempo_label) out << "!!!OMD: " << *doc.metadata.tempo_label << '\n';

  const auto row_line = [](const std::vector<std::string>& fields) {
    std::string s;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) s += '\t';
      s += fields[i];
    }
    return s + '\n';
  };

  std::vector<std::string> fields(doc.spines.size(), "**kern");
  out << row_line(fields);

  const bool has_instrument_row = std::any_of(doc.rows.begin(), doc.rows.end(), [](const Row& r) {
    return r.kind == RowKind::Interpretation &&
           std::any_of(r.cells.begin(), r.cells.end(), [](const Cell& c) { return detail::starts_with(c.text, "*I\""); });
  });
  const bool any_label =
      std::any_of(doc.spines.begin(), doc.spines.end(), [](const Spine& s) { return !s.label.empty(); });
  if (any_label && !has_instrument_row) {
    for (std::size_t i = 0; i < doc.spines.size(); ++i) {
      fields[i] = doc.spines[i].label.empty() ? "*" : "*I\"" + doc.spines[i].label;
    }
    out << row_line(fields);
  }
  const bool has_mm_row = std::any_of(doc.rows.begin(), doc.rows.end(), [](const Row& r) {
    return r.kind == RowKind::Interpretation &&
           std::any_of(r.cells.begin(), r.cells.end(), [](const Cell& c) { return detail::starts_with(c.text, "*MM"); });
  });
  if (doc.metadata.metronome_bpm && !has_mm_row) {
    std::ostringstream mm;
    mm << "*MM" << *doc.metadata.metronome_bpm;
    fields.assign(doc.spines.size(), mm.str());
    out << row_line(fields);
  }

  std::size_t active = doc.spines.size();
  for (const Row& row : doc.rows) {
    fields.clear();
    for (const Cell& cell : row.cells) {
      switch (row.kind) {
        case RowKind::Interpretation: fields.push_back(cell.text); break;
        case RowKind::Barline: fields.emplace_back("="); break;
        case RowKind::Data: {
          std::string s;
          for (std::size_t e = 0; e < cell.events.size(); ++e) {
            if (e) s += ' ';
            s += to_kern(cell.events[e]);
          }
          fields.push_back(s);
          break;
        }
      }
    }
    out << row_line(fields);
    if (row.kind == RowKind::Interpretation) active = detail::active_after(active, row);
  }
  fields.assign(active, "*-");
  out << row_line(fields);
  return out.str();
}

// ---------------------------------------------------------------------------
// Preprocessing

inline constexpr std::size_t kMaxVoices = 4;

namespace detail {

inline void drop_open(ScoreEvent& ev) {
  if (ev.tie == Tie::Open) ev.tie = Tie::None;
  if (ev.tie == Tie::Middle) ev.tie = Tie::Close;
}

inline void drop_close(ScoreEvent& ev) {
  if (ev.tie == Tie::Close) ev.tie = Tie::None;
  if (ev.tie == Tie::Middle) ev.tie = Tie::Open;
}

}  // namespace detail

/// Makes every tie in a split-free document link two same-pitch notes of one
/// spine; dangling tie marks become plain notes.
inline void sever_dangling_ties(KernDocument& doc) {
  for (std::size_t s = 0; s < doc.spines.size(); ++s) {
    ScoreEvent* pending = nullptr;
    for (Row& row : doc.rows) {
      if (row.kind != RowKind::Data) continue;
      ScoreEvent& ev = row.cells[s].events.front();
      if (ev.kind == EventKind::Rest) {
        if (pending) detail::drop_open(*pending);
        pending = nullptr;
        continue;
      }
      if (ev.kind != EventKind::Note) continue;
      const bool linked = ev.closes_tie() && pending && pending->pitch->midi() == ev.pitch->midi();
      if (pending && !linked) detail::drop_open(*pending);
      if (ev.closes_tie() && !linked) detail::drop_close(ev);
      pending = ev.opens_tie() ? &ev : nullptr;
    }
    if (pending) detail::drop_open(*pending);
  }
}

/// Reduces a parsed document to the transcribable subset: one voice per
/// spine (leftmost sub-spine of a split), lowest note of each chord, no grace
/// notes, no interpretation rows, consistent ties.
/// Throws TooManyVoices (> 4 spines) or UnsupportedNotation (double dots,
/// double sharps or double flats anywhere in the score).
inline KernDocument preprocess(const KernDocument& doc) {
  if (doc.spines.size() > kMaxVoices) {
    throw Error(Errc::TooManyVoices, std::to_string(doc.spines.size()) + " spines, at most 4 supported");
  }
  KernDocument out;
  out.spines = doc.spines;
  out.metadata = doc.metadata;
  std::vector<std::size_t> identity(doc.spines.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;

  for (const Row& row : doc.rows) {
    if (row.kind == RowKind::Interpretation) continue;
    if (row.kind == RowKind::Barline) {
      Row bar;
      bar.kind = RowKind::Barline;
      bar.line = row.line;
      bar.cells.assign(doc.spines.size(), Cell{{ScoreEvent::barline()}, "="});
      bar.spine_of = identity;
      out.rows.push_back(std::move(bar));
      continue;
    }

    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      for (const auto& ev : row.cells[c].events) {
        const bool double_dot = ev.duration && ev.duration->dots > 1;
        const bool double_acc = ev.pitch && std::abs(ev.pitch->alter) > 1;
        if (double_dot || double_acc) {
          throw Error(Errc::UnsupportedNotation, double_dot ? "double dot" : "double accidental",
                      SourceLocation{row.line, c + 1});
        }
      }
    }

    Row data;
    data.kind = RowKind::Data;
    data.line = row.line;
    data.spine_of = identity;
    bool any_event = false;
    for (std::size_t s = 0; s < doc.spines.size(); ++s) {
      const auto it = std::find(row.spine_of.begin(), row.spine_of.end(), s);
      ScoreEvent chosen = ScoreEvent::continuation();
      if (it != row.spine_of.end()) {
        const Cell& cell = row.cells[static_cast<std::size_t>(it - row.spine_of.begin())];
        const ScoreEvent* lowest = nullptr;
        const ScoreEvent* first_rest = nullptr;
        for (const auto& ev : cell.events) {
          if (ev.grace) continue;
          if (ev.kind == EventKind::Note && (!lowest || ev.pitch->midi() < lowest->pitch->midi())) lowest = &ev;
          if (ev.kind == EventKind::Rest && !first_rest) first_rest = &ev;
        }
        if (lowest) {
          chosen = *lowest;
        } else if (first_rest) {
          chosen = *first_rest;
        }
      }
      any_event = any_event || chosen.kind != EventKind::Continuation;
      data.cells.push_back(Cell{{chosen}, to_kern(chosen)});
    }
    if (any_event) out.rows.push_back(std::move(data));
  }
  sever_dangling_ties(out);
  return out;
}

// ---------------------------------------------------------------------------
// Fragmentation

struct Measure {
  std::size_t first_row = 0;
  std::size_t end_row = 0;  // one past the last row
};

/// Splits the rows of a preprocessed document into measures. Each measure
/// ends with its closing barline; barlines with no preceding data attach to
/// the neighbouring measure so that every row belongs to exactly one measure.
inline std::vector<Measure> measures(const KernDocument& doc) {
  const bool any_bar = std::any_of(doc.rows.begin(), doc.rows.end(), [](const Row& r) { return r.kind == RowKind::Barline; });
  if (!any_bar) throw Error(Errc::NoBarlines, "document has no barlines");
  std::vector<Measure> out;
  std::size_t start = 0;
  bool has_data = false;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const Row& row = doc.rows[r];
    if (row.kind == RowKind::Data) has_data = true;
    if (row.kind != RowKind::Barline) continue;
    if (has_data) {
      out.push_back(Measure{start, r + 1});
      start = r + 1;
      has_data = false;
    } else if (!out.empty()) {
      out.back().end_row = r + 1;
      start = r + 1;
    }
  }
  if (start < doc.rows.size()) {
    if (has_data || out.empty()) {
      out.push_back(Measure{start, doc.rows.size()});
    } else {
      out.back().end_row = doc.rows.size();
    }
  }
  return out;
}

struct FragmentOptions {
  int min_measures = 3;
  int max_measures = 6;
  bool allow_overlap = false;
};

namespace detail {

// Draws a fragment size for `remaining` measures. Sizes that would leave an
// unusable tail (shorter than the minimum) are avoided whenever possible.
inline std::size_t draw_size(Rng& rng, std::size_t remaining, int lo, int hi) {
  if (remaining <= static_cast<std::size_t>(lo)) return remaining;
  std::vector<std::size_t> good;
  for (int s = lo; s <= hi; ++s) {
    const auto size = static_cast<std::size_t>(s);
    if (size > remaining) break;
    const std::size_t rest = remaining - size;
    if (rest == 0 || rest >= static_cast<std::size_t>(lo)) good.push_back(size);
  }
  if (!good.empty()) return good[rng.below(good.size())];
  return std::min(remaining, static_cast<std::size_t>(rng.between(lo, hi)));
}

}  // namespace detail

inline KernDocument slice_measures(const KernDocument& doc, const std::vector<Measure>& ms, std::size_t first,
                                   std::size_t count) {
  KernDocument frag;
  frag.spines = doc.spines;
  frag.metadata = doc.metadata;
  frag.metadata.fragment = MeasureRange{first, count};
  const std::size_t begin = ms[first].first_row;
  const std::size_t end = ms[first + count - 1].end_row;
  frag.rows.assign(doc.rows.begin() + static_cast<std::ptrdiff_t>(begin), doc.rows.begin() + static_cast<std::ptrdiff_t>(end));
  sever_dangling_ties(frag);
  return frag;
}

/// Random fragments of whole measures. Sizes are drawn uniformly from the
/// admissible values in [min, max]; a document shorter than `min` yields a
/// single fragment. With overlap, each next fragment starts between one
/// measure after the previous start and the previous end.
inline std::vector<KernDocument> fragment(const KernDocument& doc, std::uint64_t seed, FragmentOptions opts = {}) {
  if (opts.min_measures < 1 || opts.max_measures < opts.min_measures) {
    throw Error(Errc::InvalidConfig, "fragment sizes must satisfy 1 <= min <= max");
  }
  const auto ms = measures(doc);
  Rng rng(seed);
  std::vector<KernDocument> out;
  std::size_t start = 0;
  while (start < ms.size()) {
    const std::size_t size = detail::draw_size(rng, ms.size() - start, opts.min_measures, opts.max_measures);
    out.push_back(slice_measures(doc, ms, start, size));
    if (start + size >= ms.size()) break;
    start += opts.allow_overlap ? 1 + rng.below(size) : size;
  }
  return out;
}

/// Total length of each spine in quarter notes.
inline std::vector<double> spine_quarters(const KernDocument& doc) {
  std::vector<double> total(doc.spines.size(), 0.0);
  for (const Row& row : doc.rows) {
    if (row.kind != RowKind::Data || row.cells.size() != doc.spines.size()) continue;
    for (std::size_t s = 0; s < row.cells.size(); ++s) {
      const auto& ev = row.cells[s].events.front();
      if (ev.duration && !ev.grace) total[s] += ev.duration->quarters();
    }
  }
  return total;
}

}  // namespace a2s::kern
