#pragma once

// Output alphabet and the conversion between preprocessed kern documents and
// flat token sequences.
//
// A data row is serialized cell by cell, cells separated by the tab symbol and
// the row terminated by the newline symbol. A note cell is
//   [tie-open] duration pitch [fermata] [tie-close]
// where a tie continuation ("_" in kern) carries both tie marks. A rest cell is
// duration rest [fermata]; a null cell is the dot symbol. A barline row is a
// single barline symbol followed by newline, whatever the number of spines.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "a2s/error.hpp"
#include "a2s/kern.hpp"

namespace a2s {

using Token = std::uint32_t;

enum class SymbolKind : std::uint8_t {
  Blank,
  Tab,
  Newline,
  Continuation,
  Barline,
  TieOpen,
  TieClose,
  Fermata,
  Duration,
  Rest,
  Pitch,
};

struct Symbol {
  SymbolKind kind = SymbolKind::Blank;
  kern::Duration duration{};
  kern::Pitch pitch{};

  static Symbol of(SymbolKind k) { return Symbol{k, {}, {}}; }
  static Symbol of(kern::Duration d) { return Symbol{SymbolKind::Duration, d, {}}; }
  static Symbol of(kern::Pitch p) { return Symbol{SymbolKind::Pitch, {}, p}; }

  bool is_separator() const { return kind == SymbolKind::Tab || kind == SymbolKind::Newline; }

  friend bool operator==(const Symbol& a, const Symbol& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == SymbolKind::Duration) return a.duration == b.duration;
    if (a.kind == SymbolKind::Pitch) return a.pitch == b.pitch;
    return true;
  }
};

/// Canonical vocabulary order: structural symbols, durations, rest, pitches.
inline bool symbol_less(const Symbol& a, const Symbol& b) {
  if (a.kind != b.kind) return a.kind < b.kind;
  if (a.kind == SymbolKind::Duration) return a.duration < b.duration;
  if (a.kind == SymbolKind::Pitch) {
    const auto ka = std::tuple(a.pitch.midi(), static_cast<int>(a.pitch.step), a.pitch.alter);
    const auto kb = std::tuple(b.pitch.midi(), static_cast<int>(b.pitch.step), b.pitch.alter);
    return ka < kb;
  }
  return false;
}

inline std::string symbol_text(const Symbol& s) {
  switch (s.kind) {
    case SymbolKind::Blank: return "<eps>";
    case SymbolKind::Tab: return "\t";
    case SymbolKind::Newline: return "\n";
    case SymbolKind::Continuation: return ".";
    case SymbolKind::Barline: return "=";
    case SymbolKind::TieOpen: return "[";
    case SymbolKind::TieClose: return "]";
    case SymbolKind::Fermata: return ";";
    case SymbolKind::Duration: return kern::duration_text(s.duration);
    case SymbolKind::Rest: return "r";
    case SymbolKind::Pitch: {
      static constexpr std::string_view kNames = "CDEFGAB";
      std::string out(1, kNames[static_cast<int>(s.pitch.step)]);
      if (s.pitch.alter > 0) out.append(static_cast<std::size_t>(s.pitch.alter), '#');
      if (s.pitch.alter < 0) out.append(static_cast<std::size_t>(-s.pitch.alter), '-');
      return out + std::to_string(s.pitch.octave);
    }
  }
  return {};
}

inline std::optional<Symbol> parse_symbol(std::string_view text) {
  static const std::array<std::pair<std::string_view, SymbolKind>, 9> kFixed{{
      {"<eps>", SymbolKind::Blank},
      {"\t", SymbolKind::Tab},
      {"\n", SymbolKind::Newline},
      {".", SymbolKind::Continuation},
      {"=", SymbolKind::Barline},
      {"[", SymbolKind::TieOpen},
      {"]", SymbolKind::TieClose},
      {";", SymbolKind::Fermata},
      {"r", SymbolKind::Rest},
  }};
  for (const auto& [t, k] : kFixed) {
    if (text == t) return Symbol::of(k);
  }
  if (text.empty()) return std::nullopt;
  if (std::isdigit(static_cast<unsigned char>(text.front()))) {
    int den = 0;
    std::size_t i = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) den = den * 10 + (text[i++] - '0');
    int dots = 0;
    while (i < text.size() && text[i] == '.') ++dots, ++i;
    if (i != text.size() || !kern::is_canonical_duration(den) || dots > 2) return std::nullopt;
    return Symbol::of(kern::Duration{den, dots});
  }
  static constexpr std::string_view kNames = "CDEFGAB";
  const auto step = kNames.find(text.front());
  if (step == std::string_view::npos) return std::nullopt;
  std::size_t i = 1;
  int alter = 0;
  while (i < text.size() && (text[i] == '#' || text[i] == '-')) alter += text[i++] == '#' ? 1 : -1;
  if (i + 1 != text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
  return Symbol::of(kern::Pitch{static_cast<kern::Step>(step), alter, text[i] - '0'});
}

/// Symbols every vocabulary starts with, in index order.
inline const std::array<Symbol, 8>& structural_symbols() {
  static const std::array<Symbol, 8> kStructural{
      Symbol::of(SymbolKind::Blank),    Symbol::of(SymbolKind::Tab),     Symbol::of(SymbolKind::Newline),
      Symbol::of(SymbolKind::Continuation), Symbol::of(SymbolKind::Barline), Symbol::of(SymbolKind::TieOpen),
      Symbol::of(SymbolKind::TieClose), Symbol::of(SymbolKind::Fermata),
  };
  return kStructural;
}

/// Bijective symbol/index table. Index 0 is always the blank.
class Vocabulary {
 public:
  static constexpr Token kBlank = 0;
  static constexpr Token kTab = 1;
  static constexpr Token kNewline = 2;

  explicit Vocabulary(std::vector<Symbol> symbols) : symbols_(std::move(symbols)) {
    const auto& fixed = structural_symbols();
    if (symbols_.size() < fixed.size()) throw Error(Errc::InvalidConfig, "vocabulary lacks structural symbols");
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      if (!(symbols_[i] == fixed[i])) throw Error(Errc::InvalidConfig, "vocabulary must start with the structural symbols");
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      const auto [it, fresh] = index_.emplace(symbol_text(symbols_[i]), static_cast<Token>(i));
      if (!fresh) throw Error(Errc::InvalidConfig, "duplicate vocabulary symbol '" + it->first + "'");
    }
  }

  std::size_t size() const { return symbols_.size(); }
  const Symbol& symbol(Token t) const { return symbols_.at(t); }
  std::string text(Token t) const { return symbol_text(symbols_.at(t)); }
  const std::vector<Symbol>& symbols() const { return symbols_; }

  std::optional<Token> find(const Symbol& s) const { return find(symbol_text(s)); }
  std::optional<Token> find(std::string_view text) const {
    const auto it = index_.find(std::string(text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  Token index(const Symbol& s) const {
    if (auto t = find(s)) return *t;
    throw Error(Errc::OutOfVocabulary, "symbol '" + symbol_text(s) + "' is not in the vocabulary");
  }

  bool is_separator(Token t) const { return t == kTab || t == kNewline; }

  /// FNV-1a over the symbol texts in index order.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : symbols_) {
      for (const unsigned char c : symbol_text(s) + '\x1f') {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<Symbol> symbols_;
  std::map<std::string, Token, std::less<>> index_;
};

/// Vocabulary file line for a symbol: tab and newline are escaped.
inline std::string escape_symbol(const std::string& text) {
  if (text == "\t") return "\\t";
  if (text == "\n") return "\\n";
  return text;
}

inline std::string unescape_symbol(std::string_view line) {
  if (line == "\\t") return "\t";
  if (line == "\\n") return "\n";
  return std::string(line);
}

inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& s : vocab.symbols()) out << escape_symbol(symbol_text(s)) << '\n';
}

inline Vocabulary read_vocabulary(std::istream& in) {
  std::vector<Symbol> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto sym = parse_symbol(unescape_symbol(line));
    if (!sym) throw Error(Errc::InvalidConfig, "unknown vocabulary symbol '" + line + "'");
    symbols.push_back(*sym);
  }
  return Vocabulary(std::move(symbols));
}

struct TokenSequence {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (auto t : tokens) out.push_back(vocab->text(t));
    return out;
  }
};

// ---------------------------------------------------------------------------

/// Symbols of one event, in encoding order.
inline std::vector<Symbol> event_symbols(const kern::ScoreEvent& ev) {
  using kern::EventKind;
  std::vector<Symbol> out;
  switch (ev.kind) {
    case EventKind::Continuation: out.push_back(Symbol::of(SymbolKind::Continuation)); break;
    case EventKind::Barline: out.push_back(Symbol::of(SymbolKind::Barline)); break;
    case EventKind::Rest:
      out.push_back(Symbol::of(*ev.duration));
      out.push_back(Symbol::of(SymbolKind::Rest));
      if (ev.fermata) out.push_back(Symbol::of(SymbolKind::Fermata));
      break;
    case EventKind::Note:
      if (ev.opens_tie()) out.push_back(Symbol::of(SymbolKind::TieOpen));
      out.push_back(Symbol::of(*ev.duration));
      out.push_back(Symbol::of(*ev.pitch));
      if (ev.fermata) out.push_back(Symbol::of(SymbolKind::Fermata));
      if (ev.closes_tie()) out.push_back(Symbol::of(SymbolKind::TieClose));
      break;
  }
  return out;
}

namespace detail {

inline void require_preprocessed(const kern::KernDocument& doc) {
  for (const auto& row : doc.rows) {
    if (row.kind == kern::RowKind::Interpretation) continue;
    if (row.cells.size() != doc.spines.size()) {
      throw Error(Errc::MalformedSpine, "document still has split spines", SourceLocation{row.line, 1});
    }
    for (const auto& cell : row.cells) {
      if (cell.events.size() != 1) throw Error(Errc::MalformedSpine, "document still has chords", SourceLocation{row.line, 1});
      if (cell.events.front().grace) throw Error(Errc::UnsupportedNotation, "grace note", SourceLocation{row.line, 1});
    }
  }
}

}  // namespace detail

/// Builds the canonical vocabulary of a preprocessed corpus. The result does
/// not depend on document order.
inline Vocabulary build_vocabulary(std::span<const kern::KernDocument> corpus) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "cannot build a vocabulary from an empty corpus");
  std::vector<Symbol> found;
  for (const auto& doc : corpus) {
    detail::require_preprocessed(doc);
    for (const auto& row : doc.rows) {
      if (row.kind != kern::RowKind::Data) continue;
      for (const auto& cell : row.cells) {
        for (const auto& s : event_symbols(cell.events.front())) found.push_back(s);
      }
    }
  }
  const auto& fixed = structural_symbols();
  std::vector<Symbol> symbols(fixed.begin(), fixed.end());
  std::sort(found.begin(), found.end(), symbol_less);
  for (const auto& s : found) {
    if (static_cast<int>(s.kind) <= static_cast<int>(SymbolKind::Fermata)) continue;
    if (!(symbols.back() == s)) symbols.push_back(s);
  }
  return Vocabulary(std::move(symbols));
}

inline TokenSequence encode(const kern::KernDocument& doc, std::shared_ptr<const Vocabulary> vocab) {
  detail::require_preprocessed(doc);
  TokenSequence seq{vocab, {}};
  auto& out = seq.tokens;
  for (const auto& row : doc.rows) {
    if (row.kind == kern::RowKind::Interpretation) continue;
    if (row.kind == kern::RowKind::Barline) {
      out.push_back(vocab->index(Symbol::of(SymbolKind::Barline)));
      out.push_back(Vocabulary::kNewline);
      continue;
    }
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      if (c) out.push_back(Vocabulary::kTab);
      for (const auto& s : event_symbols(row.cells[c].events.front())) out.push_back(vocab->index(s));
    }
    out.push_back(Vocabulary::kNewline);
  }
  return seq;
}

/// Raised when a token sequence is not a well-formed row/spine layout.
/// `position` is the index of the offending token; `partial` holds every
/// complete row before it.
class DecodeError : public Error {
 public:
  DecodeError(std::size_t position, const std::string& message, kern::KernDocument partial)
      : Error(Errc::SyntaxError, "token " + std::to_string(position) + ": " + message),
        position_(position),
        partial_(std::move(partial)) {}

  std::size_t position() const noexcept { return position_; }
  const kern::KernDocument& partial() const noexcept { return partial_; }

 private:
  std::size_t position_;
  kern::KernDocument partial_;
};

namespace detail {

struct Decoder {
  const Vocabulary& vocab;
  std::span<const Token> toks;
  std::size_t pos = 0;
  kern::KernDocument doc;
  std::optional<std::size_t> spines;
  std::size_t pending_barlines = 0;

  [[noreturn]] void fail(std::size_t at, const std::string& msg) {
    finish_partial();
    throw DecodeError(at, msg, doc);
  }

  void finish_partial() {
    if (!spines) {
      doc.rows.clear();
      return;
    }
    doc.spines.assign(*spines, kern::Spine{});
    for (auto& row : doc.rows) fill_barline(row);
  }

  void fill_barline(kern::Row& row) const {
    if (row.kind != kern::RowKind::Barline || !row.cells.empty()) return;
    for (std::size_t s = 0; s < *spines; ++s) {
      row.cells.push_back(kern::Cell{{kern::ScoreEvent::barline()}, "="});
      row.spine_of.push_back(s);
    }
  }

  SymbolKind kind_at(std::size_t i) const { return vocab.symbol(toks[i]).kind; }

  kern::ScoreEvent cell() {
    if (pos >= toks.size()) fail(pos, "sequence ends inside a row");
    const std::size_t start = pos;
    const auto k = kind_at(pos);
    if (k == SymbolKind::Continuation) {
      ++pos;
      return kern::ScoreEvent::continuation();
    }
    bool tie_open = false;
    if (k == SymbolKind::TieOpen) {
      tie_open = true;
      ++pos;
    }
    if (pos >= toks.size()) fail(pos, "sequence ends inside a cell");
    if (kind_at(pos) != SymbolKind::Duration) fail(start, "cell does not start with a duration or dot");
    const auto duration = vocab.symbol(toks[pos]).duration;
    ++pos;
    if (pos >= toks.size()) fail(pos, "sequence ends inside a cell");
    kern::ScoreEvent ev;
    if (kind_at(pos) == SymbolKind::Rest) {
      if (tie_open) fail(start, "tie on a rest");
      ev = kern::ScoreEvent::rest(duration);
    } else if (kind_at(pos) == SymbolKind::Pitch) {
      ev = kern::ScoreEvent::note(duration, vocab.symbol(toks[pos]).pitch);
    } else {
      fail(pos, "duration not followed by a pitch or rest");
    }
    ++pos;
    bool tie_close = false;
    while (pos < toks.size()) {
      const auto m = kind_at(pos);
      if (m == SymbolKind::Fermata && !ev.fermata) {
        ev.fermata = true;
      } else if (m == SymbolKind::TieClose && !tie_close && ev.kind == kern::EventKind::Note) {
        tie_close = true;
      } else {
        break;
      }
      ++pos;
    }
    ev.tie = tie_open && tie_close ? kern::Tie::Middle
             : tie_open            ? kern::Tie::Open
             : tie_close           ? kern::Tie::Close
                                   : kern::Tie::None;
    return ev;
  }

  kern::KernDocument run() {
    if (toks.empty()) fail(0, "empty sequence");
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i] >= vocab.size()) fail(i, "token outside the vocabulary");
    }
    while (pos < toks.size()) {
      const std::size_t row_start = pos;
      if (kind_at(pos) == SymbolKind::Barline) {
        ++pos;
        if (pos >= toks.size()) fail(row_start, "sequence ends after a barline");
        if (toks[pos] != Vocabulary::kNewline) fail(pos, "barline not followed by newline");
        ++pos;
        kern::Row row;
        row.kind = kern::RowKind::Barline;
        if (spines) fill_barline(row);
        doc.rows.push_back(std::move(row));
        continue;
      }
      kern::Row row;
      row.kind = kern::RowKind::Data;
      while (true) {
        if (pos < toks.size() && vocab.is_separator(toks[pos])) fail(pos, "empty cell");
        const auto ev = cell();
        row.cells.push_back(kern::Cell{{ev}, kern::to_kern(ev)});
        row.spine_of.push_back(row.cells.size() - 1);
        if (pos >= toks.size()) fail(pos, "sequence ends without a newline");
        if (toks[pos] == Vocabulary::kTab) {
          ++pos;
          continue;
        }
        if (toks[pos] == Vocabulary::kNewline) {
          ++pos;
          break;
        }
        fail(pos, "expected tab or newline after a cell");
      }
      if (!spines) {
        spines = row.cells.size();
        for (auto& r : doc.rows) fill_barline(r);
      } else if (row.cells.size() != *spines) {
        fail(row_start, "row has " + std::to_string(row.cells.size()) + " cells, expected " + std::to_string(*spines));
      }
      doc.rows.push_back(std::move(row));
    }
    if (!spines) fail(0, "no data rows");
    doc.spines.assign(*spines, kern::Spine{});
    return doc;
  }
};

}  // namespace detail

/// Inverse of encode. Throws DecodeError on sequences that do not form rows
/// of equally many cells.
inline kern::KernDocument decode(std::span<const Token> tokens, const Vocabulary& vocab) {
  detail::Decoder d{vocab, tokens};
  auto doc = d.run();
  return doc;
}

inline kern::KernDocument decode(const TokenSequence& seq) { return decode(seq.tokens, *seq.vocab); }

struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// Maximal runs of non-separator items.
template <class T, class IsSeparator>
std::vector<WordSpan> segment_words(std::span<const T> items, IsSeparator&& is_separator) {
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < items.size()) {
    if (is_separator(items[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < items.size() && !is_separator(items[i])) ++i;
    words.push_back(WordSpan{start, i});
  }
  return words;
}

inline std::vector<WordSpan> segment_words(const TokenSequence& seq) {
  return segment_words(std::span<const Token>(seq.tokens), [&](Token t) { return seq.vocab->is_separator(t); });
}

}  // namespace a2s
