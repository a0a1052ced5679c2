#pragma once

// Word and character error rates.
//
// Counts follow the usual recognition convention: a deletion is a reference
// item missing from the hypothesis, an insertion an extra hypothesis item.
// Words are maximal runs of non-separator symbols (tab and newline are the
// separators); a character is one vocabulary symbol.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "a2s/codec.hpp"
#include "a2s/error.hpp"

namespace a2s::eval {

struct EditStats {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;

  std::size_t edits() const { return substitutions + insertions + deletions; }

  double rate() const {
    if (reference_length == 0) throw Error(Errc::EmptyReference, "error rate of an empty reference");
    return static_cast<double>(edits()) / static_cast<double>(reference_length);
  }

  EditStats& operator+=(const EditStats& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    reference_length += o.reference_length;
    return *this;
  }

  friend bool operator==(const EditStats&, const EditStats&) = default;
};

/// Minimal Levenshtein alignment. Among alignments of minimal cost the one
/// with the most substitutions (fewest insert/delete pairs) is reported.
template <class T, class Eq = std::equal_to<>>
EditStats edit_distance(std::span<const T> ref, std::span<const T> hyp, Eq eq = {}) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  // (cost, insertions + deletions), compared lexicographically
  using Cell = std::pair<std::size_t, std::size_t>;
  std::vector<Cell> dp((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, i};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, j};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = eq(ref[i - 1], hyp[j - 1]);
      Cell diag = at(i - 1, j - 1);
      diag.first += same ? 0 : 1;
      Cell del = at(i - 1, j);
      del.first += 1;
      del.second += 1;
      Cell ins = at(i, j - 1);
      ins.first += 1;
      ins.second += 1;
      at(i, j) = std::min({diag, del, ins});
    }
  }

  EditStats stats;
  stats.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const Cell here = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = eq(ref[i - 1], hyp[j - 1]);
      Cell diag = at(i - 1, j - 1);
      diag.first += same ? 0 : 1;
      if (diag == here) {
        stats.substitutions += same ? 0 : 1;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0) {
      Cell del = at(i - 1, j);
      del.first += 1;
      del.second += 1;
      if (del == here) {
        ++stats.deletions;
        --i;
        continue;
      }
    }
    ++stats.insertions;
    --j;
  }
  return stats;
}

template <class T>
std::vector<std::span<const T>> words_of(std::span<const T> items, const std::function<bool(const T&)>& is_separator) {
  std::vector<std::span<const T>> out;
  for (const auto& w : segment_words(items, is_separator)) out.push_back(items.subspan(w.begin, w.end - w.begin));
  return out;
}

namespace detail {

struct SpanEqual {
  template <class T>
  bool operator()(std::span<const T> a, std::span<const T> b) const {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
  }
};

}  // namespace detail

/// Word-level edit statistics over arbitrary symbol sequences.
template <class T>
EditStats word_stats(std::span<const T> ref, std::span<const T> hyp, const std::function<bool(const T&)>& is_separator) {
  const auto rw = words_of(ref, is_separator);
  const auto hw = words_of(hyp, is_separator);
  return edit_distance(std::span<const std::span<const T>>(rw), std::span<const std::span<const T>>(hw),
                       detail::SpanEqual{});
}

template <class T>
EditStats char_stats(std::span<const T> ref, std::span<const T> hyp) {
  return edit_distance(ref, hyp);
}

inline EditStats word_stats(const TokenSequence& ref, const TokenSequence& hyp) {
  const auto& vocab = *ref.vocab;
  return word_stats<Token>(ref.tokens, hyp.tokens, [&](const Token& t) { return vocab.is_separator(t); });
}

inline EditStats char_stats(const TokenSequence& ref, const TokenSequence& hyp) {
  return char_stats<Token>(ref.tokens, hyp.tokens);
}

inline double wer(const TokenSequence& ref, const TokenSequence& hyp) { return word_stats(ref, hyp).rate(); }
inline double cer(const TokenSequence& ref, const TokenSequence& hyp) { return char_stats(ref, hyp).rate(); }

/// Symbol-text variants, used when references may contain symbols outside the
/// model vocabulary.
inline bool is_separator_text(const std::string& s) { return s == "\t" || s == "\n"; }

inline EditStats word_stats(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return word_stats<std::string>(ref, hyp, is_separator_text);
}

inline EditStats char_stats(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return char_stats<std::string>(ref, hyp);
}

/// Micro-averaged corpus totals.
struct CorpusStats {
  EditStats words;
  EditStats chars;
  std::size_t samples = 0;

  void add(const EditStats& w, const EditStats& c) {
    words += w;
    chars += c;
    ++samples;
  }
  double wer() const { return words.rate(); }
  double cer() const { return chars.rate(); }
};

}  // namespace a2s::eval
