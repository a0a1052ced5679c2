#pragma once

// Transcription and evaluation with a trained model.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2s/codec.hpp"
#include "a2s/ctc.hpp"
#include "a2s/error.hpp"
#include "a2s/eval.hpp"
#include "a2s/net/crnn.hpp"
#include "a2s/pipeline/manifest.hpp"
#include "a2s/spectrogram.hpp"
#include "a2s/wav.hpp"

namespace a2s::pipeline {

struct Transcription {
  std::vector<Token> tokens;         // collapsed
  std::vector<std::string> symbols;  // their texts
  std::optional<kern::KernDocument> document;
  std::string error;  // decode failure, when document is empty
};

/// Greedy best path, collapsed.
template <class T>
std::vector<Token> infer_tokens(const net::Crnn<T>& model, const net::Act<T>& input) {
  const auto fwd = model.forward(input, net::Mode::Eval);
  return ctc::collapse(ctc::greedy_decode(fwd.posteriors));
}

inline Transcription transcribe(const net::Crnn<float>& model, const Vocabulary& vocab, const net::Act<float>& input) {
  Transcription t;
  t.tokens = infer_tokens(model, input);
  for (const auto k : t.tokens) t.symbols.push_back(vocab.text(k));
  try {
    t.document = decode(t.tokens, vocab);
  } catch (const DecodeError& e) {
    t.error = e.what();
  }
  return t;
}

/// Whether a symbol sequence decodes to a document. Works on texts so that
/// references with symbols outside the model vocabulary can be checked too.
inline bool decodable(const std::vector<std::string>& symbols) {
  const auto& fixed = structural_symbols();
  std::vector<Symbol> extra;
  for (const auto& s : symbols) {
    const auto sym = parse_symbol(s);
    if (!sym) return false;
    if (std::find(fixed.begin(), fixed.end(), *sym) == fixed.end()) extra.push_back(*sym);
  }
  std::sort(extra.begin(), extra.end(), symbol_less);
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
  std::vector<Symbol> all(fixed.begin(), fixed.end());
  all.insert(all.end(), extra.begin(), extra.end());
  const Vocabulary v(std::move(all));
  std::vector<Token> tokens;
  for (const auto& s : symbols) tokens.push_back(*v.find(s));
  try {
    decode(tokens, v);
    return true;
  } catch (const DecodeError&) {
    return false;
  }
}

/// A manifest sample with its network input and reference symbols.
struct PreparedSample {
  ManifestRecord record;
  net::Act<float> input;
  std::vector<std::string> reference;
};

/// Loads audio and references; unreadable samples are reported in `problems`
/// and left out.
inline std::vector<PreparedSample> prepare_samples(const Manifest& m, const std::vector<ManifestRecord>& records,
                                                   const LogFrequencyAnalyzer& analyzer,
                                                   std::vector<std::string>& problems) {
  std::vector<PreparedSample> out;
  for (const auto& r : records) {
    try {
      PreparedSample s;
      s.record = r;
      s.reference = read_token_file(m.resolve(r.tokens));
      s.input = net::to_input<float>(analyzer(load_wav(m.resolve(r.audio))));
      out.push_back(std::move(s));
    } catch (const Error& e) {
      problems.push_back(r.id + ": " + e.what());
    }
  }
  return out;
}

struct SampleScore {
  std::string id;
  eval::EditStats words;
  eval::EditStats chars;
  bool decodable = false;
};

struct EvalReport {
  std::string split;
  std::vector<SampleScore> samples;
  eval::CorpusStats corpus;
  std::size_t decodable = 0;
  std::vector<std::string> problems;

  double decodable_fraction() const {
    return samples.empty() ? 0.0 : static_cast<double>(decodable) / static_cast<double>(samples.size());
  }

  nlohmann::json to_json() const {
    const auto counts = [](const eval::EditStats& s) {
      return nlohmann::json{{"substitutions", s.substitutions},
                            {"insertions", s.insertions},
                            {"deletions", s.deletions},
                            {"reference_length", s.reference_length}};
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : samples) {
      nlohmann::json row{{"id", s.id}, {"words", counts(s.words)}, {"chars", counts(s.chars)}, {"decodable", s.decodable}};
      if (s.words.reference_length > 0) row["wer"] = s.words.rate();
      if (s.chars.reference_length > 0) row["cer"] = s.chars.rate();
      rows.push_back(std::move(row));
    }
    return {{"split", split},
            {"samples", rows},
            {"corpus", {{"wer", corpus.wer()}, {"cer", corpus.cer()}, {"words", counts(corpus.words)},
                        {"chars", counts(corpus.chars)}, {"averaging", "micro"}}},
            {"decodable", decodable},
            {"problems", problems}};
  }

  std::string to_text() const {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    for (const auto& s : samples) {
      out << s.id << "  WER " << (s.words.reference_length ? s.words.rate() : 0.0) << "  CER " << s.chars.rate()
          << "  S/I/D " << s.chars.substitutions << '/' << s.chars.insertions << '/' << s.chars.deletions
          << (s.decodable ? "" : "  (not decodable)") << '\n';
    }
    for (const auto& p : problems) out << "skipped " << p << '\n';
    out << "corpus (" << split << ", " << samples.size() << " samples, micro-averaged)  WER " << corpus.wer()
        << "  CER " << corpus.cer() << "  decodable " << decodable << '/' << samples.size() << '\n';
    return out.str();
  }
};

/// Scores greedy transcriptions of prepared samples; with no model the
/// hypothesis is the reference itself.
inline EvalReport score_samples(const std::vector<PreparedSample>& samples, const net::Crnn<float>* model,
                                const Vocabulary* vocab) {
  EvalReport report;
  for (const auto& s : samples) {
    std::vector<std::string> hyp = s.reference;
    if (model) {
      hyp.clear();
      for (const auto k : infer_tokens(*model, s.input)) hyp.push_back(vocab->text(k));
    }
    SampleScore score;
    score.id = s.record.id;
    score.words = eval::word_stats(s.reference, hyp);
    score.chars = eval::char_stats(s.reference, hyp);
    score.decodable = decodable(hyp);
    report.decodable += score.decodable ? 1 : 0;
    report.corpus.add(score.words, score.chars);
    report.samples.push_back(std::move(score));
  }
  return report;
}

/// Evaluates one split of a manifest. EmptyCorpus when the split has no
/// usable sample.
inline EvalReport evaluate_split(const Manifest& m, const std::string& split, const net::Crnn<float>* model,
                                 const Vocabulary* vocab) {
  if (!is_split_name(split)) throw Error(Errc::InvalidConfig, "unknown split '" + split + "'");
  const auto records = m.split(split);
  if (records.empty()) throw Error(Errc::EmptyCorpus, "split '" + split + "' is empty");
  static const LogFrequencyAnalyzer analyzer;
  std::vector<std::string> problems;
  const auto samples = prepare_samples(m, records, analyzer, problems);
  if (samples.empty()) throw Error(Errc::EmptyCorpus, "no sample of split '" + split + "' could be loaded");
  auto report = score_samples(samples, model, vocab);
  report.split = split;
  report.problems = std::move(problems);
  return report;
}

}  // namespace a2s::pipeline
