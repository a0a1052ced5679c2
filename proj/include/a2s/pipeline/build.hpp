#pragma once

// Dataset building: kern scores to synthesized WAV files, token files and a
// manifest. Splits are assigned per source score before fragmenting, so no
// score contributes to two splits.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "a2s/codec.hpp"
#include "a2s/error.hpp"
#include "a2s/kern.hpp"
#include "a2s/pipeline/config.hpp"
#include "a2s/pipeline/manifest.hpp"
#include "a2s/rng.hpp"
#include "a2s/spectrogram.hpp"
#include "a2s/synth.hpp"
#include "a2s/tempo.hpp"
#include "a2s/wav.hpp"

namespace a2s::pipeline {

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kVocabularyFile = "vocab.txt";

struct BuildResult {
  Manifest manifest;
  std::vector<std::string> diagnostics;
  std::size_t sources = 0;          // scores that parsed and preprocessed
  std::size_t failed_sources = 0;   // scores rejected with a diagnostic
  std::size_t skipped_fragments = 0;
};

namespace detail {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
}

inline std::vector<std::filesystem::path> corpus_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::Io, "corpus directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".krn" || ext == ".kern")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::string sample_id(const std::filesystem::path& source, std::size_t k) {
  std::string stem;
  for (const char c : source.stem().string()) {
    stem += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  }
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "-%03zu", k);
  return stem + suffix;
}

/// Split of every source: test first, then validation, from a seeded shuffle.
inline std::vector<std::string> assign_splits(std::size_t n, const SplitOptions& opts, std::uint64_t seed) {
  auto n_test = static_cast<std::size_t>(std::lround(opts.test * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::lround(opts.validation * static_cast<double>(n)));
  while (n_test + n_val >= n && n_val > 0) --n_val;
  while (n_test + n_val >= n && n_test > 0) --n_test;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0x5917}));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::string> out(n, "train");
  for (std::size_t i = 0; i < n_test + n_val; ++i) out[order[i]] = i < n_test ? "test" : "validation";
  return out;
}

/// Tempo of a score: its textual tempo, else its metronome mark, else the
/// configured default; optionally jittered.
inline kern::TempoMark tempo_of(const kern::KernDocument& doc, const RunConfig& cfg, std::optional<std::uint64_t> jitter) {
  if (doc.metadata.tempo_label) return kern::assign_tempo(*doc.metadata.tempo_label, jitter);
  if (doc.metadata.metronome_bpm) {
    double bpm = *doc.metadata.metronome_bpm;
    if (jitter) bpm *= Rng(*jitter).uniform(1.0 - kern::kTempoJitter, 1.0 + kern::kTempoJitter);
    return kern::TempoMark{"MM" + std::to_string(*doc.metadata.metronome_bpm), bpm};
  }
  return kern::assign_tempo(cfg.default_tempo, jitter);
}

/// Clears a previous build; refuses to touch a directory that is not one.
inline void prepare_output(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(Errc::InvalidConfig, dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !fs::exists(dir / kManifestFile)) {
      throw Error(Errc::InvalidConfig, "refusing to overwrite " + dir.string() + ": not a dataset directory");
    }
    for (const char* sub : {"audio", "tokens", "kern"}) fs::remove_all(dir / sub);
    fs::remove(dir / kManifestFile);
    fs::remove(dir / kVocabularyFile);
  }
  for (const char* sub : {"audio", "tokens", "kern"}) fs::create_directories(dir / sub);
}

}  // namespace detail

/// Builds the dataset described by `cfg` into cfg.dataset. Bad scores are
/// reported and skipped; EmptyCorpus when none survives.
inline BuildResult build_dataset(const RunConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const auto files = detail::corpus_files(cfg.corpus);
  if (files.empty()) throw Error(Errc::EmptyCorpus, "no .krn files in " + cfg.corpus.string());

  BuildResult result;
  const auto note = [&](const std::string& msg) {
    result.diagnostics.push_back(msg);
    if (log) *log << msg << '\n';
  };

  struct Source {
    std::filesystem::path path;
    kern::KernDocument doc;
  };
  std::vector<Source> sources;
  for (const auto& f : files) {
    try {
      auto doc = kern::preprocess(kern::parse_kern(detail::read_text(f), f.filename().string()));
      if (doc.metadata.tempo_label && !kern::lookup_tempo(*doc.metadata.tempo_label)) {
        throw Error(Errc::UnknownTempoLabel, "unknown tempo '" + *doc.metadata.tempo_label + "'");
      }
      sources.push_back({f, std::move(doc)});
    } catch (const Error& e) {
      ++result.failed_sources;
      note(f.filename().string() + ": " + e.what());
    }
  }
  if (sources.empty()) throw Error(Errc::EmptyCorpus, "every score in " + cfg.corpus.string() + " was rejected");
  result.sources = sources.size();

  struct Sample {
    ManifestRecord record;
    kern::KernDocument doc;
    AudioClip clip;
  };
  const auto splits = detail::assign_splits(sources.size(), cfg.split, cfg.seed);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& src = sources[i];
    const bool train = splits[i] == "train";
    std::vector<kern::KernDocument> pieces;
    if (cfg.fragment.enabled) {
      pieces = kern::fragment(src.doc, derive_seed(cfg.seed, {0xf4a9, i}),
                              {cfg.fragment.min_measures, cfg.fragment.max_measures, cfg.fragment.overlap && train});
    } else {
      pieces.push_back(src.doc);
    }
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      Sample s;
      s.record.id = detail::sample_id(src.path, k);
      s.record.split = splits[i];
      s.record.source = src.path.filename().string();
      try {
        const auto jitter = cfg.tempo_jitter ? std::optional(derive_seed(cfg.seed, {0x7e40, i, k})) : std::nullopt;
        const auto tempo = detail::tempo_of(pieces[k], cfg, jitter);
        s.clip = render(pieces[k], tempo);
        s.record.tempo_bpm = tempo.quarter_bpm;
      } catch (const Error& e) {
        ++result.skipped_fragments;
        note(s.record.id + ": " + e.what());
        continue;
      }
      s.record.duration = s.clip.seconds();
      if (s.record.duration > cfg.max_duration_seconds) {
        ++result.skipped_fragments;
        note(s.record.id + ": " + std::to_string(s.record.duration) + " s exceeds max_duration_seconds");
        continue;
      }
      if (s.clip.samples.size() < kWindowSize) {
        ++result.skipped_fragments;
        note(s.record.id + ": shorter than one analysis window");
        continue;
      }
      s.doc = std::move(pieces[k]);
      samples.push_back(std::move(s));
    }
  }
  if (samples.empty()) throw Error(Errc::EmptyCorpus, "no usable samples in " + cfg.corpus.string());

  std::vector<kern::KernDocument> all_docs, train_docs;
  for (const auto& s : samples) {
    all_docs.push_back(s.doc);
    if (s.record.split == "train") train_docs.push_back(s.doc);
  }
  if (train_docs.empty()) throw Error(Errc::EmptyCorpus, "the training split is empty");
  const auto spelling = std::make_shared<const Vocabulary>(build_vocabulary(all_docs));
  const Vocabulary train_vocab = build_vocabulary(train_docs);

  detail::prepare_output(cfg.dataset);
  for (auto& s : samples) {
    auto& r = s.record;
    r.audio = "audio/" + r.id + ".wav";
    r.tokens = "tokens/" + r.id + ".txt";
    r.kern = "kern/" + r.id + ".krn";
    write_wav(cfg.dataset / r.audio, s.clip);
    detail::write_text(cfg.dataset / r.tokens, token_file_text(encode(s.doc, spelling).texts()));
    detail::write_text(cfg.dataset / r.kern, kern::serialize(s.doc));
    result.manifest.records.push_back(r);
  }
  std::ostringstream vocab_text;
  write_vocabulary(vocab_text, train_vocab);
  detail::write_text(cfg.dataset / kVocabularyFile, vocab_text.str());
  detail::write_text(cfg.dataset / kManifestFile, manifest_text(result.manifest.records));
  result.manifest.root = cfg.dataset;
  return result;
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open vocabulary " + path.string());
  return read_vocabulary(in);
}

}  // namespace a2s::pipeline
