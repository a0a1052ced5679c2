#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace a2s {

enum class Errc {
  // kern
  MalformedSpine,
  UnknownToken,
  InvalidTie,
  TooManyVoices,
  UnsupportedNotation,
  NoBarlines,
  UnknownTempoLabel,
  // codec
  EmptyCorpus,
  OutOfVocabulary,
  SyntaxError,
  // dsp / synth
  UnsupportedFormat,
  WrongSampleRate,
  TooShort,
  VoiceCountMismatch,
  // net
  ShapeMismatch,
  StaleCache,
  OddFeatureDim,
  NonFiniteGradient,
  // ctc / eval
  InfeasibleLength,
  EmptyReference,
  // plumbing
  Io,
  BadCheckpoint,
  VocabularyMismatch,
  InvalidConfig,
};

inline std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::MalformedSpine: return "MalformedSpine";
    case Errc::UnknownToken: return "UnknownToken";
    case Errc::InvalidTie: return "InvalidTie";
    case Errc::TooManyVoices: return "TooManyVoices";
    case Errc::UnsupportedNotation: return "UnsupportedNotation";
    case Errc::NoBarlines: return "NoBarlines";
    case Errc::UnknownTempoLabel: return "UnknownTempoLabel";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::OutOfVocabulary: return "OutOfVocabulary";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::WrongSampleRate: return "WrongSampleRate";
    case Errc::TooShort: return "TooShort";
    case Errc::VoiceCountMismatch: return "VoiceCountMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StaleCache: return "StaleCache";
    case Errc::OddFeatureDim: return "OddFeatureDim";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::InfeasibleLength: return "InfeasibleLength";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::Io: return "Io";
    case Errc::BadCheckpoint: return "BadCheckpoint";
    case Errc::VocabularyMismatch: return "VocabularyMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// 1-based position inside a source text.
struct SourceLocation {
  std::size_t line = 0;
  std::size_t column = 0;
};

/// Every failure in the library is reported through this type. The code
/// identifies the failure class; the location, when present, points into the
/// source document that triggered it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::optional<SourceLocation> where = std::nullopt)
      : std::runtime_error(format(code, message, where)), code_(code), where_(where) {}

  Errc code() const noexcept { return code_; }
  const std::optional<SourceLocation>& where() const noexcept { return where_; }

 private:
  static std::string format(Errc code, const std::string& message,
                            const std::optional<SourceLocation>& where) {
    std::string out;
    if (where) {
      out += std::to_string(where->line) + ":" + std::to_string(where->column) + ": ";
    }
    out += std::string(errc_name(code)) + ": " + message;
    return out;
  }

  Errc code_;
  std::optional<SourceLocation> where_;
};

}  // namespace a2s
