#pragma once

// Dataset manifest: JSON lines, one record per sample. File paths are
// relative to the manifest's directory.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2s/codec.hpp"
#include "a2s/error.hpp"

namespace a2s::pipeline {

inline constexpr const char* kSplits[] = {"train", "validation", "test"};

struct ManifestRecord {
  std::string id;
  std::string audio;   // WAV path
  std::string tokens;  // one escaped symbol per line
  std::string kern;    // the encoded fragment as **kern
  double duration = 0.0;
  std::string split;
  std::string source;  // source score file name
  double tempo_bpm = 0.0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline void to_json(nlohmann::json& j, const ManifestRecord& r) {
  j = {{"id", r.id},         {"audio", r.audio},   {"tokens", r.tokens},       {"kern", r.kern},
       {"duration", r.duration}, {"split", r.split}, {"source", r.source}, {"tempo_bpm", r.tempo_bpm}};
}
inline void from_json(const nlohmann::json& j, ManifestRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.audio = j.at("audio").get<std::string>();
  r.tokens = j.at("tokens").get<std::string>();
  r.kern = j.value("kern", std::string{});
  r.duration = j.value("duration", 0.0);
  r.split = j.at("split").get<std::string>();
  r.source = j.value("source", std::string{});
  r.tempo_bpm = j.value("tempo_bpm", 0.0);
}

struct Manifest {
  std::filesystem::path root;  // directory the record paths are relative to
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }

  std::vector<ManifestRecord> split(const std::string& name) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records) {
      if (r.split == name) out.push_back(r);
    }
    return out;
  }
};

inline bool is_split_name(const std::string& s) {
  for (const char* k : kSplits) {
    if (s == k) return true;
  }
  return false;
}

inline std::string manifest_text(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) out += nlohmann::json(r).dump() + '\n';
  return out;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::set<std::string> ids;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    ManifestRecord r;
    try {
      r = nlohmann::json::parse(line).get<ManifestRecord>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::Io, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    if (!is_split_name(r.split)) {
      throw Error(Errc::Io, path.string() + ":" + std::to_string(number) + ": unknown split '" + r.split + "'");
    }
    if (!ids.insert(r.id).second) {
      throw Error(Errc::Io, path.string() + ":" + std::to_string(number) + ": duplicate id '" + r.id + "'");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

inline std::string token_file_text(const std::vector<std::string>& symbols) {
  std::string out;
  for (const auto& s : symbols) out += escape_symbol(s) + '\n';
  return out;
}

/// Symbol texts of a token file.
inline std::vector<std::string> read_token_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open token file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(unescape_symbol(line));
  }
  return out;
}

}  // namespace a2s::pipeline
