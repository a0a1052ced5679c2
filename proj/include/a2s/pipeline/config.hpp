#pragma once

// Run configuration: one JSON file describing dataset building and training.
// Relative paths resolve against the directory of the config file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "a2s/error.hpp"
#include "a2s/net/config.hpp"
#include "a2s/tempo.hpp"

namespace a2s::pipeline {

struct SplitOptions {
  double validation = 0.2;
  double test = 0.0;
};

struct FragmentSettings {
  bool enabled = true;
  int min_measures = 3;
  int max_measures = 6;
  bool overlap = false;  // train split only
};

struct TrainSettings {
  int epochs = 100;
  int batch_size = 4;
  double base_lr = 3e-4;
  double lr_decay = 1.1;
  int lr_cycle = 50;
  double momentum = 0.9;
  double clip_norm = 0.0;  // 0 disables clipping
  double norm_momentum = 0.1;
};

struct RunConfig {
  std::filesystem::path corpus;   // directory of .krn files
  std::filesystem::path dataset;  // build output, train input
  std::filesystem::path output;   // checkpoints and log
  std::uint64_t seed = 1;
  SplitOptions split;
  FragmentSettings fragment;
  bool tempo_jitter = true;
  std::string default_tempo = "Moderato";
  double max_duration_seconds = 30.0;
  net::ModelConfig model;
  TrainSettings train;

  void validate() const {
    const auto require = [](bool ok, const std::string& what) {
      if (!ok) throw Error(Errc::InvalidConfig, what);
    };
    require(split.validation >= 0.0 && split.test >= 0.0 && split.validation + split.test < 1.0,
            "split fractions must be non-negative and leave room for training");
    require(fragment.min_measures >= 1 && fragment.max_measures >= fragment.min_measures,
            "fragment sizes must satisfy 1 <= min_measures <= max_measures");
    require(kern::lookup_tempo(default_tempo).has_value(), "unknown default_tempo '" + default_tempo + "'");
    require(max_duration_seconds > 0.0, "max_duration_seconds must be positive");
    require(train.epochs >= 0, "epochs must be >= 0");
    require(train.batch_size >= 1, "batch_size must be >= 1");
    require(train.base_lr > 0.0 && train.lr_decay > 0.0 && train.lr_cycle >= 1, "invalid learning-rate schedule");
    require(train.momentum >= 0.0 && train.momentum < 1.0, "momentum must lie in [0, 1)");
    require(train.clip_norm >= 0.0, "clip_norm must be >= 0");
    require(train.norm_momentum > 0.0 && train.norm_momentum <= 1.0, "norm_momentum must lie in (0, 1]");
    model.validate();
  }
};

inline void to_json(nlohmann::json& j, const SplitOptions& s) {
  j = {{"validation", s.validation}, {"test", s.test}};
}
inline void from_json(const nlohmann::json& j, SplitOptions& s) {
  const SplitOptions d;
  s.validation = j.value("validation", d.validation);
  s.test = j.value("test", d.test);
}

inline void to_json(nlohmann::json& j, const FragmentSettings& f) {
  j = {{"enabled", f.enabled}, {"min_measures", f.min_measures}, {"max_measures", f.max_measures}, {"overlap", f.overlap}};
}
inline void from_json(const nlohmann::json& j, FragmentSettings& f) {
  const FragmentSettings d;
  f.enabled = j.value("enabled", d.enabled);
  f.min_measures = j.value("min_measures", d.min_measures);
  f.max_measures = j.value("max_measures", d.max_measures);
  f.overlap = j.value("overlap", d.overlap);
}

inline void to_json(nlohmann::json& j, const TrainSettings& t) {
  j = {{"epochs", t.epochs},         {"batch_size", t.batch_size}, {"base_lr", t.base_lr},
       {"lr_decay", t.lr_decay},     {"lr_cycle", t.lr_cycle},     {"momentum", t.momentum},
       {"clip_norm", t.clip_norm},   {"norm_momentum", t.norm_momentum}};
}
inline void from_json(const nlohmann::json& j, TrainSettings& t) {
  const TrainSettings d;
  t.epochs = j.value("epochs", d.epochs);
  t.batch_size = j.value("batch_size", d.batch_size);
  t.base_lr = j.value("base_lr", d.base_lr);
  t.lr_decay = j.value("lr_decay", d.lr_decay);
  t.lr_cycle = j.value("lr_cycle", d.lr_cycle);
  t.momentum = j.value("momentum", d.momentum);
  t.clip_norm = j.value("clip_norm", d.clip_norm);
  t.norm_momentum = j.value("norm_momentum", d.norm_momentum);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"corpus", c.corpus.generic_string()},
       {"dataset", c.dataset.generic_string()},
       {"output", c.output.generic_string()},
       {"seed", c.seed},
       {"split", c.split},
       {"fragment", c.fragment},
       {"tempo_jitter", c.tempo_jitter},
       {"default_tempo", c.default_tempo},
       {"max_duration_seconds", c.max_duration_seconds},
       {"model", c.model},
       {"train", c.train}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  c.corpus = j.value("corpus", std::string{});
  c.dataset = j.value("dataset", std::string{});
  c.output = j.value("output", std::string{});
  c.seed = j.value("seed", d.seed);
  c.split = j.value("split", d.split);
  c.fragment = j.value("fragment", d.fragment);
  c.tempo_jitter = j.value("tempo_jitter", d.tempo_jitter);
  c.default_tempo = j.value("default_tempo", d.default_tempo);
  c.max_duration_seconds = j.value("max_duration_seconds", d.max_duration_seconds);
  c.model = j.value("model", d.model);
  c.train = j.value("train", d.train);
}

/// Parses a config text; relative paths are anchored at `base`.
inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base = {}) {
  RunConfig c;
  try {
    c = nlohmann::json::parse(text).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config: ") + e.what());
  }
  for (auto* p : {&c.corpus, &c.dataset, &c.output}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot read config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, path.parent_path());
}

}  // namespace a2s::pipeline
