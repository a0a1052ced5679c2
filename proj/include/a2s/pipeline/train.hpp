#pragma once

// Training loop: shuffled mini-batches, CTC loss, Nesterov SGD with the
// cyclic schedule, per-epoch greedy validation, last and best checkpoints.
//
// Every random draw comes from a stream derived from (seed, epoch, ...), so
// a resumed run reaches the same state as an uninterrupted one.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2s/codec.hpp"
#include "a2s/ctc.hpp"
#include "a2s/error.hpp"
#include "a2s/net/checkpoint.hpp"
#include "a2s/net/crnn.hpp"
#include "a2s/net/optim.hpp"
#include "a2s/pipeline/build.hpp"
#include "a2s/pipeline/config.hpp"
#include "a2s/pipeline/infer.hpp"
#include "a2s/pipeline/manifest.hpp"
#include "a2s/rng.hpp"
#include "a2s/spectrogram.hpp"

namespace a2s::pipeline {

inline constexpr const char* kLastCheckpoint = "last.ckpt";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kTrainLog = "log.jsonl";

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::ostream* progress = nullptr;             // human-readable progress, may include timing
};

struct TrainResult {
  int epochs = 0;  // completed epochs in total, including resumed ones
  int best_epoch = 0;  // 1-based, 0 when no epoch ran
  double best_wer = std::numeric_limits<double>::infinity();
  std::size_t infeasible = 0;  // training samples too short for their targets
  std::vector<nlohmann::json> log;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// 1-based epoch of the lowest WER; the earliest one on ties.
inline int best_epoch(const std::vector<double>& wers) {
  int best = 0;
  for (std::size_t i = 0; i < wers.size(); ++i) {
    if (best == 0 || wers[i] < wers[static_cast<std::size_t>(best - 1)]) best = static_cast<int>(i) + 1;
  }
  return best;
}

/// Model config for a dataset vocabulary.
inline net::ModelConfig model_config_for(const RunConfig& cfg, const Vocabulary& vocab) {
  net::ModelConfig m = cfg.model;
  m.vocab_size = static_cast<int>(vocab.size());
  m.input_bins = static_cast<int>(kLogBins);
  m.validate();
  return m;
}

namespace detail {

struct TrainSample {
  net::Act<float> input;
  std::vector<Token> target;
};

template <class T>
void accumulate(net::ModelParams<T>& sum, const net::ModelParams<T>& g, T scale = T(1)) {
  auto a = net::tensors(sum);
  const auto b = net::tensors(g);
  for (std::size_t i = 0; i < a.size(); ++i) *a[i].tensor += scale * *b[i].tensor;
}

inline void write_log(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + '\n';
  write_text(path, text);
}

}  // namespace detail

/// Trains on the train split of the manifest at `manifest_path` and writes
/// checkpoints and the epoch log into cfg.output.
inline TrainResult train(const RunConfig& cfg, const std::filesystem::path& manifest_path, const TrainOptions& opts = {}) {
  cfg.validate();
  const Manifest manifest = read_manifest(manifest_path);
  const auto vocab = std::make_shared<const Vocabulary>(load_vocabulary(manifest.root / kVocabularyFile));
  const net::ModelConfig model_cfg = model_config_for(cfg, *vocab);
  const auto say = [&](const std::string& s) {
    if (opts.progress) *opts.progress << s << '\n' << std::flush;
  };

  const auto train_records = manifest.split("train");
  if (train_records.empty()) throw Error(Errc::EmptyCorpus, "the manifest has no training samples");
  auto eval_records = manifest.split("validation");
  std::string eval_split = "validation";
  if (eval_records.empty()) {
    eval_records = train_records;
    eval_split = "train";
  }

  const LogFrequencyAnalyzer analyzer;
  std::vector<std::string> problems;
  const auto prepared = prepare_samples(manifest, train_records, analyzer, problems);
  const auto eval_samples = eval_split == "train" ? prepared : prepare_samples(manifest, eval_records, analyzer, problems);
  for (const auto& p : problems) say("skipped " + p);

  TrainResult result;
  std::vector<detail::TrainSample> samples;
  for (const auto& p : prepared) {
    detail::TrainSample s{p.input, {}};
    for (const auto& text : p.reference) {
      const auto t = vocab->find(text);
      if (!t) throw Error(Errc::OutOfVocabulary, p.record.id + ": symbol '" + text + "' is not in the vocabulary");
      s.target.push_back(*t);
    }
    if (static_cast<std::size_t>(model_cfg.output_frames(s.input.rows())) < ctc::min_frames(s.target)) {
      ++result.infeasible;
      say("skipped " + p.record.id + ": too few frames for its target");
      continue;
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw Error(Errc::EmptyCorpus, "no usable training sample");
  if (eval_samples.empty()) throw Error(Errc::EmptyCorpus, "no usable evaluation sample");

  net::Crnn<float> model = net::Crnn<float>::initialize(model_cfg, cfg.seed);
  net::ModelParams<float> velocity = net::zeros_like(model.params());
  int start = 0;
  if (opts.resume) {
    auto ck = net::load_checkpoint(*opts.resume, vocab->hash());
    if (!(ck.config == model_cfg)) throw Error(Errc::InvalidConfig, "checkpoint model config differs from the run config");
    if (ck.state.value("seed", cfg.seed) != cfg.seed) throw Error(Errc::InvalidConfig, "checkpoint was trained with another seed");
    model = net::Crnn<float>(model_cfg, std::move(ck.params));
    velocity = std::move(ck.velocity);
    start = ck.state.value("epoch", 0);
    result.best_epoch = ck.state.value("best_epoch", 0);
    if (result.best_epoch > 0) result.best_wer = ck.state.at("best_wer").get<double>();
    for (const auto& row : ck.state.value("log", nlohmann::json::array())) result.log.push_back(row);
  }

  std::filesystem::create_directories(cfg.output);
  result.last_checkpoint = cfg.output / kLastCheckpoint;
  result.best_checkpoint = cfg.output / kBestCheckpoint;
  const net::Schedule schedule{cfg.train.base_lr, cfg.train.lr_decay, cfg.train.lr_cycle};
  const auto batch = static_cast<std::size_t>(cfg.train.batch_size);

  for (int epoch = start; epoch < cfg.train.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = net::lr_at_epoch(epoch, schedule);
    const auto e = static_cast<std::uint64_t>(epoch);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(derive_seed(cfg.seed, {0xe90c, e})).shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t used = 0, non_finite = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      auto grads = net::zeros_like(model.params());
      std::vector<net::ChannelMoments> moments;
      std::size_t n = 0;
      for (std::size_t k = b; k < std::min(order.size(), b + batch); ++k) {
        const auto& s = samples[order[k]];
        const auto fwd = model.forward(s.input, net::Mode::Train, derive_seed(cfg.seed, {0xd0, e, order[k]}));
        const auto grid = PosteriorGrid<double>::from_logits(fwd.logits.cast<double>());
        const auto loss = ctc::ctc_loss(grid, s.target);
        if (!std::isfinite(loss.loss)) {
          ++non_finite;
          continue;
        }
        const Matrix<float> dlogits = ctc::ctc_grad(loss.lattice, grid).cast<float>();
        detail::accumulate(grads, model.backward(*fwd.cache, dlogits));
        if (moments.empty()) moments.resize(fwd.norm_moments.size());
        for (std::size_t i = 0; i < moments.size(); ++i) moments[i].add(fwd.norm_moments[i]);
        loss_sum += loss.loss;
        ++n;
      }
      if (n == 0) continue;
      used += n;
      for (auto& t : net::tensors(grads)) *t.tensor /= static_cast<float>(n);
      if (cfg.train.clip_norm > 0.0) net::clip_global_norm(grads, cfg.train.clip_norm);
      net::sgd_nesterov_step(model.params(), grads, velocity, lr, cfg.train.momentum);
      net::update_running_stats(model.params(), moments, cfg.train.norm_momentum);
    }

    const auto report = score_samples(eval_samples, &model, vocab.get());
    const double wer = report.corpus.wer();
    const double cer = report.corpus.cer();
    nlohmann::json row{{"epoch", epoch + 1},
                       {"lr", lr},
                       {"loss", used ? loss_sum / static_cast<double>(used) : 0.0},
                       {"samples", used},
                       {"skipped", non_finite + result.infeasible},
                       {"eval_split", eval_split},
                       {"wer", wer},
                       {"cer", cer},
                       {"decodable", report.decodable_fraction()}};
    result.log.push_back(row);
    const bool improved = result.best_epoch == 0 || wer < result.best_wer;
    if (improved) {
      result.best_epoch = epoch + 1;
      result.best_wer = wer;
    }

    net::Checkpoint ck;
    ck.config = model_cfg;
    ck.vocab = vocab;
    ck.params = model.params();
    ck.velocity = velocity;
    ck.state = {{"epoch", epoch + 1}, {"seed", cfg.seed},       {"best_epoch", result.best_epoch},
                {"best_wer", result.best_wer}, {"log", result.log}};
    net::save_checkpoint(result.last_checkpoint, ck);
    if (improved) net::save_checkpoint(result.best_checkpoint, ck);
    detail::write_log(cfg.output / kTrainLog, result.log);

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    say("epoch " + std::to_string(epoch + 1) + "  loss " + std::to_string(row["loss"].get<double>()) + "  " +
        eval_split + " WER " + std::to_string(wer) + " CER " + std::to_string(cer) + "  (" + std::to_string(seconds) +
        " s)");
  }
  result.epochs = std::max(start, cfg.train.epochs);
  return result;
}

/// Loads a checkpoint as a ready model.
struct LoadedModel {
  std::shared_ptr<const Vocabulary> vocab;
  net::Crnn<float> model;
  nlohmann::json state;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
  auto ck = net::load_checkpoint(path);
  return LoadedModel{ck.vocab, net::Crnn<float>(ck.config, std::move(ck.params)), std::move(ck.state)};
}

}  // namespace a2s::pipeline
