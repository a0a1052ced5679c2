// Command-line front end: build, train, transcribe, evaluate.
//
// Exit codes: 0 success, 1 usage or config, 2 data, 3 model or decoding,
// 4 transcription that does not decode (raw symbols are printed instead).

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "a2s/pipeline/build.hpp"
#include "a2s/pipeline/config.hpp"
#include "a2s/pipeline/infer.hpp"
#include "a2s/pipeline/train.hpp"

namespace {

namespace fs = std::filesystem;
using a2s::Errc;
using namespace a2s::pipeline;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kModel = 3;
constexpr int kUndecodable = 4;

int exit_code(Errc e) {
  switch (e) {
    case Errc::InvalidConfig: return kUsage;
    case Errc::ShapeMismatch:
    case Errc::StaleCache:
    case Errc::OddFeatureDim:
    case Errc::NonFiniteGradient:
    case Errc::BadCheckpoint:
    case Errc::VocabularyMismatch:
    case Errc::SyntaxError: return kModel;
    default: return kData;
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string manifest;
  std::string checkpoint;
  std::string split = "test";
  bool json = false;
  bool oracle = false;
  std::string wav;
};

RunConfig run_config(const Options& o) {
  if (o.config.empty()) throw a2s::Error(Errc::InvalidConfig, "--config is required");
  auto cfg = load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

fs::path manifest_path(const Options& o, const std::optional<RunConfig>& cfg) {
  if (!o.manifest.empty()) return o.manifest;
  if (cfg && !cfg->dataset.empty()) return cfg->dataset / kManifestFile;
  throw a2s::Error(Errc::InvalidConfig, "--manifest or a config with a dataset path is required");
}

int cmd_build(const Options& o) {
  const auto cfg = run_config(o);
  if (cfg.corpus.empty() || cfg.dataset.empty()) throw a2s::Error(Errc::InvalidConfig, "config needs corpus and dataset");
  const auto r = build_dataset(cfg, &std::cerr);
  std::size_t per_split[3] = {0, 0, 0};
  for (const auto& rec : r.manifest.records) {
    for (int i = 0; i < 3; ++i) per_split[i] += rec.split == kSplits[i] ? 1 : 0;
  }
  if (o.json) {
    std::cout << nlohmann::json{{"samples", r.manifest.records.size()}, {"train", per_split[0]},
                                {"validation", per_split[1]}, {"test", per_split[2]}, {"sources", r.sources},
                                {"failed_sources", r.failed_sources}, {"skipped_fragments", r.skipped_fragments},
                                {"manifest", (cfg.dataset / kManifestFile).string()}}.dump()
              << '\n';
  } else {
    std::cout << "built " << r.manifest.records.size() << " samples (train " << per_split[0] << ", validation "
              << per_split[1] << ", test " << per_split[2] << ") from " << r.sources << " scores into "
              << cfg.dataset.string() << '\n';
  }
  return kOk;
}

int cmd_train(const Options& o) {
  const auto cfg = run_config(o);
  if (cfg.output.empty()) throw a2s::Error(Errc::InvalidConfig, "config needs an output path");
  TrainOptions opts;
  if (!o.checkpoint.empty()) opts.resume = fs::path(o.checkpoint);
  opts.progress = &std::cerr;
  const auto r = train(cfg, manifest_path(o, cfg), opts);
  if (o.json) {
    std::cout << nlohmann::json{{"epochs", r.epochs}, {"best_epoch", r.best_epoch}, {"best_wer", r.best_wer},
                                {"infeasible", r.infeasible}, {"last", r.last_checkpoint.string()},
                                {"best", r.best_checkpoint.string()}}.dump()
              << '\n';
  } else {
    std::cout << "trained " << r.epochs << " epochs; best epoch " << r.best_epoch << " (WER " << r.best_wer
              << "); checkpoints in " << cfg.output.string() << '\n';
  }
  return kOk;
}

int cmd_transcribe(const Options& o) {
  if (o.checkpoint.empty()) throw a2s::Error(Errc::InvalidConfig, "--checkpoint is required");
  const auto loaded = load_model(o.checkpoint);
  const auto clip = a2s::load_wav(o.wav);
  const auto input = a2s::net::to_input<float>(a2s::stft_logfreq(clip));
  const auto t = transcribe(loaded.model, *loaded.vocab, input);
  if (o.json) {
    nlohmann::json out{{"symbols", t.symbols}, {"decodable", t.document.has_value()}};
    if (t.document) out["kern"] = a2s::kern::serialize(*t.document);
    else out["error"] = t.error;
    std::cout << out.dump() << '\n';
  } else if (t.document) {
    std::cout << a2s::kern::serialize(*t.document);
  } else {
    for (const auto& s : t.symbols) std::cout << a2s::escape_symbol(s) << '\n';
    std::cerr << "error: transcription does not decode: " << t.error << '\n';
  }
  return t.document ? kOk : kUndecodable;
}

int cmd_evaluate(const Options& o) {
  std::optional<RunConfig> cfg;
  if (!o.config.empty()) cfg = run_config(o);
  const auto manifest = read_manifest(manifest_path(o, cfg));
  std::optional<LoadedModel> loaded;
  if (!o.oracle) {
    if (o.checkpoint.empty()) throw a2s::Error(Errc::InvalidConfig, "--checkpoint or --oracle is required");
    loaded = load_model(o.checkpoint);
  }
  const auto report = evaluate_split(manifest, o.split, loaded ? &loaded->model : nullptr,
                                     loaded ? loaded->vocab.get() : nullptr);
  if (o.json) std::cout << report.to_json().dump() << '\n';
  else std::cout << report.to_text();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-to-score transcription into a **kern-derived encoding"};
  app.require_subcommand(1);
  Options o;

  auto* build = app.add_subcommand("build", "Synthesize a dataset from a kern corpus");
  auto* train_cmd = app.add_subcommand("train", "Train a model on a built dataset");
  auto* transcribe_cmd = app.add_subcommand("transcribe", "Transcribe a WAV file");
  auto* evaluate = app.add_subcommand("evaluate", "Report WER and CER on a dataset split");

  for (auto* c : {build, train_cmd, evaluate}) {
    c->add_option("--config", o.config, "Run configuration (JSON)");
    c->add_option("--seed", o.seed, "Overrides the config seed");
  }
  for (auto* c : {train_cmd, evaluate}) c->add_option("--manifest", o.manifest, "Dataset manifest");
  train_cmd->add_option("--checkpoint", o.checkpoint, "Resume from this checkpoint");
  transcribe_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  transcribe_cmd->add_option("wav", o.wav, "22050 Hz PCM WAV file")->required();
  evaluate->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  evaluate->add_option("--split", o.split, "train, validation or test")->check(CLI::IsMember({"train", "validation", "test"}));
  evaluate->add_flag("--oracle", o.oracle, "Score the references against themselves");
  for (auto* c : {build, train_cmd, transcribe_cmd, evaluate}) c->add_flag("--json", o.json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) return cmd_build(o);
    if (*train_cmd) return cmd_train(o);
    if (*transcribe_cmd) return cmd_transcribe(o);
    return cmd_evaluate(o);
  } catch (const a2s::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
