// SPDX-License-Identifier: Apache-2.0
// densesed command line: synth, featurize, train, predict, eval, experiment, stats.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "densesed/annotations.hpp"
#include "densesed/audio.hpp"
#include "densesed/checkpoint.hpp"
#include "densesed/error.hpp"
#include "densesed/experiments.hpp"
#include "densesed/features.hpp"
#include "densesed/metrics.hpp"
#include "densesed/random.hpp"
#include "densesed/report.hpp"
#include "densesed/synthesis.hpp"
#include "densesed/train.hpp"

namespace fs = std::filesystem;
using namespace densesed;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct Common {
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_flag("--deterministic", c.deterministic, "Single-threaded, bit-reproducible mode");
  cmd->add_option("--out-dir", c.out_dir, "Output directory");
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t worker_count(const Common& c, std::size_t requested) {
  if (c.deterministic) return 1;
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string dataset;
  std::size_t n_species = 5;
  std::size_t clips_per_species = 20;
  std::size_t min_activations = 100;
  std::size_t polyphony = 3;
  std::size_t n_scenes = 100;
  std::string mode = "up_to";
  std::string part = "train";
  double train_fraction = 0.9;
  bool augment = false;
  std::string format = "float32";
};

int run_synth(const Common& c, const SynthArgs& a) {
  PoolSource src;
  if (!a.dataset.empty()) {
    src.kind = PoolSource::Kind::Dataset;
    src.dataset_dir = a.dataset;
    src.min_activations = a.min_activations;
  } else {
    src.synthetic.n_species = a.n_species;
    src.synthetic.clips_per_species = a.clips_per_species;
    src.synthetic.seed = derive_seed(c.seed, "pool");
  }
  SourcePool pool = build_source_pool(src, kDefaultSampleRate);
  std::vector<AudioClip> clips;
  if (a.part == "all") {
    clips = std::move(pool.clips);
  } else {
    auto [tr, te] = split_pool(pool.clips, a.train_fraction, derive_seed(c.seed, "split"));
    clips = a.part == "train" ? std::move(tr) : std::move(te);
  }
  SynthesisOptions opt;
  opt.max_polyphony = a.polyphony;
  opt.n_scenes = a.n_scenes;
  opt.seed = derive_seed(c.seed, "synth", a.polyphony);
  opt.augment = a.augment;
  opt.mode = a.mode == "exact" ? PolyphonyMode::Exact : PolyphonyMode::UpTo;
  opt.split = a.part == "test" ? Split::Test : Split::Train;
  SubsetManifest m = synthesize_subset(clips, opt);
  m.source_partition = a.part == "all" ? "whole pool" : a.part + " part of a " + std::to_string(a.train_fraction) + " split";
  const auto path = save_subset(m, c.out_dir, a.format == "pcm16" ? WavFormat::Pcm16 : WavFormat::Float32);
  std::cout << path << "\n";
  return kOk;
}

// --- featurize ----------------------------------------------------------------

int run_featurize(const Common& c, const std::string& manifest) {
  const SubsetManifest m = load_subset(manifest);
  fs::create_directories(c.out_dir);
  const FeatureConfig fc;
  for (const auto& s : m.scenes) {
    const auto mel = log_mel(s.clip.samples, fc);
    write_feature_cache((fs::path(c.out_dir) / (s.clip.id() + ".mel")).string(), mel.values);
  }
  std::cout << m.scenes.size() << " feature files written to " << c.out_dir << "\n";
  return kOk;
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string vocab;
  std::size_t epochs = 0;
  std::size_t workers = 0;
};

int run_train(const Common& c, const TrainArgs& a) {
  ExperimentConfig cfg;
  if (!a.config.empty()) cfg = load_experiment_config(a.config);
  cfg.train.seed = c.seed;
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  cfg.train.workers = worker_count(c, a.workers > 0 ? a.workers : (a.config.empty() ? 0 : cfg.train.workers));
  const SubsetManifest m = load_subset(a.manifest);
  SpeciesVocabulary vocab;
  if (!a.vocab.empty()) {
    vocab = SpeciesVocabulary(split_list(a.vocab));
  } else {
    std::vector<AnnotationSet> sets;
    for (const auto& s : m.scenes) sets.push_back(s.clip.annotations);
    vocab = build_vocabulary(sets, 1);
  }
  cfg.crnn.n_classes = vocab.size();
  cfg.crnn.n_mels = cfg.features.n_mels;
  const TrainResult r = train(m, vocab, cfg.crnn, cfg.train, cfg.features, [](std::size_t e, double loss) {
    std::cerr << "epoch " << e + 1 << " loss " << loss << "\n";
  });
  fs::create_directories(c.out_dir);
  const Checkpoint ck{cfg.crnn, r.model.params(), vocab.codes(), cfg.features, c.seed};
  save_checkpoint((fs::path(c.out_dir) / "model.ckpt").string(), ck);
  const std::vector<LossHistory> h{r.history};
  const std::vector<std::string> n{"loss"};
  write_file(fs::path(c.out_dir) / "loss.csv", export_loss_curves(h, n, r.history.size()));
  std::cout << (fs::path(c.out_dir) / "model.ckpt").string() << "\n";
  return kOk;
}

// --- predict --------------------------------------------------------------------

int run_predict(const Common& c, const std::string& checkpoint, const std::string& manifest,
                const std::vector<std::string>& audio, double threshold) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Crnn model(ck.config, ck.params);
  const SpeciesVocabulary vocab(ck.vocabulary);
  const double hop = ck.features.frame_hop_seconds();
  std::vector<std::pair<std::string, AudioClip>> inputs;
  if (!manifest.empty()) {
    for (auto& s : load_subset(manifest).scenes) inputs.emplace_back(s.clip.id(), std::move(s.clip));
  }
  for (const auto& p : audio) {
    const auto wav = read_wav(p);
    AudioClip clip;
    clip.samples = wav.samples;
    clip.sample_rate = wav.sample_rate;
    inputs.emplace_back(fs::path(p).stem().string(), std::move(clip));
  }
  if (inputs.empty()) throw ConfigError("predict needs --manifest or audio files");
  fs::create_directories(c.out_dir);
  for (const auto& [id, clip] : inputs) {
    if (std::abs(clip.sample_rate - ck.features.sample_rate) > 1e-9) {
      throw DataError(id + ": sample rate " + std::to_string(clip.sample_rate) + " does not match the model");
    }
    const RowMatrix probs = model.forward(log_mel(clip.samples, ck.features));
    const auto roll = binarize(probs, vocab, hop, threshold);
    write_file(fs::path(c.out_dir) / (id + ".tsv"), serialize_selection_table(roll_to_annotations(roll, id)));
  }
  std::cout << inputs.size() << " prediction files written to " << c.out_dir << "\n";
  return kOk;
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string ref_dir;
  std::string pred_dir;
  std::string vocab;
  double duration = 5.0;
  double segment = kDefaultSegmentLength;
  double frame_hop = 512.0 / 32000.0;
};

int run_eval(const Common& c, const EvalArgs& a) {
  std::vector<std::pair<std::string, AnnotationSet>> refs;
  if (!a.manifest.empty()) {
    for (const auto& s : load_subset(a.manifest).scenes) refs.emplace_back(s.clip.id(), s.clip.annotations);
  } else {
    if (a.ref_dir.empty()) throw ConfigError("eval needs --manifest or --ref-dir");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.ref_dir)) {
      if (e.path().extension() == ".tsv" || e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      refs.emplace_back(f.stem().string(), load_selection_table(f.string(), a.duration));
    }
  }
  if (refs.empty()) throw DataError("no reference files");
  std::vector<FilePair> pairs;
  std::vector<AnnotationSet> all;
  for (auto& [id, ref] : refs) {
    const fs::path p = fs::path(a.pred_dir) / (id + ".tsv");
    if (!fs::exists(p)) throw DataError("missing prediction " + p.string());
    AnnotationSet pred = load_selection_table(p.string(), ref.duration());
    all.push_back(ref);
    all.push_back(pred);
    pairs.push_back({id, ref, std::move(pred)});
  }
  const SpeciesVocabulary vocab = a.vocab.empty() ? build_vocabulary(all, 1) : SpeciesVocabulary(split_list(a.vocab));
  const EvaluationReport r = evaluate_files(pairs, vocab, a.frame_hop, a.segment);
  write_file(fs::path(c.out_dir) / "report.json", evaluation_report_json(r));
  const std::string text = evaluation_report_text(r);
  write_file(fs::path(c.out_dir) / "report.txt", text);
  std::cout << text;
  return kOk;
}

// --- experiment -------------------------------------------------------------------

int run_experiment_cmd(const Common& c, const std::string& config, bool seed_given, bool out_given,
                       std::size_t workers) {
  ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_experiment_config(config);
  if (seed_given) cfg.seed = c.seed;
  if (out_given) cfg.out_dir = c.out_dir;
  cfg.train.workers = worker_count(c, workers > 0 ? workers : cfg.train.workers);
  const ExperimentReport r = run_experiment(cfg, [](const std::string& s) { std::cerr << s << "\n"; });
  std::cout << render_table1(r);
  return kOk;
}

// --- stats ------------------------------------------------------------------------

int run_stats(const Common& c, bool out_given, const std::vector<std::string>& inputs, double duration,
              std::size_t min_count) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".txt" || ext == ".tsv")) found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw DataError("no annotation files given");
  const auto sets = load_annotation_files(files, duration);
  const DatasetStats s = dataset_stats(sets);
  std::cout << dataset_stats_text(s, min_count);
  if (out_given) write_file(fs::path(c.out_dir) / "stats.json", dataset_stats_json(s, min_count));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense polyphonic sound event detection toolkit"};
  app.require_subcommand(1);
  Common common;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a polyphony-controlled subset");
  add_common(synth, common);
  synth->add_option("--dataset", sa.dataset, "Dataset directory (default: synthetic tone pool)");
  synth->add_option("--species", sa.n_species, "Synthetic pool species");
  synth->add_option("--clips-per-species", sa.clips_per_species, "Synthetic pool clips per species");
  synth->add_option("--min-activations", sa.min_activations, "Vocabulary threshold for datasets");
  synth->add_option("--polyphony", sa.polyphony, "Maximum polyphony P")->check(CLI::PositiveNumber);
  synth->add_option("--scenes", sa.n_scenes, "Number of scenes");
  synth->add_option("--mode", sa.mode, "up_to or exact")->check(CLI::IsMember({"up_to", "exact"}));
  synth->add_option("--part", sa.part, "Pool part: train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  synth->add_option("--train-fraction", sa.train_fraction, "Pool train fraction");
  synth->add_flag("--augment", sa.augment, "Augment source clips");
  synth->add_option("--format", sa.format, "WAV sample format")->check(CLI::IsMember({"float32", "pcm16"}));

  std::string feat_manifest;
  auto* featurize = app.add_subcommand("featurize", "Write log-mel feature caches for a manifest");
  add_common(featurize, common);
  featurize->add_option("--manifest", feat_manifest, "Subset manifest")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a detector on a subset");
  add_common(train_cmd, common);
  train_cmd->add_option("--manifest", ta.manifest, "Training subset manifest")->required();
  train_cmd->add_option("--config", ta.config, "Experiment config (model, training, features)");
  train_cmd->add_option("--vocab", ta.vocab, "Comma-separated species codes");
  train_cmd->add_option("--epochs", ta.epochs, "Override epoch count");
  train_cmd->add_option("--workers", ta.workers, "Gradient worker threads");

  std::string ckpt, pred_manifest;
  std::vector<std::string> pred_audio;
  double threshold = 0.5;
  auto* predict = app.add_subcommand("predict", "Write prediction tables for audio");
  add_common(predict, common);
  predict->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  predict->add_option("--manifest", pred_manifest, "Subset manifest");
  predict->add_option("--threshold", threshold, "Binarization threshold");
  predict->add_option("audio", pred_audio, "WAV files");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  add_common(eval, common);
  eval->add_option("--manifest", ea.manifest, "Reference subset manifest");
  eval->add_option("--ref-dir", ea.ref_dir, "Directory of reference tables");
  eval->add_option("--pred-dir", ea.pred_dir, "Directory of <id>.tsv predictions")->required();
  eval->add_option("--vocab", ea.vocab, "Comma-separated species codes");
  eval->add_option("--duration", ea.duration, "File duration for --ref-dir tables");
  eval->add_option("--segment", ea.segment, "Segment length in seconds");
  eval->add_option("--frame-hop", ea.frame_hop, "Frame hop in seconds");

  std::string exp_config;
  std::size_t exp_workers = 0;
  auto* experiment = app.add_subcommand("experiment", "Run the full train/evaluate experiment");
  add_common(experiment, common);
  experiment->add_option("--config", exp_config, "Experiment config JSON");
  experiment->add_option("--workers", exp_workers, "Gradient worker threads");

  std::vector<std::string> stats_inputs;
  double stats_duration = 86400.0;
  std::size_t min_count = 100;
  auto* stats = app.add_subcommand("stats", "Summarize annotation files");
  add_common(stats, common);
  stats->add_option("inputs", stats_inputs, "Annotation files or directories")->required();
  stats->add_option("--duration", stats_duration, "Upper bound on recording length in seconds");
  stats->add_option("--min-count", min_count, "Vocabulary threshold reported alongside");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return run_synth(common, sa);
    if (*featurize) return run_featurize(common, feat_manifest);
    if (*train_cmd) return run_train(common, ta);
    if (*predict) return run_predict(common, ckpt, pred_manifest, pred_audio, threshold);
    if (*eval) return run_eval(common, ea);
    if (*experiment) {
      return run_experiment_cmd(common, exp_config, experiment->count("--seed") > 0,
                                experiment->count("--out-dir") > 0, exp_workers);
    }
    if (*stats) return run_stats(common, stats->count("--out-dir") > 0, stats_inputs, stats_duration, min_count);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
