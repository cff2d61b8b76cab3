// SPDX-License-Identifier: Apache-2.0
#include "densesed/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "densesed/checkpoint.hpp"
#include "densesed/error.hpp"
#include "densesed/random.hpp"
#include "json_config.hpp"

namespace densesed {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kChunk = 256;

template <typename F>
auto stage(const std::string& name, F&& body) {
  const std::string prefix = "stage " + name + ": ";
  try {
    return body();
  } catch (const ParseError& e) {
    throw DataError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure(prefix + e.what());
  } catch (const std::exception& e) {
    throw RuntimeFailure(prefix + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

AnnotationSet restrict_to(const AnnotationSet& set, const SpeciesVocabulary& vocab) {
  std::vector<Event> kept;
  for (const auto& e : set.events()) {
    if (vocab.index_of(e.species)) kept.push_back(e);
  }
  return AnnotationSet(std::move(kept), set.source_id(), set.duration());
}

// A synthesized subset with features computed and audio released.
struct BuiltSubset {
  SubsetManifest manifest;
  std::vector<TrainingExample> examples;
};

BuiltSubset build_subset(std::span<const AudioClip> pool, SynthesisOptions opt, const fs::path& dir,
                         const ExperimentConfig& cfg, const SpeciesVocabulary& vocab) {
  BuiltSubset out;
  fs::create_directories(dir);
  const std::size_t total = opt.n_scenes;
  out.manifest.max_polyphony = opt.max_polyphony;
  out.manifest.seed = opt.seed;
  out.manifest.split = opt.split;
  out.manifest.mode = opt.mode;
  out.examples.reserve(total);
  for (std::size_t start = 0; start < total; start += kChunk) {
    opt.first_index = start;
    opt.n_scenes = std::min(kChunk, total - start);
    SubsetManifest part = synthesize_subset(pool, opt);
    for (auto& scene : part.scenes) {
      const std::string id = scene.clip.id();
      if (cfg.save_audio) {
        write_wav((dir / (id + ".wav")).string(), scene.clip.samples, scene.clip.sample_rate);
      }
      save_selection_table(scene.clip.annotations, (dir / (id + ".tsv")).string());
      out.manifest.paths.emplace_back(id + ".wav", id + ".tsv");
      out.examples.push_back(make_example(scene.clip, vocab, cfg.features));
      scene.clip.samples = {};
      out.manifest.scenes.push_back(std::move(scene));
    }
  }
  return out;
}

EvaluationReport evaluate_model(const Crnn& model, const BuiltSubset& test, const SpeciesVocabulary& vocab,
                                const ExperimentConfig& cfg, const fs::path& pred_dir) {
  const double hop = cfg.features.frame_hop_seconds();
  std::vector<FilePair> pairs;
  pairs.reserve(test.examples.size());
  for (std::size_t i = 0; i < test.examples.size(); ++i) {
    const auto& scene = test.manifest.scenes[i];
    const RowMatrix probs = model.forward({test.examples[i].features, hop});
    EventRoll roll = binarize(probs, vocab, hop, cfg.threshold);
    const AnnotationSet predicted = roll_to_annotations(roll, scene.clip.id());
    write_text(pred_dir / (scene.clip.id() + ".tsv"), serialize_selection_table(predicted));
    pairs.push_back({scene.clip.id(), scene.clip.annotations, std::move(roll)});
  }
  return evaluate_files(pairs, vocab, hop, cfg.segment_length);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (polyphony_levels.empty()) throw ConfigError("at least one polyphony level is required");
  for (std::size_t i = 0; i < polyphony_levels.size(); ++i) {
    if (polyphony_levels[i] < 1) throw ConfigError("polyphony levels must be at least 1");
    if (i > 0 && polyphony_levels[i] <= polyphony_levels[i - 1]) {
      throw ConfigError("polyphony levels must be strictly increasing");
    }
  }
  for (auto p : fixed_test_polyphonies) {
    if (p < 1) throw ConfigError("fixed test polyphonies must be at least 1");
  }
  if (n_train_scenes == 0) throw ConfigError("n_train_scenes must be positive");
  if (!(segment_length > 0.0)) throw ConfigError("segment_length must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  if (pool.kind == PoolSource::Kind::Dataset && pool.dataset_dir.empty()) {
    throw ConfigError("dataset pool needs dataset_dir");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  train.validate();
  features.stft.validate();
}

std::size_t ExperimentConfig::test_scene_count() const {
  if (n_test_scenes > 0) return n_test_scenes;
  const double f = train.train_fraction;
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n_train_scenes) * (1.0 - f) / f)));
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "polyphony_levels", "fixed_test_polyphonies", "n_train_scenes", "n_test_scenes",
                 "augment", "save_audio", "segment_length", "threshold", "out_dir", "pool", "model",
                 "training", "features"},
             "experiment");
  ExperimentConfig c;
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("polyphony_levels")) c.polyphony_levels = j["polyphony_levels"].get<std::vector<std::size_t>>();
    if (j.contains("fixed_test_polyphonies")) {
      c.fixed_test_polyphonies = j["fixed_test_polyphonies"].get<std::vector<std::size_t>>();
    }
    if (j.contains("n_train_scenes")) c.n_train_scenes = j["n_train_scenes"].get<std::size_t>();
    if (j.contains("n_test_scenes")) c.n_test_scenes = j["n_test_scenes"].get<std::size_t>();
    if (j.contains("augment")) c.augment = j["augment"].get<bool>();
    if (j.contains("save_audio")) c.save_audio = j["save_audio"].get<bool>();
    if (j.contains("segment_length")) c.segment_length = j["segment_length"].get<double>();
    if (j.contains("threshold")) c.threshold = j["threshold"].get<double>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("pool")) {
      const auto& p = j["pool"];
      check_keys(p, {"kind", "dataset_dir", "min_activations", "frame_length", "frame_hop", "n_species",
                     "clips_per_species", "clip_seconds", "seed"},
                 "pool");
      if (p.contains("kind")) {
        const auto kind = p["kind"].get<std::string>();
        if (kind == "synthetic") c.pool.kind = PoolSource::Kind::Synthetic;
        else if (kind == "dataset") c.pool.kind = PoolSource::Kind::Dataset;
        else throw ConfigError("pool: kind must be 'synthetic' or 'dataset'");
      }
      if (p.contains("dataset_dir")) c.pool.dataset_dir = p["dataset_dir"].get<std::string>();
      if (p.contains("min_activations")) c.pool.min_activations = p["min_activations"].get<std::size_t>();
      if (p.contains("frame_length")) c.pool.frame_length = p["frame_length"].get<double>();
      if (p.contains("frame_hop")) c.pool.frame_hop = p["frame_hop"].get<double>();
      if (p.contains("n_species")) c.pool.synthetic.n_species = p["n_species"].get<std::size_t>();
      if (p.contains("clips_per_species")) {
        c.pool.synthetic.clips_per_species = p["clips_per_species"].get<std::size_t>();
      }
      if (p.contains("clip_seconds")) c.pool.synthetic.clip_seconds = p["clip_seconds"].get<double>();
      if (p.contains("seed")) c.pool.synthetic.seed = p["seed"].get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (j.contains("model")) c.crnn = crnn_config_from_json(j["model"], c.crnn);
  if (j.contains("training")) c.train = train_config_from_json(j["training"], c.train);
  if (j.contains("features")) c.features = feature_config_from_json(j["features"], c.features);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(text);
}

std::string experiment_config_json(const ExperimentConfig& c) {
  Json pool{{"kind", c.pool.kind == PoolSource::Kind::Synthetic ? "synthetic" : "dataset"},
            {"dataset_dir", c.pool.dataset_dir},
            {"min_activations", c.pool.min_activations},
            {"frame_length", c.pool.frame_length},
            {"frame_hop", c.pool.frame_hop},
            {"n_species", c.pool.synthetic.n_species},
            {"clips_per_species", c.pool.synthetic.clips_per_species},
            {"clip_seconds", c.pool.synthetic.clip_seconds},
            {"seed", c.pool.synthetic.seed}};
  return Json{{"seed", c.seed},
              {"polyphony_levels", c.polyphony_levels},
              {"fixed_test_polyphonies", c.fixed_test_polyphonies},
              {"n_train_scenes", c.n_train_scenes},
              {"n_test_scenes", c.n_test_scenes},
              {"augment", c.augment},
              {"save_audio", c.save_audio},
              {"segment_length", c.segment_length},
              {"threshold", c.threshold},
              {"out_dir", c.out_dir},
              {"pool", pool},
              {"model", to_json(c.crnn)},
              {"training", to_json(c.train)},
              {"features", to_json(c.features)}}
             .dump(2) + "\n";
}

std::vector<AnnotationSet> load_annotation_files(const std::vector<std::string>& paths, double duration) {
  std::vector<AnnotationSet> sets;
  sets.reserve(paths.size());
  for (const auto& p : paths) {
    try {
      AnnotationSet raw = load_selection_table(p, duration);
      sets.emplace_back(raw.events(), fs::path(p).filename().string(), raw.duration());
    } catch (const ParseError& e) {
      throw DataError(p + ": " + e.what());
    }
  }
  return sets;
}

std::vector<Recording> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Recording> recordings;
  for (const auto& f : files) {
    if (lower(f.extension().string()) != ".wav") continue;
    const std::string stem = f.stem().string();
    std::string table;
    for (const auto& g : files) {
      const std::string name = g.filename().string();
      const std::string ext = lower(g.extension().string());
      if ((ext == ".txt" || ext == ".tsv") && name.rfind(stem + ".", 0) == 0) {
        table = g.string();
        break;
      }
    }
    if (table.empty()) throw DataError("no selection table for " + f.string());
    const auto wav = read_wav(f.string());
    Recording r;
    r.audio_path = f.string();
    r.annotation_path = table;
    r.clip.samples = wav.samples;
    r.clip.sample_rate = wav.sample_rate;
    try {
      const AnnotationSet raw = load_selection_table(table, r.clip.duration());
      r.clip.annotations = AnnotationSet(raw.events(), stem, raw.duration());
    } catch (const ParseError& e) {
      throw DataError(table + ": " + e.what());
    }
    recordings.push_back(std::move(r));
  }
  if (recordings.empty()) throw DataError("no .wav recordings in " + dir);
  return recordings;
}

SourcePool build_source_pool(const PoolSource& source, double sample_rate) {
  SourcePool pool;
  if (source.kind == PoolSource::Kind::Synthetic) {
    SyntheticPoolOptions opt = source.synthetic;
    opt.sample_rate = sample_rate;
    pool.clips = generate_synthetic_pool(opt);
    for (const auto& c : pool.clips) pool.source_annotations.push_back(c.annotations);
    std::vector<std::string> codes;
    for (std::size_t s = 0; s < opt.n_species; ++s) codes.push_back("SYN" + std::to_string(s));
    pool.vocabulary = SpeciesVocabulary(codes);
    return pool;
  }
  auto recordings = load_dataset(source.dataset_dir);
  for (const auto& r : recordings) {
    if (std::abs(r.clip.sample_rate - sample_rate) > 1e-9) {
      throw DataError(r.audio_path + " has sample rate " + std::to_string(r.clip.sample_rate) +
                      ", features expect " + std::to_string(sample_rate));
    }
    pool.source_annotations.push_back(r.clip.annotations);
  }
  pool.vocabulary = build_vocabulary(pool.source_annotations, source.min_activations);
  for (auto& r : recordings) {
    for (auto& clip : frame_blocking(r.clip, source.frame_length, source.frame_hop)) {
      clip.annotations = restrict_to(clip.annotations, pool.vocabulary);
      if (!clip.annotations.empty()) pool.clips.push_back(std::move(clip));
    }
    r.clip.samples = {};
  }
  if (pool.clips.empty()) throw DataError("no annotated clips after frame blocking");
  return pool;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg_in, const ProgressLog& log) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const fs::path root(cfg.out_dir);
  fs::create_directories(root);
  write_text(root / "config.json", experiment_config_json(cfg));

  SourcePool source = stage("pool", [&] { return build_source_pool(cfg.pool, cfg.features.sample_rate); });
  const SpeciesVocabulary& vocab = source.vocabulary;
  cfg.crnn.n_classes = vocab.size();
  cfg.crnn.n_mels = cfg.features.n_mels;
  cfg.train.n_train_samples = cfg.n_train_scenes;
  stage("config", [&] { cfg.crnn.validate(); return 0; });
  say("pool: " + std::to_string(source.clips.size()) + " clips, " + std::to_string(vocab.size()) + " species");

  auto [train_pool, test_pool] = stage("split", [&] {
    return split_pool(source.clips, cfg.train.train_fraction, derive_seed(cfg.seed, "split"));
  });
  source.clips = {};
  const std::string partition = "source clips split " + std::to_string(train_pool.size()) + "/" +
                                std::to_string(test_pool.size()) + " before synthesis";
  {
    Json split{{"train", Json::array()}, {"test", Json::array()}};
    for (const auto& c : train_pool) split["train"].push_back(c.id());
    for (const auto& c : test_pool) split["test"].push_back(c.id());
    write_text(root / "pool_split.json", split.dump(2) + "\n");
  }
  const std::size_t n_test = cfg.test_scene_count();

  auto finish_manifest = [&](BuiltSubset& s, const fs::path& dir) {
    s.manifest.source_partition = partition;
    write_text(dir / "manifest.json", manifest_to_json(s.manifest));
  };

  ExperimentReport report;
  report.fixed_polyphonies = cfg.fixed_test_polyphonies;
  report.test_sets.push_back("Matched testing set, polyphony 1 to P");
  for (auto q : cfg.fixed_test_polyphonies) {
    report.test_sets.push_back("Samples with polyphony of " + std::to_string(q));
  }
  for (const auto& [code, n] : species_counts(source.source_annotations)) {
    report.total_annotations += n;
    if (vocab.index_of(code)) report.annotation_counts.emplace_back(code, n);
  }
  source.source_annotations = {};

  std::vector<BuiltSubset> fixed;
  for (auto q : cfg.fixed_test_polyphonies) {
    const std::string name = "test_poly" + std::to_string(q);
    fixed.push_back(stage("synthesize " + name, [&] {
      SynthesisOptions opt;
      opt.max_polyphony = q;
      opt.n_scenes = n_test;
      opt.seed = derive_seed(cfg.seed, "test_fixed", q);
      opt.mode = PolyphonyMode::Exact;
      opt.split = Split::Test;
      opt.id_prefix = name;
      auto s = build_subset(test_pool, opt, root / "subsets" / name, cfg, vocab);
      finish_manifest(s, root / "subsets" / name);
      return s;
    }));
    say("synthesized " + name);
  }

  std::vector<LossHistory> histories;
  std::vector<std::string> names;
  Json provenance_models = Json::array();
  for (auto level : cfg.polyphony_levels) {
    const std::string model_name = "O" + std::to_string(level);
    ModelResult result;
    result.name = model_name;
    result.max_polyphony = level;

    const std::string train_name = "train_" + model_name;
    BuiltSubset train_set = stage("synthesize " + train_name, [&] {
      SynthesisOptions opt;
      opt.max_polyphony = level;
      opt.n_scenes = cfg.n_train_scenes;
      opt.seed = derive_seed(cfg.seed, "train", level);
      opt.augment = cfg.augment;
      opt.split = Split::Train;
      opt.id_prefix = train_name;
      auto s = build_subset(train_pool, opt, root / "subsets" / train_name, cfg, vocab);
      finish_manifest(s, root / "subsets" / train_name);
      return s;
    });
    say("synthesized " + train_name);

    const std::string matched_name = "test_" + model_name;
    BuiltSubset matched = stage("synthesize " + matched_name, [&] {
      SynthesisOptions opt;
      opt.max_polyphony = level;
      opt.n_scenes = n_test;
      opt.seed = derive_seed(cfg.seed, "matched", level);
      opt.split = Split::Test;
      opt.id_prefix = matched_name;
      auto s = build_subset(test_pool, opt, root / "subsets" / matched_name, cfg, vocab);
      for (const auto& scene : s.manifest.scenes) {
        if (max_polyphony(scene.clip.annotations) > level) {
          throw RuntimeFailure("matched test scene " + scene.clip.id() + " exceeds polyphony " +
                               std::to_string(level));
        }
      }
      finish_manifest(s, root / "subsets" / matched_name);
      return s;
    });
    say("synthesized " + matched_name);

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "model", level);
    TrainResult trained = stage("train " + model_name, [&] {
      return train(train_set.examples, cfg.crnn, tc, [&](std::size_t epoch, double loss) {
        say(model_name + " epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
      });
    });
    train_set.examples = {};
    result.history = trained.history;
    stage("save " + model_name, [&] {
      Checkpoint ck{cfg.crnn, trained.model.params(), vocab.codes(), cfg.features, tc.seed};
      fs::create_directories(root / "models");
      save_checkpoint((root / "models" / (model_name + ".ckpt")).string(), ck);
      const std::vector<LossHistory> h{trained.history};
      const std::vector<std::string> n{model_name};
      write_text(root / "models" / (model_name + "_loss.csv"), export_loss_curves(h, n, trained.history.size()));
      return 0;
    });

    stage("evaluate " + model_name, [&] {
      const fs::path pred = root / "predictions" / model_name;
      result.evaluations.push_back(evaluate_model(trained.model, matched, vocab, cfg, pred / matched_name));
      for (std::size_t i = 0; i < fixed.size(); ++i) {
        const std::string tname = "test_poly" + std::to_string(cfg.fixed_test_polyphonies[i]);
        result.evaluations.push_back(evaluate_model(trained.model, fixed[i], vocab, cfg, pred / tname));
      }
      for (std::size_t i = 0; i < result.evaluations.size(); ++i) {
        const std::string tname = i == 0 ? matched_name : "test_poly" + std::to_string(cfg.fixed_test_polyphonies[i - 1]);
        write_text(root / "eval" / (model_name + "_on_" + tname + ".json"),
                   evaluation_report_json(result.evaluations[i]));
        write_text(root / "eval" / (model_name + "_on_" + tname + ".txt"),
                   evaluation_report_text(result.evaluations[i]));
      }
      return 0;
    });
    say("evaluated " + model_name);

    provenance_models.push_back(Json{{"name", model_name},
                                     {"train_subset_seed", train_set.manifest.seed},
                                     {"matched_subset_seed", matched.manifest.seed},
                                     {"training_seed", tc.seed}});
    histories.push_back(result.history);
    names.push_back(model_name);
    report.models.push_back(std::move(result));
  }

  Json fixed_seeds = Json::array();
  for (const auto& f : fixed) fixed_seeds.push_back(f.manifest.seed);
  report.provenance_json = Json{{"version", kVersionString},
                                {"seed", cfg.seed},
                                {"source_partition", partition},
                                {"n_test_scenes", n_test},
                                {"fixed_subset_seeds", fixed_seeds},
                                {"models", provenance_models},
                                {"config", Json::parse(experiment_config_json(cfg))}}
                               .dump();

  stage("report", [&] {
    write_text(root / "report.json", experiment_report_json(report));
    write_text(root / "table1.txt", render_table1(report));
    for (std::size_t m = 0; m < report.models.size(); ++m) {
      write_text(root / ("table2_" + report.models[m].name + ".txt"), render_table2(report, m, 0));
    }
    write_text(root / "loss_curves.csv", export_loss_curves(histories, names, 100));
    return 0;
  });
  return report;
}

}  // namespace densesed
