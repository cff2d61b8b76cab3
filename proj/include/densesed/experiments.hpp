// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "densesed/annotations.hpp"
#include "densesed/crnn.hpp"
#include "densesed/features.hpp"
#include "densesed/report.hpp"
#include "densesed/synthesis.hpp"
#include "densesed/train.hpp"

namespace densesed {

/// Where source clips come from.
struct PoolSource {
  enum class Kind { Synthetic, Dataset };
  Kind kind = Kind::Synthetic;
  SyntheticPoolOptions synthetic;
  /// Directory of <name>.wav recordings with <name>*.txt / .tsv selection tables.
  std::string dataset_dir;
  std::size_t min_activations = 100;
  double frame_length = 5.0;
  double frame_hop = 2.5;
};

struct ExperimentConfig {
  std::vector<std::size_t> polyphony_levels{3, 6, 10};
  std::vector<std::size_t> fixed_test_polyphonies{3, 6, 10};
  std::size_t n_train_scenes = 10000;
  /// 0 = derived from the train fraction (n_train * (1 - f) / f).
  std::size_t n_test_scenes = 0;
  bool augment = true;
  CrnnConfig crnn;
  TrainConfig train;
  FeatureConfig features;
  PoolSource pool;
  std::uint64_t seed = 0;
  std::string out_dir = "experiment";
  /// Write scene audio next to the manifests. Labels and manifests are always written.
  bool save_audio = true;
  double segment_length = kDefaultSegmentLength;
  double threshold = 0.5;

  void validate() const;
  std::size_t test_scene_count() const;
};

/// JSON config: top-level keys mirror the struct; "pool", "model",
/// "training" and "features" are objects. Missing keys keep defaults,
/// unknown keys are a ConfigError.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& config);

/// Recordings of a dataset directory with their selection tables, sorted by name.
struct Recording {
  AudioClip clip;  // annotations attached
  std::string audio_path;
  std::string annotation_path;
};
std::vector<Recording> load_dataset(const std::string& dir);

/// Annotation files only; `duration` bounds every set.
std::vector<AnnotationSet> load_annotation_files(const std::vector<std::string>& paths, double duration);

/// Source clips ready for synthesis plus the vocabulary and the full
/// (unfiltered) source annotations used for Table 2 counts.
struct SourcePool {
  std::vector<AudioClip> clips;
  SpeciesVocabulary vocabulary;
  std::vector<AnnotationSet> source_annotations;
};
SourcePool build_source_pool(const PoolSource& source, double sample_rate);

using ProgressLog = std::function<void(const std::string&)>;

/// Splits the pool, synthesizes one train and one matched test subset per
/// polyphony level plus the fixed-polyphony test subsets, trains a model per
/// level, evaluates each on every test set and writes all artifacts under
/// config.out_dir. Failures are rethrown with the stage name prepended.
ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressLog& log = {});

}  // namespace densesed
