// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "densesed/audio.hpp"
#include "densesed/augment.hpp"

namespace densesed {

struct ProvenanceEntry {
  std::string source_id;
  double gain = 1.0;
  std::string augmentation = "none";
};

/// A mixed scene; target_polyphony is the measured max polyphony of its labels.
struct Scene {
  AudioClip clip;
  std::size_t target_polyphony = 0;
  std::vector<ProvenanceEntry> provenance;
};

enum class Split { Train, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

/// How the per-scene polyphony limit is interpreted.
///   UpTo:  draw p from {1..P}, accept up to p clips keeping polyphony <= P.
///   Exact: keep adding clips (polyphony <= P) until polyphony reaches P.
enum class PolyphonyMode { UpTo, Exact };

struct SubsetManifest {
  std::vector<Scene> scenes;
  std::size_t max_polyphony = 0;
  std::uint64_t seed = 0;
  Split split = Split::Train;
  PolyphonyMode mode = PolyphonyMode::UpTo;
  /// Free-form record of how the source pool was partitioned.
  std::string source_partition;
  /// Filled when loaded from or saved to disk; relative to the manifest file.
  std::vector<std::pair<std::string, std::string>> paths;
};

/// Windows of frame_len seconds every hop seconds; a tail shorter than
/// frame_len is dropped. Labels are re-timed and clipped to each window.
std::vector<AudioClip> frame_blocking(const AudioClip& recording, double frame_len = 5.0,
                                      double hop = 2.5);

/// Sum of gain_i * clip_i, rescaled to peak 0.9 only when the raw peak
/// exceeds 1. `augmentations` optionally labels each source for provenance.
Scene mix_scene(std::span<const AudioClip> clips, std::span<const double> gains,
                std::span<const std::string> augmentations = {}, std::string scene_id = {});

struct SynthesisOptions {
  std::size_t max_polyphony = 3;
  std::size_t n_scenes = 100;
  std::uint64_t seed = 0;
  bool augment = false;
  PolyphonyMode mode = PolyphonyMode::UpTo;
  Split split = Split::Train;
  std::string id_prefix = "scene";
  /// Consecutive rejected draws tolerated per clip slot.
  std::size_t max_rejections = 50;
  /// Index of the first scene. Scene i depends only on (seed, i), so a
  /// subset can be produced in chunks with identical results.
  std::size_t first_index = 0;
};

/// Builds n_scenes scenes from the pool; scene i uses its own random stream
/// derived from (seed, i), so the result is a pure function of the inputs.
SubsetManifest synthesize_subset(std::span<const AudioClip> pool, const SynthesisOptions& options);

/// Convenience overload with the default UpTo mode.
SubsetManifest synthesize_subset(std::span<const AudioClip> pool, std::size_t max_polyphony,
                                 std::size_t n_scenes, std::uint64_t seed, bool augment);

struct SyntheticPoolOptions {
  std::size_t n_species = 5;
  std::size_t clips_per_species = 10;
  std::uint64_t seed = 0;
  double sample_rate = kDefaultSampleRate;
  double clip_seconds = 5.0;
};

/// Tone-burst stand-in for field recordings: species s sings near
/// 1000 + 700 s Hz, 1-3 non-overlapping bursts of 0.5-2 s per clip,
/// labelled "SYN<s>".
std::vector<AudioClip> generate_synthetic_pool(const SyntheticPoolOptions& options);
std::vector<AudioClip> generate_synthetic_pool(std::size_t n_species,
                                               std::size_t clips_per_species, std::uint64_t seed);

double synthetic_band_center(std::size_t species);

/// Deterministic shuffle-and-cut of the pool into (train, test).
std::pair<std::vector<AudioClip>, std::vector<AudioClip>> split_pool(
    std::span<const AudioClip> pool, double train_fraction, std::uint64_t seed);

/// Writes <dir>/<id>.wav, <dir>/<id>.tsv and <dir>/manifest.json. Returns the manifest path.
std::string save_subset(SubsetManifest& manifest, const std::string& dir,
                        WavFormat format = WavFormat::Float32);
/// Reads a manifest written by save_subset, including audio and labels.
SubsetManifest load_subset(const std::string& manifest_path);

/// JSON document: {seed, max_polyphony, split, mode, source_partition,
/// scenes: [{audio_path, annotation_path, measured_polyphony, provenance}]}.
std::string manifest_to_json(const SubsetManifest& manifest);

}  // namespace densesed
