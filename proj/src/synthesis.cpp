// SPDX-License-Identifier: Apache-2.0
#include "densesed/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "densesed/error.hpp"
#include "densesed/random.hpp"

namespace densesed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNormalizedPeak = 0.9;
constexpr std::size_t kMaxExactAttempts = 200;
constexpr std::size_t kMaxEmptyDraws = 10000;

struct Pick {
  std::size_t index;
  Augmentation augmentation;
  double gain;
};

void check_pool(std::span<const AudioClip> pool) {
  if (pool.empty()) throw DataError("clip pool is empty");
  const auto n = pool.front().samples.size();
  const double rate = pool.front().sample_rate;
  for (const auto& c : pool) {
    if (c.samples.size() != n || c.sample_rate != rate) {
      throw DataError("pool clips must share length and sample rate (clip " + c.id() + ")");
    }
    if (c.annotations.empty()) throw DataError("pool clip " + c.id() + " has no events");
  }
}

std::string scene_name(const std::string& prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix << '_';
  os.width(5);
  os.fill('0');
  os << i;
  return os.str();
}

// Draws clips for one scene. Returns the picks whose merged labels respect
// the polyphony limit; in Exact mode only a selection reaching it.
std::vector<Pick> pick_sources(std::span<const AudioClip> pool, const SynthesisOptions& opt,
                               Rng& rng, std::size_t* final_polyphony) {
  const std::size_t limit = opt.max_polyphony;
  const std::size_t wanted = opt.mode == PolyphonyMode::UpTo
                                 ? static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(limit)))
                                 : limit;
  const double duration = pool.front().duration();
  std::vector<Pick> picks;
  std::vector<AnnotationSet> labels;
  std::vector<double> zero_offsets;
  std::size_t polyphony = 0;
  std::size_t rejections = 0;
  std::size_t draws = 0;

  const auto done = [&] {
    if (opt.mode == PolyphonyMode::UpTo) return picks.size() >= wanted;
    return polyphony >= wanted;
  };

  while (!done()) {
    if (rejections >= opt.max_rejections) {
      if (!picks.empty()) break;
      if (draws >= kMaxEmptyDraws) {
        throw DataError("no pool clip fits within max polyphony " + std::to_string(limit));
      }
    }
    ++draws;
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
    const Augmentation aug =
        opt.augment ? Augmentation::draw(rng, duration) : Augmentation{};
    labels.push_back(aug.apply_labels(pool[idx]));
    zero_offsets.push_back(0.0);
    const auto merged = merge_annotation_sets(labels, zero_offsets, duration);
    const std::size_t p = max_polyphony(merged);
    if (p <= limit) {
      picks.push_back({idx, aug, rng.uniform(0.5, 1.0)});
      polyphony = p;
      rejections = 0;
    } else {
      labels.pop_back();
      zero_offsets.pop_back();
      ++rejections;
    }
  }
  *final_polyphony = polyphony;
  return picks;
}

}  // namespace

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "'");
}

std::vector<AudioClip> frame_blocking(const AudioClip& recording, double frame_len, double hop) {
  if (!(frame_len > 0.0) || !(hop > 0.0)) throw ConfigError("frame_len and hop must be positive");
  const double sr = recording.sample_rate;
  const auto n_frame = static_cast<std::size_t>(std::llround(frame_len * sr));
  const auto n_hop = static_cast<std::size_t>(std::llround(hop * sr));
  const std::size_t n_total = recording.samples.size();
  std::vector<AudioClip> clips;
  if (n_frame == 0 || n_hop == 0 || n_total < n_frame) return clips;
  const std::size_t count = (n_total - n_frame) / n_hop + 1;
  clips.reserve(count);
  const double window = static_cast<double>(n_frame) / sr;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t first = k * n_hop;
    const double start = static_cast<double>(first) / sr;
    std::vector<Event> events;
    for (const auto& e : recording.annotations.events()) {
      const double on = std::max(e.onset, start) - start;
      const double off = std::min(e.offset, start + window) - start;
      if (off - on > 1e-9) {
        Event local = e;
        local.onset = on;
        local.offset = std::min(off, window);
        events.push_back(std::move(local));
      }
    }
    AudioClip clip;
    clip.sample_rate = sr;
    clip.samples.assign(recording.samples.begin() + static_cast<std::ptrdiff_t>(first),
                        recording.samples.begin() + static_cast<std::ptrdiff_t>(first + n_frame));
    clip.annotations = AnnotationSet(std::move(events),
                                     recording.id() + "#" + std::to_string(k), window);
    clips.push_back(std::move(clip));
  }
  return clips;
}

Scene mix_scene(std::span<const AudioClip> clips, std::span<const double> gains,
                std::span<const std::string> augmentations, std::string scene_id) {
  if (clips.empty()) throw ConfigError("mix_scene needs at least one clip");
  if (clips.size() != gains.size()) throw ConfigError("mix_scene: clips and gains differ in count");
  if (!augmentations.empty() && augmentations.size() != clips.size()) {
    throw ConfigError("mix_scene: augmentation labels differ in count");
  }
  const std::size_t n = clips.front().samples.size();
  const double rate = clips.front().sample_rate;
  for (const auto& c : clips) {
    if (c.samples.size() != n) throw DataError("mix_scene: clip lengths differ");
    if (c.sample_rate != rate) throw DataError("mix_scene: sample rates differ");
  }

  std::vector<double> mix(n, 0.0);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const double g = gains[i];
    const auto& s = clips[i].samples;
    for (std::size_t k = 0; k < n; ++k) mix[k] += g * static_cast<double>(s[k]);
  }
  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  const double scale = peak > 1.0 ? kNormalizedPeak / peak : 1.0;

  Scene scene;
  scene.clip.sample_rate = rate;
  scene.clip.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) scene.clip.samples[k] = static_cast<float>(mix[k] * scale);

  std::vector<AnnotationSet> labels;
  labels.reserve(clips.size());
  for (const auto& c : clips) labels.push_back(c.annotations);
  const std::vector<double> offsets(clips.size(), 0.0);
  const double duration = static_cast<double>(n) / rate;
  scene.clip.annotations = merge_annotation_sets(labels, offsets, duration, std::move(scene_id));
  scene.target_polyphony = max_polyphony(scene.clip.annotations);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    scene.provenance.push_back(
        {clips[i].id(), gains[i], augmentations.empty() ? "none" : augmentations[i]});
  }
  return scene;
}

SubsetManifest synthesize_subset(std::span<const AudioClip> pool, const SynthesisOptions& opt) {
  check_pool(pool);
  if (opt.max_polyphony < 1) throw ConfigError("max_polyphony must be at least 1");
  const bool any_fits = std::any_of(pool.begin(), pool.end(), [&](const AudioClip& c) {
    return max_polyphony(c.annotations) <= opt.max_polyphony;
  });
  if (!any_fits) {
    throw DataError("pool too sparse: no clip stays within polyphony " +
                    std::to_string(opt.max_polyphony));
  }

  SubsetManifest manifest;
  manifest.max_polyphony = opt.max_polyphony;
  manifest.seed = opt.seed;
  manifest.split = opt.split;
  manifest.mode = opt.mode;
  manifest.scenes.reserve(opt.n_scenes);

  for (std::size_t i = opt.first_index; i < opt.first_index + opt.n_scenes; ++i) {
    std::vector<Pick> picks;
    std::size_t reached = 0;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= kMaxExactAttempts) {
        throw DataError("could not reach exact polyphony " + std::to_string(opt.max_polyphony) +
                        " for scene " + std::to_string(i));
      }
      Rng rng(derive_seed(opt.seed, "scene", i * kMaxExactAttempts + attempt));
      picks = pick_sources(pool, opt, rng, &reached);
      if (opt.mode == PolyphonyMode::UpTo || reached == opt.max_polyphony) break;
    }

    std::vector<AudioClip> sources;
    std::vector<double> gains;
    std::vector<std::string> descriptions;
    for (const auto& p : picks) {
      sources.push_back(p.augmentation.apply(pool[p.index]));
      gains.push_back(p.gain);
      descriptions.push_back(p.augmentation.describe());
    }
    manifest.scenes.push_back(
        mix_scene(sources, gains, descriptions, scene_name(opt.id_prefix, i)));
  }
  return manifest;
}

SubsetManifest synthesize_subset(std::span<const AudioClip> pool, std::size_t max_polyphony,
                                 std::size_t n_scenes, std::uint64_t seed, bool augment) {
  SynthesisOptions opt;
  opt.max_polyphony = max_polyphony;
  opt.n_scenes = n_scenes;
  opt.seed = seed;
  opt.augment = augment;
  return synthesize_subset(pool, opt);
}

double synthetic_band_center(std::size_t species) {
  return 1000.0 + 700.0 * static_cast<double>(species);
}

std::vector<AudioClip> generate_synthetic_pool(const SyntheticPoolOptions& opt) {
  if (opt.n_species < 1) throw ConfigError("n_species must be at least 1");
  const double nyquist = opt.sample_rate / 2.0;
  if (static_cast<double>(opt.n_species) * 700.0 + 1000.0 > nyquist) {
    throw ConfigError("n_species too large: band centres would exceed the Nyquist frequency");
  }
  const auto n = static_cast<std::size_t>(std::llround(opt.clip_seconds * opt.sample_rate));
  const double duration = static_cast<double>(n) / opt.sample_rate;
  constexpr double kFade = 0.01;
  constexpr double kGap = 0.05;

  std::vector<AudioClip> pool;
  pool.reserve(opt.n_species * opt.clips_per_species);
  for (std::size_t s = 0; s < opt.n_species; ++s) {
    const std::string code = "SYN" + std::to_string(s);
    for (std::size_t c = 0; c < opt.clips_per_species; ++c) {
      Rng rng(derive_seed(opt.seed, "pool", s * opt.clips_per_species + c));
      AudioClip clip;
      clip.sample_rate = opt.sample_rate;
      clip.samples.assign(n, 0.0f);
      std::vector<double> wave(n);
      for (auto& v : wave) v = 0.002 * rng.normal();

      const auto n_bursts = rng.uniform_int(1, 3);
      std::vector<Event> events;
      for (std::int64_t b = 0; b < n_bursts; ++b) {
        const double len = rng.uniform(0.5, 2.0);
        double onset = -1.0;
        for (int tries = 0; tries < 100 && onset < 0.0; ++tries) {
          const double cand = rng.uniform(0.0, duration - len);
          const bool clear = std::all_of(events.begin(), events.end(), [&](const Event& e) {
            return cand + len + kGap <= e.onset || cand >= e.offset + kGap;
          });
          if (clear) onset = cand;
        }
        if (onset < 0.0) continue;
        const double f0 = synthetic_band_center(s) + rng.uniform(-50.0, 50.0);
        const double vib_rate = rng.uniform(4.0, 10.0);
        const double vib_depth = rng.uniform(0.0, 25.0);
        const double amp = rng.uniform(0.3, 0.8);
        const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const auto first = static_cast<std::size_t>(std::ceil(onset * opt.sample_rate));
        const auto last = std::min(n, static_cast<std::size_t>(std::floor((onset + len) * opt.sample_rate)));
        double phase = phase0;
        for (std::size_t k = first; k < last; ++k) {
          const double t = static_cast<double>(k) / opt.sample_rate - onset;
          const double fade = std::min({1.0, t / kFade, (len - t) / kFade});
          const double env = fade <= 0.0 ? 0.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * fade);
          const double f = f0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t);
          phase += 2.0 * std::numbers::pi * f / opt.sample_rate;
          wave[k] += amp * env * (std::sin(phase) + 0.25 * std::sin(2.0 * phase));
        }
        events.push_back(Event{onset, onset + len, code, f0 - 100.0, 2.0 * f0 + 100.0});
      }
      for (std::size_t k = 0; k < n; ++k) {
        clip.samples[k] = static_cast<float>(std::clamp(wave[k], -1.0, 1.0));
      }
      clip.annotations =
          AnnotationSet(std::move(events), code + "_" + std::to_string(c), duration);
      pool.push_back(std::move(clip));
    }
  }
  return pool;
}

std::vector<AudioClip> generate_synthetic_pool(std::size_t n_species,
                                               std::size_t clips_per_species, std::uint64_t seed) {
  SyntheticPoolOptions opt;
  opt.n_species = n_species;
  opt.clips_per_species = clips_per_species;
  opt.seed = seed;
  return generate_synthetic_pool(opt);
}

std::pair<std::vector<AudioClip>, std::vector<AudioClip>> split_pool(
    std::span<const AudioClip> pool, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(pool.size())));
  if (pool.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, pool.size() - 1);
  std::vector<AudioClip> train, test;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).push_back(pool[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

std::string manifest_to_json(const SubsetManifest& m) {
  json doc;
  doc["seed"] = m.seed;
  doc["max_polyphony"] = m.max_polyphony;
  doc["split"] = to_string(m.split);
  doc["mode"] = m.mode == PolyphonyMode::UpTo ? "up_to" : "exact";
  doc["source_partition"] = m.source_partition;
  json scenes = json::array();
  for (std::size_t i = 0; i < m.scenes.size(); ++i) {
    const auto& s = m.scenes[i];
    json entry;
    const std::string id = s.clip.id();
    entry["id"] = id;
    entry["audio_path"] = i < m.paths.size() ? m.paths[i].first : id + ".wav";
    entry["annotation_path"] = i < m.paths.size() ? m.paths[i].second : id + ".tsv";
    entry["measured_polyphony"] = max_polyphony(s.clip.annotations);
    json prov = json::array();
    for (const auto& p : s.provenance) {
      prov.push_back({{"source", p.source_id}, {"gain", p.gain}, {"augmentation", p.augmentation}});
    }
    entry["provenance"] = prov;
    scenes.push_back(entry);
  }
  doc["scenes"] = scenes;
  return doc.dump(2) + "\n";
}

std::string save_subset(SubsetManifest& manifest, const std::string& dir, WavFormat format) {
  fs::create_directories(dir);
  manifest.paths.clear();
  for (const auto& s : manifest.scenes) {
    const std::string id = s.clip.id();
    write_wav((fs::path(dir) / (id + ".wav")).string(), s.clip.samples, s.clip.sample_rate, format);
    save_selection_table(s.clip.annotations, (fs::path(dir) / (id + ".tsv")).string());
    manifest.paths.emplace_back(id + ".wav", id + ".tsv");
  }
  const auto path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << manifest_to_json(manifest);
  return path;
}

SubsetManifest load_subset(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + manifest_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(manifest_path + ": " + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  SubsetManifest m;
  try {
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.max_polyphony = doc.at("max_polyphony").get<std::size_t>();
    m.split = split_from_string(doc.at("split").get<std::string>());
    m.mode = doc.value("mode", std::string("up_to")) == "exact" ? PolyphonyMode::Exact
                                                               : PolyphonyMode::UpTo;
    m.source_partition = doc.value("source_partition", std::string());
    for (const auto& entry : doc.at("scenes")) {
      const auto audio_rel = entry.at("audio_path").get<std::string>();
      const auto ann_rel = entry.at("annotation_path").get<std::string>();
      const auto wav = read_wav((base / audio_rel).string());
      Scene scene;
      scene.clip.sample_rate = wav.sample_rate;
      scene.clip.samples = wav.samples;
      const double duration = static_cast<double>(wav.samples.size()) / wav.sample_rate;
      const auto labels = load_selection_table((base / ann_rel).string(), duration);
      scene.clip.annotations = AnnotationSet(labels.events(),
                                             entry.value("id", fs::path(audio_rel).stem().string()),
                                             duration);
      scene.target_polyphony = max_polyphony(scene.clip.annotations);
      for (const auto& p : entry.value("provenance", json::array())) {
        scene.provenance.push_back({p.value("source", std::string()), p.value("gain", 1.0),
                                    p.value("augmentation", std::string("none"))});
      }
      m.scenes.push_back(std::move(scene));
      m.paths.emplace_back(audio_rel, ann_rel);
    }
  } catch (const json::exception& e) {
    throw DataError(manifest_path + ": " + e.what());
  }
  return m;
}

}  // namespace densesed
