// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "densesed/error.hpp"
#include "densesed/fft.hpp"
#include "densesed/synthesis.hpp"

using namespace densesed;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Polyphony by sampling at every event boundary's right neighbourhood.
std::size_t sampled_polyphony(const AnnotationSet& set) {
  std::size_t best = 0;
  for (const auto& probe : set.events()) {
    const double t = probe.onset + 1e-9;
    std::size_t n = 0;
    for (const auto& e : set.events()) n += (e.onset <= t && t < e.offset);
    best = std::max(best, n);
  }
  return best;
}

}  // namespace

TEST_CASE("synthetic pool") {
  const auto pool = generate_synthetic_pool(4, 3, 1);
  REQUIRE(pool.size() == 12);
  std::set<std::string> species, ids;
  for (const auto& c : pool) {
    CHECK(c.samples.size() == 160000);
    CHECK(!c.annotations.empty());
    CHECK(max_polyphony(c.annotations) == 1);
    for (const auto& e : c.annotations.events()) {
      species.insert(e.species);
      CHECK(e.offset - e.onset >= 0.5 - 1e-9);
      CHECK(e.offset - e.onset <= 2.0 + 1e-9);
    }
    ids.insert(c.id());
  }
  CHECK(species == std::set<std::string>{"SYN0", "SYN1", "SYN2", "SYN3"});
  CHECK(ids.size() == 12);
  CHECK(generate_synthetic_pool(4, 3, 1)[5].samples == pool[5].samples);
  CHECK(synthetic_band_center(2) == 2400.0);
}

TEST_CASE("mix scene sums and limits the peak") {
  const auto pool = generate_synthetic_pool(2, 1, 4);
  const std::vector<double> g{0.5, 0.25};
  const auto s = mix_scene(pool, g, {}, "m");
  for (std::size_t i = 0; i < 1000; i += 37) {
    const double expect = 0.5 * pool[0].samples[i] + 0.25 * pool[1].samples[i];
    CHECK(s.clip.samples[i] == doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK(s.clip.annotations.size() == pool[0].annotations.size() + pool[1].annotations.size());
  CHECK(s.provenance.size() == 2);

  const std::vector<double> loud{4.0, 4.0};
  const auto l = mix_scene(pool, loud);
  float peak = 0;
  for (float v : l.clip.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.9f));
}

TEST_CASE("frame blocking windows") {
  AudioClip rec;
  rec.samples.assign(static_cast<std::size_t>(12 * kDefaultSampleRate), 0.0f);
  rec.annotations = AnnotationSet({{1.0, 3.0, "A", {}, {}}, {6.0, 11.5, "B", {}, {}}}, "rec", 12.0);
  const auto w = frame_blocking(rec);
  // starts at 0, 2.5, 5.0 fit; 7.5 would end at 12.5
  REQUIRE(w.size() == 3);
  CHECK(w[0].annotations.events()[0].offset == doctest::Approx(3.0));
  CHECK(w[1].annotations.events()[0].onset == doctest::Approx(0.0));
  CHECK(w[1].annotations.events()[0].offset == doctest::Approx(0.5));
  CHECK(w[2].annotations.events().back().offset == doctest::Approx(5.0));
  for (const auto& c : w) CHECK(c.samples.size() == 160000);
}

TEST_CASE("up-to and exact polyphony") {
  const auto pool = generate_synthetic_pool(5, 6, 2);
  for (std::size_t p : {1u, 3u, 6u}) {
    SynthesisOptions o;
    o.max_polyphony = p;
    o.n_scenes = 30;
    o.seed = 10 + p;
    o.augment = p == 3;
    const auto m = synthesize_subset(pool, o);
    for (const auto& s : m.scenes) {
      CHECK(max_polyphony(s.clip.annotations) <= p);
      CHECK(s.target_polyphony == max_polyphony(s.clip.annotations));
      CHECK(sampled_polyphony(s.clip.annotations) == s.target_polyphony);
    }
    o.mode = PolyphonyMode::Exact;
    for (const auto& s : synthesize_subset(pool, o).scenes) CHECK(max_polyphony(s.clip.annotations) == p);
  }
}

TEST_CASE("chunked synthesis equals one pass") {
  const auto pool = generate_synthetic_pool(3, 4, 8);
  SynthesisOptions o;
  o.n_scenes = 10;
  o.seed = 99;
  o.augment = true;
  const auto whole = synthesize_subset(pool, o);
  o.n_scenes = 4;
  o.first_index = 6;
  const auto tail = synthesize_subset(pool, o);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(tail.scenes[i].clip.samples == whole.scenes[6 + i].clip.samples);
    CHECK(tail.scenes[i].clip.annotations == whole.scenes[6 + i].clip.annotations);
  }
}

TEST_CASE("split pool is a deterministic partition") {
  const auto pool = generate_synthetic_pool(4, 5, 3);
  const auto [tr, te] = split_pool(pool, 0.9, 77);
  CHECK(tr.size() == 18);
  CHECK(te.size() == 2);
  std::set<std::string> ids;
  for (const auto& c : tr) ids.insert(c.id());
  for (const auto& c : te) ids.insert(c.id());
  CHECK(ids.size() == 20);
  CHECK(split_pool(pool, 0.9, 77).second[0].id() == te[0].id());
  CHECK_THROWS_AS(split_pool(pool, 1.0, 1), ConfigError);
}

TEST_CASE("saved subsets are byte-identical and load back") {
  const auto pool = generate_synthetic_pool(3, 4, 5);
  const auto base = fs::temp_directory_path() / "densesed_synth_test";
  fs::remove_all(base);
  for (const char* dir : {"a", "b"}) {
    auto m = synthesize_subset(pool, 3, 6, 42, true);
    save_subset(m, (base / dir).string());
  }
  for (const auto& e : fs::directory_iterator(base / "a")) {
    CHECK(slurp(e.path()) == slurp(base / "b" / e.path().filename()));
  }
  const auto loaded = load_subset((base / "a" / "manifest.json").string());
  const auto fresh = synthesize_subset(pool, 3, 6, 42, true);
  REQUIRE(loaded.scenes.size() == 6);
  CHECK(loaded.max_polyphony == 3);
  CHECK(loaded.seed == 42);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(loaded.scenes[i].clip.samples == fresh.scenes[i].clip.samples);
    CHECK(loaded.scenes[i].clip.annotations.size() == fresh.scenes[i].clip.annotations.size());
  }
  CHECK_THROWS_AS(load_subset((base / "missing.json").string()), DataError);
  fs::remove_all(base);
}

TEST_CASE("frame blocking counts") {
  auto silent = [](double seconds) {
    AudioClip c;
    c.samples.assign(static_cast<std::size_t>(std::llround(seconds * 1000.0)), 0.0f);
    c.sample_rate = 1000.0;
    c.annotations = AnnotationSet({}, "r", static_cast<double>(c.samples.size()) / 1000.0);
    return c;
  };
  CHECK(frame_blocking(silent(300.0)).size() == 119);
  CHECK(frame_blocking(silent(5.0)).size() == 1);
  CHECK(frame_blocking(silent(4.0)).empty());
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double d = static_cast<double>(rng.uniform_int(0, 60000)) / 1000.0;
    std::size_t starts = 0;
    for (int k = 0; k * 2.5 + 5.0 <= d + 1e-9; ++k) ++starts;
    CHECK(frame_blocking(silent(d)).size() == starts);
  }
}

TEST_CASE("mix examples") {
  const auto pool = generate_synthetic_pool(2, 1, 6);
  const std::vector<AudioClip> one{pool[0]};
  CHECK(mix_scene(one, std::vector<double>{1.0}).clip.samples == pool[0].samples);
  const std::vector<AudioClip> twice{pool[0], pool[0]};
  const auto half = mix_scene(twice, std::vector<double>{0.5, 0.5});
  CHECK(half.clip.samples == pool[0].samples);

  AudioClip full = pool[0];
  for (auto& v : full.samples) v = 1.0f;
  const std::vector<AudioClip> loud{full, full};
  const auto l = mix_scene(loud, std::vector<double>{1.0, 1.0});
  float peak = 0;
  for (float v : l.clip.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == 0.9f);

  // linear below the clipping point
  const auto ab = mix_scene(pool, std::vector<double>{0.2, 0.3});
  const auto cab = mix_scene(pool, std::vector<double>{0.4, 0.6});
  for (std::size_t i = 0; i < ab.clip.samples.size(); i += 101) {
    CHECK(cab.clip.samples[i] == doctest::Approx(2.0 * ab.clip.samples[i]).epsilon(1e-6));
  }
}

TEST_CASE("synthetic species sit in their band") {
  const auto pool = generate_synthetic_pool(3, 4, 12);
  for (const auto& c : pool) {
    if (c.annotations.events()[0].species != "SYN0") continue;
    for (const auto& e : c.annotations.events()) {
      const auto a = static_cast<std::size_t>(e.onset * c.sample_rate);
      const auto b = static_cast<std::size_t>(e.offset * c.sample_rate);
      // strongest bin of the zero-padded burst spectrum
      const std::size_t size = 65536;
      std::vector<double> frame(size, 0.0);
      for (std::size_t i = a; i < b && i - a < size; ++i) frame[i - a] = c.samples[i];
      const auto spec = Fft(size).forward_real(frame);
      std::size_t arg = 1;
      for (std::size_t k = 1; k < spec.size(); ++k) {
        if (std::abs(spec[k]) > std::abs(spec[arg])) arg = k;
      }
      const double best_hz = static_cast<double>(arg) * c.sample_rate / size;
      CHECK(std::abs(best_hz - 1000.0) <= 100.0);
    }
  }
  CHECK_THROWS_AS(generate_synthetic_pool(30, 1, 1), ConfigError);
}
