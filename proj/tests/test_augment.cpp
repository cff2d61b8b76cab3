// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "densesed/augment.hpp"
#include "densesed/error.hpp"
#include "densesed/fft.hpp"

using namespace densesed;

namespace {

constexpr double kSr = 32000.0;

AudioClip tone_clip(double hz, double seconds, std::vector<Event> events) {
  AudioClip c;
  const auto n = static_cast<std::size_t>(std::lround(seconds * kSr));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * hz * i / kSr));
  }
  c.annotations = AnnotationSet(std::move(events), "clip", seconds);
  return c;
}

// Frequency of the strongest bin in a window taken from the middle.
double dominant_hz(const std::vector<float>& x) {
  const std::size_t n = 8192;
  const std::size_t start = (x.size() - n) / 2;
  std::vector<double> frame(n);
  const auto w = hann_window(n);
  for (std::size_t i = 0; i < n; ++i) frame[i] = x[start + i] * w[i];
  const auto spec = Fft(n).forward_real(frame);
  std::size_t best = 0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  return static_cast<double>(best) * kSr / n;
}

}  // namespace

TEST_CASE("time stretch scales length and labels, keeps pitch") {
  const auto clip = tone_clip(1500.0, 2.0, {{0.5, 1.0, "A", {}, {}}});
  const auto s = time_stretch(clip, 1.25);
  CHECK(s.samples.size() == static_cast<std::size_t>(std::lround(64000 / 1.25)));
  CHECK(s.annotations.duration() == doctest::Approx(s.duration()));
  CHECK(s.annotations.events()[0].onset == doctest::Approx(0.4));
  CHECK(s.annotations.events()[0].offset == doctest::Approx(0.8));
  CHECK(std::abs(dominant_hz(s.samples) - 1500.0) < 2 * kSr / 8192);
  CHECK_THROWS_AS(time_stretch(clip, 3.0), ConfigError);
}

TEST_CASE("pitch shift moves the tone by the semitone ratio") {
  const auto clip = tone_clip(1500.0, 2.0, {{0.5, 1.0, "A", {}, {}}});
  const auto p = pitch_shift(clip, 2.0);
  CHECK(p.samples.size() == clip.samples.size());
  CHECK(p.annotations == clip.annotations);
  CHECK(std::abs(dominant_hz(p.samples) - 1500.0 * std::pow(2.0, 2.0 / 12.0)) < 2 * kSr / 8192);
  CHECK_THROWS_AS(pitch_shift(clip, 13.0), ConfigError);
}

TEST_CASE("time shift wraps labels") {
  const auto clip = tone_clip(1000.0, 5.0, {{3.0, 4.5, "A", {}, {}}, {0.0, 1.0, "B", {}, {}}});
  const auto s = time_shift(clip, 1.0);
  CHECK(s.samples.size() == clip.samples.size());
  CHECK(s.samples[32000] == clip.samples[0]);
  const auto& ev = s.annotations.events();
  REQUIRE(ev.size() == 3);
  // A crossed the end and split into [4, 5) and [0, 0.5)
  CHECK(ev[0].species == "A");
  CHECK(ev[0].onset == doctest::Approx(0.0));
  CHECK(ev[0].offset == doctest::Approx(0.5));
  CHECK(ev[1].species == "B");
  CHECK(ev[1].onset == doctest::Approx(1.0));
  CHECK(ev[2].onset == doctest::Approx(4.0));
  CHECK(ev[2].offset == doctest::Approx(5.0));
}

TEST_CASE("fit length crops and pads") {
  const auto clip = tone_clip(1000.0, 2.0, {{1.5, 2.0, "A", {}, {}}});
  const auto cropped = fit_length(clip, 56000);
  CHECK(cropped.annotations.events()[0].offset == doctest::Approx(1.75));
  const auto padded = fit_length(clip, 96000);
  CHECK(padded.samples.size() == 96000);
  CHECK(padded.samples.back() == 0.0f);
  CHECK(fit_length(clip, 40000).annotations.empty());
}

TEST_CASE("drawn augmentations keep length and agree on labels") {
  const auto clip = tone_clip(2000.0, 5.0, {{0.3, 1.2, "A", {}, {}}, {2.0, 4.9, "B", {}, {}}});
  Rng rng(21);
  int none = 0;
  for (int i = 0; i < 40; ++i) {
    const auto a = Augmentation::draw(rng, clip.duration());
    none += a.kind == Augmentation::Kind::None;
    if (a.kind == Augmentation::Kind::TimeStretch) CHECK((a.value >= 0.9 && a.value <= 1.1));
    if (a.kind == Augmentation::Kind::PitchShift) CHECK((a.value >= -2.0 && a.value <= 2.0));
    const auto out = a.apply(clip);
    CHECK(out.samples.size() == clip.samples.size());
    CHECK(out.annotations == a.apply_labels(clip));
    CHECK(!a.describe().empty());
  }
  CHECK(none > 5);
  CHECK(none < 35);
}

TEST_CASE("augmentation identities") {
  const auto clip = tone_clip(440.0, 5.0, {{3.5, 4.8, "A", {}, {}}});
  const auto s1 = time_stretch(clip, 1.0);
  CHECK(s1.annotations == clip.annotations);
  REQUIRE(s1.samples.size() == clip.samples.size());
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    err += std::pow(s1.samples[i] - clip.samples[i], 2);
    ref += std::pow(clip.samples[i], 2);
  }
  CHECK(std::sqrt(err / ref) <= 1e-3);

  const auto p0 = pitch_shift(clip, 0.0);
  err = 0.0;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) err += std::pow(p0.samples[i] - clip.samples[i], 2);
  CHECK(std::sqrt(err / ref) <= 1e-3);

  CHECK(time_shift(clip, 0.0).samples == clip.samples);
  CHECK(time_shift(clip, 0.0).annotations == clip.annotations);
  CHECK(time_shift(clip, 5.0).samples == clip.samples);
  CHECK(time_shift(clip, 5.0).annotations == clip.annotations);
}

TEST_CASE("worked augmentation examples") {
  const double bin = kSr / 8192;
  const auto a = tone_clip(440.0, 5.0, {{1.0, 2.0, "A", {}, {}}});
  const auto s = time_stretch(a, 2.0);
  CHECK(s.duration() == doctest::Approx(2.5));
  CHECK(s.annotations.events()[0].onset == doctest::Approx(0.5));
  CHECK(s.annotations.events()[0].offset == doctest::Approx(1.0));
  CHECK(std::abs(dominant_hz(s.samples) - 440.0) <= bin);

  CHECK(std::abs(dominant_hz(pitch_shift(a, 12.0).samples) - 880.0) <= bin);
  const auto b = tone_clip(880.0, 5.0, {{1.0, 2.0, "A", {}, {}}});
  CHECK(std::abs(dominant_hz(pitch_shift(b, -12.0).samples) - 440.0) <= bin);

  const auto c = tone_clip(440.0, 5.0, {{3.5, 4.8, "A", {}, {}}});
  const auto shifted = time_shift(c, 1.0);
  REQUIRE(shifted.annotations.size() == 2);
  CHECK(shifted.annotations.events()[0].onset == doctest::Approx(0.0));
  CHECK(shifted.annotations.events()[0].offset == doctest::Approx(0.8));
  CHECK(shifted.annotations.events()[1].onset == doctest::Approx(4.5));
  CHECK(shifted.annotations.events()[1].offset == doctest::Approx(5.0));
}

TEST_CASE("augmented labels follow the burst energy") {
  // one tone burst with silence around it; frames with energy must match the label roll
  AudioClip clip;
  clip.samples.assign(160000, 0.0f);
  for (std::size_t i = 48000; i < 96000; ++i) {
    clip.samples[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * 2000.0 * i / kSr));
  }
  clip.annotations = AnnotationSet({{1.5, 3.0, "A", {}, {}}}, "burst", 5.0);
  const SpeciesVocabulary v({"A"});
  const double hop = 0.016;
  Rng rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    Augmentation aug;
    aug.kind = static_cast<Augmentation::Kind>(1 + trial % 3);
    aug.value = aug.kind == Augmentation::Kind::TimeStretch ? rng.uniform(0.9, 1.1)
              : aug.kind == Augmentation::Kind::PitchShift  ? rng.uniform(-2.0, 2.0)
                                                            : rng.uniform(0.0, 5.0);
    const auto out = aug.apply(clip);
    const auto roll = to_event_roll(out.annotations, v, hop, 313);
    std::size_t bad = 0;
    for (std::size_t n = 0; n < 313; ++n) {
      double e = 0.0;
      for (std::size_t i = n * 512; i < std::min<std::size_t>((n + 1) * 512, out.samples.size()); ++i) {
        e += out.samples[i] * out.samples[i];
      }
      const bool loud = e / 512 > 0.01;
      if (loud == static_cast<bool>(roll.at(0, n))) continue;
      // tolerate disagreement within two frames of a label edge
      bool near_edge = false;
      for (long d = -2; d <= 2; ++d) {
        const long m = static_cast<long>(n) + d;
        if (m >= 0 && m < 313 && roll.at(0, static_cast<std::size_t>(m)) != roll.at(0, n)) near_edge = true;
      }
      bad += !near_edge;
    }
    INFO(aug.describe());
    CHECK(bad == 0);
  }
}
