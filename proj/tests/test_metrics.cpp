// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "densesed/error.hpp"
#include "densesed/metrics.hpp"
#include "densesed/random.hpp"
#include "metrics_oracle.hpp"

using namespace densesed;

namespace {

constexpr double kHop = 512.0 / 32000.0;

SpeciesVocabulary letters(std::size_t n) {
  std::vector<std::string> codes;
  for (std::size_t i = 0; i < n; ++i) codes.push_back(std::string(1, static_cast<char>('A' + i)));
  return SpeciesVocabulary(codes);
}

EventRoll random_roll(const SpeciesVocabulary& v, std::size_t frames, Rng& rng, double density) {
  EventRoll r(v, kHop, frames);
  for (std::size_t c = 0; c < v.size(); ++c) {
    for (std::size_t n = 0; n < frames; ++n) r.set(c, n, rng.bernoulli(density));
  }
  return r;
}

oracle::Totals totals(const SegmentCounts& c) {
  return {c.total_tp, c.total_fp, c.total_fn, c.substitutions, c.deletions, c.insertions, c.total_ref};
}

// One segment with the given classes active everywhere.
EventRoll one_segment(const SpeciesVocabulary& v, const std::string& active) {
  EventRoll r(v, 0.1, 1);
  for (char ch : active) r.set(*v.index_of(std::string(1, ch)), 0, true);
  return r;
}

}  // namespace

TEST_CASE("segment counts match the brute-force oracle") {
  const auto v = letters(20);
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t frames = static_cast<std::size_t>(rng.uniform_int(1, 313));
    const double density = rng.uniform(0.0, 0.5);
    const auto ref = random_roll(v, frames, rng, density);
    const auto pred = random_roll(v, frames, rng, rng.uniform(0.0, 0.5));
    CHECK(totals(segment_counts(ref, pred)) == oracle::score(ref, pred, 512, 32000, 100));
    const auto cls = classwise_metrics(ref, pred);
    for (std::size_t c = 0; c < 20; c += 7) {
      CHECK(totals(cls[c].counts) == oracle::score(ref, pred, 512, 32000, 100, c));
    }
  }
}

TEST_CASE("313 frames make 50 segments") {
  const auto v = letters(1);
  EventRoll ref(v, kHop, 313), pred(v, kHop, 313);
  ref.set(0, 312, true);
  const auto c = segment_counts(ref, pred);
  CHECK(c.n_segments() == 50);
  CHECK(c.fn.back() == 1);
  CHECK(segment_of_frame(6, kHop, 0.1) == 0);
  CHECK(segment_of_frame(7, kHop, 0.1) == 1);
  CHECK(segment_of_frame(25, kHop, 0.1) == 4);
}

TEST_CASE("worked example") {
  const auto v = letters(4);
  const auto c = segment_counts(one_segment(v, "ABC"), one_segment(v, "AD"));
  CHECK(c.total_tp == 1);
  CHECK(c.total_fp == 1);
  CHECK(c.total_fn == 2);
  CHECK(c.substitutions == 1);
  CHECK(c.deletions == 1);
  CHECK(c.insertions == 0);
  CHECK(f_score(c) == doctest::Approx(0.4));
  CHECK(error_rate(c) == doctest::Approx(2.0 / 3.0));
  const auto perfect = segment_counts(one_segment(v, "ABC"), one_segment(v, "ABC"));
  CHECK(f_score(perfect) == 1.0);
  CHECK(error_rate(perfect) == 0.0);
}

TEST_CASE("edge conventions") {
  const auto v = letters(3);
  const auto empty = segment_counts(one_segment(v, ""), one_segment(v, ""));
  CHECK(f_score(empty) == 1.0);
  CHECK(error_rate(empty) == 0.0);
  const auto inserted = segment_counts(one_segment(v, ""), one_segment(v, "AB"));
  CHECK(f_score(inserted) == 0.0);
  CHECK(error_rate(inserted) == 2.0);
  // ER can exceed one
  const auto over = segment_counts(one_segment(v, "A"), one_segment(v, "BC"));
  CHECK(error_rate(over) == 2.0);
  CHECK_THROWS_AS(segment_counts(EventRoll(v, kHop, 10), EventRoll(v, kHop, 11)), DataError);
  CHECK_THROWS_AS(segment_counts(EventRoll(v, kHop, 10), EventRoll(letters(2), kHop, 10)), DataError);
}

TEST_CASE("f is symmetric, er swaps insertions and deletions") {
  const auto v = letters(6);
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_roll(v, 200, rng, 0.2);
    const auto b = random_roll(v, 200, rng, 0.3);
    const auto ab = segment_counts(a, b);
    const auto ba = segment_counts(b, a);
    CHECK(f_score(ab) == doctest::Approx(f_score(ba)));
    CHECK(ab.insertions == ba.deletions);
    CHECK(ab.substitutions == ba.substitutions);
  }
}

TEST_CASE("counts are invariant to scaling hop and segment together") {
  const auto v = letters(5);
  Rng rng(17);
  const auto ref = random_roll(v, 313, rng, 0.2);
  const auto pred = random_roll(v, 313, rng, 0.2);
  auto rescaled = [&](const EventRoll& r, double k) {
    EventRoll d(v, kHop * k, r.n_frames());
    for (std::size_t c = 0; c < 5; ++c) {
      for (std::size_t n = 0; n < r.n_frames(); ++n) d.set(c, n, r.at(c, n));
    }
    return d;
  };
  const auto base = totals(segment_counts(ref, pred, 0.1));
  for (double k : {2.0, 0.5, 10.0}) {
    CHECK(base == totals(segment_counts(rescaled(ref, k), rescaled(pred, k), 0.1 * k)));
  }
}

TEST_CASE("mean and population std") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto m = mean_std(x);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(m.n == 4);
  CHECK(mean_std(std::vector<double>{}).n == 0);
}

TEST_CASE("file evaluation pools counts") {
  const auto v = letters(3);
  const double hop = kHop;
  const AnnotationSet r1({{0.0, 1.0, "A", {}, {}}}, "f1", 5.0);
  const AnnotationSet p1({{0.0, 1.0, "A", {}, {}}}, "f1", 5.0);
  const AnnotationSet r2({{0.0, 1.0, "B", {}, {}}}, "f2", 5.0);
  const AnnotationSet p2({{2.0, 3.0, "C", {}, {}}}, "f2", 5.0);
  const std::vector<FilePair> pairs{{"f2", r2, p2}, {"f1", r1, p1}};
  const auto rep = evaluate_files(pairs, v, hop);
  REQUIRE(rep.files.size() == 2);
  CHECK(rep.files[0].id == "f1");
  CHECK(rep.files[0].f == 1.0);
  CHECK(rep.files[1].f == 0.0);
  CHECK(rep.file_f.mean == doctest::Approx(0.5));
  const auto f1 = rep.pooled.total_tp;
  CHECK(rep.micro_f == doctest::Approx(2.0 * f1 / (2.0 * f1 + rep.pooled.total_fp + rep.pooled.total_fn)));
  // class A occurs only in f1
  CHECK(rep.classes[0].file_f.n == 1);
  CHECK(rep.classes[0].pooled_f == 1.0);
  CHECK(rep.classes[2].pooled_f == 0.0);
}
