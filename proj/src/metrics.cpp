// SPDX-License-Identifier: Apache-2.0
#include "densesed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "densesed/error.hpp"

namespace densesed {

namespace {

SegmentCounts count_rows(const EventRoll& ref, const EventRoll& pred, double segment_length,
                         std::size_t first_class, std::size_t end_class) {
  if (!(segment_length > 0.0)) throw ConfigError("segment_length must be positive");
  const std::size_t n_frames = ref.n_frames();
  const std::size_t n_segments =
      n_frames == 0 ? 0 : segment_of_frame(n_frames - 1, ref.frame_hop(), segment_length) + 1;

  SegmentCounts c;
  c.segment_length = segment_length;
  c.tp.assign(n_segments, 0);
  c.fp.assign(n_segments, 0);
  c.fn.assign(n_segments, 0);
  c.n_ref.assign(n_segments, 0);

  std::vector<std::size_t> seg_of(n_frames);
  for (std::size_t n = 0; n < n_frames; ++n) {
    seg_of[n] = segment_of_frame(n, ref.frame_hop(), segment_length);
  }
  std::vector<std::uint8_t> ref_active(n_segments), pred_active(n_segments);
  for (std::size_t s = first_class; s < end_class; ++s) {
    std::fill(ref_active.begin(), ref_active.end(), 0);
    std::fill(pred_active.begin(), pred_active.end(), 0);
    const auto r = ref.row(s);
    const auto p = pred.row(s);
    for (std::size_t n = 0; n < n_frames; ++n) {
      ref_active[seg_of[n]] |= r[n];
      pred_active[seg_of[n]] |= p[n];
    }
    for (std::size_t k = 0; k < n_segments; ++k) {
      const bool in_ref = ref_active[k] != 0;
      const bool in_pred = pred_active[k] != 0;
      c.tp[k] += in_ref && in_pred;
      c.fp[k] += !in_ref && in_pred;
      c.fn[k] += in_ref && !in_pred;
      c.n_ref[k] += in_ref;
    }
  }
  for (std::size_t k = 0; k < n_segments; ++k) {
    c.total_tp += c.tp[k];
    c.total_fp += c.fp[k];
    c.total_fn += c.fn[k];
    c.total_ref += c.n_ref[k];
    c.substitutions += std::min(c.fn[k], c.fp[k]);
    c.deletions += c.fn[k] > c.fp[k] ? c.fn[k] - c.fp[k] : 0;
    c.insertions += c.fp[k] > c.fn[k] ? c.fp[k] - c.fn[k] : 0;
  }
  return c;
}

EventRoll as_roll(const std::variant<EventRoll, AnnotationSet>& pred,
                  const SpeciesVocabulary& vocab, double frame_hop, std::size_t n_frames) {
  if (const auto* roll = std::get_if<EventRoll>(&pred)) return *roll;
  return to_event_roll(std::get<AnnotationSet>(pred), vocab, frame_hop,
                       static_cast<std::int64_t>(n_frames));
}

}  // namespace

SegmentCounts& SegmentCounts::operator+=(const SegmentCounts& o) {
  tp.insert(tp.end(), o.tp.begin(), o.tp.end());
  fp.insert(fp.end(), o.fp.begin(), o.fp.end());
  fn.insert(fn.end(), o.fn.begin(), o.fn.end());
  n_ref.insert(n_ref.end(), o.n_ref.begin(), o.n_ref.end());
  total_tp += o.total_tp;
  total_fp += o.total_fp;
  total_fn += o.total_fn;
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  total_ref += o.total_ref;
  return *this;
}

std::size_t segment_of_frame(std::size_t frame, double frame_hop, double segment_length) {
  // Slack keeps frames that start exactly on a segment boundary in that segment.
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(frame) * frame_hop / segment_length + 1e-9));
}

void check_comparable(const EventRoll& ref, const EventRoll& pred) {
  if (!(ref.vocabulary() == pred.vocabulary())) {
    throw DataError("reference and prediction use different vocabularies");
  }
  if (ref.n_frames() != pred.n_frames()) {
    throw DataError("reference has " + std::to_string(ref.n_frames()) +
                    " frames, prediction has " + std::to_string(pred.n_frames()));
  }
  if (std::abs(ref.frame_hop() - pred.frame_hop()) > 1e-12) {
    throw DataError("reference and prediction use different frame hops");
  }
}

SegmentCounts segment_counts(const EventRoll& ref, const EventRoll& pred, double segment_length) {
  check_comparable(ref, pred);
  return count_rows(ref, pred, segment_length, 0, ref.n_classes());
}

double f_score(const SegmentCounts& c) {
  const double denom = 2.0 * static_cast<double>(c.total_tp) + static_cast<double>(c.total_fp) +
                       static_cast<double>(c.total_fn);
  if (denom == 0.0) return 1.0;
  return 2.0 * static_cast<double>(c.total_tp) / denom;
}

double error_rate(const SegmentCounts& c) {
  const double errors =
      static_cast<double>(c.substitutions + c.deletions + c.insertions);
  if (c.total_ref == 0) return static_cast<double>(c.insertions);
  return errors / static_cast<double>(c.total_ref);
}

std::vector<ClassMetrics> classwise_metrics(const EventRoll& ref, const EventRoll& pred,
                                            double segment_length) {
  check_comparable(ref, pred);
  std::vector<ClassMetrics> out;
  out.reserve(ref.n_classes());
  for (std::size_t s = 0; s < ref.n_classes(); ++s) {
    ClassMetrics m;
    m.species = ref.vocabulary().code(s);
    m.counts = count_rows(ref, pred, segment_length, s, s + 1);
    m.f = f_score(m.counts);
    m.er = error_rate(m.counts);
    out.push_back(std::move(m));
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(sq / static_cast<double>(values.size()));
  return r;
}

std::size_t frames_for_duration(double duration, double frame_hop) {
  return static_cast<std::size_t>(std::ceil(duration / frame_hop - 1e-9));
}

EvaluationReport evaluate_files(std::span<const FilePair> pairs, const SpeciesVocabulary& vocab,
                                double frame_hop, double segment_length) {
  if (pairs.empty()) throw DataError("evaluate_files: no files to evaluate");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].id < pairs[b].id; });

  EvaluationReport report;
  std::vector<SegmentCounts> class_pooled(vocab.size());
  std::vector<std::vector<double>> class_f(vocab.size()), class_er(vocab.size());
  std::vector<double> file_f, file_er;

  for (std::size_t i : order) {
    const auto& pair = pairs[i];
    std::size_t n_frames = frames_for_duration(pair.reference.duration(), frame_hop);
    if (const auto* roll = std::get_if<EventRoll>(&pair.prediction)) {
      if (!(roll->vocabulary() == vocab)) {
        throw DataError("file " + pair.id + ": prediction vocabulary differs from evaluation vocabulary");
      }
      n_frames = roll->n_frames();
    }
    const EventRoll ref =
        to_event_roll(pair.reference, vocab, frame_hop, static_cast<std::int64_t>(n_frames));
    const EventRoll pred = as_roll(pair.prediction, vocab, frame_hop, n_frames);
    const SegmentCounts counts = segment_counts(ref, pred, segment_length);
    report.pooled += counts;
    const double f = f_score(counts);
    const double er = error_rate(counts);
    report.files.push_back({pair.id, f, er});
    file_f.push_back(f);
    file_er.push_back(er);

    const auto per_class = classwise_metrics(ref, pred, segment_length);
    for (std::size_t s = 0; s < per_class.size(); ++s) {
      const auto& cm = per_class[s];
      class_pooled[s] += cm.counts;
      if (cm.counts.total_ref + cm.counts.total_fp > 0) {
        class_f[s].push_back(cm.f);
        class_er[s].push_back(cm.er);
      }
    }
  }

  report.pooled.segment_length = segment_length;
  report.micro_f = f_score(report.pooled);
  report.micro_er = error_rate(report.pooled);
  report.file_f = mean_std(file_f);
  report.file_er = mean_std(file_er);
  for (std::size_t s = 0; s < vocab.size(); ++s) {
    ClassSummary cs;
    cs.species = vocab.code(s);
    cs.pooled_f = f_score(class_pooled[s]);
    cs.pooled_er = error_rate(class_pooled[s]);
    cs.file_f = mean_std(class_f[s]);
    cs.file_er = mean_std(class_er[s]);
    cs.ref_segments = class_pooled[s].total_ref;
    report.classes.push_back(std::move(cs));
  }
  return report;
}

}  // namespace densesed
