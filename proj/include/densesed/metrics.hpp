// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "densesed/annotations.hpp"

namespace densesed {

inline constexpr double kDefaultSegmentLength = 0.1;

/// Segment-level intermediate statistics. Per segment:
///   S = min(FN, FP), D = max(0, FN - FP), I = max(0, FP - FN), TP + FN = N_ref.
struct SegmentCounts {
  std::vector<std::size_t> tp, fp, fn, n_ref;
  std::size_t total_tp = 0, total_fp = 0, total_fn = 0;
  std::size_t substitutions = 0, deletions = 0, insertions = 0, total_ref = 0;
  double segment_length = kDefaultSegmentLength;

  std::size_t n_segments() const { return tp.size(); }
  /// Adds another set's aggregates (per-segment arrays are appended).
  SegmentCounts& operator+=(const SegmentCounts& other);
};

/// Index of the segment containing frame n.
std::size_t segment_of_frame(std::size_t frame, double frame_hop, double segment_length);

/// A class is active in a segment when it is active in any of the
/// segment's frames. The last, possibly partial, segment is scored normally.
SegmentCounts segment_counts(const EventRoll& ref, const EventRoll& pred,
                             double segment_length = kDefaultSegmentLength);

/// 2TP / (2TP + FP + FN); 1 when nothing was expected and nothing predicted.
double f_score(const SegmentCounts& counts);

/// (S + D + I) / N; equals the insertion count when N = 0.
double error_rate(const SegmentCounts& counts);

struct ClassMetrics {
  std::string species;
  double f = 1.0;
  double er = 0.0;
  SegmentCounts counts;
};

/// Metrics computed on each class's rows alone.
std::vector<ClassMetrics> classwise_metrics(const EventRoll& ref, const EventRoll& pred,
                                            double segment_length = kDefaultSegmentLength);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

struct FileMetrics {
  std::string id;
  double f = 0.0;
  double er = 0.0;
};

struct ClassSummary {
  std::string species;
  double pooled_f = 1.0;   // from counts pooled over all files
  double pooled_er = 0.0;
  MeanStd file_f;          // over files where the class occurs in ref or pred
  MeanStd file_er;
  std::size_t ref_segments = 0;
};

struct EvaluationReport {
  double micro_f = 1.0;   // pooled counts over all files
  double micro_er = 0.0;
  MeanStd file_f;
  MeanStd file_er;
  std::vector<FileMetrics> files;   // sorted by id
  std::vector<ClassSummary> classes;  // vocabulary order
  SegmentCounts pooled;
};

struct FilePair {
  std::string id;
  AnnotationSet reference;
  std::variant<EventRoll, AnnotationSet> prediction;
};

/// Number of frames covering `duration` at `frame_hop`.
std::size_t frames_for_duration(double duration, double frame_hop);

/// Scores every file independently and pools counts for the micro and
/// class-wise sections. Throws DataError on vocabulary or shape mismatch.
EvaluationReport evaluate_files(std::span<const FilePair> pairs, const SpeciesVocabulary& vocab,
                                double frame_hop, double segment_length = kDefaultSegmentLength);

/// Shape checks shared by all roll comparisons.
void check_comparable(const EventRoll& ref, const EventRoll& pred);

}  // namespace densesed
