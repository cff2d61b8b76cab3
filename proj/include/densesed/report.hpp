// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "densesed/annotations.hpp"
#include "densesed/metrics.hpp"
#include "densesed/train.hpp"

namespace densesed {

inline constexpr const char* kVersionString = "densesed 0.1.0";

/// "0.47±0.13" with `digits` decimals.
std::string format_mean_std(const MeanStd& v, int digits = 2);

std::string evaluation_report_json(const EvaluationReport& report);
/// Summary lines, per-file table and class table.
std::string evaluation_report_text(const EvaluationReport& report);

struct DatasetStats {
  std::size_t recordings = 0;
  std::size_t species = 0;
  std::size_t activations = 0;
  /// Sorted by count descending, then code.
  std::vector<std::pair<std::string, std::size_t>> per_species;
};

DatasetStats dataset_stats(std::span<const AnnotationSet> sets);
std::string dataset_stats_text(const DatasetStats& stats, std::size_t min_count = 100);
std::string dataset_stats_json(const DatasetStats& stats, std::size_t min_count = 100);

/// CSV "epoch,<name>..." with epochs numbered from 1, truncated to
/// min(n_epochs, shortest history).
std::string export_loss_curves(std::span<const LossHistory> histories,
                               std::span<const std::string> names, std::size_t n_epochs = 100);

struct LossCurves {
  std::vector<std::string> names;
  std::vector<LossHistory> histories;
};
/// Inverse of export_loss_curves. Throws ParseError on malformed rows.
LossCurves parse_loss_curves(const std::string& csv);

struct ModelResult {
  std::string name;             // e.g. "O3"
  std::size_t max_polyphony = 0;
  LossHistory history;
  /// One report per entry of ExperimentReport::test_sets.
  std::vector<EvaluationReport> evaluations;
};

struct ExperimentReport {
  /// Column labels; the first is the matched set, the rest fixed polyphonies.
  std::vector<std::string> test_sets;
  std::vector<std::size_t> fixed_polyphonies;
  std::vector<ModelResult> models;
  /// Annotation counts of the vocabulary species in the source data.
  std::vector<std::pair<std::string, std::size_t>> annotation_counts;
  /// Activations over every species of the source data, before filtering.
  std::size_t total_annotations = 0;
  /// Configs, seeds and version, as a JSON object text.
  std::string provenance_json = "{}";
};

/// Rows = models, one (F, ER) column pair per test set, mean±std over files.
std::string render_table1(const ExperimentReport& report);

/// Per-class listing for one model on one test set: annotation count,
/// percentage over all source annotations and over the vocabulary species,
/// per-file mean F and ER (files where the class occurs), pooled F and ER.
/// Rows sorted by annotation count descending.
std::string render_table2(const ExperimentReport& report, std::size_t model, std::size_t test_set = 0);

std::string experiment_report_json(const ExperimentReport& report);

}  // namespace densesed
