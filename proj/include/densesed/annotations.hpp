// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace densesed {

/// One labeled vocalization. Intervals are half-open: [onset, offset).
struct Event {
  double onset = 0.0;
  double offset = 0.0;
  std::string species;
  std::optional<double> low_freq;
  std::optional<double> high_freq;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Events for one audio source, kept sorted by (onset, species, offset).
class AnnotationSet {
 public:
  AnnotationSet() = default;
  /// Validates every event against [0, duration] and sorts them.
  AnnotationSet(std::vector<Event> events, std::string source_id, double duration);

  const std::vector<Event>& events() const { return events_; }
  const std::string& source_id() const { return source_id_; }
  double duration() const { return duration_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;

 private:
  std::vector<Event> events_;
  std::string source_id_;
  double duration_ = 0.0;
};

/// Alphabetically ordered class list; position in the list is the class index.
class SpeciesVocabulary {
 public:
  SpeciesVocabulary() = default;
  /// Codes are sorted and must be unique.
  explicit SpeciesVocabulary(std::vector<std::string> codes);

  const std::vector<std::string>& codes() const { return codes_; }
  std::size_t size() const { return codes_.size(); }
  std::optional<std::size_t> index_of(std::string_view code) const;
  const std::string& code(std::size_t index) const { return codes_.at(index); }

  friend bool operator==(const SpeciesVocabulary&, const SpeciesVocabulary&) = default;

 private:
  std::vector<std::string> codes_;
};

/// S x N presence/absence matrix (classes x frames), stored row-major.
class EventRoll {
 public:
  EventRoll() = default;
  EventRoll(SpeciesVocabulary vocab, double frame_hop, std::size_t n_frames);

  std::size_t n_classes() const { return vocab_.size(); }
  std::size_t n_frames() const { return n_frames_; }
  double frame_hop() const { return frame_hop_; }
  const SpeciesVocabulary& vocabulary() const { return vocab_; }

  std::uint8_t at(std::size_t cls, std::size_t frame) const {
    return cells_[cls * n_frames_ + frame];
  }
  void set(std::size_t cls, std::size_t frame, bool active) {
    cells_[cls * n_frames_ + frame] = active ? 1 : 0;
  }
  std::span<const std::uint8_t> row(std::size_t cls) const {
    return {cells_.data() + cls * n_frames_, n_frames_};
  }
  const std::vector<std::uint8_t>& cells() const { return cells_; }

  friend bool operator==(const EventRoll&, const EventRoll&) = default;

 private:
  SpeciesVocabulary vocab_;
  double frame_hop_ = 0.0;
  std::size_t n_frames_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Parses a tab-separated selection table. Required header columns are
/// "Begin Time (s)", "End Time (s)" and "Species"; "Low Freq (Hz)" and
/// "High Freq (Hz)" are read when present, anything else is ignored.
/// Offsets past `duration` are clipped to it. Throws ParseError naming the line.
AnnotationSet parse_selection_table(std::string_view text, double duration,
                                    std::string source_id = {});

/// Writes the same schema parse_selection_table reads.
std::string serialize_selection_table(const AnnotationSet& set);

AnnotationSet load_selection_table(const std::string& path, double duration);
void save_selection_table(const AnnotationSet& set, const std::string& path);

/// Event count per species over all sets.
std::map<std::string, std::size_t> species_counts(std::span<const AnnotationSet> sets);

/// Species with at least `min_activations` events in total, sorted.
/// Throws DataError when nothing survives the threshold.
SpeciesVocabulary build_vocabulary(std::span<const AnnotationSet> sets,
                                   std::size_t min_activations);

/// Largest number of simultaneously active events.
std::size_t max_polyphony(const AnnotationSet& set);

/// Frame n covers [n*frame_hop, (n+1)*frame_hop); a class is present in a
/// frame when any of its events overlaps it. Events outside the vocabulary
/// are skipped and counted into `dropped` when given.
EventRoll to_event_roll(const AnnotationSet& set, const SpeciesVocabulary& vocab,
                        double frame_hop, std::int64_t n_frames,
                        std::size_t* dropped = nullptr);

/// Each maximal run of active frames becomes one event.
AnnotationSet roll_to_annotations(const EventRoll& roll, std::string source_id = {});

/// Union of all events, each shifted by its set's offset and clipped to
/// `duration`. Events starting at or past `duration` are discarded.
AnnotationSet merge_annotation_sets(std::span<const AnnotationSet> sets,
                                    std::span<const double> offsets, double duration,
                                    std::string source_id = {});

}  // namespace densesed
