// SPDX-License-Identifier: Apache-2.0
#include "densesed/annotations.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "densesed/error.hpp"

namespace densesed {

namespace {

// Frame boundaries are compared with this slack (in frames) so that events
// produced from frame indices map back onto exactly the same frames.
constexpr double kFrameSlack = 1e-9;

bool event_less(const Event& a, const Event& b) {
  if (a.onset != b.onset) return a.onset < b.onset;
  if (a.species != b.species) return a.species < b.species;
  return a.offset < b.offset;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

std::optional<double> parse_number(std::string_view field) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  double value = 0.0;
  const auto* first = field.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

void format_number(std::ostringstream& os, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, ptr - buf);
}

bool valid_code(std::string_view code) {
  if (code.empty()) return false;
  return std::none_of(code.begin(), code.end(),
                      [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

}  // namespace

AnnotationSet::AnnotationSet(std::vector<Event> events, std::string source_id, double duration)
    : events_(std::move(events)), source_id_(std::move(source_id)), duration_(duration) {
  if (!(duration_ >= 0.0) || !std::isfinite(duration_)) {
    throw DataError("annotation set duration must be finite and non-negative");
  }
  for (const auto& e : events_) {
    if (!valid_code(e.species)) {
      throw DataError("invalid species code '" + e.species + "'");
    }
    if (!(e.onset >= 0.0 && e.onset < e.offset && e.offset <= duration_)) {
      throw DataError("event " + e.species + " [" + std::to_string(e.onset) + ", " +
                      std::to_string(e.offset) + ") outside [0, " + std::to_string(duration_) +
                      "] or empty");
    }
  }
  std::stable_sort(events_.begin(), events_.end(), event_less);
}

SpeciesVocabulary::SpeciesVocabulary(std::vector<std::string> codes) : codes_(std::move(codes)) {
  std::sort(codes_.begin(), codes_.end());
  if (std::adjacent_find(codes_.begin(), codes_.end()) != codes_.end()) {
    throw DataError("duplicate species code in vocabulary");
  }
  for (const auto& c : codes_) {
    if (!valid_code(c)) throw DataError("invalid species code '" + c + "'");
  }
}

std::optional<std::size_t> SpeciesVocabulary::index_of(std::string_view code) const {
  const auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
  if (it == codes_.end() || *it != code) return std::nullopt;
  return static_cast<std::size_t>(it - codes_.begin());
}

EventRoll::EventRoll(SpeciesVocabulary vocab, double frame_hop, std::size_t n_frames)
    : vocab_(std::move(vocab)),
      frame_hop_(frame_hop),
      n_frames_(n_frames),
      cells_(vocab_.size() * n_frames, 0) {
  if (!(frame_hop > 0.0)) throw ConfigError("frame_hop must be positive");
}

AnnotationSet parse_selection_table(std::string_view text, double duration,
                                    std::string source_id) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<Event> events;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool have_header = false;
  std::size_t n_cols = 0;
  std::optional<std::size_t> col_begin, col_end, col_species, col_low, col_high;

  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (nl == text.size()) break;
      continue;
    }
    const auto fields = split_tabs(line);

    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto name = trim(fields[i]);
        if (name == "Begin Time (s)") col_begin = i;
        else if (name == "End Time (s)") col_end = i;
        else if (name == "Species") col_species = i;
        else if (name == "Low Freq (Hz)") col_low = i;
        else if (name == "High Freq (Hz)") col_high = i;
      }
      if (!col_begin || !col_end || !col_species) {
        throw ParseError(line_no,
                         "header must contain 'Begin Time (s)', 'End Time (s)' and 'Species'");
      }
      n_cols = fields.size();
      have_header = true;
      if (nl == text.size()) break;
      continue;
    }

    const std::size_t needed = std::max({*col_begin, *col_end, *col_species}) + 1;
    if (fields.size() < needed) {
      throw ParseError(line_no, "row has " + std::to_string(fields.size()) + " columns, header has " +
                                    std::to_string(n_cols));
    }
    const auto onset = parse_number(fields[*col_begin]);
    const auto offset = parse_number(fields[*col_end]);
    if (!onset) throw ParseError(line_no, "begin time is not a number");
    if (!offset) throw ParseError(line_no, "end time is not a number");
    const auto species = trim(fields[*col_species]);
    if (!valid_code(species)) throw ParseError(line_no, "missing or invalid species code");
    if (*onset < 0.0) throw ParseError(line_no, "negative begin time");
    if (!(*offset > *onset)) throw ParseError(line_no, "end time must be after begin time");
    if (*onset >= duration) throw ParseError(line_no, "event starts after the recording ends");

    Event e{*onset, std::min(*offset, duration), std::string(species), std::nullopt, std::nullopt};
    if (col_low && *col_low < fields.size()) e.low_freq = parse_number(fields[*col_low]);
    if (col_high && *col_high < fields.size()) e.high_freq = parse_number(fields[*col_high]);
    events.push_back(std::move(e));
    if (nl == text.size()) break;
  }
  if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header row");
  return AnnotationSet(std::move(events), std::move(source_id), duration);
}

std::string serialize_selection_table(const AnnotationSet& set) {
  std::ostringstream os;
  os << "Begin Time (s)\tEnd Time (s)\tLow Freq (Hz)\tHigh Freq (Hz)\tSpecies\n";
  for (const auto& e : set.events()) {
    format_number(os, e.onset);
    os << '\t';
    format_number(os, e.offset);
    os << '\t';
    if (e.low_freq) format_number(os, *e.low_freq);
    os << '\t';
    if (e.high_freq) format_number(os, *e.high_freq);
    os << '\t' << e.species << '\n';
  }
  return os.str();
}

AnnotationSet load_selection_table(const std::string& path, double duration) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open annotation file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_selection_table(buf.str(), duration, path);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

void save_selection_table(const AnnotationSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write annotation file " + path);
  out << serialize_selection_table(set);
}

std::map<std::string, std::size_t> species_counts(std::span<const AnnotationSet> sets) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sets) {
    for (const auto& e : s.events()) ++counts[e.species];
  }
  return counts;
}

SpeciesVocabulary build_vocabulary(std::span<const AnnotationSet> sets,
                                   std::size_t min_activations) {
  if (min_activations < 1) throw ConfigError("min_activations must be at least 1");
  std::vector<std::string> codes;
  for (const auto& [code, n] : species_counts(sets)) {
    if (n >= min_activations) codes.push_back(code);
  }
  if (codes.empty()) {
    throw DataError("no species reaches " + std::to_string(min_activations) +
                    " activations; nothing to train on");
  }
  return SpeciesVocabulary(std::move(codes));
}

std::size_t max_polyphony(const AnnotationSet& set) {
  // +1 at onsets, -1 at offsets; at equal times offsets go first so that
  // touching intervals do not overlap.
  std::vector<std::pair<double, int>> bounds;
  bounds.reserve(set.size() * 2);
  for (const auto& e : set.events()) {
    bounds.emplace_back(e.onset, +1);
    bounds.emplace_back(e.offset, -1);
  }
  std::sort(bounds.begin(), bounds.end());
  std::size_t active = 0;
  std::size_t best = 0;
  for (const auto& [t, delta] : bounds) {
    if (delta > 0) {
      best = std::max(best, ++active);
    } else {
      --active;
    }
  }
  return best;
}

EventRoll to_event_roll(const AnnotationSet& set, const SpeciesVocabulary& vocab,
                        double frame_hop, std::int64_t n_frames, std::size_t* dropped) {
  if (n_frames <= 0) throw ConfigError("n_frames must be positive");
  if (!(frame_hop > 0.0)) throw ConfigError("frame_hop must be positive");
  EventRoll roll(vocab, frame_hop, static_cast<std::size_t>(n_frames));
  std::size_t skipped = 0;
  for (const auto& e : set.events()) {
    const auto cls = vocab.index_of(e.species);
    if (!cls) {
      ++skipped;
      continue;
    }
    const auto first = static_cast<std::int64_t>(std::floor(e.onset / frame_hop + kFrameSlack));
    const auto last =
        static_cast<std::int64_t>(std::ceil(e.offset / frame_hop - kFrameSlack)) - 1;
    const auto lo = std::max<std::int64_t>(first, 0);
    const auto hi = std::min<std::int64_t>(last, n_frames - 1);
    for (auto n = lo; n <= hi; ++n) roll.set(*cls, static_cast<std::size_t>(n), true);
  }
  if (dropped) *dropped = skipped;
  return roll;
}

AnnotationSet roll_to_annotations(const EventRoll& roll, std::string source_id) {
  std::vector<Event> events;
  const double hop = roll.frame_hop();
  for (std::size_t s = 0; s < roll.n_classes(); ++s) {
    const auto row = roll.row(s);
    std::size_t n = 0;
    while (n < row.size()) {
      if (!row[n]) {
        ++n;
        continue;
      }
      const std::size_t run_start = n;
      while (n < row.size() && row[n]) ++n;
      events.push_back(Event{static_cast<double>(run_start) * hop, static_cast<double>(n) * hop,
                             roll.vocabulary().code(s), std::nullopt, std::nullopt});
    }
  }
  return AnnotationSet(std::move(events), std::move(source_id),
                       static_cast<double>(roll.n_frames()) * hop);
}

AnnotationSet merge_annotation_sets(std::span<const AnnotationSet> sets,
                                    std::span<const double> offsets, double duration,
                                    std::string source_id) {
  if (sets.size() != offsets.size()) {
    throw ConfigError("merge_annotation_sets: sets and offsets differ in length");
  }
  std::vector<Event> events;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (offsets[i] < 0.0) throw ConfigError("merge_annotation_sets: negative offset");
    for (const auto& e : sets[i].events()) {
      Event shifted = e;
      shifted.onset += offsets[i];
      shifted.offset = std::min(shifted.offset + offsets[i], duration);
      if (shifted.onset >= duration) continue;
      events.push_back(std::move(shifted));
    }
  }
  return AnnotationSet(std::move(events), std::move(source_id), duration);
}

}  // namespace densesed
