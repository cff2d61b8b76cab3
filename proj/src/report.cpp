// SPDX-License-Identifier: Apache-2.0
#include "densesed/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "densesed/error.hpp"
#include "json_config.hpp"

namespace densesed {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
  return s;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Json mean_std_json(const MeanStd& v) { return Json{{"mean", v.mean}, {"std", v.std}, {"n", v.n}}; }

// Left-aligned first column, right-aligned others.
std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  auto display = [](const std::string& s) {
    // "±" is two bytes in UTF-8 but one column.
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], display(r[i]));
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string pad(width[i] - display(r[i]), ' ');
      if (i > 0) line += "  ";
      line += i == 0 ? r[i] + pad : pad + r[i];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

Json evaluation_json(const EvaluationReport& r) {
  Json files = Json::array();
  for (const auto& f : r.files) files.push_back(Json{{"id", f.id}, {"f", f.f}, {"er", f.er}});
  Json classes = Json::array();
  for (const auto& c : r.classes) {
    classes.push_back(Json{{"species", c.species},
                           {"pooled_f", c.pooled_f},
                           {"pooled_er", c.pooled_er},
                           {"file_f", mean_std_json(c.file_f)},
                           {"file_er", mean_std_json(c.file_er)},
                           {"ref_segments", c.ref_segments}});
  }
  const auto& p = r.pooled;
  return Json{{"micro_f", r.micro_f},
              {"micro_er", r.micro_er},
              {"file_f", mean_std_json(r.file_f)},
              {"file_er", mean_std_json(r.file_er)},
              {"counts",
               {{"tp", p.total_tp},
                {"fp", p.total_fp},
                {"fn", p.total_fn},
                {"substitutions", p.substitutions},
                {"deletions", p.deletions},
                {"insertions", p.insertions},
                {"n_ref", p.total_ref},
                {"segment_length", p.segment_length}}},
              {"files", files},
              {"classes", classes}};
}

}  // namespace

std::string format_mean_std(const MeanStd& v, int digits) {
  return fixed(v.mean, digits) + "±" + fixed(v.std, digits);
}

std::string evaluation_report_json(const EvaluationReport& report) {
  return evaluation_json(report).dump(2) + "\n";
}

std::string evaluation_report_text(const EvaluationReport& r) {
  std::string out;
  out += "segment length: " + shortest(r.pooled.segment_length) + " s\n";
  out += "files: " + std::to_string(r.files.size()) + "\n";
  out += "micro F: " + fixed(r.micro_f, 4) + "  micro ER: " + fixed(r.micro_er, 4) + "\n";
  out += "file F: " + format_mean_std(r.file_f, 4) + "  file ER: " + format_mean_std(r.file_er, 4) + "\n\n";
  std::vector<std::vector<std::string>> rows{{"file", "F", "ER"}};
  for (const auto& f : r.files) rows.push_back({f.id, fixed(f.f, 4), fixed(f.er, 4)});
  out += align(rows) + "\n";
  rows = {{"species", "ref segments", "pooled F", "pooled ER", "file F", "file ER"}};
  for (const auto& c : r.classes) {
    rows.push_back({c.species, std::to_string(c.ref_segments), fixed(c.pooled_f, 4),
                    fixed(c.pooled_er, 4), format_mean_std(c.file_f, 4), format_mean_std(c.file_er, 4)});
  }
  out += align(rows);
  return out;
}

DatasetStats dataset_stats(std::span<const AnnotationSet> sets) {
  DatasetStats s;
  s.recordings = sets.size();
  for (const auto& [code, n] : species_counts(sets)) {
    s.per_species.emplace_back(code, n);
    s.activations += n;
  }
  s.species = s.per_species.size();
  std::stable_sort(s.per_species.begin(), s.per_species.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return s;
}

std::string dataset_stats_text(const DatasetStats& s, std::size_t min_count) {
  std::size_t kept = 0;
  for (const auto& p : s.per_species) kept += p.second >= min_count;
  std::string out;
  out += "recordings: " + std::to_string(s.recordings) + "\n";
  out += "species: " + std::to_string(s.species) + "\n";
  out += "activations: " + std::to_string(s.activations) + "\n";
  out += "species with >= " + std::to_string(min_count) + " activations: " + std::to_string(kept) + "\n\n";
  std::vector<std::vector<std::string>> rows{{"species", "count", "%"}};
  for (const auto& [code, n] : s.per_species) {
    const double pct = s.activations ? 100.0 * static_cast<double>(n) / static_cast<double>(s.activations) : 0.0;
    rows.push_back({code, std::to_string(n), fixed(pct, 2)});
  }
  out += align(rows);
  return out;
}

std::string dataset_stats_json(const DatasetStats& s, std::size_t min_count) {
  Json per = Json::array();
  std::size_t kept = 0;
  for (const auto& [code, n] : s.per_species) {
    per.push_back(Json{{"species", code}, {"count", n}});
    kept += n >= min_count;
  }
  return Json{{"recordings", s.recordings},
              {"species", s.species},
              {"activations", s.activations},
              {"min_count", min_count},
              {"species_kept", kept},
              {"per_species", per}}
             .dump(2) + "\n";
}

std::string export_loss_curves(std::span<const LossHistory> histories,
                               std::span<const std::string> names, std::size_t n_epochs) {
  if (histories.empty()) throw ConfigError("no loss histories to export");
  if (names.size() != histories.size()) throw ConfigError("one name per loss history is required");
  std::size_t rows = n_epochs;
  for (const auto& h : histories) rows = std::min(rows, h.size());
  std::string out = "epoch";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (std::size_t e = 0; e < rows; ++e) {
    out += std::to_string(e + 1);
    for (const auto& h : histories) out += "," + shortest(h[e]);
    out += "\n";
  }
  return out;
}

LossCurves parse_loss_curves(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = l.find(',', start);
      cells.push_back(l.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  if (!std::getline(in, line)) throw ParseError(1, "empty loss curve file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split(line);
  if (header.empty() || header[0] != "epoch") throw ParseError(1, "first column must be 'epoch'");
  LossCurves curves;
  curves.names.assign(header.begin() + 1, header.end());
  curves.histories.resize(curves.names.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw ParseError(lineno, "expected " + std::to_string(header.size()) + " columns");
    for (std::size_t i = 1; i < cells.size(); ++i) {
      double v = 0.0;
      const auto* b = cells[i].data();
      const auto res = std::from_chars(b, b + cells[i].size(), v);
      if (res.ec != std::errc{} || res.ptr != b + cells[i].size()) {
        throw ParseError(lineno, "bad loss value '" + cells[i] + "'");
      }
      curves.histories[i - 1].push_back(v);
    }
  }
  return curves;
}

std::string render_table1(const ExperimentReport& report) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> sub{""};
  for (std::size_t i = 0; i < report.test_sets.size(); ++i) {
    sub.push_back("F Score");
    sub.push_back("ER");
  }
  rows.push_back(sub);
  for (const auto& m : report.models) {
    std::vector<std::string> r{"Model " + m.name};
    for (const auto& e : m.evaluations) {
      r.push_back(format_mean_std(e.file_f));
      r.push_back(format_mean_std(e.file_er));
    }
    rows.push_back(r);
  }
  std::string out;
  for (std::size_t i = 0; i < report.test_sets.size(); ++i) {
    out += "[" + std::to_string(i + 1) + "] " + report.test_sets[i] + "\n";
  }
  std::vector<std::vector<std::string>> with_index = rows;
  with_index.insert(with_index.begin(), std::vector<std::string>{""});
  for (std::size_t i = 0; i < report.test_sets.size(); ++i) {
    with_index[0].push_back("[" + std::to_string(i + 1) + "]");
    with_index[0].push_back("");
  }
  return out + "\n" + align(with_index);
}

std::string render_table2(const ExperimentReport& report, std::size_t model, std::size_t test_set) {
  if (model >= report.models.size()) throw ConfigError("no model with index " + std::to_string(model));
  const auto& m = report.models[model];
  if (test_set >= m.evaluations.size()) throw ConfigError("no test set with index " + std::to_string(test_set));
  const auto& eval = m.evaluations[test_set];
  std::size_t subset_total = 0;
  for (const auto& p : report.annotation_counts) subset_total += p.second;
  auto rows_sorted = report.annotation_counts;
  std::stable_sort(rows_sorted.begin(), rows_sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  auto pct = [](std::size_t n, std::size_t total) {
    return total ? fixed(100.0 * static_cast<double>(n) / static_cast<double>(total), 2) + " %" : std::string("-");
  };
  std::vector<std::vector<std::string>> rows{{"Species", "Number of annotations", "% of all annotations",
                                              "% of vocabulary annotations", "Mean F Score", "Mean ER",
                                              "Pooled F", "Pooled ER"}};
  for (const auto& [code, n] : rows_sorted) {
    const auto it = std::find_if(eval.classes.begin(), eval.classes.end(),
                                 [&](const ClassSummary& c) { return c.species == code; });
    if (it == eval.classes.end()) continue;
    rows.push_back({code, std::to_string(n), pct(n, report.total_annotations), pct(n, subset_total),
                    format_mean_std(it->file_f), format_mean_std(it->file_er), fixed(it->pooled_f, 2),
                    fixed(it->pooled_er, 2)});
  }
  return "Model " + m.name + " on " + report.test_sets[test_set] + "\n\n" + align(rows);
}

std::string experiment_report_json(const ExperimentReport& report) {
  Json models = Json::array();
  for (const auto& m : report.models) {
    Json evals = Json::array();
    for (std::size_t i = 0; i < m.evaluations.size(); ++i) {
      Json e = evaluation_json(m.evaluations[i]);
      e["test_set"] = i < report.test_sets.size() ? report.test_sets[i] : "";
      evals.push_back(std::move(e));
    }
    models.push_back(Json{{"name", m.name},
                          {"max_polyphony", m.max_polyphony},
                          {"loss_history", m.history},
                          {"evaluations", evals}});
  }
  Json counts = Json::array();
  for (const auto& [code, n] : report.annotation_counts) counts.push_back(Json{{"species", code}, {"count", n}});
  Json provenance;
  try {
    provenance = Json::parse(report.provenance_json);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("provenance is not valid JSON");
  }
  return Json{{"version", kVersionString},
              {"test_sets", report.test_sets},
              {"fixed_polyphonies", report.fixed_polyphonies},
              {"total_annotations", report.total_annotations},
              {"annotation_counts", counts},
              {"models", models},
              {"provenance", provenance}}
             .dump(2) + "\n";
}

}  // namespace densesed
