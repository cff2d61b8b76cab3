// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>
#include <sstream>

#include "densesed/error.hpp"
#include "densesed/report.hpp"

using namespace densesed;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

EvaluationReport fake_eval(double f, double er) {
  EvaluationReport r;
  r.file_f = {f, 0.1, 10};
  r.file_er = {er, 0.2, 10};
  r.micro_f = f;
  r.micro_er = er;
  for (const char* s : {"AMRO", "EATO"}) {
    ClassSummary c;
    c.species = s;
    c.pooled_f = f;
    c.pooled_er = er;
    c.file_f = {f, 0.0, 3};
    c.file_er = {er, 0.0, 3};
    r.classes.push_back(c);
  }
  return r;
}

ExperimentReport fake_report() {
  ExperimentReport rep;
  rep.test_sets = {"matched", "poly3", "poly6", "poly10"};
  rep.fixed_polyphonies = {3, 6, 10};
  for (std::size_t p : {3u, 6u, 10u}) {
    ModelResult m;
    m.name = "O" + std::to_string(p);
    m.max_polyphony = p;
    m.history = {1.0, 0.5};
    for (int t = 0; t < 4; ++t) m.evaluations.push_back(fake_eval(0.5, 0.6));
    rep.models.push_back(m);
  }
  rep.annotation_counts = {{"EATO", 300}, {"AMRO", 100}};
  rep.total_annotations = 800;
  return rep;
}

}  // namespace

TEST_CASE("mean std formatting") {
  CHECK(format_mean_std({0.4712, 0.1288, 5}) == "0.47±0.13");
  CHECK(format_mean_std({1.0, 0.0, 1}, 3) == "1.000±0.000");
}

TEST_CASE("loss curves round trip") {
  const std::vector<LossHistory> h{{0.9, 0.5, 0.25, 0.125}, {1.0, 0.75, 0.5}};
  const std::vector<std::string> names{"O3", "O6"};
  const auto csv = export_loss_curves(h, names, 100);
  const auto ls = lines(csv);
  REQUIRE(ls.size() == 4);
  CHECK(ls[0] == "epoch,O3,O6");
  CHECK(ls[1].rfind("1,", 0) == 0);
  const auto back = parse_loss_curves(csv);
  CHECK(back.names == names);
  CHECK(back.histories[0] == LossHistory{0.9, 0.5, 0.25});
  CHECK(back.histories[1] == LossHistory{1.0, 0.75, 0.5});
  CHECK(lines(export_loss_curves(h, names, 2)).size() == 3);
  CHECK_THROWS_AS(parse_loss_curves("epoch,a\n1,x\n"), ParseError);
  CHECK_THROWS_AS(parse_loss_curves("epoch,a\n1,0.5,0.3\n"), ParseError);
}

TEST_CASE("table 1 has a model row per level and an F/ER pair per test set") {
  const auto rep = fake_report();
  const auto t = render_table1(rep);
  std::size_t rows = 0;
  for (const auto& l : lines(t)) {
    if (l.rfind("Model O", 0) != 0) continue;
    ++rows;
    std::size_t cells = 0;
    for (std::size_t pos = 0; (pos = l.find("±", pos)) != std::string::npos; pos += 2) ++cells;
    CHECK(cells == 8);
  }
  CHECK(rows == 3);
  CHECK(t.find("0.50±0.10") != std::string::npos);
  CHECK(t.find("0.60±0.20") != std::string::npos);
}

TEST_CASE("table 2 lists species by count") {
  const auto t = render_table2(fake_report(), 0);
  const auto e = t.find("EATO");
  const auto a = t.find("AMRO");
  REQUIRE(e != std::string::npos);
  REQUIRE(a != std::string::npos);
  CHECK(e < a);
  // 300 of 800 total, 300 of 400 vocabulary annotations
  CHECK(t.find("37.50") != std::string::npos);
  CHECK(t.find("75.00") != std::string::npos);
  const auto j = nlohmann::json::parse(experiment_report_json(fake_report()));
  CHECK(j["models"].size() == 3);
}

TEST_CASE("dataset stats") {
  std::vector<AnnotationSet> sets;
  sets.emplace_back(std::vector<Event>{{0, 1, "A", {}, {}}, {1, 2, "A", {}, {}}, {0, 1, "B", {}, {}}}, "r1", 5.0);
  sets.emplace_back(std::vector<Event>{{0, 1, "C", {}, {}}}, "r2", 5.0);
  const auto s = dataset_stats(sets);
  CHECK(s.recordings == 2);
  CHECK(s.species == 3);
  CHECK(s.activations == 4);
  CHECK(s.per_species.front() == std::pair<std::string, std::size_t>{"A", 2});
  const auto j = nlohmann::json::parse(dataset_stats_json(s, 2));
  CHECK(j["recordings"] == 2);
  CHECK(dataset_stats_text(s, 2).find("species with >= 2 activations: 1") != std::string::npos);
}

TEST_CASE("evaluation report json") {
  const auto j = nlohmann::json::parse(evaluation_report_json(fake_eval(0.25, 1.5)));
  CHECK(j["micro_f"] == 0.25);
  CHECK(j["classes"].size() == 2);
}
