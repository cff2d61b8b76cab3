// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "densesed/error.hpp"
#include "densesed/experiments.hpp"

using namespace densesed;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  c.polyphony_levels = {1, 3};
  c.fixed_test_polyphonies = {3};
  c.n_train_scenes = 12;
  c.n_test_scenes = 4;
  c.augment = false;
  c.save_audio = false;
  c.pool.synthetic.n_species = 3;
  c.pool.synthetic.clips_per_species = 12;
  c.features.n_mels = 32;
  c.crnn.conv_channels = {4, 4};
  c.crnn.freq_pool = {4, 2};
  c.crnn.gru_layers = 1;
  c.crnn.gru_units = 8;
  c.crnn.dense_units = {8};
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.seed = 5;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  const auto c = small_config("x");
  const auto back = parse_experiment_config(experiment_config_json(c));
  CHECK(experiment_config_json(back) == experiment_config_json(c));
  CHECK(back.crnn == c.crnn);
  CHECK(back.polyphony_levels == c.polyphony_levels);

  CHECK_THROWS_AS(parse_experiment_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"model": {"gru_unitz": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"polyphony_levels": []})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);

  ExperimentConfig d;
  CHECK(d.test_scene_count() == 1111);
  d.n_test_scenes = 50;
  CHECK(d.test_scene_count() == 50);
}

TEST_CASE("small experiment is deterministic") {
  const fs::path base = fs::temp_directory_path() / "densesed_exp_test";
  fs::remove_all(base);
  const auto cfg = small_config(base / "run");
  const auto r1 = run_experiment(cfg);
  fs::rename(base / "run", base / "first");
  const auto r2 = run_experiment(cfg);

  REQUIRE(r1.models.size() == 2);
  CHECK(r1.test_sets.size() == 2);
  for (const auto& m : r1.models) CHECK(m.evaluations.size() == 2);
  for (const char* f : {"report.json", "table1.txt", "table2_O1.txt", "table2_O3.txt", "loss_curves.csv",
                        "models/O1.ckpt", "models/O3.ckpt", "subsets/train_O3/manifest.json",
                        "subsets/test_poly3/manifest.json", "eval/O3_on_test_poly3.json", "pool_split.json"}) {
    INFO(f);
    REQUIRE(fs::exists(base / "run" / f));
    CHECK(slurp(base / "first" / f) == slurp(base / "run" / f));
  }
  // fixed-polyphony test labels reach the level exactly
  const auto m = nlohmann::json::parse(slurp(base / "run" / "subsets/test_poly3/manifest.json"));
  for (const auto& s : m["scenes"]) CHECK(s["measured_polyphony"] == 3);
  const auto lm = nlohmann::json::parse(slurp(base / "run" / "subsets/train_O1/manifest.json"));
  for (const auto& s : lm["scenes"]) CHECK(s["measured_polyphony"] == 1);
  fs::remove_all(base);
}

TEST_CASE("stage failures name the stage") {
  auto cfg = small_config(fs::temp_directory_path() / "densesed_exp_fail");
  cfg.pool.kind = PoolSource::Kind::Dataset;
  cfg.pool.dataset_dir = "/nonexistent/dataset";
  try {
    run_experiment(cfg);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("stage ") == 0);
  }
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("dataset directory loading") {
  const fs::path dir = fs::temp_directory_path() / "densesed_dataset_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<float> silence(static_cast<std::size_t>(12 * kDefaultSampleRate), 0.0f);
  for (const char* name : {"rec_b", "rec_a"}) {
    write_wav((dir / (std::string(name) + ".wav")).string(), silence, kDefaultSampleRate);
    std::ofstream(dir / (std::string(name) + ".Table.1.selections.txt"))
        << "Begin Time (s)\tEnd Time (s)\tSpecies\n1\t2\tAMRO\n6\t7\tEATO\n8\t9\tAMRO\n";
  }
  const auto recs = load_dataset(dir.string());
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].clip.id() == "rec_a");
  CHECK(recs[0].clip.annotations.size() == 3);

  PoolSource src;
  src.kind = PoolSource::Kind::Dataset;
  src.dataset_dir = dir.string();
  src.min_activations = 4;
  const auto pool = build_source_pool(src, kDefaultSampleRate);
  CHECK(pool.vocabulary.codes() == std::vector<std::string>{"AMRO"});
  CHECK(pool.source_annotations.size() == 2);
  for (const auto& c : pool.clips) {
    CHECK(c.samples.size() == 160000);
    for (const auto& e : c.annotations.events()) CHECK(e.species == "AMRO");
  }
  fs::remove_all(dir);
}
