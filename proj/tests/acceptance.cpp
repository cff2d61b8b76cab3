// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Criterion 10 reads the annotation files of
// the field recordings from $DENSESED_DATASET_DIR and is skipped without it.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "densesed/error.hpp"
#include "densesed/experiments.hpp"
#include "densesed/metrics.hpp"
#include "densesed/report.hpp"
#include "densesed/synthesis.hpp"
#include "densesed/train.hpp"
#include "metrics_oracle.hpp"

using namespace densesed;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  enum { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CrnnConfig reduced_crnn(std::size_t classes) {
  CrnnConfig c;
  c.conv_channels = {4, 8};
  c.freq_pool = {8, 4};
  c.gru_layers = 1;
  c.gru_units = 16;
  c.dense_units = {16};
  c.n_classes = classes;
  c.dropout = 0.2;
  return c;
}

TrainConfig reduced_training(std::size_t epochs, std::size_t batch, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = 0.003;
  t.epochs = epochs;
  t.batch_size = batch;
  t.seed = seed;
  t.workers = 1;
  return t;
}

SpeciesVocabulary syn_vocab(std::size_t n) {
  std::vector<std::string> codes;
  for (std::size_t s = 0; s < n; ++s) codes.push_back("SYN" + std::to_string(s));
  return SpeciesVocabulary(codes);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  std::vector<std::string> codes;
  for (int i = 0; i < 20; ++i) codes.push_back("C" + std::to_string(10 + i));
  const SpeciesVocabulary v(codes);
  const double hop = 512.0 / 32000.0;
  Rng rng(derive_seed(1, "acceptance1"));
  const auto t0 = Clock::now();
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    EventRoll ref(v, hop, 313), pred(v, hop, 313);
    const double dr = rng.uniform(0.0, 0.6), dp = rng.uniform(0.0, 0.6);
    for (std::size_t c = 0; c < 20; ++c) {
      for (std::size_t n = 0; n < 313; ++n) {
        ref.set(c, n, rng.bernoulli(dr));
        pred.set(c, n, rng.bernoulli(dp));
      }
    }
    const auto got = segment_counts(ref, pred, 0.1);
    const oracle::Totals mine{got.total_tp, got.total_fp, got.total_fn, got.substitutions,
                              got.deletions, got.insertions, got.total_ref};
    mismatches += !(mine == oracle::score(ref, pred, 512, 32000, 100));
  }
  const double t = seconds_since(t0);
  return verdict(mismatches == 0 && t < 60.0,
                 std::to_string(mismatches) + " mismatches in 1000 pairs, " + fmt("%.2f s", t));
}

Outcome criterion2() {
  const SpeciesVocabulary v({"A", "B", "C", "D"});
  auto seg = [&](const std::string& on) {
    EventRoll r(v, 0.1, 1);
    for (char ch : on) r.set(*v.index_of(std::string(1, ch)), 0, true);
    return r;
  };
  const auto c = segment_counts(seg("ABC"), seg("AD"), 0.1);
  const auto p = segment_counts(seg("ABC"), seg("ABC"), 0.1);
  const double f = f_score(c), er = error_rate(c);
  const bool ok = std::abs(f - 0.4) < 1e-12 && std::abs(er - 2.0 / 3.0) < 1e-12 && f_score(p) == 1.0 &&
                  error_rate(p) == 0.0;
  return verdict(ok, "F " + fmt("%.4f", f) + ", ER " + fmt("%.4f", er) + "; perfect F " +
                         fmt("%.1f", f_score(p)) + ", ER " + fmt("%.1f", error_rate(p)));
}

Outcome criterion3() {
  std::vector<float> tone(160000);
  for (std::size_t i = 0; i < tone.size(); ++i) {
    tone[i] = static_cast<float>(0.5 * std::sin(2 * M_PI * 1000.0 * static_cast<double>(i) / 32000.0));
  }
  const auto m = log_mel(tone);
  // oracle: nearest HTK mel centre to 1 kHz, from the formula directly
  const double top = 2595.0 * std::log10(1.0 + 16000.0 / 700.0);
  std::size_t want = 0;
  double best = 1e300;
  for (std::size_t k = 0; k < 128; ++k) {
    const double hz = 700.0 * (std::pow(10.0, top * static_cast<double>(k + 1) / 129.0 / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < best) {
      best = std::abs(hz - 1000.0);
      want = k;
    }
  }
  std::size_t hits = 0, frames = 0;
  for (Eigen::Index t = 2; t + 2 < m.values.rows(); ++t) {
    Eigen::Index arg;
    m.values.row(t).maxCoeff(&arg);
    hits += static_cast<std::size_t>(arg) == want;
    ++frames;
  }
  const double frac = static_cast<double>(hits) / static_cast<double>(frames);
  const bool ok = m.n_frames() == 313 && m.n_bands() == 128 && frac >= 0.95;
  return verdict(ok, std::to_string(m.n_frames()) + "x" + std::to_string(m.n_bands()) +
                         ", argmax band match " + fmt("%.1f%%", 100 * frac));
}

Outcome criterion4() {
  CrnnConfig c;  // full size, 20 classes
  auto params = init_params(c, 4);
  Rng rng(5);
  nn::Matrix x(313, 128);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const RowMatrix p = Crnn(c, params).forward_standardized(x);
  const bool range = (p.array() > 0.0).all() && (p.array() < 1.0).all();
  params.at("output.weight").value.setZero();
  params.at("output.bias").value.setZero();
  const RowMatrix q = Crnn(c, params).forward_standardized(x);
  const bool half = (q.array() == 0.5).all();
  return verdict(p.rows() == 313 && p.cols() == 20 && range && half,
                 std::to_string(p.rows()) + "x" + std::to_string(p.cols()) + ", range " +
                     fmt("[%.4f, ", p.minCoeff()) + fmt("%.4f]", p.maxCoeff()) +
                     (half ? ", zeroed head gives 0.5" : ", zeroed head NOT 0.5"));
}

Outcome criterion5() {
  CrnnConfig c;
  c.n_mels = 8;
  c.conv_channels = {4, 4};
  c.freq_pool = {2, 2};
  c.gru_layers = 1;
  c.gru_units = 8;
  c.dense_units = {8};
  c.n_classes = 3;
  Rng rng(17);
  CrnnParams params = init_params(c, 29);
  for (auto& t : params.tensors) {
    if (t.init == Tensor::Init::Glorot) continue;
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += rng.uniform(-0.3, 0.3);
  }
  nn::Matrix x(20, 8), y(20, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2.0, 2.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;

  const auto t0 = Clock::now();
  CrnnParams grads = CrnnParams::zeros_like(c);
  Crnn(c, params).loss_and_gradient(x, y, Mode::Eval, nullptr, grads);
  const double h = 1e-4;
  double worst = 0.0;
  std::size_t checked = 0, over = 0;
  for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
    for (Eigen::Index i = 0; i < params.tensors[ti].value.size(); ++i) {
      CrnnParams plus = params, minus = params;
      plus.tensors[ti].value.data()[i] += h;
      minus.tensors[ti].value.data()[i] -= h;
      CrnnParams scratch = CrnnParams::zeros_like(c);
      const double lp = Crnn(c, plus).loss_and_gradient(x, y, Mode::Eval, nullptr, scratch);
      const double lm = Crnn(c, minus).loss_and_gradient(x, y, Mode::Eval, nullptr, scratch);
      const double num = (lp - lm) / (2 * h);
      const double ana = grads.tensors[ti].value.data()[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
      worst = std::max(worst, rel);
      over += rel > 1e-3;
      ++checked;
    }
  }
  const double t = seconds_since(t0);
  return verdict(over == 0 && t < 300.0, std::to_string(checked) + " parameters in " +
                                             std::to_string(params.tensors.size()) + " tensors, worst rel err " +
                                             fmt("%.2e", worst) + ", " + fmt("%.1f s", t));
}

Outcome criterion6() {
  const auto t0 = Clock::now();
  const auto pool = generate_synthetic_pool(5, 4, derive_seed(6, "pool"));
  const auto manifest = synthesize_subset(pool, 3, 8, derive_seed(6, "scenes"), false);
  const auto vocab = syn_vocab(5);
  std::vector<TrainingExample> ex;
  for (const auto& s : manifest.scenes) ex.push_back(make_example(s.clip, vocab));
  const auto r = train(ex, reduced_crnn(5), reduced_training(300, 4, 6));
  const double f = frame_f_score(r.model, ex);
  const double t = seconds_since(t0);
  const bool ok = f >= 0.95 && r.history[99] < r.history[0] && t < 600.0;
  return verdict(ok, "train frame F " + fmt("%.3f", f) + " after 300 epochs, loss epoch 1 " +
                         fmt("%.4f", r.history[0]) + " -> epoch 100 " + fmt("%.4f", r.history[99]) + ", " +
                         fmt("%.0f s", t));
}

Outcome criterion7() {
  const auto t0 = Clock::now();
  const auto pool = generate_synthetic_pool(5, 20, derive_seed(7, "pool"));
  std::string detail;
  bool ok = true;
  for (std::size_t p : {1u, 3u, 6u, 10u}) {
    SynthesisOptions o;
    o.max_polyphony = p;
    o.n_scenes = 1000;
    o.seed = derive_seed(7, "upto", p);
    std::size_t worst = 0;
    for (const auto& s : synthesize_subset(pool, o).scenes) worst = std::max(worst, max_polyphony(s.clip.annotations));
    o.mode = PolyphonyMode::Exact;
    o.seed = derive_seed(7, "exact", p);
    std::size_t exact = 0;
    for (const auto& s : synthesize_subset(pool, o).scenes) exact += max_polyphony(s.clip.annotations) == p;
    ok = ok && worst <= p && exact == 1000;
    detail += "P" + std::to_string(p) + ": max " + std::to_string(worst) + ", exact " + std::to_string(exact) +
              "/1000; ";
  }
  // byte identity of saved subsets, augmentation on
  const fs::path base = fs::temp_directory_path() / "densesed_acceptance7";
  fs::remove_all(base);
  for (const char* d : {"a", "b"}) {
    auto m = synthesize_subset(pool, 6, 50, derive_seed(7, "bytes"), true);
    save_subset(m, (base / d).string());
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    ++files;
    differing += slurp(e.path()) != slurp(base / "b" / e.path().filename());
  }
  fs::remove_all(base);
  ok = ok && differing == 0 && files == 101;
  detail += std::to_string(files) + " saved files, " + std::to_string(differing) + " differ; " +
            fmt("%.0f s", seconds_since(t0));
  return verdict(ok, detail);
}

struct TrendRun {
  double f1 = 0, f5 = 0, er1 = 0, er5 = 0;
};

TrendRun trend_run(std::uint64_t seed) {
  SyntheticPoolOptions po;
  po.n_species = 5;
  po.clips_per_species = 40;
  po.seed = derive_seed(seed, "pool");
  const auto pool = generate_synthetic_pool(po);
  const auto [train_pool, test_pool] = split_pool(pool, 0.9, derive_seed(seed, "split"));
  const auto vocab = syn_vocab(5);
  const FeatureConfig fc;

  SynthesisOptions to;
  to.max_polyphony = 5;
  to.n_scenes = 100;
  to.mode = PolyphonyMode::Exact;
  to.split = Split::Test;
  to.seed = derive_seed(seed, "test");
  const auto test = synthesize_subset(test_pool, to);

  auto fit_and_score = [&](std::size_t level, double& f, double& er) {
    SynthesisOptions o;
    o.max_polyphony = level;
    o.n_scenes = 500;
    o.seed = derive_seed(seed, "train", level);
    std::vector<TrainingExample> ex;
    for (const auto& s : synthesize_subset(train_pool, o).scenes) ex.push_back(make_example(s.clip, vocab, fc));
    const auto r = train(ex, reduced_crnn(5), reduced_training(20, 16, derive_seed(seed, "model", level)));
    std::vector<FilePair> pairs;
    for (const auto& s : test.scenes) {
      const RowMatrix probs = r.model.forward(log_mel(s.clip.samples, fc));
      pairs.push_back({s.clip.id(), s.clip.annotations, binarize(probs, vocab, fc.frame_hop_seconds())});
    }
    const auto rep = evaluate_files(pairs, vocab, fc.frame_hop_seconds());
    f = rep.micro_f;
    er = rep.micro_er;
  };
  TrendRun out;
  fit_and_score(1, out.f1, out.er1);
  fit_and_score(5, out.f5, out.er5);
  return out;
}

Outcome criterion8() {
  const auto t0 = Clock::now();
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = trend_run(seed);
    wins += r.f5 - r.f1 >= 0.05;
    detail += "seed " + std::to_string(seed) + ": F P1 " + fmt("%.3f", r.f1) + " vs P5 " + fmt("%.3f", r.f5) +
              "; ";
  }
  const double t = seconds_since(t0);
  detail += std::to_string(wins) + "/3 with gain >= 0.05, " + fmt("%.0f s", t);
  return verdict(wins >= 2 && t < 1800.0, detail);
}

Outcome criterion9() {
  std::cout << "  The published Table 1 and Table 2 values (for example O6 on polyphony 6:\n"
               "  F 0.47±0.13, ER 0.64±0.12; EATO F 0.73±0.23) are not reproduced here. They\n"
               "  need the original field recordings and 10,000 scenes x 200 epochs per model.\n"
               "  This check confirms the full-scale configuration is the default and that\n"
               "  the report layout matches the tables cell for cell.\n";
  // the defaults are the full-scale run
  const ExperimentConfig full;
  full.validate();
  bool ok = full.n_train_scenes == 10000 && full.train.epochs == 200 && full.train.batch_size == 128 &&
            full.train.learning_rate == 0.001 && full.polyphony_levels == std::vector<std::size_t>{3, 6, 10} &&
            full.fixed_test_polyphonies == std::vector<std::size_t>{3, 6, 10} && full.crnn.n_mels == 128 &&
            full.crnn.conv_channels.back() == 264;

  // tiny end-to-end run to produce real tables
  ExperimentConfig c;
  c.n_train_scenes = 8;
  c.n_test_scenes = 4;
  c.augment = false;
  c.save_audio = false;
  c.pool.synthetic.n_species = 6;
  c.pool.synthetic.clips_per_species = 40;
  c.features.n_mels = 32;
  c.crnn.conv_channels = {4, 4};
  c.crnn.freq_pool = {4, 2};
  c.crnn.gru_layers = 1;
  c.crnn.gru_units = 8;
  c.crnn.dense_units = {8};
  c.train.epochs = 1;
  c.train.batch_size = 8;
  c.seed = 9;
  c.out_dir = (fs::temp_directory_path() / "densesed_acceptance9").string();
  fs::remove_all(c.out_dir);
  const auto rep = run_experiment(c);
  const std::string t1 = rep.models.empty() ? "" : render_table1(rep);
  std::size_t rows = 0, bad_rows = 0;
  std::istringstream in(t1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("Model O", 0) != 0) continue;
    ++rows;
    std::size_t cells = 0;
    for (std::size_t pos = 0; (pos = line.find("±", pos)) != std::string::npos; pos += 2) ++cells;
    bad_rows += cells != 8;
  }
  const std::string t2 = render_table2(rep, 0);
  const bool t2_ok = t2.find("Number of annotations") != std::string::npos && t2.find("Mean F Score") != std::string::npos &&
                     t2.find("Mean ER") != std::string::npos;
  fs::remove_all(c.out_dir);
  ok = ok && rows == 3 && bad_rows == 0 && t2_ok;
  std::cout << t1;
  return verdict(ok, "Table 1 grid " + std::to_string(rows) + " models x " + (bad_rows ? "?" : "8") +
                         " cells, Table 2 columns " + (t2_ok ? "present" : "missing") +
                         "; exact published values: not reproducible at desk scale");
}

Outcome criterion10() {
  const char* dir = std::getenv("DENSESED_DATASET_DIR");
  if (!dir || !*dir || !fs::is_directory(dir)) {
    return {Outcome::Skip, "DENSESED_DATASET_DIR not set; the field recordings are not bundled"};
  }
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".txt" || ext == ".tsv")) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  const auto sets = load_annotation_files(files, 86400.0);
  const auto s = dataset_stats(sets);
  std::size_t kept = 0;
  for (const auto& [code, n] : s.per_species) kept += n >= 100;
  const bool ok = s.recordings == 77 && s.species == 48 && s.activations == 16052 && kept == 20;
  return verdict(ok, std::to_string(s.recordings) + " recordings, " + std::to_string(s.species) + " species, " +
                         std::to_string(s.activations) + " activations, " + std::to_string(kept) +
                         " species with >= 100");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"metrics oracle equivalence", criterion1},
      {"metrics hand cases", criterion2},
      {"feature shape and tone band", criterion3},
      {"model shape and range", criterion4},
      {"gradient check", criterion5},
      {"overfit fixture", criterion6},
      {"synthesis invariants", criterion7},
      {"polyphony trend", criterion8},
      {"published numbers and table structure", criterion9},
      {"dataset statistics", criterion10},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
    failures += o.status == Outcome::Fail;
    std::cout << "[" << id << "] " << tag << "  " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
