// SPDX-License-Identifier: Apache-2.0
#include "densesed/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "densesed/error.hpp"
#include "densesed/random.hpp"

namespace densesed {

namespace {

void check_same_shape(const RowMatrix& a, const RowMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError("prediction is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    ", target is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

double bce_loss(const RowMatrix& pred, const RowMatrix& target) {
  check_same_shape(pred, target);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred.data()[i], kBceEpsilon, 1.0 - kBceEpsilon);
    const double y = target.data()[i];
    sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.size());
}

RowMatrix bce_gradient(const RowMatrix& pred, const RowMatrix& target) {
  check_same_shape(pred, target);
  const double cells = static_cast<double>(pred.size());
  RowMatrix g(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double raw = pred.data()[i];
    const double p = std::clamp(raw, kBceEpsilon, 1.0 - kBceEpsilon);
    const double y = target.data()[i];
    // Zero where the clip is active: the clipped loss is flat there.
    g.data()[i] = (raw != p) ? 0.0 : (p - y) / (p * (1.0 - p)) / cells;
  }
  return g;
}

EventRoll binarize(const RowMatrix& probs, const SpeciesVocabulary& vocab, double frame_hop,
                   double threshold) {
  if (static_cast<std::size_t>(probs.cols()) != vocab.size()) {
    throw DataError("probability matrix has " + std::to_string(probs.cols()) +
                    " classes, vocabulary has " + std::to_string(vocab.size()));
  }
  EventRoll roll(vocab, frame_hop, static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index n = 0; n < probs.rows(); ++n) {
    for (Eigen::Index s = 0; s < probs.cols(); ++s) {
      roll.set(static_cast<std::size_t>(s), static_cast<std::size_t>(n), probs(n, s) > threshold);
    }
  }
  return roll;
}

RowMatrix roll_to_target(const EventRoll& roll) {
  RowMatrix target(roll.n_frames(), roll.n_classes());
  for (std::size_t s = 0; s < roll.n_classes(); ++s) {
    for (std::size_t n = 0; n < roll.n_frames(); ++n) {
      target(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(s)) = roll.at(s, n);
    }
  }
  return target;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  if (workers == 0) throw ConfigError("workers must be at least 1");
}

Adam::Adam(const CrnnParams& like, double learning_rate, double beta1, double beta2, double epsilon)
    : m_(like), v_(like), lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {
  m_.set_zero();
  v_.set_zero();
}

void Adam::step(CrnnParams& params, const CrnnParams& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& m = m_.tensors[i].value;
    auto& v = v_.tensors[i].value;
    const auto& g = grads.tensors[i].value;
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
    params.tensors[i].value.array() -=
        lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

TrainResult train(std::span<const TrainingExample> examples, const CrnnConfig& crnn,
                  const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  crnn.validate();
  if (examples.empty()) throw DataError("no training examples");

  std::vector<const RowMatrix*> feats;
  feats.reserve(examples.size());
  for (const auto& e : examples) {
    if (static_cast<std::size_t>(e.target.cols()) != crnn.n_classes) {
      throw DataError("training target has " + std::to_string(e.target.cols()) +
                      " classes, model has " + std::to_string(crnn.n_classes));
    }
    feats.push_back(&e.features);
  }
  CrnnParams params = init_params(crnn, derive_seed(tc.seed, "init"));
  params.norm = FeatureStats::estimate(feats);

  Crnn model(crnn, std::move(params));
  Adam adam(model.params(), tc.learning_rate, tc.beta1, tc.beta2, tc.adam_epsilon);
  const std::size_t n = examples.size();
  const std::size_t workers = std::min(tc.workers, tc.batch_size);
  std::vector<CrnnParams> chunk_grads(workers, CrnnParams::zeros_like(crnn));
  std::vector<double> chunk_loss(workers);
  CrnnParams batch_grad = CrnnParams::zeros_like(crnn);
  LossHistory history;
  history.reserve(tc.epochs);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle(derive_seed(tc.seed, "shuffle", epoch));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < n; start += tc.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + tc.batch_size);
      const std::size_t len = end - start;
      const std::size_t used = std::min(workers, len);

      auto run_chunk = [&](std::size_t w) {
        auto& g = chunk_grads[w];
        g.set_zero();
        double loss = 0.0;
        const std::size_t lo = start + len * w / used;
        const std::size_t hi = start + len * (w + 1) / used;
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t idx = order[i];
          Rng dropout(derive_seed(tc.seed, "dropout", epoch * n + idx));
          // Standardized per use; keeping a second copy of every input costs more than this.
          const nn::Matrix input = model.params().norm.apply(examples[idx].features);
          loss += model.loss_and_gradient(input, examples[idx].target, Mode::Train, &dropout, g);
        }
        chunk_loss[w] = loss;
      };
      if (used == 1) {
        run_chunk(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < used; ++w) pool.emplace_back(run_chunk, w);
        for (auto& th : pool) th.join();
      }

      batch_grad.set_zero();
      double batch_loss = 0.0;
      for (std::size_t w = 0; w < used; ++w) {
        batch_grad += chunk_grads[w];
        batch_loss += chunk_loss[w];
      }
      if (!std::isfinite(batch_loss)) {
        throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch + 1));
      }
      batch_grad *= 1.0 / static_cast<double>(len);
      adam.step(model.params(), batch_grad);
      epoch_loss += batch_loss;
    }
    history.push_back(epoch_loss / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, history.back());
  }
  return {std::move(model), std::move(history)};
}

TrainingExample make_example(const AudioClip& clip, const SpeciesVocabulary& vocab,
                             const FeatureConfig& features) {
  if (std::abs(clip.sample_rate - features.sample_rate) > 1e-9) {
    throw DataError("clip " + clip.id() + " has sample rate " + std::to_string(clip.sample_rate) +
                    ", features expect " + std::to_string(features.sample_rate));
  }
  TrainingExample ex;
  ex.features = log_mel(clip.samples, features).values;
  const auto roll = to_event_roll(clip.annotations, vocab, features.frame_hop_seconds(),
                                  static_cast<std::int64_t>(ex.features.rows()));
  ex.target = roll_to_target(roll);
  return ex;
}

TrainResult train(const SubsetManifest& manifest, const SpeciesVocabulary& vocab,
                  const CrnnConfig& crnn, const TrainConfig& tc, const FeatureConfig& features,
                  const EpochCallback& on_epoch) {
  if (manifest.split != Split::Train) throw DataError("training needs a train-split manifest");
  if (crnn.n_classes != vocab.size()) {
    throw ConfigError("model has " + std::to_string(crnn.n_classes) + " classes, vocabulary has " +
                      std::to_string(vocab.size()));
  }
  std::vector<TrainingExample> examples;
  examples.reserve(manifest.scenes.size());
  for (const auto& scene : manifest.scenes) examples.push_back(make_example(scene.clip, vocab, features));
  return train(examples, crnn, tc, on_epoch);
}

double frame_f_score(const Crnn& model, std::span<const TrainingExample> examples, double threshold) {
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (const auto& ex : examples) {
    const RowMatrix probs = model.forward({ex.features, 0.0});
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      const bool pred = probs.data()[i] > threshold;
      const bool ref = ex.target.data()[i] > 0.5;
      tp += pred && ref;
      fp += pred && !ref;
      fn += !pred && ref;
    }
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 1.0 : 2.0 * tp / denom;
}

}  // namespace densesed
