// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "densesed/annotations.hpp"
#include "densesed/crnn.hpp"
#include "densesed/features.hpp"
#include "densesed/synthesis.hpp"

namespace densesed {

inline constexpr double kBceEpsilon = 1e-7;

/// Mean over all cells of -[y ln p + (1 - y) ln(1 - p)], p clipped to
/// [1e-7, 1 - 1e-7]. Shapes must match.
double bce_loss(const RowMatrix& pred, const RowMatrix& target);

/// d bce_loss / d pred = (p - y) / (p (1 - p)) / cells, on the clipped p.
RowMatrix bce_gradient(const RowMatrix& pred, const RowMatrix& target);

/// Strict threshold: a cell is active iff its probability exceeds `threshold`.
/// probs is N x S (frames x classes); the roll is S x N.
EventRoll binarize(const RowMatrix& probs, const SpeciesVocabulary& vocab, double frame_hop,
                   double threshold = 0.5);

/// Event roll as an N x S float target matrix.
RowMatrix roll_to_target(const EventRoll& roll);

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::size_t n_train_samples = 10000;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  /// 1 = strict single-threaded deterministic mode. More workers split each
  /// batch into fixed contiguous chunks whose gradients are summed in chunk
  /// order, so results depend on the worker count but not on scheduling.
  std::size_t workers = 1;

  void validate() const;
};

using LossHistory = std::vector<double>;

/// Standardized-ready training pair: raw log-mel features and N x S targets.
struct TrainingExample {
  RowMatrix features;
  RowMatrix target;
};

/// Adam with bias correction over a CrnnParams-shaped state.
class Adam {
 public:
  Adam(const CrnnParams& like, double learning_rate, double beta1, double beta2, double epsilon);
  void step(CrnnParams& params, const CrnnParams& grads);
  std::size_t steps() const { return t_; }

 private:
  CrnnParams m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

struct TrainResult {
  Crnn model;
  LossHistory history;
};

/// Called after every epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Mini-batch Adam on shuffled examples. Standardization statistics are
/// estimated from `examples` and stored in the returned parameters.
/// Throws RuntimeFailure on a non-finite loss, naming epoch and batch.
TrainResult train(std::span<const TrainingExample> examples, const CrnnConfig& crnn,
                  const TrainConfig& tc, const EpochCallback& on_epoch = {});

/// Featurizes every scene of a training manifest and trains on it.
TrainResult train(const SubsetManifest& manifest, const SpeciesVocabulary& vocab,
                  const CrnnConfig& crnn, const TrainConfig& tc,
                  const FeatureConfig& features = {}, const EpochCallback& on_epoch = {});

/// Log-mel features and target roll for one clip.
TrainingExample make_example(const AudioClip& clip, const SpeciesVocabulary& vocab,
                             const FeatureConfig& features = {});

/// Frame-level F-score of binarized predictions over a set of examples.
double frame_f_score(const Crnn& model, std::span<const TrainingExample> examples,
                     double threshold = 0.5);

}  // namespace densesed
