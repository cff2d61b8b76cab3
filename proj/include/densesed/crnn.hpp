// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "densesed/features.hpp"
#include "densesed/nn.hpp"
#include "densesed/random.hpp"

namespace densesed {

/// Architecture hyperparameters. Defaults are the full-size detector:
/// five 3x3 conv blocks (64, 128, 128, 128, 264 channels) each followed by
/// layer norm, leaky ReLU and 2x frequency max pooling; two bidirectional
/// GRU layers of 128 units; two dense layers of 128; a sigmoid output layer.
struct CrnnConfig {
  std::size_t n_mels = 128;
  std::vector<std::size_t> conv_channels{64, 128, 128, 128, 264};
  std::vector<std::size_t> freq_pool{2, 2, 2, 2, 2};
  std::size_t gru_layers = 2;
  std::size_t gru_units = 128;
  std::vector<std::size_t> dense_units{128, 128};
  std::size_t n_classes = 20;
  double dropout = 0.5;
  double leaky_slope = 0.01;
  double layer_norm_eps = 1e-5;

  void validate() const;
  std::size_t pooled_freq() const;
  std::size_t gru_input_size() const;

  friend bool operator==(const CrnnConfig&, const CrnnConfig&) = default;
};

enum class Mode { Train, Eval };

/// One learned tensor. Vectors are stored as n x 1.
struct Tensor {
  std::string name;
  nn::Matrix value;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  enum class Init { Glorot, Zeros, Ones } init = Init::Glorot;
};

/// Every learned tensor in a fixed order determined by the config, plus the
/// input standardization statistics.
struct CrnnParams {
  std::vector<Tensor> tensors;
  FeatureStats norm;

  /// Zero-valued tensors laid out for `config`.
  static CrnnParams zeros_like(const CrnnConfig& config);

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::size_t parameter_count() const;
  /// Throws DataError naming the first tensor whose shape disagrees with config.
  void check_shapes(const CrnnConfig& config) const;
  void set_zero();
  CrnnParams& operator+=(const CrnnParams& other);
  CrnnParams& operator*=(double scale);
};

/// Glorot-uniform weights (a = sqrt(6 / (fan_in + fan_out)) per tensor),
/// zero biases, unit layer-norm scales. Deterministic per seed.
CrnnParams init_params(const CrnnConfig& config, std::uint64_t seed);

/// Per-sample intermediate values kept for the backward pass.
struct ForwardTrace;

class Crnn {
 public:
  Crnn(CrnnConfig config, CrnnParams params);

  const CrnnConfig& config() const { return config_; }
  const CrnnParams& params() const { return params_; }
  CrnnParams& params() { return params_; }

  /// Frame-wise class probabilities (N x n_classes) for raw log-mel input;
  /// the stored standardization is applied first. Train mode needs `rng`
  /// for dropout; eval mode is deterministic.
  RowMatrix forward(const MelSpectrogram& features, Mode mode = Mode::Eval, Rng* rng = nullptr) const;

  /// Same as forward() on already-standardized input.
  RowMatrix forward_standardized(const nn::Matrix& input, Mode mode = Mode::Eval,
                                 Rng* rng = nullptr) const;

  /// Output of the convolutional stack as a T x (C*F) sequence.
  nn::Matrix conv_stack(const nn::Matrix& standardized_input) const;

  /// Mean binary cross-entropy of one standardized example against a
  /// N x n_classes target, with gradients accumulated into `grads`.
  double loss_and_gradient(const nn::Matrix& input, const nn::Matrix& target, Mode mode, Rng* rng,
                           CrnnParams& grads) const;

 private:
  nn::Matrix run(const nn::Matrix& input, Mode mode, Rng* rng, ForwardTrace* trace) const;

  CrnnConfig config_;
  CrnnParams params_;
};

}  // namespace densesed
