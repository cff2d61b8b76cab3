// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace densesed {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Short-time Fourier transform framing. Hann window (periodic); when
/// centered, the signal is reflect-padded by n_fft/2 on both sides.
struct StftConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 512;
  bool centered = true;

  /// n_fft must be a power of two and hop exactly n_fft / 2.
  void validate() const;
  std::size_t n_frames(std::size_t n_samples) const;
};

struct FeatureConfig {
  StftConfig stft;
  double sample_rate = 32000.0;
  std::size_t n_mels = 128;
  double f_min = 0.0;
  double f_max = 16000.0;
  double epsilon = 1e-10;

  double frame_hop_seconds() const { return static_cast<double>(stft.hop) / sample_rate; }
};

/// N x M log-mel matrix; rows are frames.
struct MelSpectrogram {
  RowMatrix values;
  double frame_hop = 0.0;

  std::size_t n_frames() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_bands() const { return static_cast<std::size_t>(values.cols()); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Centre frequencies of the n_mels triangular filters.
std::vector<double> mel_center_frequencies(std::size_t n_mels, double f_min, double f_max);

/// |DFT|^2 of every windowed frame; N x (n_fft/2 + 1).
RowMatrix stft_power(std::span<const float> samples, const StftConfig& config);

/// Triangular filters on the HTK mel scale, peak weight 1, no area
/// normalization. Throws ConfigError when a filter covers no FFT bin.
RowMatrix mel_filterbank(double sample_rate, std::size_t n_fft, std::size_t n_mels, double f_min,
                         double f_max);

/// ln(filterbank * power + epsilon) per frame.
MelSpectrogram log_mel(std::span<const float> samples, const FeatureConfig& config = {});

/// Per-band standardization statistics, estimated on training features.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static FeatureStats identity(std::size_t n_bands);
  static FeatureStats estimate(std::span<const MelSpectrogram> features);
  static FeatureStats estimate(std::span<const RowMatrix* const> features);
  RowMatrix apply(const RowMatrix& values) const;
};

/// Feature cache: 8-byte magic "DSEDMEL1", uint32 N, uint32 M (little
/// endian), then N*M float32 values in row-major order.
void write_feature_cache(const std::string& path, const RowMatrix& values);
RowMatrix read_feature_cache(const std::string& path);

}  // namespace densesed
