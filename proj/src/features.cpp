// SPDX-License-Identifier: Apache-2.0
#include "densesed/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "densesed/error.hpp"
#include "densesed/fft.hpp"

namespace densesed {

namespace {

constexpr char kCacheMagic[8] = {'D', 'S', 'E', 'D', 'M', 'E', 'L', '1'};

// numpy-style "reflect" padding index (edge sample not repeated), folded
// repeatedly for signals shorter than the pad.
std::size_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

void StftConfig::validate() const {
  if (!is_power_of_two(n_fft)) throw ConfigError("n_fft must be a power of two");
  if (hop * 2 != n_fft) throw ConfigError("hop must be half of n_fft");
}

std::size_t StftConfig::n_frames(std::size_t n_samples) const {
  if (centered) return n_samples / hop + 1;
  return n_samples < n_fft ? 0 : (n_samples - n_fft) / hop + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(std::size_t n_mels, double f_min, double f_max) {
  const double lo = hz_to_mel(f_min);
  const double hi = hz_to_mel(f_max);
  std::vector<double> centers(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    centers[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) /
                                    static_cast<double>(n_mels + 1));
  }
  return centers;
}

RowMatrix stft_power(std::span<const float> samples, const StftConfig& config) {
  config.validate();
  if (samples.empty()) throw DataError("stft_power: empty signal");
  const std::size_t n_fft = config.n_fft;
  const std::size_t n_frames = config.n_frames(samples.size());
  const std::size_t n_bins = n_fft / 2 + 1;
  const auto window = hann_window(n_fft);
  const Fft fft(n_fft);
  const auto n = static_cast<std::int64_t>(samples.size());
  const std::int64_t pad = config.centered ? static_cast<std::int64_t>(n_fft / 2) : 0;

  RowMatrix power(n_frames, n_bins);
  std::vector<std::complex<double>> buf(n_fft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t * config.hop) - pad;
    for (std::size_t k = 0; k < n_fft; ++k) {
      const std::int64_t i = start + static_cast<std::int64_t>(k);
      const double x = (i >= 0 && i < n) ? samples[static_cast<std::size_t>(i)]
                                         : samples[reflect_index(i, n)];
      buf[k] = {x * window[k], 0.0};
    }
    fft.forward(buf);
    for (std::size_t b = 0; b < n_bins; ++b) power(t, b) = std::norm(buf[b]);
  }
  return power;
}

RowMatrix mel_filterbank(double sample_rate, std::size_t n_fft, std::size_t n_mels, double f_min,
                         double f_max) {
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw ConfigError("mel_filterbank requires 0 <= f_min < f_max <= sample_rate / 2");
  }
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  const std::size_t n_bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(f_min);
  const double hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }

  RowMatrix bank = RowMatrix::Zero(n_mels, n_bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    bool any = false;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / static_cast<double>(n_fft);
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      const double w = std::max(0.0, std::min(rise, fall));
      bank(m, b) = w;
      any = any || w > 0.0;
    }
    if (!any) {
      throw ConfigError("mel filter " + std::to_string(m) + " covers no FFT bin; n_mels " +
                        std::to_string(n_mels) + " is too large for n_fft " + std::to_string(n_fft));
    }
  }
  return bank;
}

MelSpectrogram log_mel(std::span<const float> samples, const FeatureConfig& config) {
  const RowMatrix power = stft_power(samples, config.stft);
  const RowMatrix bank =
      mel_filterbank(config.sample_rate, config.stft.n_fft, config.n_mels, config.f_min, config.f_max);
  MelSpectrogram out;
  out.values = ((power * bank.transpose()).array() + config.epsilon).log().matrix();
  out.frame_hop = config.frame_hop_seconds();
  return out;
}

FeatureStats FeatureStats::identity(std::size_t n_bands) {
  return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_bands)),
          Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_bands))};
}

FeatureStats FeatureStats::estimate(std::span<const RowMatrix* const> features) {
  if (features.empty()) throw DataError("cannot estimate feature statistics from nothing");
  const auto m = features.front()->cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(m);
  double count = 0.0;
  for (const auto* f : features) {
    if (f->cols() != m) throw DataError("feature band counts differ");
    sum += f->colwise().sum().transpose();
    count += static_cast<double>(f->rows());
  }
  const Eigen::VectorXd mean = sum / count;
  for (const auto* f : features) {
    sq += (f->rowwise() - mean.transpose()).array().square().matrix().colwise().sum().transpose();
  }
  Eigen::VectorXd stddev = (sq / count).array().sqrt().max(1e-8).matrix();
  return {mean, stddev};
}

FeatureStats FeatureStats::estimate(std::span<const MelSpectrogram> features) {
  std::vector<const RowMatrix*> ptrs;
  ptrs.reserve(features.size());
  for (const auto& f : features) ptrs.push_back(&f.values);
  return estimate(ptrs);
}

RowMatrix FeatureStats::apply(const RowMatrix& values) const {
  if (values.cols() != mean.size()) {
    throw DataError("feature width " + std::to_string(values.cols()) +
                    " does not match normalization statistics (" + std::to_string(mean.size()) + ")");
  }
  return ((values.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array())
      .matrix();
}

void write_feature_cache(const std::string& path, const RowMatrix& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kCacheMagic, sizeof kCacheMagic);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(values.rows()),
                                 static_cast<std::uint32_t>(values.cols())};
  for (auto d : dims) {
    const unsigned char le[4] = {static_cast<unsigned char>(d), static_cast<unsigned char>(d >> 8),
                                 static_cast<unsigned char>(d >> 16),
                                 static_cast<unsigned char>(d >> 24)};
    out.write(reinterpret_cast<const char*>(le), 4);
  }
  std::vector<float> data(static_cast<std::size_t>(values.size()));
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      data[static_cast<std::size_t>(r * values.cols() + c)] = static_cast<float>(values(r, c));
    }
  }
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

RowMatrix read_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[8];
  unsigned char dims[8];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(dims), 8);
  if (!in || std::memcmp(magic, kCacheMagic, 8) != 0) {
    throw DataError(path + ": not a feature cache file");
  }
  const auto rd = [&](int o) {
    return std::uint32_t{dims[o]} | (std::uint32_t{dims[o + 1]} << 8) |
           (std::uint32_t{dims[o + 2]} << 16) | (std::uint32_t{dims[o + 3]} << 24);
  };
  const std::uint32_t rows = rd(0);
  const std::uint32_t cols = rd(4);
  std::vector<float> data(std::size_t{rows} * cols);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw DataError(path + ": truncated feature cache");
  RowMatrix values(rows, cols);
  for (std::size_t i = 0; i < data.size(); ++i) values.data()[i] = data[i];
  return values;
}

}  // namespace densesed
