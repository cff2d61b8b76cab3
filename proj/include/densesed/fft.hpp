// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace densesed {

/// Complex DFT of a fixed size, backed by FFTW. Copies share the plans.
class Fft {
 public:
  explicit Fft(std::size_t size);

  std::size_t size() const { return size_; }

  /// In-place forward transform (e^{-i...} convention), unnormalized.
  void forward(std::span<std::complex<double>> data) const;
  /// In-place inverse transform, scaled by 1/size.
  void inverse(std::span<std::complex<double>> data) const;

  /// Forward transform of a real frame (zero-padded to size); returns size/2 + 1 bins.
  std::vector<std::complex<double>> forward_real(std::span<const double> frame) const;
  /// Inverse of forward_real given the size/2 + 1 non-negative-frequency bins.
  std::vector<double> inverse_real(std::span<const std::complex<double>> half) const;

 private:
  struct Plans;
  void transform(std::span<std::complex<double>> data, bool invert) const;

  std::size_t size_;
  std::shared_ptr<const Plans> plans_;
};

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Periodic Hann window: 0.5 - 0.5 cos(2 pi n / size).
std::vector<double> hann_window(std::size_t size);

}  // namespace densesed
