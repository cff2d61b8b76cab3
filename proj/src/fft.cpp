// SPDX-License-Identifier: Apache-2.0
#include "densesed/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "densesed/error.hpp"

namespace densesed {

namespace {

// FFTW planning and plan destruction are not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

struct Fft::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  explicit Plans(std::size_t n) {
    // Planned in place on scratch memory; FFTW_UNALIGNED lets the plans run on any buffer.
    std::vector<std::complex<double>> scratch(n);
    const int size = static_cast<int>(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard lock(planner_mutex());
    fwd = fftw_plan_dft_1d(size, as_fftw(scratch.data()), as_fftw(scratch.data()), FFTW_FORWARD, flags);
    inv = fftw_plan_dft_1d(size, as_fftw(scratch.data()), as_fftw(scratch.data()), FFTW_BACKWARD, flags);
    if (!fwd || !inv) throw RuntimeFailure("FFTW could not plan a transform of size " + std::to_string(n));
  }
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (inv) fftw_destroy_plan(inv);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

Fft::Fft(std::size_t size) : size_(size) {
  if (size == 0) throw ConfigError("FFT size must be positive");
  plans_ = std::make_shared<const Plans>(size);
}

void Fft::transform(std::span<std::complex<double>> data, bool invert) const {
  if (data.size() != size_) throw ConfigError("FFT input has wrong length");
  fftw_execute_dft(invert ? plans_->inv : plans_->fwd, as_fftw(data.data()), as_fftw(data.data()));
  if (invert) {
    const double scale = 1.0 / static_cast<double>(size_);
    for (auto& x : data) x *= scale;
  }
}

void Fft::forward(std::span<std::complex<double>> data) const { transform(data, false); }

void Fft::inverse(std::span<std::complex<double>> data) const { transform(data, true); }

std::vector<std::complex<double>> Fft::forward_real(std::span<const double> frame) const {
  if (frame.size() > size_) throw ConfigError("frame longer than FFT size");
  std::vector<std::complex<double>> buf(frame.begin(), frame.end());
  buf.resize(size_);
  transform(buf, false);
  buf.resize(size_ / 2 + 1);
  return buf;
}

std::vector<double> Fft::inverse_real(std::span<const std::complex<double>> half) const {
  if (half.size() != size_ / 2 + 1) throw ConfigError("inverse_real expects size/2 + 1 bins");
  std::vector<std::complex<double>> buf(size_);
  for (std::size_t k = 0; k <= size_ / 2; ++k) buf[k] = half[k];
  for (std::size_t k = size_ / 2 + 1; k < size_; ++k) buf[k] = std::conj(half[size_ - k]);
  transform(buf, true);
  std::vector<double> out(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] = buf[i].real();
  return out;
}

std::vector<double> hann_window(std::size_t size) {
  std::vector<double> w(size);
  for (std::size_t n = 0; n < size; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(size));
  }
  return w;
}

}  // namespace densesed
