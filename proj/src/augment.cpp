// SPDX-License-Identifier: Apache-2.0
#include "densesed/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "densesed/error.hpp"
#include "densesed/fft.hpp"

namespace densesed {

namespace {

constexpr std::size_t kVocoderFft = 1024;
constexpr std::size_t kVocoderHop = 256;
constexpr double kMinEventLength = 1e-9;

std::size_t stretched_length(std::size_t n, double rate) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) / rate));
}

AnnotationSet with_events(const AnnotationSet& like, std::vector<Event> events, double duration) {
  std::erase_if(events, [&](const Event& e) {
    return e.onset >= duration || e.offset - e.onset <= kMinEventLength;
  });
  for (auto& e : events) e.offset = std::min(e.offset, duration);
  std::erase_if(events, [](const Event& e) { return e.offset - e.onset <= kMinEventLength; });
  return AnnotationSet(std::move(events), like.source_id(), duration);
}

AnnotationSet stretch_labels(const AnnotationSet& labels, double rate, double out_duration) {
  std::vector<Event> events = labels.events();
  for (auto& e : events) {
    e.onset /= rate;
    e.offset /= rate;
  }
  return with_events(labels, std::move(events), out_duration);
}

AnnotationSet shift_labels(const AnnotationSet& labels, std::size_t shift_samples,
                           std::size_t n_samples, double sample_rate) {
  const double duration = labels.duration();
  const double shift = static_cast<double>(shift_samples) / sample_rate;
  std::vector<Event> events;
  for (auto e : labels.events()) {
    if (shift_samples == 0 || n_samples == 0) {
      events.push_back(e);
      continue;
    }
    e.onset += shift;
    e.offset += shift;
    if (e.onset >= duration) {
      e.onset -= duration;
      e.offset -= duration;
      events.push_back(e);
    } else if (e.offset > duration) {
      Event head = e;
      head.offset = duration;
      Event tail = e;
      tail.onset = 0.0;
      tail.offset = e.offset - duration;
      events.push_back(head);
      events.push_back(tail);
    } else {
      events.push_back(e);
    }
  }
  return with_events(labels, std::move(events), duration);
}

AnnotationSet fit_labels(const AnnotationSet& labels, double duration) {
  return with_events(labels, labels.events(), duration);
}

std::size_t shift_in_samples(double shift, std::size_t n, double sample_rate) {
  if (n == 0) return 0;
  const auto k = std::llround(shift * sample_rate);
  const auto len = static_cast<long long>(n);
  return static_cast<std::size_t>(((k % len) + len) % len);
}

// Phase vocoder: resample the STFT grid at `rate` frames per output frame,
// interpolating magnitude and accumulating per-bin phase advance.
std::vector<float> stretch_audio(const std::vector<float>& x, double rate) {
  const std::size_t n_out = stretched_length(x.size(), rate);
  std::vector<float> out(n_out, 0.0f);
  if (x.empty() || n_out == 0) return out;

  const std::size_t n_fft = kVocoderFft;
  const std::size_t hop = kVocoderHop;
  const std::size_t n_bins = n_fft / 2 + 1;
  const auto window = hann_window(n_fft);
  const Fft fft(n_fft);
  const auto pad = static_cast<std::int64_t>(n_fft / 2);
  const auto len = static_cast<std::int64_t>(x.size());

  const std::size_t n_frames = x.size() / hop + 1;
  std::vector<std::vector<std::complex<double>>> spec(n_frames + 1,
                                                      std::vector<std::complex<double>>(n_bins));
  std::vector<std::complex<double>> buf(n_fft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto start = static_cast<std::int64_t>(t * hop) - pad;
    for (std::size_t k = 0; k < n_fft; ++k) {
      const auto i = start + static_cast<std::int64_t>(k);
      const double v = (i >= 0 && i < len) ? x[static_cast<std::size_t>(i)] : 0.0;
      buf[k] = {v * window[k], 0.0};
    }
    fft.forward(buf);
    std::copy_n(buf.begin(), n_bins, spec[t].begin());
  }
  // spec[n_frames] stays zero so the last step can interpolate.

  std::vector<double> advance(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    advance[k] = 2.0 * std::numbers::pi * static_cast<double>(k * hop) / static_cast<double>(n_fft);
  }
  std::vector<double> phase(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) phase[k] = std::arg(spec[0][k]);

  const auto n_steps = static_cast<std::size_t>(std::ceil(static_cast<double>(n_frames) / rate));
  const std::size_t total = n_fft + hop * (n_steps - 1);
  std::vector<double> acc(total, 0.0);
  std::vector<double> norm(total, 0.0);
  std::vector<std::complex<double>> frame(n_bins);
  for (std::size_t s = 0; s < n_steps; ++s) {
    const double pos = static_cast<double>(s) * rate;
    const auto i0 = std::min(static_cast<std::size_t>(pos), n_frames - 1);
    const double alpha = pos - static_cast<double>(i0);
    const auto& c0 = spec[i0];
    const auto& c1 = spec[i0 + 1];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double mag = (1.0 - alpha) * std::abs(c0[k]) + alpha * std::abs(c1[k]);
      frame[k] = std::polar(mag, phase[k]);
      double dphase = std::arg(c1[k]) - std::arg(c0[k]) - advance[k];
      dphase -= 2.0 * std::numbers::pi * std::round(dphase / (2.0 * std::numbers::pi));
      phase[k] += advance[k] + dphase;
    }
    frame[0] = {frame[0].real(), 0.0};
    frame[n_bins - 1] = {frame[n_bins - 1].real(), 0.0};
    const auto y = fft.inverse_real(frame);
    const std::size_t offset = s * hop;
    for (std::size_t k = 0; k < n_fft; ++k) {
      acc[offset + k] += y[k] * window[k];
      norm[offset + k] += window[k] * window[k];
    }
  }
  for (std::size_t i = 0; i < n_out; ++i) {
    const std::size_t j = i + n_fft / 2;
    if (j < total && norm[j] > 1e-8) out[i] = static_cast<float>(acc[j] / norm[j]);
  }
  return out;
}

}  // namespace

AudioClip time_stretch(const AudioClip& clip, double rate) {
  if (!(rate >= 0.5 && rate <= 2.0)) throw ConfigError("time_stretch rate must be in [0.5, 2]");
  if (rate == 1.0) return clip;
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = stretch_audio(clip.samples, rate);
  out.annotations = stretch_labels(clip.annotations, rate, out.duration());
  return out;
}

AudioClip pitch_shift(const AudioClip& clip, double semitones) {
  if (!(semitones >= -12.0 && semitones <= 12.0)) {
    throw ConfigError("pitch_shift semitones must be in [-12, 12]");
  }
  if (semitones == 0.0) return clip;
  const double factor = std::pow(2.0, semitones / 12.0);
  // Stretch to factor * length keeping pitch, then read back at `factor`
  // samples per output sample, which restores the length and scales pitch.
  const auto stretched = stretch_audio(clip.samples, 1.0 / factor);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.annotations = clip.annotations;
  out.samples.assign(clip.samples.size(), 0.0f);
  if (stretched.empty()) return out;
  const std::size_t last = stretched.size() - 1;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto j = static_cast<std::size_t>(pos);
    if (j >= last) {
      out.samples[i] = j == last ? stretched[last] : 0.0f;
      continue;
    }
    const double frac = pos - static_cast<double>(j);
    out.samples[i] = static_cast<float>((1.0 - frac) * stretched[j] + frac * stretched[j + 1]);
  }
  return out;
}

AudioClip time_shift(const AudioClip& clip, double shift) {
  const std::size_t n = clip.samples.size();
  const std::size_t k = shift_in_samples(shift, n, clip.sample_rate);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[(i + k) % n] = clip.samples[i];
  out.annotations = shift_labels(clip.annotations, k, n, clip.sample_rate);
  return out;
}

AudioClip fit_length(const AudioClip& clip, std::size_t n_samples) {
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = clip.samples;
  out.samples.resize(n_samples, 0.0f);
  out.annotations = fit_labels(clip.annotations, out.duration());
  return out;
}

Augmentation Augmentation::draw(Rng& rng, double clip_duration) {
  Augmentation a;
  if (!rng.bernoulli(0.5)) return a;
  switch (rng.uniform_int(0, 2)) {
    case 0:
      a.kind = Kind::TimeStretch;
      a.value = rng.uniform(0.9, 1.1);
      break;
    case 1:
      a.kind = Kind::PitchShift;
      a.value = rng.uniform(-2.0, 2.0);
      break;
    default:
      a.kind = Kind::TimeShift;
      a.value = rng.uniform(0.0, clip_duration);
      break;
  }
  return a;
}

AudioClip Augmentation::apply(const AudioClip& clip) const {
  switch (kind) {
    case Kind::TimeStretch:
      return fit_length(time_stretch(clip, value), clip.samples.size());
    case Kind::PitchShift:
      return pitch_shift(clip, value);
    case Kind::TimeShift:
      return time_shift(clip, value);
    case Kind::None:
      break;
  }
  return clip;
}

AnnotationSet Augmentation::apply_labels(const AudioClip& clip) const {
  const std::size_t n = clip.samples.size();
  switch (kind) {
    case Kind::TimeStretch: {
      if (value == 1.0) return clip.annotations;
      const double stretched_duration =
          static_cast<double>(stretched_length(n, value)) / clip.sample_rate;
      const auto stretched = stretch_labels(clip.annotations, value, stretched_duration);
      return fit_labels(stretched, static_cast<double>(n) / clip.sample_rate);
    }
    case Kind::TimeShift:
      return shift_labels(clip.annotations, shift_in_samples(value, n, clip.sample_rate), n,
                          clip.sample_rate);
    case Kind::PitchShift:
    case Kind::None:
      break;
  }
  return clip.annotations;
}

std::string Augmentation::describe() const {
  std::ostringstream os;
  os.precision(6);
  switch (kind) {
    case Kind::None:
      return "none";
    case Kind::TimeStretch:
      os << "time_stretch(rate=" << value << ")";
      break;
    case Kind::PitchShift:
      os << "pitch_shift(semitones=" << value << ")";
      break;
    case Kind::TimeShift:
      os << "time_shift(seconds=" << value << ")";
      break;
  }
  return os.str();
}

}  // namespace densesed
