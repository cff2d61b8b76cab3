// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "densesed/audio.hpp"
#include "densesed/random.hpp"

namespace densesed {

/// Phase-vocoder time stretch. Output has round(n / rate) samples, pitch is
/// kept and every event boundary is divided by rate. rate must be in [0.5, 2].
AudioClip time_stretch(const AudioClip& clip, double rate);

/// Shifts pitch by 2^(semitones/12) keeping duration and labels.
/// semitones must be in [-12, 12].
AudioClip pitch_shift(const AudioClip& clip, double semitones);

/// Circular rotation by round(shift * sample_rate) samples. Labels follow
/// modulo the clip duration; an event crossing the end is split in two.
AudioClip time_shift(const AudioClip& clip, double shift);

/// Crops or zero-pads to n_samples, clipping labels to the new duration.
AudioClip fit_length(const AudioClip& clip, std::size_t n_samples);

/// One randomly drawn augmentation, applied identically to audio and labels.
struct Augmentation {
  enum class Kind { None, TimeStretch, PitchShift, TimeShift };
  Kind kind = Kind::None;
  double value = 0.0;  // rate, semitones or seconds

  /// With probability 0.5 picks one of stretch (rate in [0.9, 1.1]), pitch
  /// (semitones in [-2, 2]) or shift (seconds in [0, duration)).
  static Augmentation draw(Rng& rng, double clip_duration);

  /// Audio and labels, length restored to the input's.
  AudioClip apply(const AudioClip& clip) const;
  /// Labels only; identical to apply(clip).annotations without touching audio.
  AnnotationSet apply_labels(const AudioClip& clip) const;

  std::string describe() const;
};

}  // namespace densesed
