// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "densesed/annotations.hpp"

namespace densesed {

inline constexpr double kDefaultSampleRate = 32000.0;

/// Mono waveform with its annotations. The annotation duration tracks the
/// sample count: duration == samples.size() / sample_rate.
struct AudioClip {
  std::vector<float> samples;
  double sample_rate = kDefaultSampleRate;
  AnnotationSet annotations;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  const std::string& id() const { return annotations.source_id(); }
};

/// Checks sample_rate > 0 and the duration/sample-count agreement.
void validate_clip(const AudioClip& clip);

enum class WavFormat { Pcm16, Float32 };

struct WavData {
  std::vector<float> samples;  // mono; multichannel input is averaged
  double sample_rate = 0.0;
};

/// RIFF/WAVE reader for 8/16/24/32-bit PCM and 32-bit float.
WavData read_wav(const std::string& path);
WavData decode_wav(const std::vector<char>& bytes);

std::vector<char> encode_wav(const std::vector<float>& samples, double sample_rate,
                             WavFormat format);
void write_wav(const std::string& path, const std::vector<float>& samples, double sample_rate,
               WavFormat format = WavFormat::Float32);

}  // namespace densesed
