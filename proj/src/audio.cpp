// SPDX-License-Identifier: Apache-2.0
#include "densesed/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "densesed/error.hpp"

namespace densesed {

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

std::uint32_t get_u32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return std::uint32_t{u[0]} | (std::uint32_t{u[1]} << 8) | (std::uint32_t{u[2]} << 16) |
         (std::uint32_t{u[3]} << 24);
}

std::uint16_t get_u16(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint16_t>(u[0] | (u[1] << 8));
}

}  // namespace

void validate_clip(const AudioClip& clip) {
  if (!(clip.sample_rate > 0.0)) throw DataError("clip sample rate must be positive");
  if (std::abs(clip.annotations.duration() - clip.duration()) > 1.0 / clip.sample_rate + 1e-9) {
    throw DataError("clip " + clip.id() + ": annotation duration " +
                    std::to_string(clip.annotations.duration()) + " s does not match audio length " +
                    std::to_string(clip.duration()) + " s");
  }
}

std::vector<char> encode_wav(const std::vector<float>& samples, double sample_rate,
                             WavFormat format) {
  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::Pcm16 ? 1 : 3;
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));

  std::vector<char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (float s : samples) {
    if (format == WavFormat::Pcm16) {
      const float c = std::clamp(s, -1.0f, 1.0f);
      const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0f));
      put_u16(out, static_cast<std::uint16_t>(v));
    } else {
      std::uint32_t bitsv;
      std::memcpy(&bitsv, &s, sizeof bitsv);
      put_u32(out, bitsv);
    }
  }
  return out;
}

void write_wav(const std::string& path, const std::vector<float>& samples, double sample_rate,
               WavFormat format) {
  const auto bytes = encode_wav(samples, sample_rate, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

WavData decode_wav(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  std::uint16_t tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const std::size_t len = get_u32(id + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, bytes.size() - body);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError("truncated fmt chunk");
      tag = get_u16(bytes.data() + body);
      channels = get_u16(bytes.data() + body + 2);
      rate = get_u32(bytes.data() + body + 4);
      bits = get_u16(bytes.data() + body + 14);
      if (tag == 0xFFFE && avail >= 26) tag = get_u16(bytes.data() + body + 24);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (!data || channels == 0 || rate == 0) throw DataError("WAV file lacks fmt or data chunk");
  const bool is_float = tag == 3;
  if (!(tag == 1 || is_float) || (is_float && bits != 32) ||
      (!is_float && bits != 8 && bits != 16 && bits != 24 && bits != 32)) {
    throw DataError("unsupported WAV encoding (tag " + std::to_string(tag) + ", " +
                    std::to_string(bits) + " bits)");
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  WavData out;
  out.sample_rate = rate;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data + (i * channels + c) * width;
      double v = 0.0;
      if (is_float) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else if (bits == 8) {
        v = (static_cast<unsigned char>(*p) - 128.0) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(get_u16(p)) / 32768.0;
      } else if (bits == 24) {
        const auto* u = reinterpret_cast<const unsigned char*>(p);
        std::int32_t x = u[0] | (u[1] << 8) | (u[2] << 16);
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(get_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    out.samples[i] = static_cast<float>(acc / channels);
  }
  return out;
}

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace densesed
