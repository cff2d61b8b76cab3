// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "densesed/crnn.hpp"
#include "densesed/features.hpp"

namespace densesed {

/// Everything needed to run a trained detector.
struct Checkpoint {
  CrnnConfig config;
  CrnnParams params;
  std::vector<std::string> vocabulary;  // species codes in class order
  FeatureConfig features;
  std::uint64_t seed = 0;
};

/// Byte layout (all integers little-endian):
///   "DSEDCKPT"                      8 bytes
///   uint32 version (= 1)
///   uint32 header length H, then H bytes of UTF-8 JSON:
///     {"model": {...}, "features": {...}, "vocabulary": [...], "seed": n}
///   uint32 tensor count K, then K records:
///     uint32 name length L, L bytes of name,
///     uint32 ndim (= 2), ndim x uint32 dims,
///     rows*cols float32 values, row-major
/// The standardization statistics are stored as tensors "norm.mean" and
/// "norm.std" (n_mels x 1). Values are rounded to float32 on save.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws DataError on a bad magic, version, truncation, or a tensor whose
/// name or shape disagrees with the stored model config.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace densesed
