// SPDX-License-Identifier: Apache-2.0
#include "densesed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "densesed/error.hpp"
#include "json_config.hpp"

namespace densesed {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'E', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void put_tensor(std::string& out, const std::string& name, const nn::Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, 2);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, m(r, c));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  nn::Matrix tensor(std::string& name) {
    name = str(u32());
    const std::uint32_t ndim = u32();
    if (ndim != 2) throw DataError("checkpoint tensor " + name + " has " + std::to_string(ndim) + " dims");
    const auto rows = u32();
    const auto cols = u32();
    need(static_cast<std::size_t>(rows) * cols * 4);
    nn::Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = std::bit_cast<float>(u32());
    return m;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.check_shapes(ckpt.config);
  if (ckpt.vocabulary.size() != ckpt.config.n_classes) {
    throw DataError("checkpoint vocabulary has " + std::to_string(ckpt.vocabulary.size()) +
                    " species, model has " + std::to_string(ckpt.config.n_classes) + " classes");
  }
  const Json header{{"model", to_json(ckpt.config)},
                    {"features", to_json(ckpt.features)},
                    {"vocabulary", ckpt.vocabulary},
                    {"seed", ckpt.seed}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_u32(out, static_cast<std::uint32_t>(ckpt.params.tensors.size() + 2));
  for (const auto& t : ckpt.params.tensors) put_tensor(out, t.name, t.value);
  put_tensor(out, "norm.mean", ckpt.params.norm.mean);
  put_tensor(out, "norm.std", ckpt.params.norm.stddev);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  Reader in(bytes);
  in.str(sizeof kMagic);
  const auto version = in.u32();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Json header;
  try {
    header = Json::parse(in.str(in.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.config = crnn_config_from_json(header.at("model"));
    ck.features = feature_config_from_json(header.at("features"));
    ck.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ck.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  ck.config.validate();
  if (ck.vocabulary.size() != ck.config.n_classes) {
    throw DataError("checkpoint vocabulary does not match its class count");
  }
  ck.params = CrnnParams::zeros_like(ck.config);
  const auto count = in.u32();
  if (count != ck.params.tensors.size() + 2) {
    throw DataError("checkpoint has " + std::to_string(count) + " tensors, config expects " +
                    std::to_string(ck.params.tensors.size() + 2));
  }
  for (auto& t : ck.params.tensors) {
    std::string name;
    nn::Matrix m = in.tensor(name);
    if (name != t.name) throw DataError("checkpoint tensor '" + name + "' where '" + t.name + "' was expected");
    if (m.rows() != t.value.rows() || m.cols() != t.value.cols()) {
      throw DataError("checkpoint tensor " + name + " is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", config expects " + std::to_string(t.value.rows()) +
                      "x" + std::to_string(t.value.cols()));
    }
    t.value = std::move(m);
  }
  for (const char* expect : {"norm.mean", "norm.std"}) {
    std::string name;
    nn::Matrix m = in.tensor(name);
    if (name != expect) throw DataError("checkpoint tensor '" + name + "' where '" + expect + "' was expected");
    if (m.rows() != static_cast<Eigen::Index>(ck.config.n_mels) || m.cols() != 1) {
      throw DataError("checkpoint tensor " + name + " does not match n_mels");
    }
    (name == "norm.mean" ? ck.params.norm.mean : ck.params.norm.stddev) = m.col(0);
  }
  if (!in.done()) throw DataError("trailing bytes after checkpoint tensors");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace densesed
