// SPDX-License-Identifier: Apache-2.0
#include "densesed/crnn.hpp"

#include <algorithm>
#include <cmath>

#include "densesed/error.hpp"

namespace densesed {

using nn::Grid;
using nn::Matrix;

namespace {

constexpr double kProbEpsilon = 1e-7;
constexpr const char* kGateNames[9] = {"W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h"};

// Tensor positions follow the creation order in zeros_like().
struct Layout {
  std::size_t n_conv, n_gru, n_dense;
  std::size_t conv(std::size_t l) const { return 4 * l; }  // weight, bias, gamma, beta
  std::size_t gru(std::size_t l, std::size_t dir) const { return 4 * n_conv + 18 * l + 9 * dir; }
  std::size_t dense(std::size_t k) const { return 4 * n_conv + 18 * n_gru + 2 * k; }
  std::size_t output() const { return dense(n_dense); }
};

Layout layout_of(const CrnnConfig& c) {
  return {c.conv_channels.size(), c.gru_layers, c.dense_units.size()};
}

Tensor make_tensor(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                   std::size_t fan_out, Tensor::Init init) {
  Tensor t;
  t.name = std::move(name);
  t.value = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  t.fan_in = fan_in;
  t.fan_out = fan_out;
  t.init = init;
  return t;
}

nn::GruWeights gru_weights(const std::vector<Tensor>& t, std::size_t base) {
  return {t[base].value,     t[base + 1].value, t[base + 2].value,
          t[base + 3].value, t[base + 4].value, t[base + 5].value,
          t[base + 6].value, t[base + 7].value, t[base + 8].value};
}

nn::GruGrads gru_grads(std::vector<Tensor>& t, std::size_t base) {
  return {t[base].value,     t[base + 1].value, t[base + 2].value,
          t[base + 3].value, t[base + 4].value, t[base + 5].value,
          t[base + 6].value, t[base + 7].value, t[base + 8].value};
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace

struct ForwardTrace {
  struct Conv {
    Grid in_grid;
    Matrix cols;
    nn::LayerNormCache norm;
    Matrix normalized_out;  // leaky ReLU pre-activation
    Grid act_grid;
    std::vector<unsigned char> argmax;
  };
  struct Gru {
    nn::GruCache fw, bw;
    Matrix mask;
  };
  struct Dense {
    Matrix input, pre, mask;
  };
  std::vector<Conv> conv;
  Grid seq_grid;
  std::vector<Gru> gru;
  std::vector<Dense> dense;
  Matrix output_input;
};

void CrnnConfig::validate() const {
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  if (conv_channels.empty()) throw ConfigError("at least one conv layer is required");
  if (freq_pool.size() != conv_channels.size()) {
    throw ConfigError("freq_pool needs one width per conv layer");
  }
  std::size_t f = n_mels;
  for (std::size_t l = 0; l < freq_pool.size(); ++l) {
    if (conv_channels[l] == 0) throw ConfigError("conv layer " + std::to_string(l) + " has no channels");
    if (freq_pool[l] == 0 || freq_pool[l] > 255 || f % freq_pool[l] != 0) {
      throw ConfigError("pool width " + std::to_string(freq_pool[l]) + " of conv layer " +
                        std::to_string(l) + " does not divide " + std::to_string(f) + " bins");
    }
    f /= freq_pool[l];
  }
  if (gru_layers == 0 || gru_units == 0) throw ConfigError("at least one GRU layer with units is required");
  if (n_classes == 0) throw ConfigError("n_classes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (std::any_of(dense_units.begin(), dense_units.end(), [](std::size_t u) { return u == 0; })) {
    throw ConfigError("dense layers need at least one unit");
  }
}

std::size_t CrnnConfig::pooled_freq() const {
  std::size_t f = n_mels;
  for (auto p : freq_pool) f /= p;
  return f;
}

std::size_t CrnnConfig::gru_input_size() const { return conv_channels.back() * pooled_freq(); }

CrnnParams CrnnParams::zeros_like(const CrnnConfig& c) {
  c.validate();
  CrnnParams p;
  using Init = Tensor::Init;
  std::size_t c_in = 1;
  for (std::size_t l = 0; l < c.conv_channels.size(); ++l) {
    const std::size_t c_out = c.conv_channels[l];
    const std::string n = std::to_string(l);
    p.tensors.push_back(make_tensor("conv" + n + ".weight", c_out, 9 * c_in, 9 * c_in, 9 * c_out, Init::Glorot));
    p.tensors.push_back(make_tensor("conv" + n + ".bias", c_out, 1, 0, 0, Init::Zeros));
    p.tensors.push_back(make_tensor("norm" + n + ".gamma", c_out, 1, 0, 0, Init::Ones));
    p.tensors.push_back(make_tensor("norm" + n + ".beta", c_out, 1, 0, 0, Init::Zeros));
    c_in = c_out;
  }
  std::size_t width = c.gru_input_size();
  const std::size_t H = c.gru_units;
  for (std::size_t l = 0; l < c.gru_layers; ++l) {
    for (const char* dir : {"fw", "bw"}) {
      const std::string prefix = "gru" + std::to_string(l) + "." + dir + ".";
      for (int gate = 0; gate < 3; ++gate) {
        p.tensors.push_back(make_tensor(prefix + kGateNames[3 * gate], H, width, width, H, Init::Glorot));
        p.tensors.push_back(make_tensor(prefix + kGateNames[3 * gate + 1], H, H, H, H, Init::Glorot));
        p.tensors.push_back(make_tensor(prefix + kGateNames[3 * gate + 2], H, 1, 0, 0, Init::Zeros));
      }
    }
    width = 2 * H;
  }
  for (std::size_t k = 0; k < c.dense_units.size(); ++k) {
    const std::size_t out = c.dense_units[k];
    p.tensors.push_back(make_tensor("dense" + std::to_string(k) + ".weight", out, width, width, out, Init::Glorot));
    p.tensors.push_back(make_tensor("dense" + std::to_string(k) + ".bias", out, 1, 0, 0, Init::Zeros));
    width = out;
  }
  p.tensors.push_back(make_tensor("output.weight", c.n_classes, width, width, c.n_classes, Init::Glorot));
  p.tensors.push_back(make_tensor("output.bias", c.n_classes, 1, 0, 0, Init::Zeros));
  p.norm = FeatureStats::identity(c.n_mels);
  return p;
}

const Tensor& CrnnParams::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("no tensor named " + name);
}

Tensor& CrnnParams::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t CrnnParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
  return n;
}

void CrnnParams::check_shapes(const CrnnConfig& config) const {
  const auto expected = zeros_like(config);
  if (expected.tensors.size() != tensors.size()) {
    throw DataError("expected " + std::to_string(expected.tensors.size()) + " tensors, found " +
                    std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& want = expected.tensors[i];
    const auto& have = tensors[i];
    if (want.name != have.name || want.value.rows() != have.value.rows() ||
        want.value.cols() != have.value.cols()) {
      throw DataError("tensor " + want.name + ": expected " + std::to_string(want.value.rows()) + "x" +
                      std::to_string(want.value.cols()) + ", found " + have.name + " " +
                      std::to_string(have.value.rows()) + "x" + std::to_string(have.value.cols()));
    }
  }
  if (static_cast<std::size_t>(norm.mean.size()) != config.n_mels ||
      static_cast<std::size_t>(norm.stddev.size()) != config.n_mels) {
    throw DataError("normalization statistics do not match " + std::to_string(config.n_mels) + " mel bands");
  }
}

void CrnnParams::set_zero() {
  for (auto& t : tensors) t.value.setZero();
}

CrnnParams& CrnnParams::operator+=(const CrnnParams& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i].value += other.tensors[i].value;
  return *this;
}

CrnnParams& CrnnParams::operator*=(double scale) {
  for (auto& t : tensors) t.value *= scale;
  return *this;
}

CrnnParams init_params(const CrnnConfig& config, std::uint64_t seed) {
  CrnnParams p = CrnnParams::zeros_like(config);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    switch (t.init) {
      case Tensor::Init::Zeros:
        t.value.setZero();
        break;
      case Tensor::Init::Ones:
        t.value.setOnes();
        break;
      case Tensor::Init::Glorot: {
        const double a = std::sqrt(6.0 / static_cast<double>(t.fan_in + t.fan_out));
        Rng rng(derive_seed(seed, "init", i));
        for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
          for (Eigen::Index c = 0; c < t.value.cols(); ++c) t.value(r, c) = rng.uniform(-a, a);
        }
        break;
      }
    }
  }
  return p;
}

Crnn::Crnn(CrnnConfig config, CrnnParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  params_.check_shapes(config_);
}

Matrix Crnn::run(const Matrix& input, Mode mode, Rng* rng, ForwardTrace* trace) const {
  const auto T = static_cast<std::size_t>(input.rows());
  if (static_cast<std::size_t>(input.cols()) != config_.n_mels) {
    throw DataError("input has " + std::to_string(input.cols()) + " mel bands, model expects " +
                    std::to_string(config_.n_mels));
  }
  if (T == 0) throw DataError("input has no frames");
  const bool train = mode == Mode::Train && config_.dropout > 0.0;
  if (train && !rng) throw ConfigError("train mode needs a random generator for dropout");
  const auto& t = params_.tensors;
  const Layout lay = layout_of(config_);

  Grid grid{1, T, config_.n_mels};
  Matrix act(1, grid.cells());
  for (std::size_t r = 0; r < T; ++r) {
    act.block(0, static_cast<Eigen::Index>(r * config_.n_mels), 1,
              static_cast<Eigen::Index>(config_.n_mels)) = input.row(static_cast<Eigen::Index>(r));
  }

  if (trace) trace->conv.resize(config_.conv_channels.size());
  for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
    const std::size_t b = lay.conv(l);
    Matrix cols;
    Matrix pre = nn::conv3x3_forward(act, grid, t[b].value, t[b + 1].value, trace ? &cols : nullptr);
    const Grid out_grid{config_.conv_channels[l], T, grid.freq};
    nn::LayerNormCache norm;
    Matrix normed = nn::layer_norm_forward(pre, out_grid, t[b + 2].value, t[b + 3].value,
                                           config_.layer_norm_eps, trace ? &norm : nullptr);
    const Matrix activated = nn::leaky_relu(normed, config_.leaky_slope);
    std::vector<unsigned char> argmax;
    act = nn::max_pool_freq_forward(activated, out_grid, config_.freq_pool[l], trace ? &argmax : nullptr);
    if (trace) {
      auto& ct = trace->conv[l];
      ct.in_grid = grid;
      ct.cols = std::move(cols);
      ct.norm = std::move(norm);
      ct.normalized_out = std::move(normed);
      ct.act_grid = out_grid;
      ct.argmax = std::move(argmax);
    }
    grid = Grid{out_grid.channels, T, out_grid.freq / config_.freq_pool[l]};
  }

  Matrix seq = nn::grid_to_sequence(act, grid);
  if (trace) {
    trace->seq_grid = grid;
    trace->gru.resize(config_.gru_layers);
  }
  const auto H = static_cast<Eigen::Index>(config_.gru_units);
  for (std::size_t l = 0; l < config_.gru_layers; ++l) {
    nn::GruCache fw_cache, bw_cache;
    const Matrix fw = nn::gru_forward(seq, gru_weights(t, lay.gru(l, 0)), false, trace ? &fw_cache : nullptr);
    const Matrix bw = nn::gru_forward(seq, gru_weights(t, lay.gru(l, 1)), true, trace ? &bw_cache : nullptr);
    Matrix both(static_cast<Eigen::Index>(T), 2 * H);
    both.leftCols(H) = fw;
    both.rightCols(H) = bw;
    Matrix mask;
    if (train) {
      mask = dropout_mask(both.rows(), both.cols(), config_.dropout, *rng);
      both.array() *= mask.array();
    }
    if (trace) {
      auto& gt = trace->gru[l];
      gt.fw = std::move(fw_cache);
      gt.bw = std::move(bw_cache);
      gt.mask = std::move(mask);
    }
    seq = std::move(both);
  }

  if (trace) trace->dense.resize(config_.dense_units.size());
  for (std::size_t k = 0; k < config_.dense_units.size(); ++k) {
    const std::size_t b = lay.dense(k);
    Matrix pre = nn::dense_forward(seq, t[b].value, t[b + 1].value);
    Matrix out = nn::leaky_relu(pre, config_.leaky_slope);
    Matrix mask;
    if (train) {
      mask = dropout_mask(out.rows(), out.cols(), config_.dropout, *rng);
      out.array() *= mask.array();
    }
    if (trace) {
      auto& dt = trace->dense[k];
      dt.input = std::move(seq);
      dt.pre = std::move(pre);
      dt.mask = std::move(mask);
    }
    seq = std::move(out);
  }

  const std::size_t o = lay.output();
  Matrix logits = nn::dense_forward(seq, t[o].value, t[o + 1].value);
  if (trace) trace->output_input = std::move(seq);
  return nn::sigmoid(logits);
}

RowMatrix Crnn::forward(const MelSpectrogram& features, Mode mode, Rng* rng) const {
  return forward_standardized(params_.norm.apply(features.values), mode, rng);
}

RowMatrix Crnn::forward_standardized(const Matrix& input, Mode mode, Rng* rng) const {
  return run(input, mode, rng, nullptr);
}

Matrix Crnn::conv_stack(const Matrix& input) const {
  const auto T = static_cast<std::size_t>(input.rows());
  const auto& t = params_.tensors;
  if (static_cast<std::size_t>(input.cols()) != config_.n_mels) {
    throw DataError("input has " + std::to_string(input.cols()) + " mel bands, model expects " +
                    std::to_string(config_.n_mels));
  }
  Grid grid{1, T, config_.n_mels};
  Matrix act(1, grid.cells());
  for (std::size_t r = 0; r < T; ++r) {
    act.block(0, static_cast<Eigen::Index>(r * config_.n_mels), 1,
              static_cast<Eigen::Index>(config_.n_mels)) = input.row(static_cast<Eigen::Index>(r));
  }
  for (std::size_t l = 0; l < config_.conv_channels.size(); ++l) {
    const std::size_t b = 4 * l;
    const Matrix pre = nn::conv3x3_forward(act, grid, t[b].value, t[b + 1].value, nullptr);
    const Grid out_grid{config_.conv_channels[l], T, grid.freq};
    const Matrix normed = nn::layer_norm_forward(pre, out_grid, t[b + 2].value, t[b + 3].value,
                                                 config_.layer_norm_eps, nullptr);
    act = nn::max_pool_freq_forward(nn::leaky_relu(normed, config_.leaky_slope), out_grid,
                                    config_.freq_pool[l], nullptr);
    grid = Grid{out_grid.channels, T, out_grid.freq / config_.freq_pool[l]};
  }
  return nn::grid_to_sequence(act, grid);
}

double Crnn::loss_and_gradient(const Matrix& input, const Matrix& target, Mode mode, Rng* rng,
                               CrnnParams& grads) const {
  ForwardTrace trace;
  const Matrix probs = run(input, mode, rng, &trace);
  if (target.rows() != probs.rows() || target.cols() != probs.cols()) {
    throw DataError("target is " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                    ", prediction is " + std::to_string(probs.rows()) + "x" + std::to_string(probs.cols()));
  }
  const double cells = static_cast<double>(probs.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.data()[i], kProbEpsilon, 1.0 - kProbEpsilon);
    const double y = target.data()[i];
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  loss /= cells;

  const bool train = mode == Mode::Train && config_.dropout > 0.0;
  auto& g = grads.tensors;
  const auto& t = params_.tensors;
  const Layout lay = layout_of(config_);

  // d loss / d logit of sigmoid + BCE.
  Matrix d = (probs - target) / cells;
  const std::size_t o = lay.output();
  d = nn::dense_backward(d, trace.output_input, t[o].value, g[o].value, g[o + 1].value);

  for (std::size_t k = config_.dense_units.size(); k-- > 0;) {
    const auto& dt = trace.dense[k];
    const std::size_t b = lay.dense(k);
    if (train) d.array() *= dt.mask.array();
    d = nn::leaky_relu_backward(d, dt.pre, config_.leaky_slope);
    d = nn::dense_backward(d, dt.input, t[b].value, g[b].value, g[b + 1].value);
  }

  const auto H = static_cast<Eigen::Index>(config_.gru_units);
  for (std::size_t l = config_.gru_layers; l-- > 0;) {
    const auto& gt = trace.gru[l];
    if (train) d.array() *= gt.mask.array();
    const Matrix d_fw = d.leftCols(H);
    const Matrix d_bw = d.rightCols(H);
    Matrix d_in = nn::gru_backward(d_fw, gru_weights(t, lay.gru(l, 0)), false, gt.fw, gru_grads(g, lay.gru(l, 0)));
    d_in += nn::gru_backward(d_bw, gru_weights(t, lay.gru(l, 1)), true, gt.bw, gru_grads(g, lay.gru(l, 1)));
    d = std::move(d_in);
  }

  d = nn::sequence_to_grid(d, trace.seq_grid);
  for (std::size_t l = config_.conv_channels.size(); l-- > 0;) {
    const auto& ct = trace.conv[l];
    const std::size_t b = lay.conv(l);
    d = nn::max_pool_freq_backward(d, ct.act_grid, config_.freq_pool[l], ct.argmax);
    d = nn::leaky_relu_backward(d, ct.normalized_out, config_.leaky_slope);
    d = nn::layer_norm_backward(d, ct.act_grid, t[b + 2].value, ct.norm, g[b + 2].value, g[b + 3].value);
    if (l == 0) {
      // Input gradient is not needed; only accumulate the kernel gradients.
      g[b].value.noalias() += d * ct.cols.transpose();
      g[b + 1].value += d.rowwise().sum();
    } else {
      d = nn::conv3x3_backward(d, ct.cols, ct.in_grid, t[b].value, g[b].value, g[b + 1].value);
    }
  }
  return loss;
}

}  // namespace densesed
