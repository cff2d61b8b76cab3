// SPDX-License-Identifier: Apache-2.0
#include "densesed/nn.hpp"

#include <algorithm>
#include <cmath>

#include "densesed/error.hpp"

namespace densesed::nn {

namespace {

using Index = Eigen::Index;

// Valid range of output frequency bins [lo, hi) for a frequency offset df.
void freq_span(Index freq, Index df, Index& lo, Index& hi) {
  lo = std::max<Index>(0, -df);
  hi = std::min<Index>(freq, freq - df);
}

}  // namespace

Matrix conv3x3_forward(const Matrix& input, const Grid& grid, const Matrix& weight,
                       const Matrix& bias, Matrix* cols) {
  const auto c_in = static_cast<Index>(grid.channels);
  const auto T = static_cast<Index>(grid.time);
  const auto F = static_cast<Index>(grid.freq);
  if (input.rows() != c_in || input.cols() != grid.cells()) {
    throw DataError("conv input is " + std::to_string(input.rows()) + "x" +
                    std::to_string(input.cols()) + ", expected " + std::to_string(c_in) + "x" +
                    std::to_string(grid.cells()));
  }
  if (weight.cols() != 9 * c_in) throw DataError("conv weight does not match input channels");

  Matrix local;
  Matrix& im = cols ? *cols : local;
  im.setZero(9 * c_in, T * F);
  for (Index kt = 0; kt < 3; ++kt) {
    const Index dt = kt - 1;
    for (Index kf = 0; kf < 3; ++kf) {
      const Index df = kf - 1;
      const Index row0 = (kt * 3 + kf) * c_in;
      Index f_lo, f_hi;
      freq_span(F, df, f_lo, f_hi);
      for (Index t = 0; t < T; ++t) {
        const Index src_t = t + dt;
        if (src_t < 0 || src_t >= T) continue;
        im.block(row0, t * F + f_lo, c_in, f_hi - f_lo) =
            input.block(0, src_t * F + f_lo + df, c_in, f_hi - f_lo);
      }
    }
  }
  Matrix out = weight * im;
  out.colwise() += bias.col(0);
  return out;
}

Matrix conv3x3_backward(const Matrix& d_out, const Matrix& cols, const Grid& in_grid,
                        const Matrix& weight, Matrix& d_weight, Matrix& d_bias) {
  const auto c_in = static_cast<Index>(in_grid.channels);
  const auto T = static_cast<Index>(in_grid.time);
  const auto F = static_cast<Index>(in_grid.freq);
  d_weight.noalias() += d_out * cols.transpose();
  d_bias += d_out.rowwise().sum();
  const Matrix d_cols = weight.transpose() * d_out;
  Matrix d_in = Matrix::Zero(c_in, T * F);
  for (Index kt = 0; kt < 3; ++kt) {
    const Index dt = kt - 1;
    for (Index kf = 0; kf < 3; ++kf) {
      const Index df = kf - 1;
      const Index row0 = (kt * 3 + kf) * c_in;
      Index f_lo, f_hi;
      freq_span(F, df, f_lo, f_hi);
      for (Index t = 0; t < T; ++t) {
        const Index src_t = t + dt;
        if (src_t < 0 || src_t >= T) continue;
        d_in.block(0, src_t * F + f_lo + df, c_in, f_hi - f_lo) +=
            d_cols.block(row0, t * F + f_lo, c_in, f_hi - f_lo);
      }
    }
  }
  return d_in;
}

Matrix layer_norm_forward(const Matrix& input, const Grid& grid, const Matrix& gamma,
                          const Matrix& beta, double eps, LayerNormCache* cache) {
  const auto F = static_cast<Index>(grid.freq);
  const auto T = static_cast<Index>(grid.time);
  const double m = static_cast<double>(input.rows() * F);
  Matrix out(input.rows(), input.cols());
  if (cache) {
    cache->normalized.resize(input.rows(), input.cols());
    cache->inv_std.resize(T);
  }
  for (Index t = 0; t < T; ++t) {
    const auto block = input.middleCols(t * F, F);
    const double mean = block.sum() / m;
    const double var = (block.array() - mean).square().sum() / m;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto xhat = out.middleCols(t * F, F).array();
    xhat = (block.array() - mean) * inv;
    if (cache) {
      cache->normalized.middleCols(t * F, F) = xhat;
      cache->inv_std(t) = inv;
    }
    xhat = (xhat.colwise() * gamma.col(0).array()).colwise() + beta.col(0).array();
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& d_out, const Grid& grid, const Matrix& gamma,
                           const LayerNormCache& cache, Matrix& d_gamma, Matrix& d_beta) {
  const auto F = static_cast<Index>(grid.freq);
  const auto T = static_cast<Index>(grid.time);
  const double m = static_cast<double>(d_out.rows() * F);
  d_gamma += (d_out.array() * cache.normalized.array()).rowwise().sum().matrix();
  d_beta += d_out.rowwise().sum();
  Matrix d_in = d_out.array().colwise() * gamma.col(0).array();
  for (Index t = 0; t < T; ++t) {
    const auto xhat = cache.normalized.middleCols(t * F, F).array();
    auto d_xhat = d_in.middleCols(t * F, F).array();
    const double sum_d = d_xhat.sum();
    const double sum_dx = (d_xhat * xhat).sum();
    d_xhat = (cache.inv_std(t) / m) * (m * d_xhat - sum_d - xhat * sum_dx);
  }
  return d_in;
}

Matrix leaky_relu(const Matrix& x, double slope) {
  return x.cwiseMax(0.0) + slope * x.cwiseMin(0.0);
}

Matrix leaky_relu_backward(const Matrix& d_out, const Matrix& pre, double slope) {
  return (pre.array() > 0.0).select(d_out, slope * d_out);
}

Matrix max_pool_freq_forward(const Matrix& input, const Grid& grid, std::size_t width,
                             std::vector<unsigned char>* argmax) {
  if (width == 0 || grid.freq % width != 0) {
    throw DataError("pool width " + std::to_string(width) + " does not divide " +
                    std::to_string(grid.freq) + " frequency bins");
  }
  const auto C = static_cast<Index>(grid.channels);
  const auto T = static_cast<Index>(grid.time);
  const auto F = static_cast<Index>(grid.freq);
  const auto w = static_cast<Index>(width);
  const Index F_out = F / w;
  Matrix out(C, T * F_out);
  if (argmax) argmax->assign(static_cast<std::size_t>(C * T * F_out), 0);
  for (Index t = 0; t < T; ++t) {
    for (Index fo = 0; fo < F_out; ++fo) {
      const Index out_col = t * F_out + fo;
      const Index in_col = t * F + fo * w;
      for (Index c = 0; c < C; ++c) {
        Index best = 0;
        double value = input(c, in_col);
        for (Index j = 1; j < w; ++j) {
          if (input(c, in_col + j) > value) {
            value = input(c, in_col + j);
            best = j;
          }
        }
        out(c, out_col) = value;
        if (argmax) (*argmax)[static_cast<std::size_t>(out_col * C + c)] = static_cast<unsigned char>(best);
      }
    }
  }
  return out;
}

Matrix max_pool_freq_backward(const Matrix& d_out, const Grid& in_grid, std::size_t width,
                              const std::vector<unsigned char>& argmax) {
  const auto C = static_cast<Index>(in_grid.channels);
  const auto T = static_cast<Index>(in_grid.time);
  const auto F = static_cast<Index>(in_grid.freq);
  const auto w = static_cast<Index>(width);
  const Index F_out = F / w;
  Matrix d_in = Matrix::Zero(C, T * F);
  for (Index t = 0; t < T; ++t) {
    for (Index fo = 0; fo < F_out; ++fo) {
      const Index out_col = t * F_out + fo;
      const Index in_col = t * F + fo * w;
      for (Index c = 0; c < C; ++c) {
        const Index j = argmax[static_cast<std::size_t>(out_col * C + c)];
        d_in(c, in_col + j) += d_out(c, out_col);
      }
    }
  }
  return d_in;
}

Matrix grid_to_sequence(const Matrix& input, const Grid& grid) {
  const auto C = static_cast<Index>(grid.channels);
  const auto T = static_cast<Index>(grid.time);
  const auto F = static_cast<Index>(grid.freq);
  Matrix seq(T, C * F);
  for (Index t = 0; t < T; ++t) {
    for (Index c = 0; c < C; ++c) {
      seq.block(t, c * F, 1, F) = input.block(c, t * F, 1, F);
    }
  }
  return seq;
}

Matrix sequence_to_grid(const Matrix& seq, const Grid& grid) {
  const auto C = static_cast<Index>(grid.channels);
  const auto T = static_cast<Index>(grid.time);
  const auto F = static_cast<Index>(grid.freq);
  Matrix out(C, T * F);
  for (Index t = 0; t < T; ++t) {
    for (Index c = 0; c < C; ++c) {
      out.block(c, t * F, 1, F) = seq.block(t, c * F, 1, F);
    }
  }
  return out;
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

GruStep gru_step(const GruWeights& w, const Vector& x, const Vector& h_prev) {
  GruStep s;
  s.z = sigmoid(w.W_z * x + w.U_z * h_prev + w.b_z.col(0));
  s.r = sigmoid(w.W_r * x + w.U_r * h_prev + w.b_r.col(0));
  const Vector rh = s.r.cwiseProduct(h_prev);
  s.candidate = (w.W_h * x + w.U_h * rh + w.b_h.col(0)).array().tanh().matrix();
  s.h = (1.0 - s.z.array()) * h_prev.array() + s.z.array() * s.candidate.array();
  return s;
}

Matrix gru_forward(const Matrix& input, const GruWeights& w, bool reverse, GruCache* cache) {
  const Index T = input.rows();
  const Index H = w.U_z.rows();
  if (input.cols() != w.W_z.cols()) {
    throw DataError("GRU input width " + std::to_string(input.cols()) + " does not match weights (" +
                    std::to_string(w.W_z.cols()) + ")");
  }
  // Input projections for all steps at once.
  const Matrix a_z = (input * w.W_z.transpose()).rowwise() + w.b_z.col(0).transpose();
  const Matrix a_r = (input * w.W_r.transpose()).rowwise() + w.b_r.col(0).transpose();
  const Matrix a_h = (input * w.W_h.transpose()).rowwise() + w.b_h.col(0).transpose();

  Matrix out(T, H);
  if (cache) {
    cache->input = input;
    cache->z.resize(T, H);
    cache->r.resize(T, H);
    cache->candidate.resize(T, H);
    cache->h_prev.resize(T, H);
  }
  Vector h = Vector::Zero(H);
  for (Index step = 0; step < T; ++step) {
    const Index t = reverse ? T - 1 - step : step;
    const Vector z = sigmoid(a_z.row(t).transpose() + w.U_z * h);
    const Vector r = sigmoid(a_r.row(t).transpose() + w.U_r * h);
    const Vector rh = r.cwiseProduct(h);
    const Vector c = (a_h.row(t).transpose() + w.U_h * rh).array().tanh().matrix();
    if (cache) {
      cache->z.row(t) = z.transpose();
      cache->r.row(t) = r.transpose();
      cache->candidate.row(t) = c.transpose();
      cache->h_prev.row(t) = h.transpose();
    }
    h = ((1.0 - z.array()) * h.array() + z.array() * c.array()).matrix();
    out.row(t) = h.transpose();
  }
  return out;
}

Matrix gru_backward(const Matrix& d_out, const GruWeights& w, bool reverse, const GruCache& cache,
                    const GruGrads& g) {
  const Index T = d_out.rows();
  const Index H = d_out.cols();
  Matrix da_z(T, H), da_r(T, H), da_h(T, H);
  Vector dh_next = Vector::Zero(H);
  for (Index step = T - 1; step >= 0; --step) {
    const Index t = reverse ? T - 1 - step : step;
    const Vector z = cache.z.row(t).transpose();
    const Vector r = cache.r.row(t).transpose();
    const Vector c = cache.candidate.row(t).transpose();
    const Vector h_prev = cache.h_prev.row(t).transpose();
    const Vector dh = d_out.row(t).transpose() + dh_next;

    const Vector dc = dh.cwiseProduct(z);
    const Vector dz = dh.cwiseProduct(c - h_prev);
    Vector dh_prev = dh.cwiseProduct((1.0 - z.array()).matrix());

    const Vector dac = dc.array() * (1.0 - c.array().square());
    const Vector rh = r.cwiseProduct(h_prev);
    g.U_h.noalias() += dac * rh.transpose();
    const Vector d_rh = w.U_h.transpose() * dac;
    const Vector dr = d_rh.cwiseProduct(h_prev);
    dh_prev += d_rh.cwiseProduct(r);

    const Vector daz = dz.array() * z.array() * (1.0 - z.array());
    const Vector dar = dr.array() * r.array() * (1.0 - r.array());
    g.U_z.noalias() += daz * h_prev.transpose();
    g.U_r.noalias() += dar * h_prev.transpose();
    dh_prev.noalias() += w.U_z.transpose() * daz + w.U_r.transpose() * dar;

    da_z.row(t) = daz.transpose();
    da_r.row(t) = dar.transpose();
    da_h.row(t) = dac.transpose();
    dh_next = dh_prev;
  }
  g.W_z.noalias() += da_z.transpose() * cache.input;
  g.W_r.noalias() += da_r.transpose() * cache.input;
  g.W_h.noalias() += da_h.transpose() * cache.input;
  g.b_z += da_z.colwise().sum().transpose();
  g.b_r += da_r.colwise().sum().transpose();
  g.b_h += da_h.colwise().sum().transpose();
  Matrix d_in = da_z * w.W_z;
  d_in.noalias() += da_r * w.W_r;
  d_in.noalias() += da_h * w.W_h;
  return d_in;
}

Matrix dense_forward(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  if (x.cols() != weight.cols()) {
    throw DataError("dense input width " + std::to_string(x.cols()) + " does not match weights (" +
                    std::to_string(weight.cols()) + ")");
  }
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.col(0).transpose();
  return y;
}

Matrix dense_backward(const Matrix& d_out, const Matrix& x, const Matrix& weight, Matrix& d_weight,
                      Matrix& d_bias) {
  d_weight.noalias() += d_out.transpose() * x;
  d_bias += d_out.colwise().sum().transpose();
  return d_out * weight;
}

}  // namespace densesed::nn
