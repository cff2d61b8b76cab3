// SPDX-License-Identifier: Apache-2.0
//
// Layer primitives of the CRNN with hand-written backward passes.
//
// Convolutional activations are stored as C x (T*F) matrices: one column per
// (time, frequency) cell, column index t*F + f, channels down the rows.
// Sequence activations are T x D matrices, one row per time step.
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace densesed::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Feature-map geometry of a convolutional activation.
struct Grid {
  std::size_t channels = 0;
  std::size_t time = 0;
  std::size_t freq = 0;

  Eigen::Index cells() const { return static_cast<Eigen::Index>(time * freq); }
};

// --- 3x3 convolution, zero "same" padding in time and frequency ----------

/// weight: C_out x (9 * C_in), column (kt * 3 + kf) * C_in + c_in holds the
/// tap at time offset kt - 1 and frequency offset kf - 1 (cross-correlation).
/// `cols` receives the im2col matrix needed by the backward pass.
Matrix conv3x3_forward(const Matrix& input, const Grid& grid, const Matrix& weight,
                       const Matrix& bias, Matrix* cols);

/// Accumulates into d_weight / d_bias and returns the input gradient.
Matrix conv3x3_backward(const Matrix& d_out, const Matrix& cols, const Grid& in_grid,
                        const Matrix& weight, Matrix& d_weight, Matrix& d_bias);

// --- Layer normalization over (channel x frequency) per time step --------

struct LayerNormCache {
  Matrix normalized;  // x_hat, same shape as the input
  Vector inv_std;     // one per time step
};

/// y = gamma_c * x_hat + beta_c with statistics over each time step's C*F cells.
Matrix layer_norm_forward(const Matrix& input, const Grid& grid, const Matrix& gamma,
                          const Matrix& beta, double eps, LayerNormCache* cache);

Matrix layer_norm_backward(const Matrix& d_out, const Grid& grid, const Matrix& gamma,
                           const LayerNormCache& cache, Matrix& d_gamma, Matrix& d_beta);

// --- Leaky ReLU ------------------------------------------------------------

Matrix leaky_relu(const Matrix& x, double slope);
/// Gradient through leaky ReLU given the pre-activation.
Matrix leaky_relu_backward(const Matrix& d_out, const Matrix& pre, double slope);

// --- Max pooling along frequency -------------------------------------------

/// Pools non-overlapping windows of `width` frequency bins; grid.freq must be
/// divisible by width. `argmax` records the winning offset per output cell.
Matrix max_pool_freq_forward(const Matrix& input, const Grid& grid, std::size_t width,
                             std::vector<unsigned char>* argmax);

Matrix max_pool_freq_backward(const Matrix& d_out, const Grid& in_grid, std::size_t width,
                              const std::vector<unsigned char>& argmax);

// --- Conv map <-> sequence ---------------------------------------------------

/// T x (C*F) sequence; feature index c * F + f.
Matrix grid_to_sequence(const Matrix& input, const Grid& grid);
Matrix sequence_to_grid(const Matrix& seq, const Grid& grid);

// --- GRU ---------------------------------------------------------------------

/// One direction of a GRU layer. Gate equations:
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   c = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * c
struct GruWeights {
  const Matrix& W_z;
  const Matrix& U_z;
  const Matrix& b_z;
  const Matrix& W_r;
  const Matrix& U_r;
  const Matrix& b_r;
  const Matrix& W_h;
  const Matrix& U_h;
  const Matrix& b_h;
};

struct GruGrads {
  Matrix& W_z;
  Matrix& U_z;
  Matrix& b_z;
  Matrix& W_r;
  Matrix& U_r;
  Matrix& b_r;
  Matrix& W_h;
  Matrix& U_h;
  Matrix& b_h;
};

struct GruStep {
  Vector z, r, candidate, h;
};

/// Single recurrence step.
GruStep gru_step(const GruWeights& w, const Vector& x, const Vector& h_prev);

struct GruCache {
  Matrix input;      // T x D, in processing order
  Matrix z, r, candidate, h_prev;  // T x H each
};

/// Runs the sequence forward in time (or reversed when `reverse`), starting
/// from h = 0. Output rows are aligned with the input rows.
Matrix gru_forward(const Matrix& input, const GruWeights& w, bool reverse, GruCache* cache);

/// Backpropagation through time. Returns the input gradient (T x D).
Matrix gru_backward(const Matrix& d_out, const GruWeights& w, bool reverse, const GruCache& cache,
                    const GruGrads& g);

// --- Dense -----------------------------------------------------------------

/// Time-distributed affine map: Y = X W^T + b^T.
Matrix dense_forward(const Matrix& x, const Matrix& weight, const Matrix& bias);
Matrix dense_backward(const Matrix& d_out, const Matrix& x, const Matrix& weight, Matrix& d_weight,
                      Matrix& d_bias);

Matrix sigmoid(const Matrix& x);

}  // namespace densesed::nn
