#pragma once

#include <cstddef>
#include <vector>

#include "freqmrn/rng.hpp"
#include "freqmrn/tensor.hpp"

namespace freqmrn {

enum class Mode { train, eval };

// Elementwise. Binary ops accept identical shapes, or a single-element tensor
// on either side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& a);
/// max(x, 0); the backward rule passes gradient only where x > 0.
Tensor relu(const Tensor& a);

/// Matrix product over the last two axes.
///
/// Supported ranks: 2x2, 3x3 (matching batch), 3x2 (right operand shared by
/// every batch entry) and 2x3 (left operand shared).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum over one axis; the axis is removed from the result shape.
Tensor sum_axis(const Tensor& a, std::size_t axis);
/// Euclidean norm over one axis. The gradient at a zero vector is zero.
Tensor norm_axis(const Tensor& a, std::size_t axis);

/// Valid 1-D cross-correlation along the last axis, stride 1.
///
/// input [C_in x T] or [B x C_in x T]; kernels [C_out x C_in x W];
/// bias [C_out] or an empty tensor for no bias.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

struct RunningStats {
  Tensor mean;
  Tensor var;
  bool initialized = false;

  static RunningStats standard(std::size_t channels);
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Batch normalization with the channel on the last axis; statistics pool
/// over every other axis. Train mode updates `stats` in place.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                 Mode mode, const BatchNormOptions& options = {});

/// Inverted dropout: train mode zeroes with probability `rate` and rescales
/// survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& input, double rate, Rng& rng, Mode mode);

struct Normalized {
  Tensor values;
  /// Rows whose sum was not positive and fell back to uniform weights.
  std::vector<bool> fallback;
};

/// Divides each row of a nonnegative [n] or [B x n] tensor by its sum.
Normalized normalize_rows(const Tensor& a);

/// Overlapping windows along time: [B x C x T] -> [B x count x C x width],
/// window i covering frames [i, i + width).
Tensor sliding_windows(const Tensor& input, std::size_t width, std::size_t count);

}  // namespace freqmrn
