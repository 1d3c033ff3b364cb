#pragma once

#include <cstddef>

#include "freqmrn/tensor.hpp"

namespace freqmrn {

/// Orthonormal DCT-II basis of size T.
///
/// Row k holds c_k * cos(pi * (2n + 1) * k / (2T)) with c_0 = sqrt(1/T) and
/// c_k = sqrt(2/T) otherwise, so the inverse transform is the transpose.
class DctBasis {
 public:
  explicit DctBasis(std::size_t size);

  std::size_t size() const { return size_; }
  /// [T x T], row k = k-th cosine component.
  const Tensor& matrix() const { return matrix_; }
  const Tensor& transposed() const { return transposed_; }

 private:
  std::size_t size_;
  Tensor matrix_;
  Tensor transposed_;
};

/// Transforms the last (time) axis into cosine coefficients: x * B^T.
/// Accepts [T], [P x T] or [B x P x T].
Tensor dct(const Tensor& x, const DctBasis& basis);

/// Inverse of dct(): x' * B.
Tensor idct(const Tensor& coefficients, const DctBasis& basis);

}  // namespace freqmrn
