#include "freqmrn/transforms.hpp"

#include <cmath>
#include <numbers>

#include "freqmrn/error.hpp"
#include "freqmrn/ops.hpp"

namespace freqmrn {
namespace {

Tensor build_basis(std::size_t size) {
  if (size == 0) throw DimensionError("DCT basis needs at least one frame");
  const double t = static_cast<double>(size);
  std::vector<double> m(size * size);
  for (std::size_t k = 0; k < size; ++k) {
    const double c = k == 0 ? std::sqrt(1.0 / t) : std::sqrt(2.0 / t);
    for (std::size_t n = 0; n < size; ++n) {
      m[k * size + n] = c * std::cos(std::numbers::pi * (2.0 * static_cast<double>(n) + 1.0) *
                                     static_cast<double>(k) / (2.0 * t));
    }
  }
  return Tensor({size, size}, std::move(m));
}

void check_frames(const Tensor& x, const DctBasis& basis, const char* op) {
  if (x.rank() == 0 || x.shape().back() != basis.size()) {
    throw DimensionError(std::string(op) + ": input " + shape_string(x.shape()) + " does not match a basis of size " +
                         std::to_string(basis.size()));
  }
}

}  // namespace

DctBasis::DctBasis(std::size_t size)
    : size_(size), matrix_(build_basis(size)), transposed_(transpose(matrix_)) {}

Tensor dct(const Tensor& x, const DctBasis& basis) {
  check_frames(x, basis, "dct");
  if (x.rank() == 1) return reshape(matmul(reshape(x, {1, x.size()}), basis.transposed()), {x.size()});
  return matmul(x, basis.transposed());
}

Tensor idct(const Tensor& coefficients, const DctBasis& basis) {
  check_frames(coefficients, basis, "idct");
  if (coefficients.rank() == 1) {
    return reshape(matmul(reshape(coefficients, {1, coefficients.size()}), basis.matrix()), {coefficients.size()});
  }
  return matmul(coefficients, basis.matrix());
}

}  // namespace freqmrn
