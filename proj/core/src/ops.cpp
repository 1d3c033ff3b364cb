#include "freqmrn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "freqmrn/error.hpp"

namespace freqmrn {
namespace {

enum class Broadcast { same, left_scalar, right_scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.size() == 1) return Broadcast::right_scalar;
  if (a.size() == 1) return Broadcast::left_scalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

template <typename Fn>
Tensor binary_forward(const Tensor& a, const Tensor& b, Broadcast kind, Fn fn) {
  const Tensor& big = kind == Broadcast::left_scalar ? b : a;
  std::vector<double> out(big.size());
  const double* pa = a.raw();
  const double* pb = b.raw();
  const std::size_t sa = kind == Broadcast::left_scalar ? 0 : 1;
  const std::size_t sb = kind == Broadcast::right_scalar ? 0 : 1;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(pa[i * sa], pb[i * sb]);
  return Tensor(big.shape(), std::move(out));
}

// Adds `g` into `dst`, summing when `dst` is a broadcast scalar.
void accumulate(std::span<double> dst, std::span<const double> g, double factor = 1.0) {
  if (dst.empty()) return;
  if (dst.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
  } else {
    double s = 0.0;
    for (double v : g) s += v;
    dst[0] += factor * s;
  }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C[m x k] += G[m x n] * B[k x n]^T
void gemm_nt(const double* G, const double* B, double* C, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* g = G + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* b = B + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[j] * b[j];
      C[i * k + p] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * G[m x n]
void gemm_tn(const double* A, const double* G, double* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* g = G + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      double* c = C + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * g[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a, b, "add");
  Tensor out = binary_forward(a, b, kind, [](double x, double y) { return x + y; });
  return make_result(std::move(out), {&a, &b}, [](std::span<const double> g, GradSpans& gin) {
    accumulate(gin[0], g);
    accumulate(gin[1], g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a, b, "sub");
  Tensor out = binary_forward(a, b, kind, [](double x, double y) { return x - y; });
  return make_result(std::move(out), {&a, &b}, [](std::span<const double> g, GradSpans& gin) {
    accumulate(gin[0], g);
    accumulate(gin[1], g, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a, b, "mul");
  Tensor out = binary_forward(a, b, kind, [](double x, double y) { return x * y; });
  return make_result(std::move(out), {&a, &b}, [a, b, kind](std::span<const double> g, GradSpans& gin) {
    const std::size_t sa = kind == Broadcast::left_scalar ? 0 : 1;
    const std::size_t sb = kind == Broadcast::right_scalar ? 0 : 1;
    std::vector<double> tmp(g.size());
    if (!gin[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * b[i * sb];
      accumulate(gin[0], tmp);
    }
    if (!gin[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * a[i * sa];
      accumulate(gin[1], tmp);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_result(Tensor(a.shape(), std::move(out)), {&a},
                     [factor](std::span<const double> g, GradSpans& gin) { accumulate(gin[0], g, factor); });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  Tensor result(a.shape(), std::move(out));
  return make_result(result, {&a}, [result](std::span<const double> g, GradSpans& gin) {
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * (1.0 - result[i] * result[i]);
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return make_result(Tensor(a.shape(), std::move(out)), {&a}, [a](std::span<const double> g, GradSpans& gin) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (a[i] > 0.0) gin[0][i] += g[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto ra = a.rank();
  const auto rb = b.rank();
  const bool ok_rank = (ra == 2 || ra == 3) && (rb == 2 || rb == 3);
  if (!ok_rank) {
    throw DimensionError("matmul: unsupported ranks " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const bool a_batched = ra == 3;
  const bool b_batched = rb == 3;
  const std::size_t m = a.shape()[ra - 2];
  const std::size_t k = a.shape()[ra - 1];
  const std::size_t n = b.shape()[rb - 1];
  std::size_t batch = 1;
  if (a_batched) batch = a.shape()[0];
  if (b_batched) batch = b.shape()[0];
  if (b.shape()[rb - 2] != k || (a_batched && b_batched && a.shape()[0] != b.shape()[0])) {
    throw DimensionError("matmul: shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }

  Shape out_shape = (a_batched || b_batched) ? Shape{batch, m, n} : Shape{m, n};
  std::vector<double> out(shape_size(out_shape), 0.0);
  const std::size_t stride_a = a_batched ? m * k : 0;
  const std::size_t stride_b = b_batched ? k * n : 0;
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_nn(a.raw() + t * stride_a, b.raw() + t * stride_b, out.data() + t * m * n, m, k, n);
  }

  return make_result(Tensor(std::move(out_shape), std::move(out)), {&a, &b},
                     [a, b, batch, m, k, n, stride_a, stride_b](std::span<const double> g, GradSpans& gin) {
                       for (std::size_t t = 0; t < batch; ++t) {
                         const double* gt = g.data() + t * m * n;
                         if (!gin[0].empty()) gemm_nt(gt, b.raw() + t * stride_b, gin[0].data() + t * stride_a, m, n, k);
                         if (!gin[1].empty()) gemm_tn(a.raw() + t * stride_a, gt, gin[1].data() + t * stride_b, m, k, n);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose: rank < 2 for shape " + shape_string(a.shape()));
  const std::size_t r = a.shape()[a.rank() - 2];
  const std::size_t c = a.shape()[a.rank() - 1];
  const std::size_t batch = a.size() / std::max<std::size_t>(r * c, 1);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<double> out(a.size());
  for (std::size_t t = 0; t < batch; ++t) {
    const double* src = a.raw() + t * r * c;
    double* dst = out.data() + t * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  return make_result(Tensor(std::move(shape), std::move(out)), {&a},
                     [batch, r, c](std::span<const double> g, GradSpans& gin) {
                       for (std::size_t t = 0; t < batch; ++t) {
                         const double* src = g.data() + t * r * c;
                         double* dst = gin[0].data() + t * r * c;
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += src[j * r + i];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  return make_result(Tensor(std::move(shape), a.to_vector()), {&a},
                     [](std::span<const double> g, GradSpans& gin) { accumulate(gin[0], g); });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_at(a.shape(), axis, "slice");
  if (begin > end || end > s.len) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  Shape shape = a.shape();
  shape[axis] = w;
  std::vector<double> out(s.outer * w * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = a.raw() + (o * s.len + begin) * s.inner;
    std::copy(src, src + w * s.inner, out.begin() + static_cast<std::ptrdiff_t>(o * w * s.inner));
  }
  return make_result(Tensor(std::move(shape), std::move(out)), {&a},
                     [s, begin, w](std::span<const double> g, GradSpans& gin) {
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         double* dst = gin[0].data() + (o * s.len + begin) * s.inner;
                         const double* src = g.data() + o * w * s.inner;
                         for (std::size_t i = 0; i < w * s.inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  const auto s0 = split_at(ref, axis, "concat");
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t i = 0; ok && i < ref.size(); ++i) ok = i == axis || p.shape()[i] == ref[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_string(p.shape()) + " incompatible with " + shape_string(ref) +
                           " along axis " + std::to_string(axis));
    }
    lens.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape shape = ref;
  shape[axis] = total;
  std::vector<double> out(s0.outer * total * s0.inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = lens[k] * s0.inner;
    for (std::size_t o = 0; o < s0.outer; ++o) {
      const double* src = parts[k].raw() + o * w;
      std::copy(src, src + w, out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * s0.inner));
    }
    offset += lens[k];
  }
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  const std::size_t outer = s0.outer;
  const std::size_t inner = s0.inner;
  return make_result(Tensor(std::move(shape), std::move(out)), inputs,
                     [lens, total, outer, inner](std::span<const double> g, GradSpans& gin) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < lens.size(); ++k) {
                         const std::size_t w = lens[k] * inner;
                         if (!gin[k].empty()) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = g.data() + (o * total + offset) * inner;
                             double* dst = gin[k].data() + o * w;
                             for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
                           }
                         }
                         offset += lens[k];
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(Tensor::scalar(s), {&a}, [](std::span<const double> g, GradSpans& gin) {
    for (double& v : gin[0]) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  const auto s = split_at(a.shape(), axis, "sum_axis");
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += a[(o * s.len + l) * s.inner + i];
  return make_result(Tensor(std::move(shape), std::move(out)), {&a}, [s](std::span<const double> g, GradSpans& gin) {
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) gin[0][(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
  });
}

Tensor norm_axis(const Tensor& a, std::size_t axis) {
  const auto s = split_at(a.shape(), axis, "norm_axis");
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double v = a[(o * s.len + l) * s.inner + i];
        acc += v * v;
      }
      out[o * s.inner + i] = std::sqrt(acc);
    }
  Tensor result(std::move(shape), std::move(out));
  return make_result(result, {&a}, [a, result, s](std::span<const double> g, GradSpans& gin) {
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double norm = result[o * s.inner + i];
        if (norm == 0.0) continue;
        const double factor = g[o * s.inner + i] / norm;
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t idx = (o * s.len + l) * s.inner + i;
          gin[0][idx] += factor * a[idx];
        }
      }
  });
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw DimensionError("conv1d: input must be [C x T] or [B x C x T], got " + shape_string(input.shape()));
  }
  if (kernels.rank() != 3) throw DimensionError("conv1d: kernels must be [C_out x C_in x W], got " + shape_string(kernels.shape()));
  const bool batched = input.rank() == 3;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t c_in = input.shape()[input.rank() - 2];
  const std::size_t t_in = input.shape()[input.rank() - 1];
  const std::size_t c_out = kernels.dim(0);
  const std::size_t width = kernels.dim(2);
  if (kernels.dim(1) != c_in) {
    throw DimensionError("conv1d: kernels " + shape_string(kernels.shape()) + " do not match input channels of " +
                         shape_string(input.shape()));
  }
  const bool has_bias = bias.size() > 0;
  if (has_bias && bias.shape() != Shape{c_out}) {
    throw DimensionError("conv1d: bias " + shape_string(bias.shape()) + " does not match " + std::to_string(c_out) +
                         " output channels");
  }
  if (t_in < width) {
    throw DimensionError("conv1d: temporal length " + std::to_string(t_in) + " shorter than kernel width " +
                         std::to_string(width));
  }
  const std::size_t t_out = t_in - width + 1;
  Shape shape = batched ? Shape{batch, c_out, t_out} : Shape{c_out, t_out};
  std::vector<double> out(shape_size(shape), 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < c_out; ++o) {
      double* y = out.data() + (b * c_out + o) * t_out;
      if (has_bias) std::fill(y, y + t_out, bias[o]);
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* x = input.raw() + (b * c_in + c) * t_in;
        const double* k = kernels.raw() + (o * c_in + c) * width;
        for (std::size_t w = 0; w < width; ++w) {
          const double kw = k[w];
          for (std::size_t t = 0; t < t_out; ++t) y[t] += kw * x[t + w];
        }
      }
    }
  return make_result(
      Tensor(std::move(shape), std::move(out)), {&input, &kernels, &bias},
      [input, kernels, batch, c_in, c_out, width, t_in, t_out](std::span<const double> g, GradSpans& gin) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < c_out; ++o) {
            const double* gy = g.data() + (b * c_out + o) * t_out;
            if (!gin[2].empty()) {
              for (std::size_t t = 0; t < t_out; ++t) gin[2][o] += gy[t];
            }
            for (std::size_t c = 0; c < c_in; ++c) {
              const std::size_t xoff = (b * c_in + c) * t_in;
              const std::size_t koff = (o * c_in + c) * width;
              for (std::size_t w = 0; w < width; ++w) {
                if (!gin[0].empty()) {
                  const double kw = kernels[koff + w];
                  double* dx = gin[0].data() + xoff + w;
                  for (std::size_t t = 0; t < t_out; ++t) dx[t] += kw * gy[t];
                }
                if (!gin[1].empty()) {
                  const double* x = input.raw() + xoff + w;
                  double acc = 0.0;
                  for (std::size_t t = 0; t < t_out; ++t) acc += x[t] * gy[t];
                  gin[1][koff + w] += acc;
                }
              }
            }
          }
      });
}

RunningStats RunningStats::standard(std::size_t channels) {
  return RunningStats{Tensor::zeros({channels}), Tensor::full({channels}, 1.0), true};
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats, Mode mode,
                 const BatchNormOptions& options) {
  if (input.rank() == 0) throw DimensionError("batchnorm: scalar input");
  const std::size_t channels = input.shape().back();
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw DimensionError("batchnorm: gamma " + shape_string(gamma.shape()) + " / beta " + shape_string(beta.shape()) +
                         " do not match input " + shape_string(input.shape()));
  }
  const std::size_t count = input.size() / channels;
  std::vector<double> out(input.size());

  if (mode == Mode::eval) {
    if (!stats.initialized) throw StateError("batchnorm: eval mode with uninitialized running statistics");
    if (stats.mean.shape() != Shape{channels} || stats.var.shape() != Shape{channels}) {
      throw DimensionError("batchnorm: running statistics do not match " + std::to_string(channels) + " channels");
    }
    std::vector<double> inv(channels);
    for (std::size_t c = 0; c < channels; ++c) inv[c] = 1.0 / std::sqrt(stats.var[c] + options.eps);
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = r * channels + c;
        out[i] = gamma[c] * (input[i] - stats.mean[c]) * inv[c] + beta[c];
      }
    const Tensor running_mean = stats.mean;
    return make_result(Tensor(input.shape(), std::move(out)), {&input, &gamma, &beta},
                       [input, gamma, running_mean, inv, count, channels](std::span<const double> g, GradSpans& gin) {
                         for (std::size_t r = 0; r < count; ++r)
                           for (std::size_t c = 0; c < channels; ++c) {
                             const std::size_t i = r * channels + c;
                             if (!gin[0].empty()) gin[0][i] += g[i] * gamma[c] * inv[c];
                             if (!gin[1].empty()) gin[1][c] += g[i] * (input[i] - running_mean[c]) * inv[c];
                             if (!gin[2].empty()) gin[2][c] += g[i];
                           }
                       });
  }

  std::vector<double> mu(channels, 0.0);
  std::vector<double> var(channels, 0.0);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < channels; ++c) mu[c] += input[r * channels + c];
  for (auto& m : mu) m /= static_cast<double>(count);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = input[r * channels + c] - mu[c];
      var[c] += d * d;
    }
  for (auto& v : var) v /= static_cast<double>(count);

  std::vector<double> inv(channels);
  for (std::size_t c = 0; c < channels; ++c) inv[c] = 1.0 / std::sqrt(var[c] + options.eps);
  std::vector<double> xhat(input.size());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = r * channels + c;
      xhat[i] = (input[i] - mu[c]) * inv[c];
      out[i] = gamma[c] * xhat[i] + beta[c];
    }

  // Running variance uses the unbiased estimate.
  const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
  std::vector<double> new_mean(channels);
  std::vector<double> new_var(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (stats.initialized) {
      new_mean[c] = (1.0 - options.momentum) * stats.mean[c] + options.momentum * mu[c];
      new_var[c] = (1.0 - options.momentum) * stats.var[c] + options.momentum * var[c] * unbias;
    } else {
      new_mean[c] = mu[c];
      new_var[c] = var[c] * unbias;
    }
  }
  stats.mean = Tensor({channels}, std::move(new_mean));
  stats.var = Tensor({channels}, std::move(new_var));
  stats.initialized = true;

  return make_result(
      Tensor(input.shape(), std::move(out)), {&input, &gamma, &beta},
      [gamma, xhat = std::move(xhat), inv, count, channels](std::span<const double> g, GradSpans& gin) {
        std::vector<double> sum_dxhat(channels, 0.0);
        std::vector<double> sum_dxhat_xhat(channels, 0.0);
        for (std::size_t r = 0; r < count; ++r)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            const double dxhat = g[i] * gamma[c];
            sum_dxhat[c] += dxhat;
            sum_dxhat_xhat[c] += dxhat * xhat[i];
            if (!gin[1].empty()) gin[1][c] += g[i] * xhat[i];
            if (!gin[2].empty()) gin[2][c] += g[i];
          }
        if (gin[0].empty()) return;
        const double n = static_cast<double>(count);
        for (std::size_t r = 0; r < count; ++r)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t i = r * channels + c;
            const double dxhat = g[i] * gamma[c];
            gin[0][i] += inv[c] / n * (n * dxhat - sum_dxhat[c] - xhat[i] * sum_dxhat_xhat[c]);
          }
      });
}

Tensor dropout(const Tensor& input, double rate, Rng& rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(input.size());
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    out[i] = input[i] * mask[i];
  }
  return make_result(Tensor(input.shape(), std::move(out)), {&input},
                     [mask = std::move(mask)](std::span<const double> g, GradSpans& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * mask[i];
                     });
}

Normalized normalize_rows(const Tensor& a) {
  if (a.rank() != 1 && a.rank() != 2) {
    throw DimensionError("normalize_rows: expected [n] or [B x n], got " + shape_string(a.shape()));
  }
  const std::size_t n = a.shape().back();
  const std::size_t rows = n == 0 ? 0 : a.size() / n;
  std::vector<double> out(a.size());
  std::vector<double> sums(rows, 0.0);
  std::vector<bool> fallback(rows, false);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[r * n + i];
    sums[r] = s;
    if (s > 0.0) {
      for (std::size_t i = 0; i < n; ++i) out[r * n + i] = a[r * n + i] / s;
    } else {
      fallback[r] = true;
      for (std::size_t i = 0; i < n; ++i) out[r * n + i] = 1.0 / static_cast<double>(n);
    }
  }
  Tensor values(a.shape(), std::move(out));
  Tensor tracked = make_result(values, {&a}, [values, sums, fallback, n](std::span<const double> g, GradSpans& gin) {
    for (std::size_t r = 0; r < sums.size(); ++r) {
      if (fallback[r]) continue;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * values[r * n + i];
      for (std::size_t i = 0; i < n; ++i) gin[0][r * n + i] += (g[r * n + i] - dot) / sums[r];
    }
  });
  return Normalized{std::move(tracked), std::move(fallback)};
}

Tensor sliding_windows(const Tensor& input, std::size_t width, std::size_t count) {
  if (input.rank() != 3) throw DimensionError("sliding_windows: expected [B x C x T], got " + shape_string(input.shape()));
  const std::size_t batch = input.dim(0);
  const std::size_t channels = input.dim(1);
  const std::size_t frames = input.dim(2);
  if (width == 0 || count == 0 || count + width - 1 > frames) {
    throw DimensionError("sliding_windows: " + std::to_string(count) + " windows of width " + std::to_string(width) +
                         " do not fit in " + std::to_string(frames) + " frames");
  }
  Shape shape{batch, count, channels, width};
  std::vector<double> out(shape_size(shape));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = input.raw() + (b * channels + c) * frames + i;
        double* dst = out.data() + ((b * count + i) * channels + c) * width;
        std::copy(src, src + width, dst);
      }
  return make_result(Tensor(std::move(shape), std::move(out)), {&input},
                     [batch, channels, frames, width, count](std::span<const double> g, GradSpans& gin) {
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t i = 0; i < count; ++i)
                           for (std::size_t c = 0; c < channels; ++c) {
                             double* dst = gin[0].data() + (b * channels + c) * frames + i;
                             const double* src = g.data() + ((b * count + i) * channels + c) * width;
                             for (std::size_t w = 0; w < width; ++w) dst[w] += src[w];
                           }
                     });
}

}  // namespace freqmrn
