#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "freqmrn/tensor.hpp"

namespace freqmrn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 penalty folded into the gradient; 0 disables it.
  double weight_decay = 0.0;

  bool operator==(const AdamOptions&) const = default;
};

/// First/second moments mirror the parameter list; empty before the first step.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Returns the new parameter values (untracked).
/// Throws DimensionError when params, grads and moments disagree in count or shape.
std::vector<Tensor> adam_step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                              double lr, const AdamOptions& options = {});

/// initial_lr * decay^epoch.
double lr_schedule(std::size_t epoch, double initial_lr, double decay);

/// Rescales `grads` so their joint Euclidean norm is at most `max_norm`.
/// Returns the norm before rescaling.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace freqmrn
