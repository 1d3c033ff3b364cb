#include "freqmrn/optim.hpp"

#include <cmath>
#include <string>

#include "freqmrn/error.hpp"

namespace freqmrn {

std::vector<Tensor> adam_step(const std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                              double lr, const AdamOptions& options) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros(p.shape()));
      state.v.push_back(Tensor::zeros(p.shape()));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape() ||
        state.v[i].shape() != params[i].shape()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           shape_string(params[i].shape()) + " but gradient " + shape_string(grads[i].shape()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);

  std::vector<Tensor> updated;
  updated.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto p = params[i].data();
    const auto g = grads[i].data();
    std::vector<double> m = state.m[i].to_vector();
    std::vector<double> v = state.v[i].to_vector();
    std::vector<double> out(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double grad = g[k] + options.weight_decay * p[k];
      m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * grad;
      v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * grad * grad;
      out[k] = p[k] - lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + options.epsilon);
    }
    state.m[i] = Tensor(params[i].shape(), std::move(m));
    state.v[i] = Tensor(params[i].shape(), std::move(v));
    updated.emplace_back(params[i].shape(), std::move(out));
  }
  return updated;
}

double lr_schedule(std::size_t epoch, double initial_lr, double decay) {
  return initial_lr * std::pow(decay, static_cast<double>(epoch));
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.data()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& g : grads) {
      std::vector<double> scaled = g.to_vector();
      for (auto& x : scaled) x *= factor;
      g = Tensor(g.shape(), std::move(scaled));
    }
  }
  return norm;
}

}  // namespace freqmrn
