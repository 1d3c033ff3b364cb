#include "freqmrn/losses.hpp"

#include <cmath>

#include "freqmrn/error.hpp"
#include "freqmrn/ops.hpp"

namespace freqmrn {
namespace {

Tensor as_batch(const Tensor& t, const char* op) {
  if (t.rank() == 3 && t.dim(2) == 3) return reshape(t, {1, t.dim(0), t.dim(1), 3});
  if (t.rank() == 4 && t.dim(3) == 3) return t;
  throw DimensionError(std::string(op) + ": expected [T x J x 3] or [B x T x J x 3], got " + shape_string(t.shape()));
}

void check_pair(const Tensor& pred, const Tensor& truth, const char* op) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError(std::string(op) + ": prediction " + shape_string(pred.shape()) + " vs ground truth " +
                         shape_string(truth.shape()));
  }
}

// Per-joint Euclidean error [B x T x J].
Tensor joint_errors(const Tensor& pred, const Tensor& truth) { return norm_axis(sub(pred, truth), 3); }

}  // namespace

std::string_view temporal_form_name(TemporalForm form) {
  return form == TemporalForm::literal ? "literal" : "shifted";
}

TemporalForm parse_temporal_form(std::string_view name) {
  if (name == "literal") return TemporalForm::literal;
  if (name == "shifted") return TemporalForm::shifted;
  throw ConfigError("unknown temporal form '" + std::string(name) + "'");
}

SpatialFactors spatial_factors(const Skeleton& skeleton, double floor) {
  if (!(floor > 0.0)) throw ConfigError("spatial floor must be positive");
  const double to_mm = millimeters_per_unit(skeleton.units());
  SpatialFactors out;
  std::vector<double> values(skeleton.joint_count(), floor);
  for (std::size_t j = 0; j < skeleton.joint_count(); ++j) {
    const auto [chain, position] = skeleton.position_of(j);
    if (position == 0) continue;
    const double bones = static_cast<double>(skeleton.chains()[chain].bone_lengths.size());
    const double length_mm = cumulative_bone_length(skeleton, chain, position) * to_mm;
    const double factor = static_cast<double>(position) / bones * std::log(length_mm);
    if (factor < floor) {
      out.diagnostics.push_back("joint " + std::to_string(j) + " ('" + skeleton.joint_names()[j] +
                                "'): cumulative length " + std::to_string(length_mm) +
                                " mm gives a factor below the floor; clamped");
      continue;
    }
    values[j] = factor;
  }
  out.values = Tensor({skeleton.joint_count()}, std::move(values));
  return out;
}

Tensor temporal_factors(std::size_t query, std::size_t future, TemporalForm form) {
  if (query == 0 || future == 0) throw ConfigError("temporal factors need L >= 1 and F >= 1");
  const std::size_t span = query + future;
  const double shift = form == TemporalForm::shifted ? 1.0 : 0.0;
  std::vector<double> t(span);
  for (std::size_t i = 0; i < span; ++i) {
    const std::size_t f = i + 1;  // 1-based frame index
    t[i] = f > query ? static_cast<double>(future + query - f) + shift : 1.0;
  }
  return Tensor({span}, std::move(t));
}

LossWeights assemble_lambda(const Tensor& spatial, const Tensor& temporal) {
  if (spatial.rank() != 1 || temporal.rank() != 1 || spatial.size() == 0 || temporal.size() == 0) {
    throw DimensionError("assemble_lambda: expects non-empty vectors, got " + shape_string(spatial.shape()) + " and " +
                         shape_string(temporal.shape()));
  }
  const std::size_t joints = spatial.size();
  const std::size_t frames = temporal.size();
  double total = 0.0;
  for (double s : spatial.data()) {
    if (s < 0.0) throw ConfigError("assemble_lambda: negative spatial factor");
  }
  for (double t : temporal.data()) {
    if (t < 0.0) throw ConfigError("assemble_lambda: negative temporal factor");
  }
  std::vector<double> lambda(frames * joints);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t j = 0; j < joints; ++j) {
      lambda[f * joints + j] = temporal[f] * spatial[j];
      total += lambda[f * joints + j];
    }
  if (!(total > 0.0)) throw ConfigError("assemble_lambda: all weights are zero");
  const double c = static_cast<double>(frames * joints) / total;
  for (auto& v : lambda) v *= c;
  return LossWeights{Tensor({frames, joints}, std::move(lambda)), spatial.detached(), temporal.detached()};
}

Tensor loss_st(const Tensor& pred, const Tensor& truth, const LossWeights& weights) {
  check_pair(pred, truth, "loss_st");
  const Tensor p = as_batch(pred, "loss_st");
  const Tensor t = as_batch(truth, "loss_st");
  const std::size_t batch = p.dim(0);
  const std::size_t frames = p.dim(1);
  const std::size_t joints = p.dim(2);
  if (weights.lambda.shape() != Shape{frames, joints}) {
    throw DimensionError("loss_st: weights " + shape_string(weights.lambda.shape()) + " do not match " +
                         std::to_string(frames) + " frames x " + std::to_string(joints) + " joints");
  }
  std::vector<double> tiled;
  tiled.reserve(batch * frames * joints);
  for (std::size_t b = 0; b < batch; ++b) tiled.insert(tiled.end(), weights.lambda.data().begin(), weights.lambda.data().end());
  const Tensor lambda({batch, frames, joints}, std::move(tiled));
  return scale(sum(mul(joint_errors(p, t), lambda)), 1.0 / static_cast<double>(batch * frames * joints));
}

Tensor loss_velocity(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "loss_velocity");
  const Tensor p = as_batch(pred, "loss_velocity");
  const Tensor t = as_batch(truth, "loss_velocity");
  const std::size_t frames = p.dim(1);
  if (frames < 2) throw DimensionError("loss_velocity: needs at least 2 frames, got " + std::to_string(frames));
  const Tensor vp = sub(slice(p, 1, 1, frames), slice(p, 1, 0, frames - 1));
  const Tensor vt = sub(slice(t, 1, 1, frames), slice(t, 1, 0, frames - 1));
  return mean(joint_errors(vp, vt));
}

Tensor loss_total(const Tensor& pred, const Tensor& truth, const LossWeights& weights, const LossConfig& config,
                  std::size_t query) {
  if (!config.use_st_loss && !config.use_velocity) throw ConfigError("loss: every component is disabled");
  check_pair(pred, truth, "loss_total");
  const Tensor p = as_batch(pred, "loss_total");
  const Tensor t = as_batch(truth, "loss_total");
  const std::size_t frames = p.dim(1);
  if (weights.temporal.size() != frames || query >= frames) {
    throw DimensionError("loss_total: window of " + std::to_string(frames) + " frames does not match weights over " +
                         std::to_string(weights.temporal.size()) + " frames with query length " +
                         std::to_string(query));
  }

  Tensor window_pred = p;
  Tensor window_truth = t;
  Tensor spatial = weights.spatial;
  Tensor temporal = weights.temporal;
  if (!config.reconstruct_query) {
    window_pred = slice(p, 1, query, frames);
    window_truth = slice(t, 1, query, frames);
    temporal = slice(weights.temporal, 0, query, frames);
  }
  if (!config.use_st_weights) {
    spatial = Tensor::full(spatial.shape(), 1.0);
    temporal = Tensor::full(temporal.shape(), 1.0);
  }

  Tensor total = Tensor::scalar(0.0);
  if (config.use_st_loss) total = add(total, loss_st(window_pred, window_truth, assemble_lambda(spatial, temporal)));
  if (config.use_velocity) total = add(total, loss_velocity(window_pred, window_truth));
  return total;
}

Objective::Objective(const Skeleton& skeleton, std::size_t query, std::size_t future, const LossConfig& config)
    : config_(config), query_(query) {
  SpatialFactors spatial = spatial_factors(skeleton, config.spatial_floor);
  diagnostics_ = std::move(spatial.diagnostics);
  weights_ = assemble_lambda(spatial.values, temporal_factors(query, future, config.temporal_form));
}

Tensor Objective::operator()(const Tensor& pred, const Tensor& truth) const {
  return loss_total(pred, truth, weights_, config_, query_);
}

}  // namespace freqmrn
