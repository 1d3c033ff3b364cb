#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "freqmrn/kinematics.hpp"
#include "freqmrn/tensor.hpp"

namespace freqmrn {

enum class TemporalForm {
  /// 1 on the query frames, F - f + L on future frame f (final frame gets 0).
  literal,
  /// Future branch shifted by +1 so the final frame keeps weight 1.
  shifted,
};

std::string_view temporal_form_name(TemporalForm form);
TemporalForm parse_temporal_form(std::string_view name);

struct LossConfig {
  bool use_st_loss = true;
  /// Kinematic/temporal weights in the spatial-temporal term (else all 1).
  bool use_st_weights = true;
  bool use_velocity = true;
  /// Supervise the L reconstructed query frames as well as the F future ones.
  bool reconstruct_query = true;
  /// Also supervise the outputs of stages 1 .. N-1.
  bool supervise_stages = false;
  double spatial_floor = 0.1;
  TemporalForm temporal_form = TemporalForm::shifted;

  bool operator==(const LossConfig&) const = default;
};

struct SpatialFactors {
  Tensor values;  // [J]
  /// Joints whose log cumulative length fell to the floor.
  std::vector<std::string> diagnostics;
};

/// (j'/l(c)) * ln(cumulative bone length in mm) for joint j at position j' of
/// its first chain c, clamped below by `floor`. Chain roots get the floor.
SpatialFactors spatial_factors(const Skeleton& skeleton, double floor = 0.1);

Tensor temporal_factors(std::size_t query, std::size_t future, TemporalForm form);

/// lambda[f][j] = c * temporal[f] * spatial[j], normalized to sum to J * T.
struct LossWeights {
  Tensor lambda;    // [T x J]
  Tensor spatial;   // [J]
  Tensor temporal;  // [T]
};

LossWeights assemble_lambda(const Tensor& spatial, const Tensor& temporal);

/// Lambda-weighted mean per-joint Euclidean error. pred/truth are
/// [T x J x 3] or [B x T x J x 3]; batches are averaged.
Tensor loss_st(const Tensor& pred, const Tensor& truth, const LossWeights& weights);

/// Mean per-joint Euclidean error of frame-to-frame displacements.
Tensor loss_velocity(const Tensor& pred, const Tensor& truth);

/// Sum of the enabled terms over the supervised window. `weights` covers the
/// full L + F window; when the query is not reconstructed both terms are
/// restricted to the last F frames and the weights are renormalized there.
Tensor loss_total(const Tensor& pred, const Tensor& truth, const LossWeights& weights, const LossConfig& config,
                  std::size_t query);

/// Loss for one skeleton and window geometry, weights assembled once.
class Objective {
 public:
  Objective(const Skeleton& skeleton, std::size_t query, std::size_t future, const LossConfig& config);

  Tensor operator()(const Tensor& pred, const Tensor& truth) const;

  const LossWeights& weights() const { return weights_; }
  const LossConfig& config() const { return config_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  LossConfig config_;
  std::size_t query_;
  LossWeights weights_;
  std::vector<std::string> diagnostics_;
};

}  // namespace freqmrn
