#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "freqmrn/attention.hpp"
#include "freqmrn/ops.hpp"
#include "freqmrn/refinement.hpp"
#include "freqmrn/rng.hpp"
#include "freqmrn/transforms.hpp"

namespace freqmrn {

struct ModelConfig {
  std::size_t history = 50;        // H
  std::size_t query = 10;          // L
  std::size_t future = 10;         // F
  std::size_t stages = 3;          // N
  std::size_t residual_pairs = 2;  // M, K = 1 + 2M blocks per stage
  std::size_t latent = 256;        // d
  double dropout = 0.3;
  double batchnorm_eps = 1e-5;
  double batchnorm_momentum = 0.1;
  bool attention_bias = true;
  /// Concatenate the motion summary with the prediction in every stage.
  bool use_summary = true;

  std::size_t blocks() const { return 1 + 2 * residual_pairs; }
  std::size_t window() const { return query + future; }
  /// Throws ConfigError on inconsistent values.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Motion attention plus multi-stage refinement for a fixed joint count.
class Model {
 public:
  Model(const ModelConfig& config, std::size_t joints, Rng& rng);

  const ModelConfig& config() const { return config_; }
  std::size_t joints() const { return joints_; }
  std::size_t channels() const { return 3 * joints_; }
  const DctBasis& basis() const { return basis_; }

  AttentionParams& attention() { return attention_; }
  const AttentionParams& attention() const { return attention_; }
  RefinementParams& refinement() { return refinement_; }
  const RefinementParams& refinement() const { return refinement_; }

  struct Output {
    Tensor prediction;                   // [B x P x (L + F)]
    std::vector<Tensor> stage_outputs;   // N entries
    std::optional<MotionSummary> summary;
    std::size_t refine_passes = 0;
  };

  /// history [B x P x T] with T >= L (T >= L + F when the summary is used).
  Output forward(const Tensor& history, Mode mode, Rng* rng = nullptr,
                 std::size_t stage_limit = std::numeric_limits<std::size_t>::max());

  /// Visits every learnable tensor in a fixed order with a stable name.
  void for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void for_each_running_stats(const std::function<void(const std::string&, RunningStats&)>& fn);
  void for_each_running_stats(const std::function<void(const std::string&, const RunningStats&)>& fn) const;

  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  std::size_t joints_;
  DctBasis basis_;
  AttentionParams attention_;
  RefinementParams refinement_;
};

}  // namespace freqmrn
