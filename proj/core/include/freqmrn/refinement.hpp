#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "freqmrn/ops.hpp"
#include "freqmrn/rng.hpp"
#include "freqmrn/tensor.hpp"
#include "freqmrn/transforms.hpp"

namespace freqmrn {

/// A * G * W with a learnable joint adjacency A [P x P] and feature map W.
struct GraphConvParams {
  Tensor adjacency;  // [P x P]
  Tensor weights;    // [c_in x c_out]
};

/// GC -> batch norm -> tanh -> dropout.
struct GraphLayerParams {
  GraphConvParams gc;
  Tensor gamma;  // [c_out]
  Tensor beta;   // [c_out]
  RunningStats stats;
};

/// Entry block, then residual pairs of blocks, then a bare output GC.
struct GlmParams {
  std::vector<GraphLayerParams> blocks;  // 1 + 2M
  GraphConvParams output;

  std::size_t residual_pairs() const { return blocks.empty() ? 0 : (blocks.size() - 1) / 2; }
};

struct RefinementParams {
  std::vector<GlmParams> stages;
};

struct GraphContext {
  Mode mode = Mode::eval;
  /// Required for train-mode dropout.
  Rng* rng = nullptr;
  double dropout = 0.0;
  BatchNormOptions batchnorm;
};

/// Initializes A and W uniformly in +-1/sqrt(fan_in); the output GC of every
/// stage starts at zero so refinement initially returns the padded query.
GlmParams init_glm(std::size_t nodes, std::size_t channels, std::size_t latent, std::size_t residual_pairs, Rng& rng);
RefinementParams init_refinement(std::size_t nodes, std::size_t channels, std::size_t latent, std::size_t stages,
                                 std::size_t residual_pairs, Rng& rng);

/// Appends `future` copies of the last observed frame: [.. x L] -> [.. x (L + F)].
Tensor pad_query(const Tensor& query, std::size_t future);

Tensor graph_conv(const Tensor& input, const GraphConvParams& params);
Tensor graph_learning_block(const Tensor& input, GraphLayerParams& params, const GraphContext& ctx);
Tensor glm_forward(const Tensor& input, GlmParams& params, const GraphContext& ctx);

/// Splits the last axis in half: (summary branch, prediction branch).
std::pair<Tensor, Tensor> split_channels(const Tensor& g);

struct RefineResult {
  Tensor prediction;                  // X_N, [.. x P x (L + F)]
  std::vector<Tensor> stage_outputs;  // X_1 .. X_N
  std::vector<Tensor> summaries;      // S_1 .. S_N (empty without a summary)
};

/// Iterative pose <-> frequency refinement of the padded query. With a
/// summary each stage refines [DCT(S); DCT(X)] jointly; without one it runs
/// the prediction branch alone. `stage_limit` truncates to the first stages.
RefineResult refine(const Tensor& query, const std::optional<Tensor>& summary, RefinementParams& params,
                    const DctBasis& basis, const GraphContext& ctx,
                    std::size_t stage_limit = std::numeric_limits<std::size_t>::max());

}  // namespace freqmrn
