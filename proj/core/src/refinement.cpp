#include "freqmrn/refinement.hpp"

#include <algorithm>
#include <cmath>

#include "freqmrn/error.hpp"

namespace freqmrn {
namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

GraphConvParams init_gc(std::size_t nodes, std::size_t c_in, std::size_t c_out, Rng& rng) {
  return GraphConvParams{uniform_tensor({nodes, nodes}, 1.0 / std::sqrt(static_cast<double>(nodes)), rng),
                         uniform_tensor({c_in, c_out}, 1.0 / std::sqrt(static_cast<double>(c_in)), rng)};
}

GraphLayerParams init_block(std::size_t nodes, std::size_t c_in, std::size_t c_out, Rng& rng) {
  return GraphLayerParams{init_gc(nodes, c_in, c_out, rng), Tensor::full({c_out}, 1.0), Tensor::zeros({c_out}),
                          RunningStats::standard(c_out)};
}

}  // namespace

GlmParams init_glm(std::size_t nodes, std::size_t channels, std::size_t latent, std::size_t residual_pairs, Rng& rng) {
  if (nodes == 0 || channels == 0 || latent == 0) throw ConfigError("graph learning module needs positive sizes");
  GlmParams glm;
  glm.blocks.push_back(init_block(nodes, channels, latent, rng));
  for (std::size_t i = 0; i < 2 * residual_pairs; ++i) glm.blocks.push_back(init_block(nodes, latent, latent, rng));
  glm.output = GraphConvParams{init_gc(nodes, latent, channels, rng).adjacency, Tensor::zeros({latent, channels})};
  return glm;
}

RefinementParams init_refinement(std::size_t nodes, std::size_t channels, std::size_t latent, std::size_t stages,
                                 std::size_t residual_pairs, Rng& rng) {
  if (stages == 0) throw ConfigError("refinement needs at least one stage");
  RefinementParams params;
  for (std::size_t n = 0; n < stages; ++n) params.stages.push_back(init_glm(nodes, channels, latent, residual_pairs, rng));
  return params;
}

Tensor pad_query(const Tensor& query, std::size_t future) {
  if (query.rank() < 2 || query.shape().back() == 0) {
    throw DimensionError("pad_query: expected [.. x L] with L >= 1, got " + shape_string(query.shape()));
  }
  if (future == 0) return query;
  const std::size_t axis = query.rank() - 1;
  const std::size_t length = query.shape().back();
  const Tensor last = slice(query, axis, length - 1, length);
  std::vector<Tensor> parts{query};
  parts.insert(parts.end(), future, last);
  return concat(parts, axis);
}

Tensor graph_conv(const Tensor& input, const GraphConvParams& params) {
  const std::size_t nodes = params.adjacency.dim(0);
  if (input.rank() < 2 || input.shape()[input.rank() - 2] != nodes) {
    throw DimensionError("graph_conv: input " + shape_string(input.shape()) + " does not match adjacency " +
                         shape_string(params.adjacency.shape()));
  }
  if (input.shape().back() != params.weights.dim(0)) {
    throw DimensionError("graph_conv: input " + shape_string(input.shape()) + " does not match weights " +
                         shape_string(params.weights.shape()));
  }
  return matmul(matmul(params.adjacency, input), params.weights);
}

Tensor graph_learning_block(const Tensor& input, GraphLayerParams& params, const GraphContext& ctx) {
  Tensor y = graph_conv(input, params.gc);
  y = batchnorm(y, params.gamma, params.beta, params.stats, ctx.mode, ctx.batchnorm);
  y = tanh(y);
  if (ctx.mode == Mode::train && ctx.dropout > 0.0) {
    if (!ctx.rng) throw ConfigError("train-mode dropout needs a random generator");
    y = dropout(y, ctx.dropout, *ctx.rng, ctx.mode);
  }
  return y;
}

Tensor glm_forward(const Tensor& input, GlmParams& params, const GraphContext& ctx) {
  if (params.blocks.empty() || params.blocks.size() % 2 == 0) {
    throw ConfigError("graph learning module needs 1 + 2M blocks, got " + std::to_string(params.blocks.size()));
  }
  if (input.shape().back() != params.output.weights.dim(1)) {
    throw DimensionError("glm_forward: input " + shape_string(input.shape()) + " does not carry " +
                         std::to_string(params.output.weights.dim(1)) + " channels");
  }
  Tensor g = graph_learning_block(input, params.blocks[0], ctx);
  for (std::size_t k = 1; k + 1 < params.blocks.size(); k += 2) {
    const Tensor inner = graph_learning_block(g, params.blocks[k], ctx);
    g = add(graph_learning_block(inner, params.blocks[k + 1], ctx), g);
  }
  return graph_conv(g, params.output);
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g) {
  if (g.rank() == 0 || g.shape().back() % 2 != 0) {
    throw DimensionError("split_channels: needs an even channel count, got " + shape_string(g.shape()));
  }
  const std::size_t axis = g.rank() - 1;
  const std::size_t half = g.shape().back() / 2;
  return {slice(g, axis, 0, half), slice(g, axis, half, 2 * half)};
}

RefineResult refine(const Tensor& query, const std::optional<Tensor>& summary, RefinementParams& params,
                    const DctBasis& basis, const GraphContext& ctx, std::size_t stage_limit) {
  if (params.stages.empty()) throw ConfigError("refinement needs at least one stage");
  if (query.rank() < 2) throw DimensionError("refine: query must be [P x L] or [B x P x L]");
  const std::size_t length = query.shape().back();
  if (basis.size() <= length) {
    throw ConfigError("refine: basis of size " + std::to_string(basis.size()) + " leaves no future frames after " +
                      std::to_string(length) + " query frames");
  }
  const std::size_t span = basis.size();
  const std::size_t expected_channels = summary ? 2 * span : span;
  if (summary && (summary->shape().back() != span || summary->rank() != query.rank())) {
    throw ConfigError("refine: summary " + shape_string(summary->shape()) + " does not match a window of " +
                      std::to_string(span) + " frames");
  }

  const std::size_t axis = query.rank() - 1;
  Tensor x = pad_query(query, span - length);
  std::optional<Tensor> s = summary;
  RefineResult result;
  const std::size_t stages = std::min(stage_limit, params.stages.size());
  for (std::size_t n = 0; n < stages; ++n) {
    GlmParams& glm = params.stages[n];
    if (glm.output.weights.dim(1) != expected_channels) {
      throw ConfigError("refine: stage " + std::to_string(n + 1) + " expects " +
                        std::to_string(glm.output.weights.dim(1)) + " channels, input has " +
                        std::to_string(expected_channels));
    }
    const Tensor g = s ? concat({dct(*s, basis), dct(x, basis)}, axis) : dct(x, basis);
    const Tensor refined = add(glm_forward(g, glm, ctx), g);
    if (s) {
      auto [s_freq, x_freq] = split_channels(refined);
      s = idct(s_freq, basis);
      x = idct(x_freq, basis);
      result.summaries.push_back(*s);
    } else {
      x = idct(refined, basis);
    }
    result.stage_outputs.push_back(x);
  }
  result.prediction = x;
  return result;
}

}  // namespace freqmrn
