#include "freqmrn/model.hpp"

#include "freqmrn/error.hpp"

namespace freqmrn {

void ModelConfig::validate() const {
  if (query == 0) throw ConfigError("model.query (L) must be at least 1");
  if (future == 0) throw ConfigError("model.future (F) must be at least 1");
  if (stages == 0) throw ConfigError("model.stages (N) must be at least 1");
  if (latent == 0) throw ConfigError("model.latent (d) must be at least 1");
  if (history < query) throw ConfigError("model.history (H) must be at least the query length");
  if (use_summary && history < query + future) {
    throw ConfigError("model.history (H) must be at least L + F when the motion summary is used");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (!(batchnorm_eps > 0.0)) throw ConfigError("model.batchnorm_eps must be positive");
  if (!(batchnorm_momentum >= 0.0 && batchnorm_momentum <= 1.0)) {
    throw ConfigError("model.batchnorm_momentum must lie in [0, 1]");
  }
}

Model::Model(const ModelConfig& config, std::size_t joints, Rng& rng)
    : config_(config), joints_(joints), basis_((config.validate(), config.window())) {
  if (joints == 0) throw ConfigError("model needs at least one joint");
  const std::size_t p = channels();
  if (config_.use_summary) {
    attention_ = AttentionParams::init(p, config_.latent, config_.query, config_.attention_bias, rng);
  }
  const std::size_t glm_channels = config_.use_summary ? 2 * config_.window() : config_.window();
  refinement_ = init_refinement(p, glm_channels, config_.latent, config_.stages, config_.residual_pairs, rng);
}

Model::Output Model::forward(const Tensor& history, Mode mode, Rng* rng, std::size_t stage_limit) {
  if (history.rank() != 3 || history.dim(1) != channels()) {
    throw DimensionError("model expects history [B x " + std::to_string(channels()) + " x T], got " +
                         shape_string(history.shape()));
  }
  const std::size_t frames = history.dim(2);
  if (frames < config_.query) {
    throw DimensionError("history of " + std::to_string(frames) + " frames is shorter than the query length");
  }
  Output out;
  std::optional<Tensor> summary;
  if (config_.use_summary) {
    out.summary = summarize(history, attention_, config_.query, config_.future);
    summary = out.summary->values;
  }
  const Tensor query = slice(history, 2, frames - config_.query, frames);
  GraphContext ctx{mode, rng, config_.dropout, BatchNormOptions{config_.batchnorm_eps, config_.batchnorm_momentum}};
  RefineResult r = refine(query, summary, refinement_, basis_, ctx, stage_limit);
  out.prediction = std::move(r.prediction);
  out.stage_outputs = std::move(r.stage_outputs);
  out.refine_passes = 1;
  return out;
}

namespace {

template <typename Self, typename Fn>
void visit_parameters(Self& self, Fn&& fn) {
  auto conv = [&](const std::string& prefix, auto& layer) {
    fn(prefix + ".kernels", layer.kernels);
    if (layer.bias.size() > 0) fn(prefix + ".bias", layer.bias);
  };
  if (self.config().use_summary) {
    auto& att = self.attention();
    conv("attention.query.conv1", att.query_net.first);
    conv("attention.query.conv2", att.query_net.second);
    conv("attention.key.conv1", att.key_net.first);
    conv("attention.key.conv2", att.key_net.second);
  }
  auto& stages = self.refinement().stages;
  for (std::size_t n = 0; n < stages.size(); ++n) {
    auto& glm = stages[n];
    const std::string stage = "stage" + std::to_string(n + 1);
    for (std::size_t k = 0; k < glm.blocks.size(); ++k) {
      auto& block = glm.blocks[k];
      const std::string prefix = stage + ".block" + std::to_string(k + 1);
      fn(prefix + ".adjacency", block.gc.adjacency);
      fn(prefix + ".weights", block.gc.weights);
      fn(prefix + ".gamma", block.gamma);
      fn(prefix + ".beta", block.beta);
    }
    fn(stage + ".output.adjacency", glm.output.adjacency);
    fn(stage + ".output.weights", glm.output.weights);
  }
}

template <typename Self, typename Fn>
void visit_stats(Self& self, Fn&& fn) {
  auto& stages = self.refinement().stages;
  for (std::size_t n = 0; n < stages.size(); ++n) {
    for (std::size_t k = 0; k < stages[n].blocks.size(); ++k) {
      fn("stage" + std::to_string(n + 1) + ".block" + std::to_string(k + 1) + ".bn", stages[n].blocks[k].stats);
    }
  }
}

}  // namespace

void Model::for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn) { visit_parameters(*this, fn); }

void Model::for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_parameters(*this, fn);
}

void Model::for_each_running_stats(const std::function<void(const std::string&, RunningStats&)>& fn) {
  visit_stats(*this, fn);
}

void Model::for_each_running_stats(const std::function<void(const std::string&, const RunningStats&)>& fn) const {
  visit_stats(*this, fn);
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for_each_parameter([&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

}  // namespace freqmrn
