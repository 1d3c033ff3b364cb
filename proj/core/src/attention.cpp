#include "freqmrn/attention.hpp"

#include <cmath>

#include "freqmrn/error.hpp"
#include "freqmrn/ops.hpp"

namespace freqmrn {
namespace {

ConvLayer init_conv(std::size_t c_out, std::size_t c_in, std::size_t width, bool bias, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * width));
  std::vector<double> k(c_out * c_in * width);
  for (auto& v : k) v = rng.uniform(-bound, bound);
  ConvLayer layer{Tensor({c_out, c_in, width}, std::move(k)), Tensor()};
  if (bias) {
    std::vector<double> b(c_out);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    layer.bias = Tensor({c_out}, std::move(b));
  }
  return layer;
}

EncoderParams init_encoder(std::size_t channels, std::size_t latent, std::size_t query_length, bool bias, Rng& rng) {
  const auto [w1, w2] = encoder_kernel_widths(query_length);
  EncoderParams net;
  net.first = init_conv(latent, channels, w1, bias, rng);
  net.second = init_conv(latent, latent, w2, bias, rng);
  return net;
}

Tensor run_encoder(const EncoderParams& net, const Tensor& frames) {
  return relu(conv1d(relu(conv1d(frames, net.first.kernels, net.first.bias)), net.second.kernels, net.second.bias));
}

}  // namespace

std::size_t EncoderParams::receptive_field() const { return first.kernels.dim(2) + second.kernels.dim(2) - 1; }

std::pair<std::size_t, std::size_t> encoder_kernel_widths(std::size_t query_length) {
  if (query_length == 0) throw ConfigError("query length must be at least 1");
  const std::size_t w1 = query_length / 2 + 1;
  return {w1, query_length + 1 - w1};
}

AttentionParams AttentionParams::init(std::size_t channels, std::size_t latent, std::size_t query_length, bool bias,
                                      Rng& rng) {
  AttentionParams p;
  p.query_net = init_encoder(channels, latent, query_length, bias, rng);
  p.key_net = init_encoder(channels, latent, query_length, bias, rng);
  return p;
}

Tensor encode(const EncoderParams& net, const Tensor& window) {
  const std::size_t length = net.receptive_field();
  if (window.rank() < 2 || window.shape().back() != length) {
    throw DimensionError("encode: window " + shape_string(window.shape()) + " must span exactly " +
                         std::to_string(length) + " frames");
  }
  const Tensor out = run_encoder(net, window);
  if (out.rank() == 2) return reshape(out, {out.dim(0)});
  return reshape(out, {out.dim(0), out.dim(1)});
}

Tensor encode_sliding(const EncoderParams& net, const Tensor& frames) {
  if (frames.rank() != 3) throw DimensionError("encode_sliding: expected [B x P x T], got " + shape_string(frames.shape()));
  return run_encoder(net, frames);
}

MotionSummary summarize(const Tensor& history, const AttentionParams& params, std::size_t query_length,
                        std::size_t future_length) {
  if (history.rank() == 2) {
    MotionSummary s = summarize(reshape(history, {1, history.dim(0), history.dim(1)}), params, query_length,
                                future_length);
    s.values = reshape(s.values, {s.values.dim(1), s.values.dim(2)});
    s.weights = reshape(s.weights, {s.weights.dim(1)});
    return s;
  }
  if (history.rank() != 3) throw DimensionError("summarize: expected [B x P x H], got " + shape_string(history.shape()));
  if (params.query_net.receptive_field() != query_length || params.key_net.receptive_field() != query_length) {
    throw ConfigError("summarize: encoders see " + std::to_string(params.query_net.receptive_field()) +
                      " frames but the query length is " + std::to_string(query_length));
  }
  const std::size_t batch = history.dim(0);
  const std::size_t frames = history.dim(2);
  const std::size_t span = query_length + future_length;
  if (frames < span) {
    throw DimensionError("summarize: history of " + std::to_string(frames) + " frames is shorter than L + F = " +
                         std::to_string(span));
  }
  const std::size_t windows = frames - span + 1;

  const Tensor query = encode(params.query_net, slice(history, 2, frames - query_length, frames));  // [B x d]
  const std::size_t latent = query.dim(1);
  // Keys for every window start; only starts whose value window fits are used.
  const Tensor keys = slice(encode_sliding(params.key_net, history), 2, 0, windows);  // [B x d x n]
  const Tensor scores = reshape(matmul(reshape(query, {batch, 1, latent}), keys), {batch, windows});
  Normalized weights = normalize_rows(scores);

  const std::size_t channels = history.dim(1);
  const Tensor values = reshape(sliding_windows(history, span, windows), {batch, windows, channels * span});
  const Tensor summary = reshape(matmul(reshape(weights.values, {batch, 1, windows}), values), {batch, channels, span});
  return MotionSummary{summary, weights.values, std::move(weights.fallback)};
}

MotionSummary summarize(const PoseSequence& history, const AttentionParams& params, std::size_t query_length,
                        std::size_t future_length) {
  return summarize(pose_channels(history.coords()), params, query_length, future_length);
}

PoseSequence extend_history(const PoseSequence& history, const PoseSequence& prediction) {
  if (history.joints() != prediction.joints() || history.skeleton_name() != prediction.skeleton_name()) {
    throw SkeletonError("cannot extend a '" + history.skeleton_name() + "' history (" +
                        std::to_string(history.joints()) + " joints) with a '" + prediction.skeleton_name() +
                        "' prediction (" + std::to_string(prediction.joints()) + " joints)");
  }
  if (prediction.frames() == 0) return history;
  return PoseSequence(concat({history.coords(), prediction.coords()}, 0), history.frame_rate(),
                      history.skeleton_name());
}

}  // namespace freqmrn
