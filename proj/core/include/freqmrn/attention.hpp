#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "freqmrn/kinematics.hpp"
#include "freqmrn/rng.hpp"
#include "freqmrn/tensor.hpp"

namespace freqmrn {

struct ConvLayer {
  Tensor kernels;  // [C_out x C_in x W]
  Tensor bias;     // [C_out], or empty when the layer has no bias
};

/// Two stacked convolutions with rectified outputs, mapping an L-frame
/// window of P coordinate channels to a d-vector.
struct EncoderParams {
  ConvLayer first;
  ConvLayer second;

  /// Frames seen by one output: w1 + w2 - 1.
  std::size_t receptive_field() const;
  std::size_t latent() const { return second.kernels.dim(0); }
};

struct AttentionParams {
  EncoderParams query_net;
  EncoderParams key_net;

  static AttentionParams init(std::size_t channels, std::size_t latent, std::size_t query_length, bool bias, Rng& rng);
};

/// Kernel widths (w1, w2) with w1 + w2 - 1 == query_length; (6, 5) for 10.
std::pair<std::size_t, std::size_t> encoder_kernel_widths(std::size_t query_length);

/// window [P x L] -> [d], or [B x P x L] -> [B x d].
Tensor encode(const EncoderParams& net, const Tensor& window);

/// Encodes every L-frame window of [B x P x T] at once: [B x d x (T - L + 1)],
/// column i equal to encode() of frames [i, i + L).
Tensor encode_sliding(const EncoderParams& net, const Tensor& frames);

struct MotionSummary {
  Tensor values;   // [B x P x (L + F)] (or [P x (L + F)] for unbatched input)
  Tensor weights;  // [B x windows] (or [windows])
  /// Per sample: all raw scores were zero and uniform weights were used.
  std::vector<bool> fallback;
};

/// Attention-weighted average of the (L + F)-frame sub-sequences of a history
/// [P x H] or [B x P x H], scored by query (last L frames) against keys
/// (first L frames of each sub-sequence).
MotionSummary summarize(const Tensor& history, const AttentionParams& params, std::size_t query_length,
                        std::size_t future_length);

MotionSummary summarize(const PoseSequence& history, const AttentionParams& params, std::size_t query_length,
                        std::size_t future_length);

/// Appends `prediction` to `history` along time.
PoseSequence extend_history(const PoseSequence& history, const PoseSequence& prediction);

}  // namespace freqmrn
