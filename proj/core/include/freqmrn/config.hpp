#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "freqmrn/data.hpp"
#include "freqmrn/kinematics.hpp"
#include "freqmrn/losses.hpp"
#include "freqmrn/model.hpp"
#include "freqmrn/optim.hpp"

namespace freqmrn {

struct OptimizerConfig {
  double learning_rate = 0.005;
  /// Per-epoch multiplicative decay of the learning rate.
  double lr_decay = 0.97;
  AdamOptions adam;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  /// Frame step between consecutive training windows.
  std::size_t stride = 1;
  double val_fraction = 0.2;
  /// Write a checkpoint every this many epochs (0: final checkpoint only).
  std::size_t checkpoint_every = 0;

  bool operator==(const TrainConfig&) const = default;
};

struct DataConfig {
  /// Dataset directory holding skeleton.json and *.mseq files.
  std::string path;

  bool operator==(const DataConfig&) const = default;
};

struct SyntheticConfig {
  SyntheticSkeletonSpec skeleton;
  SyntheticMotionSpec motion;
  std::size_t count = 8;

  bool operator==(const SyntheticConfig& o) const;
};

/// One declarative run manifest. Every field has a default, so a partial
/// document only overrides what it names.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  OptimizerConfig optimizer;
  TrainConfig train;
  DataConfig data;
  SyntheticConfig synthetic;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

/// Pretty-printed JSON with every field.
std::string config_to_text(const RunConfig& config);
/// Applies the document on top of `base`. Unknown keys and wrongly typed
/// values raise ConfigError with the dotted key path.
RunConfig config_from_text(std::string_view text, const RunConfig& base = {});
RunConfig read_config_file(const std::filesystem::path& path, const RunConfig& base = {});
void write_config_file(const std::filesystem::path& path, const RunConfig& config);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// Identifies the model geometry and the skeleton it was built for.
std::uint64_t config_hash(const ModelConfig& model, const Skeleton& skeleton);

}  // namespace freqmrn
