#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freqmrn/config.hpp"
#include "freqmrn/data.hpp"
#include "freqmrn/kinematics.hpp"
#include "freqmrn/losses.hpp"
#include "freqmrn/model.hpp"
#include "freqmrn/optim.hpp"
#include "freqmrn/rng.hpp"

namespace freqmrn {

inline constexpr std::size_t kAllStages = std::numeric_limits<std::size_t>::max();

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;
  /// Mean training objective over the epoch's batches.
  double train_loss = 0.0;
  /// Eval-mode MPJPE over the future frames of the training windows.
  double train_mpjpe = 0.0;
  std::optional<double> val_mpjpe;
  std::size_t batches = 0;
};

/// Stacked windows: history [B x H x J x 3], target [B x (L + F) x J x 3]
/// (the last L observed frames followed by the F future frames).
struct Batch {
  Tensor history;
  Tensor target;
};

Batch make_batch(const std::vector<TrainingWindow>& windows, const std::vector<std::size_t>& indices,
                 std::size_t query);

/// Owns a model, its optimizer state and the run's random stream.
class Trainer {
 public:
  Trainer(RunConfig config, Skeleton skeleton);

  const RunConfig& config() const { return config_; }
  const Skeleton& skeleton() const { return skeleton_; }
  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const Objective& objective() const { return objective_; }
  const AdamState& optimizer() const { return adam_; }
  const Rng& rng() const { return rng_; }
  /// Completed epochs.
  std::size_t epoch() const { return epoch_; }

  /// Objective on one batch. Train mode updates batch-norm statistics.
  Tensor batch_loss(const Batch& batch, Mode mode);

  /// Eval-mode objective averaged over windows (weighted by batch size).
  double mean_loss(const std::vector<TrainingWindow>& windows);

  /// Swaps the loss switches; the model and optimizer are untouched.
  void set_loss_config(const LossConfig& loss);
  /// Swaps the epoch budget, batching and split settings, e.g. to extend a resumed run.
  void set_train_config(const TrainConfig& train);

  /// One pass over `train` in seeded random order, then eval-mode metrics.
  /// Throws TrainingError naming the batch when the loss is not finite.
  EpochMetrics run_epoch(const std::vector<TrainingWindow>& train, const std::vector<TrainingWindow>& val = {});

  /// Binary checkpoint: config, skeleton, parameters, batch-norm statistics,
  /// Adam moments, epoch and rng state, closed by a content hash.
  void save(const std::filesystem::path& path) const;
  static Trainer load(const std::filesystem::path& path);

 private:
  RunConfig config_;
  Skeleton skeleton_;
  Rng rng_;
  Model model_;
  Objective objective_;
  AdamState adam_;
  std::size_t epoch_ = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&, Trainer&)>;

/// Runs the remaining epochs up to config.train.epochs on the dataset's
/// training split; the last val_fraction of sequences is held out.
std::vector<EpochMetrics> train(Trainer& trainer, const SequenceDataset& dataset, const EpochCallback& on_epoch = {});

/// Eval-mode MPJPE over the F future frames of every window, averaged.
double window_mpjpe(Model& model, const std::vector<TrainingWindow>& windows, std::size_t batch_size = 64,
                    std::size_t stage_limit = kAllStages);

/// Dataset-mean future-frame MPJPE of each stage output X_1 .. X_N.
std::vector<double> stage_mpjpe(Model& model, const std::vector<TrainingWindow>& windows, std::size_t batch_size = 64);

/// history [B x T x J x 3], T >= L + F -> [B x horizon x J x 3]. Each pass
/// feeds the last H frames of the growing history and appends F predicted
/// frames. `passes` receives the number of refinement passes.
Tensor predict_batch(Model& model, const Tensor& history, std::size_t horizon, std::size_t stage_limit = kAllStages,
                     std::size_t* passes = nullptr);

struct AutoregressiveResult {
  PoseSequence frames;
  std::size_t passes = 0;
};

AutoregressiveResult predict_autoregressive(Model& model, const PoseSequence& history, std::size_t horizon,
                                            std::size_t stage_limit = kAllStages);

/// Milliseconds to 1-based future frame indices at `frame_rate`.
/// Throws ConfigError naming any value that does not map to a whole frame.
std::vector<std::size_t> frames_from_ms(const std::vector<double>& ms, double frame_rate);

struct MpjpeTable {
  std::vector<double> ms;
  std::vector<std::size_t> frames;
  std::vector<double> overall;
  /// (label, per-frame MPJPE) in label order; empty when the dataset is unlabelled.
  std::vector<std::pair<std::string, std::vector<double>>> per_action;
  /// Row n: predictions truncated to stages 1 .. n+1. Empty unless requested.
  std::vector<std::vector<double>> per_stage;
  std::size_t windows = 0;
  /// Mean objective over the dataset's training-length windows, when computed.
  std::optional<double> loss;

  bool operator==(const MpjpeTable&) const = default;
};

struct EvalOptions {
  std::size_t stride = 1;
  bool per_stage = false;
  std::size_t stage_limit = kAllStages;
  std::size_t batch_size = 64;
};

/// MPJPE at the requested future times over every history/horizon window.
MpjpeTable evaluate(Model& model, const SequenceDataset& dataset, const std::vector<double>& ms,
                    const EvalOptions& options = {});

std::string table_to_text(const MpjpeTable& table);
MpjpeTable table_from_text(std::string_view text);
/// Human-readable columns for terminals.
std::string format_table(const MpjpeTable& table);

}  // namespace freqmrn
