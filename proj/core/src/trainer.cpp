#include "freqmrn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "freqmrn/attention.hpp"
#include "freqmrn/error.hpp"
#include "freqmrn/ops.hpp"

namespace freqmrn {
namespace {

std::vector<Tensor*> parameter_slots(Model& model) {
  std::vector<Tensor*> slots;
  model.for_each_parameter([&](const std::string&, Tensor& t) { slots.push_back(&t); });
  return slots;
}

/// Detaches watched parameters when a step ends, including by exception, so
/// the model never keeps handles to a destroyed tape.
class WatchedParameters {
 public:
  WatchedParameters(Tape& tape, std::vector<Tensor*> slots) : slots_(std::move(slots)) {
    for (Tensor* p : slots_) *p = tape.watch(*p);
  }
  ~WatchedParameters() {
    for (Tensor* p : slots_) *p = p->detached();
  }
  const std::vector<Tensor*>& slots() const { return slots_; }

 private:
  std::vector<Tensor*> slots_;
};

Tensor stack(const std::vector<Tensor>& parts) {
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& t : parts) {
    Shape s{1};
    s.insert(s.end(), t.shape().begin(), t.shape().end());
    expanded.push_back(reshape(t, s));
  }
  return concat(expanded, 0);
}

/// Mean joint distance per (batch entry, frame) of [B x T x J x 3] tensors.
std::vector<std::vector<double>> frame_errors(const Tensor& pred, const Tensor& truth) {
  const std::size_t batch = pred.dim(0);
  const std::size_t frames = pred.dim(1);
  const std::size_t joints = pred.dim(2);
  std::vector<std::vector<double>> out(batch, std::vector<double>(frames, 0.0));
  const auto p = pred.data();
  const auto t = truth.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < frames; ++f) {
      double total = 0.0;
      for (std::size_t j = 0; j < joints; ++j) {
        const std::size_t base = ((b * frames + f) * joints + j) * 3;
        const double dx = p[base] - t[base];
        const double dy = p[base + 1] - t[base + 1];
        const double dz = p[base + 2] - t[base + 2];
        total += std::sqrt(dx * dx + dy * dy + dz * dz);
      }
      out[b][f] = total / static_cast<double>(joints);
    }
  }
  return out;
}

/// One refinement pass on [B x T x J x 3]: the F predicted future frames.
Tensor predict_future(Model& model, const Tensor& history, std::size_t stage_limit) {
  const ModelConfig& cfg = model.config();
  const std::size_t frames = history.dim(1);
  const std::size_t start = frames > cfg.history ? frames - cfg.history : 0;
  const Tensor context = slice(history, 1, start, frames);
  const Model::Output out = model.forward(pose_channels(context), Mode::eval, nullptr, stage_limit);
  return slice(pose_frames(out.prediction), 1, cfg.query, cfg.window());
}

void check_history(const Model& model, std::size_t frames) {
  const ModelConfig& cfg = model.config();
  const std::size_t needed = cfg.use_summary ? cfg.window() : cfg.query;
  if (frames < needed) {
    throw DimensionError("history of " + std::to_string(frames) + " frames is shorter than the required " +
                         std::to_string(needed));
  }
}

std::vector<std::size_t> iota(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(i);
  return out;
}

}  // namespace

Batch make_batch(const std::vector<TrainingWindow>& windows, const std::vector<std::size_t>& indices,
                 std::size_t query) {
  if (indices.empty()) throw DimensionError("make_batch: empty batch");
  std::vector<Tensor> histories;
  std::vector<Tensor> targets;
  for (std::size_t i : indices) {
    const TrainingWindow& w = windows.at(i);
    const std::size_t h = w.history.dim(0);
    if (query > h) throw DimensionError("make_batch: query longer than the window history");
    histories.push_back(w.history);
    targets.push_back(concat({slice(w.history, 0, h - query, h), w.target}, 0));
  }
  return Batch{stack(histories), stack(targets)};
}

Trainer::Trainer(RunConfig config, Skeleton skeleton)
    : config_((config.validate(), std::move(config))),
      skeleton_(std::move(skeleton)),
      rng_(config_.seed),
      model_(config_.model, skeleton_.joint_count(), rng_),
      objective_(skeleton_, config_.model.query, config_.model.future, config_.loss) {}

Tensor Trainer::batch_loss(const Batch& batch, Mode mode) {
  const Model::Output out = model_.forward(pose_channels(batch.history), mode, &rng_);
  Tensor loss = objective_(pose_frames(out.prediction), batch.target);
  if (config_.loss.supervise_stages) {
    for (std::size_t n = 0; n + 1 < out.stage_outputs.size(); ++n) {
      loss = add(loss, objective_(pose_frames(out.stage_outputs[n]), batch.target));
    }
  }
  return loss;
}

double Trainer::mean_loss(const std::vector<TrainingWindow>& windows) {
  if (windows.empty()) throw DataError("mean_loss: no windows");
  const std::size_t step = config_.train.batch_size;
  double total = 0.0;
  for (std::size_t begin = 0; begin < windows.size(); begin += step) {
    const std::size_t end = std::min(windows.size(), begin + step);
    const Batch batch = make_batch(windows, iota(begin, end), config_.model.query);
    total += batch_loss(batch, Mode::eval).item() * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(windows.size());
}

void Trainer::set_loss_config(const LossConfig& loss) {
  RunConfig next = config_;
  next.loss = loss;
  next.validate();
  objective_ = Objective(skeleton_, config_.model.query, config_.model.future, loss);
  config_ = std::move(next);
}

void Trainer::set_train_config(const TrainConfig& train) {
  RunConfig next = config_;
  next.train = train;
  next.validate();
  config_ = std::move(next);
}

EpochMetrics Trainer::run_epoch(const std::vector<TrainingWindow>& train, const std::vector<TrainingWindow>& val) {
  if (train.empty()) throw TrainingError("no training windows");
  const double lr = lr_schedule(epoch_, config_.optimizer.learning_rate, config_.optimizer.lr_decay);

  std::vector<std::size_t> order = iota(0, train.size());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  const std::size_t batch_size = config_.train.batch_size;
  EpochMetrics metrics;
  metrics.learning_rate = lr;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    const Batch batch = make_batch(train, std::vector<std::size_t>(order.begin() + begin, order.begin() + end),
                                   config_.model.query);
    Tape tape;
    std::vector<Tensor> grads;
    double loss_value = 0.0;
    {
      WatchedParameters watched(tape, parameter_slots(model_));
      const Tensor loss = batch_loss(batch, Mode::train);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", batch " +
                            std::to_string(metrics.batches) + " (windows " + std::to_string(begin) + ".." +
                            std::to_string(end - 1) + " of the shuffled order)");
      }
      const Gradients g = tape.backward(loss);
      for (const Tensor* p : watched.slots()) grads.push_back(g.of(*p));
    }
    std::vector<Tensor*> slots = parameter_slots(model_);
    std::vector<Tensor> params;
    for (const Tensor* p : slots) params.push_back(*p);
    if (config_.optimizer.grad_clip > 0.0) clip_grad_norm(grads, config_.optimizer.grad_clip);
    std::vector<Tensor> updated = adam_step(params, grads, adam_, lr, config_.optimizer.adam);
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = std::move(updated[i]);
    loss_sum += loss_value;
    ++metrics.batches;
  }

  ++epoch_;
  metrics.epoch = epoch_;
  metrics.train_loss = loss_sum / static_cast<double>(metrics.batches);
  metrics.train_mpjpe = window_mpjpe(model_, train, batch_size);
  if (!val.empty()) metrics.val_mpjpe = window_mpjpe(model_, val, batch_size);
  return metrics;
}

std::vector<EpochMetrics> train(Trainer& trainer, const SequenceDataset& dataset, const EpochCallback& on_epoch) {
  const Skeleton& sk = trainer.skeleton();
  if (dataset.skeleton().name() != sk.name() || dataset.skeleton().joint_count() != sk.joint_count()) {
    throw SkeletonError("dataset skeleton '" + dataset.skeleton().name() + "' does not match the model skeleton '" +
                        sk.name() + "'");
  }
  const RunConfig& cfg = trainer.config();
  auto [train_set, val_set] = split_validation(dataset, cfg.train.val_fraction);
  const auto train_windows = extract_windows(train_set, cfg.model.history, cfg.model.future, cfg.train.stride);
  const auto val_windows = extract_windows(val_set, cfg.model.history, cfg.model.future, cfg.train.stride);
  if (train_windows.empty()) {
    throw DataError("no training sequence has the " + std::to_string(cfg.model.history + cfg.model.future) +
                    " frames needed for one window");
  }
  std::vector<EpochMetrics> log;
  while (trainer.epoch() < cfg.train.epochs) {
    log.push_back(trainer.run_epoch(train_windows, val_windows));
    if (on_epoch) on_epoch(log.back(), trainer);
  }
  return log;
}

double window_mpjpe(Model& model, const std::vector<TrainingWindow>& windows, std::size_t batch_size,
                    std::size_t stage_limit) {
  if (windows.empty()) throw DataError("window_mpjpe: no windows");
  const std::size_t step = std::max<std::size_t>(1, batch_size);
  const std::size_t future = model.config().future;
  double total = 0.0;
  for (std::size_t begin = 0; begin < windows.size(); begin += step) {
    const std::size_t end = std::min(windows.size(), begin + step);
    const Batch batch = make_batch(windows, iota(begin, end), model.config().query);
    const Tensor pred = predict_future(model, batch.history, stage_limit);
    const Tensor truth = slice(batch.target, 1, model.config().query, model.config().window());
    for (const auto& row : frame_errors(pred, truth)) {
      for (double e : row) total += e;
    }
  }
  return total / static_cast<double>(windows.size() * future);
}

std::vector<double> stage_mpjpe(Model& model, const std::vector<TrainingWindow>& windows, std::size_t batch_size) {
  if (windows.empty()) throw DataError("stage_mpjpe: no windows");
  const ModelConfig& cfg = model.config();
  const std::size_t step = std::max<std::size_t>(1, batch_size);
  std::vector<double> totals(cfg.stages, 0.0);
  for (std::size_t begin = 0; begin < windows.size(); begin += step) {
    const std::size_t end = std::min(windows.size(), begin + step);
    const Batch batch = make_batch(windows, iota(begin, end), cfg.query);
    const Tensor context = slice(batch.history, 1, batch.history.dim(1) - std::min(cfg.history, batch.history.dim(1)),
                                 batch.history.dim(1));
    const Model::Output out = model.forward(pose_channels(context), Mode::eval);
    const Tensor truth = slice(batch.target, 1, cfg.query, cfg.window());
    for (std::size_t n = 0; n < out.stage_outputs.size(); ++n) {
      const Tensor pred = slice(pose_frames(out.stage_outputs[n]), 1, cfg.query, cfg.window());
      for (const auto& row : frame_errors(pred, truth)) {
        for (double e : row) totals[n] += e;
      }
    }
  }
  for (auto& t : totals) t /= static_cast<double>(windows.size() * cfg.future);
  return totals;
}

Tensor predict_batch(Model& model, const Tensor& history, std::size_t horizon, std::size_t stage_limit,
                     std::size_t* passes) {
  if (history.rank() != 4 || history.dim(2) != model.joints() || history.dim(3) != 3) {
    throw DimensionError("predict_batch: expected history [B x T x " + std::to_string(model.joints()) +
                         " x 3], got " + shape_string(history.shape()));
  }
  check_history(model, history.dim(1));
  const std::size_t window = model.config().history;
  std::size_t count = 0;
  std::vector<Tensor> parts;
  std::size_t produced = 0;
  Tensor current = history.detached();
  while (produced < horizon) {
    const Tensor future = predict_future(model, current, stage_limit);
    parts.push_back(future);
    produced += future.dim(1);
    ++count;
    current = concat({current, future}, 1);
    if (current.dim(1) > window) current = slice(current, 1, current.dim(1) - window, current.dim(1));
  }
  if (passes) *passes = count;
  if (parts.empty()) return Tensor::zeros({history.dim(0), 0, history.dim(2), 3});
  return slice(concat(parts, 1), 1, 0, horizon);
}

AutoregressiveResult predict_autoregressive(Model& model, const PoseSequence& history, std::size_t horizon,
                                            std::size_t stage_limit) {
  if (history.joints() != model.joints()) {
    throw SkeletonError("history has " + std::to_string(history.joints()) + " joints but the model expects " +
                        std::to_string(model.joints()));
  }
  check_history(model, history.frames());
  AutoregressiveResult result{PoseSequence::empty(history.joints(), history.frame_rate(), history.skeleton_name()), 0};
  PoseSequence current = history;
  while (result.frames.frames() < horizon) {
    const Tensor batch = reshape(current.coords(), {1, current.frames(), current.joints(), 3});
    const Tensor future = predict_future(model, batch, stage_limit);
    const PoseSequence step(reshape(future, {future.dim(1), future.dim(2), 3}), history.frame_rate(),
                            history.skeleton_name());
    result.frames = extend_history(result.frames, step);
    current = extend_history(current, step);
    ++result.passes;
  }
  if (result.frames.frames() > horizon) result.frames = result.frames.subsequence(0, horizon);
  return result;
}

std::vector<std::size_t> frames_from_ms(const std::vector<double>& ms, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ConfigError("frame rate must be positive to map milliseconds to frames");
  std::vector<std::size_t> frames;
  for (double t : ms) {
    const double exact = t * frame_rate / 1000.0;
    const double rounded = std::round(exact);
    if (!(rounded >= 1.0) || std::abs(exact - rounded) > 1e-9 * std::max(1.0, exact)) {
      std::ostringstream msg;
      msg << t << " ms does not map to a whole future frame at " << frame_rate << " fps (" << exact << " frames)";
      throw ConfigError(msg.str());
    }
    frames.push_back(static_cast<std::size_t>(rounded));
  }
  return frames;
}

MpjpeTable evaluate(Model& model, const SequenceDataset& dataset, const std::vector<double>& ms,
                    const EvalOptions& options) {
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  if (ms.empty()) throw ConfigError("evaluate: no evaluation times given");
  if (dataset.skeleton().joint_count() != model.joints()) {
    throw SkeletonError("dataset skeleton '" + dataset.skeleton().name() + "' has " +
                        std::to_string(dataset.skeleton().joint_count()) + " joints but the model expects " +
                        std::to_string(model.joints()));
  }
  const double fps = dataset.sequences().front().frame_rate();
  for (const auto& s : dataset.sequences()) {
    if (s.frame_rate() != fps) throw DataError("evaluate: sequences have different frame rates");
  }
  MpjpeTable table;
  table.ms = ms;
  table.frames = frames_from_ms(ms, fps);
  const std::size_t horizon = *std::max_element(table.frames.begin(), table.frames.end());
  const ModelConfig& cfg = model.config();
  const auto windows = extract_windows(dataset, cfg.history, horizon, options.stride);
  if (windows.empty()) {
    throw DataError("evaluate: no sequence has the " + std::to_string(cfg.history + horizon) +
                    " frames needed for one evaluation window");
  }
  table.windows = windows.size();

  // Per-window error at each requested frame.
  auto window_errors = [&](std::size_t stage_limit) {
    std::vector<std::vector<double>> errors;
    const std::size_t step = std::max<std::size_t>(1, options.batch_size);
    for (std::size_t begin = 0; begin < windows.size(); begin += step) {
      const std::size_t end = std::min(windows.size(), begin + step);
      std::vector<Tensor> hist;
      std::vector<Tensor> truth;
      for (std::size_t i = begin; i < end; ++i) {
        hist.push_back(windows[i].history);
        truth.push_back(windows[i].target);
      }
      const Tensor pred = predict_batch(model, stack(hist), horizon, stage_limit);
      for (const auto& row : frame_errors(pred, stack(truth))) {
        std::vector<double> picked;
        for (std::size_t f : table.frames) picked.push_back(row[f - 1]);
        errors.push_back(std::move(picked));
      }
    }
    return errors;
  };
  auto average = [&](const std::vector<std::vector<double>>& errors, const std::vector<std::size_t>& rows) {
    std::vector<double> out(table.frames.size(), 0.0);
    for (std::size_t r : rows) {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += errors[r][k];
    }
    for (auto& v : out) v /= static_cast<double>(rows.size());
    return out;
  };

  const auto errors = window_errors(options.stage_limit);
  table.overall = average(errors, iota(0, windows.size()));

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const std::string& label = dataset.labels()[windows[i].sequence];
    if (!label.empty()) groups[label].push_back(i);
  }
  for (const auto& [label, rows] : groups) table.per_action.emplace_back(label, average(errors, rows));

  if (options.per_stage) {
    const std::size_t stages = std::min(cfg.stages, options.stage_limit);
    for (std::size_t n = 1; n <= stages; ++n) {
      table.per_stage.push_back(average(window_errors(n), iota(0, windows.size())));
    }
  }
  return table;
}

std::string table_to_text(const MpjpeTable& table) {
  nlohmann::json j;
  j["ms"] = table.ms;
  j["frames"] = table.frames;
  j["overall"] = table.overall;
  j["per_action"] = nlohmann::json::array();
  for (const auto& [label, values] : table.per_action) j["per_action"].push_back({{"label", label}, {"mpjpe", values}});
  j["per_stage"] = table.per_stage;
  j["windows"] = table.windows;
  j["loss"] = table.loss ? nlohmann::json(*table.loss) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

MpjpeTable table_from_text(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MpjpeTable t;
    t.ms = j.at("ms").get<std::vector<double>>();
    t.frames = j.at("frames").get<std::vector<std::size_t>>();
    t.overall = j.at("overall").get<std::vector<double>>();
    for (const auto& row : j.at("per_action")) {
      t.per_action.emplace_back(row.at("label").get<std::string>(), row.at("mpjpe").get<std::vector<double>>());
    }
    t.per_stage = j.at("per_stage").get<std::vector<std::vector<double>>>();
    t.windows = j.at("windows").get<std::size_t>();
    if (j.contains("loss") && !j.at("loss").is_null()) t.loss = j.at("loss").get<double>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed MPJPE record: ") + e.what());
  }
}

std::string format_table(const MpjpeTable& table) {
  std::ostringstream out;
  char cell[64];
  auto row = [&](const std::string& name, const std::vector<double>& values) {
    std::snprintf(cell, sizeof cell, "%-16s", name.c_str());
    out << cell;
    for (double v : values) {
      std::snprintf(cell, sizeof cell, "%10.2f", v);
      out << cell;
    }
    out << '\n';
  };
  std::snprintf(cell, sizeof cell, "%-16s", "ms");
  out << cell;
  for (double t : table.ms) {
    std::snprintf(cell, sizeof cell, "%10g", t);
    out << cell;
  }
  out << '\n';
  for (const auto& [label, values] : table.per_action) row(label, values);
  row("average", table.overall);
  for (std::size_t n = 0; n < table.per_stage.size(); ++n) row("stage " + std::to_string(n + 1), table.per_stage[n]);
  if (table.loss) out << "loss " << *table.loss << '\n';
  out << "(" << table.windows << " windows, MPJPE in skeleton units)\n";
  return out.str();
}

}  // namespace freqmrn
